//! Turns configuration sections into library objects.

use anyhow::{anyhow, bail, Context, Result};
use nfield::activation::Activation;
use nfield::dynamics::{Model, SimConfig};
use nfield::kernel::{assemble, decompose, operator_norm, KernelKind, KernelOperator, KernelSpec};
use nfield::noise::{cosine_modes, metric_modes, NoiseModel};
use nfield::nonlocal::build_metric;
use nfield::particle::ParticleConfig;
use nfield::space::{Field, Grid, Weight};

use crate::config::{
    ActivationSection, DynamicsSection, InitialField, KernelProfile, KernelSection, ModeBasis, NoiseSection, ParticleSection,
    RunConfig, SpaceSection, WeightSpec,
};
use crate::io;

pub fn grid(space: &SpaceSection) -> Result<Grid<f64>> {
    let bounds: Vec<(f64, f64)> = space.bounds.iter().map(|b| (b[0], b[1])).collect();
    let g = Grid::new(&bounds, &space.points).context("space")?;
    Ok(match space.truncation {
        Some(r) => g.with_truncation(r),
        None => g,
    })
}

pub fn weight(space: &SpaceSection, grid: &Grid<f64>) -> Result<Weight<f64>> {
    let w = match &space.weight {
        WeightSpec::Const { value } => Weight::new(grid, vec![*value; grid.len()]),
        WeightSpec::AbsPow { exponent } => Weight::from_fn(grid, |x| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.powf(*exponent)
        }),
        WeightSpec::Table { values } => Weight::new(grid, values.clone()),
    };
    w.context("space.weight")
}

pub fn kernel_spec(section: &KernelSection, grid: &Grid<f64>) -> Result<KernelSpec<f64>> {
    let kind = match &section.profile {
        KernelProfile::Gaussian { metric } => KernelKind::Gaussian { metric: metric.clone() },
        KernelProfile::ExpSqrt { metric } => KernelKind::ExpSqrt { metric: metric.clone() },
        KernelProfile::Rational { metric } => KernelKind::Rational { metric: metric.clone() },
        KernelProfile::SincProduct => KernelKind::SincProduct,
        KernelProfile::CosineSum { weights, frequencies } => KernelKind::CosineSum {
            weights: weights.clone(),
            frequencies: frequencies.clone(),
        },
        KernelProfile::MexicanHat => KernelKind::MexicanHat,
        KernelProfile::MexicanHat2 { amplitude, width } => KernelKind::MexicanHat2 {
            amplitude: *amplitude,
            width: *width,
        },
        KernelProfile::MexicanHat3 { ratio, fast, slow } => KernelKind::MexicanHat3 {
            ratio: *ratio,
            fast: *fast,
            slow: *slow,
        },
        KernelProfile::DampedTrig { damping } => KernelKind::DampedTrig { damping: *damping },
        KernelProfile::WizardHat => KernelKind::WizardHat,
        KernelProfile::Constant { value } => KernelKind::Constant(*value),
        KernelProfile::Table { values, file } => {
            let n = grid.len();
            let values = match (values, file) {
                (Some(v), None) => v.clone(),
                (None, Some(f)) => io::read_kernel_table(f, n, grid.spacing()[0])?,
                _ => bail!("kernel table needs exactly one of `values` and `file`"),
            };
            KernelKind::Table { n, values }
        }
        KernelProfile::Convolution { offsets, values } => KernelKind::Convolution {
            offsets: offsets.clone(),
            values: values.clone(),
        },
    };
    Ok(KernelSpec::new(kind).context("kernel")?.scaled(section.scale))
}

/// Assembles the kernel, rescaled to the requested operator norm if any.
pub fn kernel(section: &KernelSection, grid: &Grid<f64>, w: &Weight<f64>) -> Result<KernelOperator<f64>> {
    let spec = kernel_spec(section, grid)?;
    let k = assemble(&spec, grid).context("kernel")?;
    let Some(target) = section.norm else {
        return Ok(k);
    };
    let current = operator_norm(&k, w)?.value;
    if current == 0.0 {
        bail!("kernel: cannot rescale the zero kernel to norm {target}");
    }
    Ok(assemble(&spec.scaled(target / current), grid)?)
}

pub fn activation(section: &ActivationSection) -> Result<Activation<f64>> {
    Ok(match section {
        ActivationSection::Relu => Activation::Relu,
        ActivationSection::Logistic => Activation::Logistic,
        ActivationSection::Tanh => Activation::Tanh,
        ActivationSection::Heaviside => Activation::Heaviside,
        ActivationSection::SqrtLogistic => Activation::SqrtLogistic,
        ActivationSection::Constant { value } => Activation::constant(*value),
        ActivationSection::Custom { xs, fs, file, lip } => {
            let (xs, fs) = match (xs, fs, file) {
                (Some(x), Some(f), None) => (x.clone(), f.clone()),
                (None, None, Some(p)) => io::read_samples(p)?,
                _ => bail!("custom activation needs `xs` and `fs`, or `file`"),
            };
            let f = Activation::custom(xs, fs, *lip)?;
            f.lipschitz_data().context("custom activation")?;
            f
        }
    })
}

pub fn noise(
    section: &NoiseSection,
    grid: &Grid<f64>,
    w: &Weight<f64>,
    drift: &KernelOperator<f64>,
    rate: &Activation<f64>,
    rank_tol: f64,
) -> Result<NoiseModel<f64>> {
    Ok(match section {
        NoiseSection::None => NoiseModel::none(grid),
        NoiseSection::Additive { sigma, basis, file } => {
            let m = sigma.len();
            let modes = match basis {
                ModeBasis::Cosine => cosine_modes(grid, m),
                ModeBasis::Metric => {
                    let metric = build_metric(&decompose(drift, w)?, w, rank_tol).context("noise basis `metric`")?;
                    metric_modes(&metric, m)?
                }
                ModeBasis::File => {
                    let path = file.as_ref().ok_or_else(|| anyhow!("noise basis `file` needs `file`"))?;
                    let cols = io::read_modes(path, grid.len())?;
                    if cols.len() != m {
                        bail!("{} has {} modes for {m} coefficients", path.display(), cols.len());
                    }
                    cols.into_iter()
                        .map(|c| Field::new(grid, c))
                        .collect::<nfield::Result<Vec<_>>>()?
                }
            };
            let name = match basis {
                ModeBasis::Cosine => "cosine",
                ModeBasis::Metric => "metric",
                ModeBasis::File => "file",
            };
            NoiseModel::additive(grid, sigma.clone(), modes, name)?
        }
        NoiseSection::Pointwise { map, scale } => NoiseModel::pointwise(grid, activation(map)?, *scale)?,
        NoiseSection::KernelMollified { population, kernel: k } => {
            let k = match k {
                Some(s) => kernel(s, grid, w)?,
                None => drift.clone(),
            };
            NoiseModel::kernel_mollified(k, rate.clone(), *population)?
        }
    })
}

pub fn initial(field: &InitialField, s: &Setup, rank_tol: f64) -> Result<Field<f64>> {
    let grid = &s.grid;
    Ok(match field {
        InitialField::Constant { value } => grid.constant_field(*value),
        InitialField::Cosine { mode, amplitude } => cosine_modes(grid, mode + 1)
            .pop()
            .expect("at least one mode")
            .scaled(*amplitude),
        InitialField::MetricMode { mode, amplitude, offset } => {
            let metric =
                build_metric(&decompose(&s.kernel, &s.weight)?, &s.weight, rank_tol).context("initial field `metric_mode`")?;
            if *mode >= metric.rank() {
                bail!("initial field: mode {mode} exceeds the nonlocal rank {}", metric.rank());
            }
            metric.mode(*mode).scaled(*amplitude).add(&grid.constant_field(*offset))?
        }
        InitialField::Values { values } => Field::new(grid, values.clone())?,
    })
}

pub fn sim(d: &DynamicsSection, seed: u64) -> Result<SimConfig> {
    let c = SimConfig {
        alpha: d.alpha,
        horizon: d.horizon,
        dt: d.dt,
        scheme: d.scheme,
        n_paths: d.n_paths,
        seed,
        record_stride: d.record_stride,
    };
    c.validate().context("dynamics")?;
    Ok(c)
}

pub fn particle(p: &ParticleSection, seed: u64) -> Result<ParticleConfig> {
    let cfg = ParticleConfig {
        populations: p.populations.clone(),
        w_tilde: p.w_tilde.clone(),
        alpha: p.alpha,
        rate: activation(&p.rate)?,
        rate_cap: p.rate_cap,
        horizon: p.horizon,
        dt_report: p.dt_report,
        initial: p.initial.clone(),
        seed,
        record_events: p.record_events,
    };
    cfg.validate().context("particle")?;
    Ok(cfg)
}

/// The discretized space, kernel and (when configured) the full model.
pub struct Setup {
    pub grid: Grid<f64>,
    pub weight: Weight<f64>,
    pub kernel: KernelOperator<f64>,
    pub model: Option<Model<f64>>,
    pub sim: Option<SimConfig>,
}

pub fn setup(cfg: &RunConfig, rank_tol: f64) -> Result<Setup> {
    let space = cfg.space.as_ref().ok_or_else(|| anyhow!("missing section `space`"))?;
    let grid = grid(space)?;
    let weight = weight(space, &grid)?;
    let k = kernel(
        cfg.kernel.as_ref().ok_or_else(|| anyhow!("missing section `kernel`"))?,
        &grid,
        &weight,
    )?;
    let model = match (&cfg.activation, &cfg.noise) {
        (Some(a), Some(n)) => {
            let f = activation(a)?;
            let b = noise(n, &grid, &weight, &k, &f, rank_tol).context("noise")?;
            Some(Model::new(k.clone(), f, b, weight.clone())?)
        }
        _ => None,
    };
    let sim = cfg.dynamics.as_ref().map(|d| sim(d, cfg.seed)).transpose()?;
    Ok(Setup {
        grid,
        weight,
        kernel: k,
        model,
        sim,
    })
}
