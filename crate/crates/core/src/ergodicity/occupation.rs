//! Time-averaged occupation measures `Q_T(v,·)` and a Fortet–Mourier
//! lower bound through a fixed observable dictionary.
//!
//! Measures are summarized by per-path time averages of each observable,
//! which is all the dictionary distance and the moment checks need; paths
//! are independent, so standard errors come from the spread across paths.

use serde::Serialize;

use super::{Assumption, Certificate};
use crate::dynamics::{drive_path, for_each_path, Model, SimConfig};
use crate::error::{Error, Result};
use crate::noise::cosine_modes;
use crate::nonlocal::NonlocalMetric;
use crate::scalar::Real;
use crate::space::{same_grid, Field, Grid, GridId, Weight};
use crate::stats::{mean_se, Estimate};

pub const DICTIONARY_VERSION: &str = "probe-dict-v1";
const PROBES: usize = 8;

/// Observables `u ↦ ½ tanh(⟨u, gₖ⟩_ρ)` for `ρ`-normalized cosine probes
/// `gₖ`, and `u ↦ ½ tanh(‖u‖²/(1 + ‖u‖))`. Each has sup ≤ ½ and Lipschitz
/// constant ≤ ½, so its bounded-Lipschitz norm is at most 1.
#[derive(Clone, Debug)]
pub struct Dictionary<T: Real> {
    grid: GridId,
    probes: Vec<Vec<T>>,
    weight: Weight<T>,
}

impl<T: Real> Dictionary<T> {
    pub fn new(grid: &Grid<T>, w: &Weight<T>) -> Result<Self> {
        same_grid(w.grid_id(), grid.id())?;
        let probes = cosine_modes(grid, PROBES)
            .into_iter()
            .filter_map(|g| {
                let n = w.norm_of(g.values());
                (n > T::zero()).then(|| g.values().iter().map(|v| *v / n).collect())
            })
            .collect();
        Ok(Self {
            grid: grid.id(),
            probes,
            weight: w.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.probes.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn describe(&self) -> Vec<String> {
        let mut d: Vec<String> = (0..self.probes.len()).map(|k| format!("0.5*tanh(<u, cos_{k}>)")).collect();
        d.push("0.5*tanh(|u|^2/(1+|u|))".into());
        d
    }

    pub fn evaluate(&self, u: &[T], out: &mut Vec<f64>) {
        for g in &self.probes {
            out.push(0.5 * self.weight.dot(u, g).as_f64().tanh());
        }
        let n = self.weight.norm_of(u).as_f64();
        out.push(0.5 * (n * n / (1.0 + n)).tanh());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    fn contains(&self, t: f64) -> bool {
        t >= self.start - 1e-12 && t <= self.end + 1e-12
    }
}

/// Tightness check on `{γ‖u‖₁² ≤ R}` for a few radii.
#[derive(Clone, Debug, Serialize)]
pub struct TightnessCheck {
    pub gamma: f64,
    pub eta: f64,
    pub origin_h1_sq: f64,
    pub radii: Vec<f64>,
    pub mass: Vec<Estimate>,
    /// `1 − (‖v‖₁² + ηT)/((T − s)R)`, from the energy estimate and Markov.
    pub bound: Vec<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OccupationMeasure {
    #[serde(skip)]
    grid: Option<GridId>,
    pub window: Window,
    pub n_paths: usize,
    pub samples_per_path: usize,
    pub dictionary_version: &'static str,
    /// Per observable, mean over paths of the path's time average.
    pub observables: Vec<Estimate>,
    pub second_moment: Estimate,
    pub tightness: Option<TightnessCheck>,
}

impl OccupationMeasure {
    /// The empirical measure with equal weights on `states`.
    pub fn from_states<T: Real>(dict: &Dictionary<T>, states: &[Field<T>]) -> Result<Self> {
        let mut acc = vec![0.0; dict.len()];
        let mut second = 0.0;
        let mut feats = Vec::with_capacity(dict.len());
        for s in states {
            same_grid(s.grid_id(), dict.grid)?;
            feats.clear();
            dict.evaluate(s.values(), &mut feats);
            for (a, f) in acc.iter_mut().zip(&feats) {
                *a += *f;
            }
            second += dict.weight.norm_of(s.values()).as_f64().powi(2);
        }
        let n = states.len().max(1) as f64;
        Ok(Self {
            grid: Some(dict.grid),
            window: Window { start: 0.0, end: 0.0 },
            n_paths: 1,
            samples_per_path: states.len(),
            dictionary_version: DICTIONARY_VERSION,
            observables: acc
                .iter()
                .map(|a| Estimate {
                    mean: a / n,
                    stderr: 0.0,
                })
                .collect(),
            second_moment: Estimate {
                mean: second / n,
                stderr: 0.0,
            },
            tightness: None,
        })
    }
}

/// Largest dictionary mean difference; a lower bound on the Fortet–Mourier
/// distance and a pseudometric by construction.
pub fn fm_distance(a: &OccupationMeasure, b: &OccupationMeasure) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Dimension("occupation measures live on different grids".into()));
    }
    if a.dictionary_version != b.dictionary_version || a.observables.len() != b.observables.len() {
        return Err(Error::Config("occupation measures use different dictionaries".into()));
    }
    Ok(a.observables
        .iter()
        .zip(&b.observables)
        .map(|(x, y)| (x.mean - y.mean).abs())
        .fold(0.0, f64::max))
}

/// Inputs for the tightness diagnostic: `γ = 2α − β` and the corollary `η`.
#[derive(Clone, Copy, Debug)]
pub struct TightnessSpec {
    pub gamma: f64,
    pub eta: f64,
}

/// Occupation measures of the path started at `v` over each window, from
/// one simulation to the latest window end.
pub fn occupation_measures<T: Real>(
    v: &Field<T>,
    cfg: &SimConfig,
    model: &Model<T>,
    windows: &[Window],
    tightness: Option<(&NonlocalMetric<T>, TightnessSpec)>,
    grid: &Grid<T>,
) -> Result<Vec<OccupationMeasure>> {
    same_grid(v.grid_id(), model.grid_id())?;
    let end = windows.iter().map(|w| w.end).fold(0.0, f64::max);
    if windows.iter().any(|w| !(w.start >= 0.0 && w.end > w.start)) {
        return Err(Error::Config("occupation windows need 0 ≤ start < end".into()));
    }
    let mut cfg = cfg.clone();
    cfg.horizon = end;
    cfg.validate()?;
    let dict = Dictionary::new(grid, &model.weight)?;
    let d = dict.len();

    let (origin_h1_sq, radii) = match &tightness {
        Some((m, spec)) => {
            let e = m.h1_norm(v)?.as_f64().powi(2);
            let base = e + spec.eta;
            (e, [2.0, 4.0, 10.0].iter().map(|k| k * base.max(1e-12)).collect::<Vec<f64>>())
        }
        None => (0.0, Vec::new()),
    };
    // Layout per window: dictionary, ‖u‖², then one indicator per radius.
    let width = d + 1 + radii.len();

    let per_path = for_each_path(cfg.n_paths, |path| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let mut sums = vec![vec![0.0; width]; windows.len()];
        let mut counts = vec![0usize; windows.len()];
        let mut feats = Vec::with_capacity(width);
        let mut failure = None;
        drive_path(v.values(), &cfg, model, path, |k, t, u| {
            if failure.is_some() || !cfg.is_snapshot(k) || !windows.iter().any(|w| w.contains(t)) {
                return;
            }
            feats.clear();
            dict.evaluate(u, &mut feats);
            feats.push(model.weight.norm_of(u).as_f64().powi(2));
            if let Some((m, spec)) = &tightness {
                match m.h1_norm_slice(u) {
                    Ok(e) => {
                        let energy = spec.gamma * e.as_f64().powi(2);
                        feats.extend(radii.iter().map(|r| f64::from(u8::from(energy <= *r))));
                    }
                    Err(e) => failure = Some(e),
                }
            }
            for (i, w) in windows.iter().enumerate() {
                if w.contains(t) && feats.len() == width {
                    counts[i] += 1;
                    for (s, f) in sums[i].iter_mut().zip(&feats) {
                        *s += *f;
                    }
                }
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok((sums, counts)),
        }
    });
    let mut paths = Vec::with_capacity(per_path.len());
    for r in per_path {
        paths.push(r?);
    }
    Ok(windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let averages: Vec<Vec<f64>> = paths
                .iter()
                .map(|(s, c)| s[i].iter().map(|x| x / c[i].max(1) as f64).collect())
                .collect();
            let column = |j: usize| mean_se(&averages.iter().map(|a| a[j]).collect::<Vec<_>>());
            let tightness = tightness.as_ref().map(|(_, spec)| {
                let mass: Vec<Estimate> = (0..radii.len()).map(|j| column(d + 1 + j)).collect();
                let bound: Vec<f64> = radii
                    .iter()
                    .map(|r| 1.0 - (origin_h1_sq + spec.eta * w.end) / ((w.end - w.start) * r))
                    .collect();
                let holds = mass.iter().zip(&bound).all(|(m, b)| m.mean + 3.0 * m.stderr >= *b - 1e-12);
                TightnessCheck {
                    gamma: spec.gamma,
                    eta: spec.eta,
                    origin_h1_sq,
                    radii: radii.clone(),
                    mass,
                    bound,
                    holds,
                }
            });
            OccupationMeasure {
                grid: Some(v.grid_id()),
                window: *w,
                n_paths: cfg.n_paths,
                samples_per_path: paths.first().map_or(0, |(_, c)| c[i]),
                dictionary_version: DICTIONARY_VERSION,
                observables: (0..d).map(column).collect(),
                second_moment: column(d),
                tightness,
            }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct KbReport {
    pub horizons: Vec<f64>,
    pub burn_in_fraction: f64,
    pub dictionary: Vec<String>,
    pub dictionary_version: &'static str,
    pub measures: Vec<OccupationMeasure>,
    /// Distances between the measures at successive horizons.
    pub successive_distances: Vec<f64>,
}

impl KbReport {
    pub fn distances_decreasing(&self) -> bool {
        self.successive_distances.windows(2).all(|p| p[1] < p[0])
    }
}

/// Occupation measures over `[b·Tᵢ, Tᵢ]` for increasing horizons `Tᵢ`.
pub fn krylov_bogoliubov<T: Real>(
    v: &Field<T>,
    cfg: &SimConfig,
    model: &Model<T>,
    grid: &Grid<T>,
    horizons: &[f64],
    burn_in_fraction: f64,
    tightness: Option<(&NonlocalMetric<T>, TightnessSpec)>,
) -> Result<KbReport> {
    if horizons.is_empty() || horizons.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Config("horizons must be non-empty and strictly increasing".into()));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
    }
    let windows: Vec<Window> = horizons
        .iter()
        .map(|t| Window {
            start: burn_in_fraction * t,
            end: *t,
        })
        .collect();
    let measures = occupation_measures(v, cfg, model, &windows, tightness, grid)?;
    let successive_distances = measures
        .windows(2)
        .map(|p| fm_distance(&p[0], &p[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(KbReport {
        horizons: horizons.to_vec(),
        burn_in_fraction,
        dictionary: Dictionary::new(grid, &model.weight)?.describe(),
        dictionary_version: DICTIONARY_VERSION,
        measures,
        successive_distances,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondMomentReport {
    pub c_hat: f64,
    pub c_tilde: f64,
    pub gamma_tilde: f64,
    pub estimate: Estimate,
    /// `estimate.mean − 3·SE ≤ Ĉ`.
    pub within_bound: bool,
}

/// Compares the occupation second moment with `Ĉ = C̃/γ̃`.
pub fn second_moment_bound(cert: &Certificate, occ: &OccupationMeasure) -> Result<SecondMomentReport> {
    if cert.assumption != Assumption::Ergodicity {
        return Err(Error::Config("second-moment bound needs the ergodicity certificate".into()));
    }
    if !cert.passed() {
        return Err(Error::CertificateFailed(format!(
            "ergodicity margin {:?} is not positive",
            cert.margin
        )));
    }
    let c_hat = cert.constant("c_hat");
    let e = occ.second_moment;
    Ok(SecondMomentReport {
        c_hat,
        c_tilde: cert.constant("c_tilde"),
        gamma_tilde: cert.constant("gamma_tilde"),
        estimate: e,
        within_bound: e.mean - 3.0 * e.stderr <= c_hat * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::dynamics::Scheme;
    use crate::ergodicity::{certify, CertifyOptions};
    use crate::kernel::{assemble, KernelOperator, KernelSpec};
    use crate::noise::NoiseModel;
    use proptest::prelude::*;

    fn cfg(horizon: f64, n_paths: usize, seed: u64) -> SimConfig {
        SimConfig {
            alpha: 1.0,
            horizon,
            dt: 0.05,
            scheme: Scheme::ExponentialEuler,
            n_paths,
            seed,
            record_stride: 2,
        }
    }

    #[test]
    fn point_masses_respect_the_lipschitz_bound() {
        let g = Grid::<f64>::interval(0.0, 2.0, 41).unwrap();
        let w = Weight::from_fn(&g, |x| 1.0 + x[0]).unwrap();
        let dict = Dictionary::new(&g, &w).unwrap();
        assert_eq!(dict.len(), 9);
        for s in 0..20 {
            let u = g.field_from_fn(|x| (x[0] * s as f64).sin() * 0.3 * s as f64).unwrap();
            let z = g.field_from_fn(|x| x[0] - 0.1 * s as f64).unwrap();
            let a = OccupationMeasure::from_states(&dict, std::slice::from_ref(&u)).unwrap();
            let b = OccupationMeasure::from_states(&dict, std::slice::from_ref(&z)).unwrap();
            assert_eq!(fm_distance(&a, &a).unwrap(), 0.0);
            assert!(fm_distance(&a, &b).unwrap() <= w.norm(&u.sub(&z).unwrap()).unwrap() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn dictionary_distance_is_a_pseudometric(
            a in proptest::collection::vec(-3.0f64..3.0, 9),
            b in proptest::collection::vec(-3.0f64..3.0, 9),
            c in proptest::collection::vec(-3.0f64..3.0, 9),
        ) {
            let g = Grid::<f64>::interval(0.0, 1.0, 9).unwrap();
            let dict = Dictionary::new(&g, &Weight::uniform(&g)).unwrap();
            let m = |v: Vec<f64>| OccupationMeasure::from_states(&dict, &[Field::new(&g, v).unwrap()]).unwrap();
            let (a, b, c) = (m(a), m(b), m(c));
            let ab = fm_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, fm_distance(&b, &a).unwrap());
            prop_assert!(ab <= fm_distance(&a, &c).unwrap() + fm_distance(&c, &b).unwrap() + 1e-15);
        }
    }

    #[test]
    fn zero_dynamics_give_the_point_mass_at_zero() {
        let g = Grid::<f64>::interval(0.0, 1.0, 11).unwrap();
        let m = Model::new(
            KernelOperator::zero(&g),
            Activation::constant(0.0),
            NoiseModel::none(&g),
            Weight::uniform(&g),
        )
        .unwrap();
        let occ = occupation_measures(&g.zeros(), &cfg(5.0, 2, 0), &m, &[Window { start: 0.0, end: 5.0 }], None, &g).unwrap();
        assert!(occ[0].observables.iter().all(|e| e.mean == 0.0));
        assert_eq!(occ[0].second_moment.mean, 0.0);
        let (set, _) = certify(&m, 1.0, &CertifyOptions::default()).unwrap();
        assert_eq!(set.ergodicity.constant("c_hat"), 0.0);
    }

    #[test]
    fn ou_stationary_second_moment_and_bound() {
        let g = Grid::<f64>::interval(0.0, 1.0, 21).unwrap();
        let w = Weight::uniform(&g);
        let sigma = [0.6, 0.4];
        let noise = NoiseModel::additive(&g, sigma.to_vec(), cosine_modes(&g, 2), "cosine").unwrap();
        let m = Model::new(KernelOperator::zero(&g), Activation::constant(0.0), noise, w).unwrap();
        let occ = occupation_measures(
            &g.zeros(),
            &cfg(60.0, 200, 4),
            &m,
            &[Window { start: 10.0, end: 60.0 }],
            None,
            &g,
        )
        .unwrap();
        // Cosine modes have unit norm on [0, 1].
        let exact = sigma.iter().map(|s| s * s).sum::<f64>() / 2.0;
        assert!(
            occ[0].second_moment.covers(exact, 3.0),
            "{:?} vs {exact}",
            occ[0].second_moment
        );
        let (set, _) = certify(&m, 1.0, &CertifyOptions::default()).unwrap();
        let report = second_moment_bound(&set.ergodicity, &occ[0]).unwrap();
        assert!(exact <= report.c_hat);
        assert!(report.within_bound);
    }

    #[test]
    fn deterministic_contraction_collapses() {
        let g = Grid::<f64>::interval(-2.0, 2.0, 21).unwrap();
        let k = assemble(&KernelSpec::gaussian(1.0).scaled(0.3), &g).unwrap();
        let m = Model::new(k, Activation::Logistic, NoiseModel::none(&g), Weight::uniform(&g)).unwrap();
        let r = krylov_bogoliubov(
            &g.constant_field(3.0),
            &cfg(1.0, 1, 0),
            &m,
            &g,
            &[5.0, 10.0, 20.0, 40.0],
            0.5,
            None,
        )
        .unwrap();
        assert!(r.distances_decreasing());
        assert!(r.successive_distances.last().unwrap() < &1e-3);
    }

    #[test]
    fn tightness_mass_dominates_the_bound() {
        let g = Grid::<f64>::interval(0.0, 1.0, 11).unwrap();
        let w = Weight::uniform(&g);
        let k = assemble(&KernelSpec::constant(1.0), &g).unwrap();
        let dec = crate::kernel::decompose(&k, &w).unwrap();
        let metric = crate::nonlocal::build_metric(&dec, &w, 1e-10).unwrap();
        let noise = NoiseModel::additive(&g, vec![0.1], crate::noise::metric_modes(&metric, 1).unwrap(), "metric").unwrap();
        let m = Model::new(k, Activation::Relu, noise, w).unwrap();
        let mut c = cfg(20.0, 50, 3);
        c.alpha = 2.0;
        let (set, metric) = certify(&m, 2.0, &CertifyOptions::default()).unwrap();
        let metric = metric.unwrap();
        let spec = TightnessSpec {
            gamma: set.invariance.constant("gamma"),
            eta: set.invariance.constant("eta_corollary"),
        };
        let r = krylov_bogoliubov(&metric.mode(0), &c, &m, &g, &[10.0, 20.0], 0.0, Some((&metric, spec))).unwrap();
        for occ in &r.measures {
            assert!(occ.tightness.as_ref().unwrap().holds);
        }
        let leaky = NoiseModel::additive(&g, vec![0.1, 0.1], cosine_modes(&g, 2), "cosine").unwrap();
        let m2 = Model::new(m.kernel.clone(), Activation::Relu, leaky, m.weight.clone()).unwrap();
        let bad = krylov_bogoliubov(&metric.mode(0), &c, &m2, &g, &[10.0], 0.0, Some((&metric, spec)));
        assert!(matches!(bad, Err(Error::SubspaceMembership { .. })));
    }
}
