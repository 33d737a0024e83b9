//! Finite multi-population Poisson-jump neurons, simulated exactly by
//! thinning, and their comparison with the mean-field equation.
//!
//! A jump adds the same amount to every neuron of a population, so each
//! potential splits as `X^{k,i}(t) = e^{−αt} X₀^{k,i} + S_k(t)`: the initial
//! spread decays deterministically and all interaction lives in the `P`
//! shared offsets. An event therefore costs `O(P)` and between events the
//! potentials follow the exact exponential decay.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::dynamics::{drive_path, for_each_path, path_rng, Model, Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelOperator;
use crate::noise::{NoiseKind, NoiseModel};
use crate::space::{Field, Grid, Weight};
use crate::stats::{mean_se, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl InitialLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Uniform { low, high } => 0.5 * (low + high),
            Self::Gaussian { mean, .. } => mean,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { value } => value.is_finite(),
            Self::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Self::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid initial law {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        match *self {
            Self::Constant { value } => out.fill(value),
            Self::Uniform { low, high } => {
                let d = Uniform::new(low, high).map_err(|e| Error::Config(e.to_string()))?;
                out.iter_mut().for_each(|x| *x = d.sample(rng));
            }
            Self::Gaussian { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
                out.iter_mut().for_each(|x| *x = d.sample(rng));
            }
        }
        Ok(())
    }
}

/// How the thinning bound on the rate is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateCap {
    /// `sup f` for bounded rates; for unbounded monotone rates
    /// `f(2·max(M, 0))` with `M` the largest current potential, raised
    /// whenever a potential leaves that range.
    #[default]
    Auto,
    /// Rates above `cap` are clipped to it and counted.
    Fixed { cap: f64 },
}

#[derive(Clone, Debug)]
pub struct ParticleConfig {
    /// Neurons per population; `P` is the length.
    pub populations: Vec<usize>,
    /// `w_tilde[k][l]`: effect on population `k` of a spike in population `l`.
    pub w_tilde: Vec<Vec<f64>>,
    pub alpha: f64,
    pub rate: Activation<f64>,
    pub rate_cap: RateCap,
    pub horizon: f64,
    pub dt_report: f64,
    pub initial: Vec<InitialLaw>,
    pub seed: u64,
    pub record_events: bool,
}

impl ParticleConfig {
    pub fn n_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn total(&self) -> usize {
        self.populations.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.populations.len();
        if p == 0 || self.populations.contains(&0) {
            return Err(Error::Config("every population needs at least one neuron".into()));
        }
        if self.w_tilde.len() != p || self.w_tilde.iter().any(|r| r.len() != p) {
            return Err(Error::Config(format!("w_tilde must be {p}×{p}")));
        }
        if self.w_tilde.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("w_tilde entries must be finite".into()));
        }
        if self.initial.len() != p {
            return Err(Error::Config(format!(
                "{} initial laws for {p} populations",
                self.initial.len()
            )));
        }
        for law in &self.initial {
            law.validate()?;
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite() && self.dt_report > 0.0 && self.dt_report <= self.horizon) {
            return Err(Error::Config("need 0 < dt_report ≤ T < ∞".into()));
        }
        if let RateCap::Fixed { cap } = self.rate_cap {
            if !(cap >= 0.0 && cap.is_finite()) {
                return Err(Error::Config(format!("rate cap must be finite and non-negative, got {cap}")));
            }
        } else if rate_sup(&self.rate).is_none() && !self.rate.is_monotone() {
            return Err(Error::Config(format!(
                "rate `{}` is unbounded and not monotone; give a fixed rate cap",
                self.rate.name()
            )));
        }
        Ok(())
    }

    /// Report times `0, dt_report, 2·dt_report, …` and the horizon.
    pub fn report_times(&self) -> Vec<f64> {
        let full = (self.horizon / self.dt_report + 1e-9).floor() as usize;
        let mut ts: Vec<f64> = (0..=full).map(|k| k as f64 * self.dt_report).collect();
        if self.horizon - ts[full] > 1e-9 * self.dt_report {
            ts.push(self.horizon);
        }
        ts
    }
}

/// Supremum of the clipped rate `max(f, 0)`, when finite.
fn rate_sup(f: &Activation<f64>) -> Option<f64> {
    match f {
        Activation::Relu => None,
        Activation::Logistic | Activation::Tanh | Activation::Heaviside | Activation::SqrtLogistic => Some(1.0),
        // Piecewise linear with clamped ends: the maximum sits on a knot.
        Activation::Custom { fs, .. } => Some(fs.iter().copied().fold(0.0, f64::max)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub population: usize,
    pub neuron: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ThinningStats {
    pub candidates: u64,
    pub accepted: u64,
    pub cap_refreshes: u64,
    pub negative_rate_clips: u64,
    pub cap_clips: u64,
}

/// The particle state at a current time.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    alpha: f64,
    w_tilde: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    /// First flat index of each population.
    offsets: Vec<usize>,
    initial: Vec<f64>,
    init_mean: Vec<f64>,
    init_var: Vec<f64>,
    init_max: Vec<f64>,
    shared: Vec<f64>,
    time: f64,
    jumps: Vec<u64>,
}

impl ParticleSystem {
    /// Draws initial potentials population by population from `rng`.
    pub fn new(cfg: &ParticleConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut initial = vec![0.0; cfg.total()];
        let mut offsets = Vec::with_capacity(cfg.n_populations());
        let mut start = 0;
        for (law, &n) in cfg.initial.iter().zip(&cfg.populations) {
            offsets.push(start);
            law.sample(rng, &mut initial[start..start + n])?;
            start += n;
        }
        let mut sys = Self {
            alpha: cfg.alpha,
            w_tilde: cfg.w_tilde.clone(),
            sizes: cfg.populations.clone(),
            offsets,
            initial,
            init_mean: Vec::new(),
            init_var: Vec::new(),
            init_max: Vec::new(),
            shared: vec![0.0; cfg.n_populations()],
            time: 0.0,
            jumps: vec![0; cfg.n_populations()],
        };
        for k in 0..sys.sizes.len() {
            let xs = sys.population_initial(k);
            let e = mean_se(xs);
            let var = xs.iter().map(|x| (x - e.mean).powi(2)).sum::<f64>() / xs.len() as f64;
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            sys.init_mean.push(e.mean);
            sys.init_var.push(var);
            sys.init_max.push(max);
        }
        Ok(sys)
    }

    fn population_initial(&self, k: usize) -> &[f64] {
        &self.initial[self.offsets[k]..self.offsets[k] + self.sizes[k]]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn jumps(&self) -> &[u64] {
        &self.jumps
    }

    /// Decays the shared offsets to `t ≥ time`.
    pub fn advance_to(&mut self, t: f64) {
        debug_assert!(t >= self.time);
        let d = (-self.alpha * (t - self.time)).exp();
        self.shared.iter_mut().for_each(|s| *s *= d);
        self.time = t;
    }

    fn decay(&self) -> f64 {
        (-self.alpha * self.time).exp()
    }

    pub fn potential(&self, k: usize, i: usize) -> f64 {
        self.decay() * self.initial[self.offsets[k] + i] + self.shared[k]
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.decay() * self.init_mean[k] + self.shared[k]
    }

    /// Population variance (divisor `N_k`).
    pub fn variance(&self, k: usize) -> f64 {
        self.decay().powi(2) * self.init_var[k]
    }

    pub fn max_potential(&self) -> f64 {
        let d = self.decay();
        (0..self.sizes.len())
            .map(|k| d * self.init_max[k] + self.shared[k])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// A spike of neuron `(l, ·)` at the current time: every neuron of
    /// population `k` moves by `w̃(k, l)/N_l`.
    pub fn fire(&mut self, l: usize) {
        let n_l = self.sizes[l] as f64;
        for (s, row) in self.shared.iter_mut().zip(&self.w_tilde) {
            *s += row[l] / n_l;
        }
        self.jumps[l] += 1;
    }

    /// `(population, index)` of flat neuron index `idx`.
    fn locate(&self, idx: usize) -> (usize, usize) {
        let k = self.offsets.partition_point(|o| *o <= idx) - 1;
        (k, idx - self.offsets[k])
    }
}

/// Per-population summaries on the report grid.
#[derive(Clone, Debug, Serialize)]
pub struct PopulationPath {
    pub times: Vec<f64>,
    /// `means[t][k]`.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Cumulative spikes emitted by each population.
    pub jumps: Vec<Vec<u64>>,
    pub stats: ThinningStats,
    pub events: Vec<JumpEvent>,
    pub seed: u64,
    pub run: u64,
}

impl PopulationPath {
    pub fn mean_series(&self, k: usize) -> Vec<f64> {
        self.means.iter().map(|m| m[k]).collect()
    }
}

struct Thinning<'a> {
    rate: &'a Activation<f64>,
    mode: RateCap,
    sup: Option<f64>,
    cap: f64,
    /// Rates are dominated while every potential stays below this.
    valid_below: f64,
}

impl<'a> Thinning<'a> {
    fn new(cfg: &'a ParticleConfig) -> Self {
        let mut t = Self {
            rate: &cfg.rate,
            mode: cfg.rate_cap,
            sup: rate_sup(&cfg.rate),
            cap: 0.0,
            valid_below: f64::INFINITY,
        };
        if let RateCap::Fixed { cap } = cfg.rate_cap {
            t.cap = cap;
        } else if let Some(s) = t.sup {
            t.cap = s;
        }
        t
    }

    fn adaptive(&self) -> bool {
        self.mode == RateCap::Auto && self.sup.is_none()
    }

    fn refresh(&mut self, max_potential: f64) {
        let x = 2.0 * max_potential.max(0.0);
        self.valid_below = x;
        self.cap = self.rate.eval(x).max(0.0);
    }

    fn rate_at(&self, x: f64, stats: &mut ThinningStats) -> f64 {
        let r = self.rate.eval(x);
        if r < 0.0 {
            stats.negative_rate_clips += 1;
            0.0
        } else if r > self.cap {
            // Only reachable with a fixed cap.
            stats.cap_clips += 1;
            self.cap
        } else {
            r
        }
    }
}

/// One run of the particle system; `run` selects the random stream.
pub fn simulate_particles_run(cfg: &ParticleConfig, run: u64) -> Result<PopulationPath> {
    let mut rng = path_rng(cfg.seed, run);
    let mut sys = ParticleSystem::new(cfg, &mut rng)?;
    let p = cfg.n_populations();
    let n_total = cfg.total();
    let mut thin = Thinning::new(cfg);
    let mut stats = ThinningStats::default();
    if thin.adaptive() {
        thin.refresh(sys.max_potential());
    }

    let times = cfg.report_times();
    let mut path = PopulationPath {
        times: times.clone(),
        means: Vec::with_capacity(times.len()),
        variances: Vec::with_capacity(times.len()),
        jumps: Vec::with_capacity(times.len()),
        stats: ThinningStats::default(),
        events: Vec::new(),
        seed: cfg.seed,
        run,
    };
    let record = |sys: &ParticleSystem, path: &mut PopulationPath| {
        path.means.push((0..p).map(|k| sys.mean(k)).collect());
        path.variances.push((0..p).map(|k| sys.variance(k)).collect());
        path.jumps.push(sys.jumps().to_vec());
    };
    record(&sys, &mut path);

    for &t_report in &times[1..] {
        loop {
            let total_rate = n_total as f64 * thin.cap;
            let gap = if total_rate > 0.0 {
                Exp::new(total_rate)
                    .map_err(|e| Error::Config(e.to_string()))?
                    .sample(&mut rng)
            } else {
                f64::INFINITY
            };
            // Candidates past the report time are discarded; the bound
            // process is memoryless, so redrawing from there is exact.
            if sys.time() + gap > t_report {
                break;
            }
            sys.advance_to(sys.time() + gap);
            stats.candidates += 1;
            let (l, j) = sys.locate(rng.random_range(0..n_total));
            let r = thin.rate_at(sys.potential(l, j), &mut stats);
            if rng.random::<f64>() * thin.cap < r {
                sys.fire(l);
                stats.accepted += 1;
                if cfg.record_events {
                    path.events.push(JumpEvent {
                        time: sys.time(),
                        population: l,
                        neuron: j,
                    });
                }
                if thin.adaptive() && sys.max_potential() > thin.valid_below {
                    thin.refresh(sys.max_potential());
                    stats.cap_refreshes += 1;
                }
            }
        }
        sys.advance_to(t_report);
        if thin.adaptive() {
            // Potentials only drift toward zero between spikes, so the cap
            // may be lowered at report times.
            thin.refresh(sys.max_potential());
        }
        record(&sys, &mut path);
    }
    path.stats = stats;
    Ok(path)
}

pub fn simulate_particles(cfg: &ParticleConfig) -> Result<PopulationPath> {
    simulate_particles_run(cfg, 0)
}

/// Box index of each node of a 1-D grid on `[0, 1]` split into `p` boxes.
/// Box `k` owns the nodes in `(k/p, (k+1)/p]`, and box 0 also owns `x = 0`.
pub fn box_assignment(grid: &Grid<f64>, p: usize) -> Result<Vec<usize>> {
    let bounds = grid.bounds();
    if grid.dim() != 1 || (bounds[0].0 - 0.0).abs() > 1e-12 || (bounds[0].1 - 1.0).abs() > 1e-12 {
        return Err(Error::Dimension(
            "population/grid alignment mismatch: the grid must be [0, 1]".into(),
        ));
    }
    let n = grid.len();
    if p == 0 || !(n - 1).is_multiple_of(p) {
        return Err(Error::Dimension(format!(
            "population/grid alignment mismatch: {} intervals do not split into {p} boxes",
            n - 1
        )));
    }
    let m = (n - 1) / p;
    Ok((0..n).map(|i| if i == 0 { 0 } else { (i - 1) / m }).collect())
}

/// Quadrature mass `Q_l` of each box.
fn box_masses(grid: &Grid<f64>, boxes: &[usize], p: usize) -> Vec<f64> {
    let mut q = vec![0.0; p];
    for (b, w) in boxes.iter().zip(grid.quadrature()) {
        q[*b] += w;
    }
    q
}

/// The mean-field equation on `[0, 1]` for populations embedded as boxes.
///
/// Drift entries are `w̃(k, l)/Q_l`, so `K F(u)` on a box-constant state is
/// exactly `Σ_l w̃(k, l) f(u_l)`. The noise kernel `w̃(k, l)·√(N/(N_l Q_l))`
/// gives box `k` the variance rate `Σ_l w̃(k, l)² f(u_l)/N_l` of the
/// particle means; with equal boxes and populations both kernels coincide.
pub fn meanfield_model(cfg: &ParticleConfig, grid: &Grid<f64>) -> Result<Model<f64>> {
    cfg.validate()?;
    let p = cfg.n_populations();
    let boxes = box_assignment(grid, p)?;
    let q = box_masses(grid, &boxes, p);
    let n = cfg.total() as f64;
    let dim = grid.len();
    let drift = nalgebra::DMatrix::from_fn(dim, dim, |i, j| cfg.w_tilde[boxes[i]][boxes[j]] / q[boxes[j]]);
    let noise = nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
        let l = boxes[j];
        cfg.w_tilde[boxes[i]][l] * (n / (cfg.populations[l] as f64 * q[l])).sqrt()
    });
    let noise = NoiseModel::kernel_mollified(KernelOperator::from_matrix(grid, noise)?, cfg.rate.clone(), n)?;
    Model::new(
        KernelOperator::from_matrix(grid, drift)?,
        cfg.rate.clone(),
        noise,
        Weight::uniform(grid),
    )
}

#[derive(Clone, Copy, Debug)]
pub struct CompareOptions {
    pub n_runs: usize,
    /// Step of the mean-field integrator; must divide `dt_report`.
    pub dt: f64,
    pub scheme: Scheme,
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            n_runs: 32,
            dt: 0.01,
            scheme: Scheme::ExponentialEuler,
            bootstrap: 1000,
            level: 0.95,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanfieldReport {
    pub times: Vec<f64>,
    /// `particle[t][k]`: run average of the population-`k` mean.
    pub particle: Vec<Vec<Estimate>>,
    /// `field[t][k]`: run average of the field over box `k`.
    pub field: Vec<Vec<Estimate>>,
    /// `max_k |particle − field|` at each time.
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
    pub max_at: f64,
    /// Bootstrap interval of `max_discrepancy`, resampling runs on both sides.
    pub ci: (f64, f64),
    pub n_runs: usize,
    pub n_neurons: usize,
    pub thinning: ThinningStats,
}

impl MeanfieldReport {
    /// Whether every difference lies within `z` joint standard errors.
    pub fn within_joint_se(&self, z: f64) -> bool {
        self.particle.iter().zip(&self.field).all(|(ps, fs)| {
            ps.iter()
                .zip(fs)
                .all(|(a, b)| (a.mean - b.mean).abs() <= z * a.stderr.hypot(b.stderr) + 1e-12)
        })
    }
}

fn check_embedding(cfg: &ParticleConfig, model: &Model<f64>, grid: &Grid<f64>) -> Result<Vec<usize>> {
    let p = cfg.n_populations();
    let boxes = box_assignment(grid, p)?;
    if model.grid_id() != grid.id() {
        return Err(Error::Dimension(
            "population/grid alignment mismatch: model lives on another grid".into(),
        ));
    }
    let q = box_masses(grid, &boxes, p);
    let scale = cfg.w_tilde.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let w = model.kernel.matrix();
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let want = cfg.w_tilde[boxes[i]][boxes[j]];
            if (w[(i, j)] * q[boxes[j]] - want).abs() > 1e-9 * scale {
                return Err(Error::Dimension(format!(
                    "population/grid alignment mismatch: kernel entry ({i}, {j}) does not embed w̃({}, {})",
                    boxes[i], boxes[j]
                )));
            }
        }
    }
    match model.noise.kind() {
        NoiseKind::KernelMollified { population, .. } if (*population - cfg.total() as f64).abs() < 0.5 => Ok(boxes),
        _ => Err(Error::Config(format!(
            "mean-field model needs kernel-mollified noise with population scale {}",
            cfg.total()
        ))),
    }
}

/// Run averages of particle population means against box averages of the
/// mean-field equation started from the initial-law means.
pub fn meanfield_compare(
    cfg: &ParticleConfig,
    model: &Model<f64>,
    grid: &Grid<f64>,
    opts: &CompareOptions,
) -> Result<MeanfieldReport> {
    cfg.validate()?;
    let boxes = check_embedding(cfg, model, grid)?;
    let p = cfg.n_populations();
    let stride = (cfg.dt_report / opts.dt).round() as usize;
    if stride == 0 || ((stride as f64) * opts.dt - cfg.dt_report).abs() > 1e-9 * cfg.dt_report {
        return Err(Error::Config(format!(
            "integrator step {} does not divide the report step {}",
            opts.dt, cfg.dt_report
        )));
    }
    if opts.n_runs < 2 {
        return Err(Error::Config("need at least two runs for error bars".into()));
    }

    let particle_runs = for_each_path(opts.n_runs, |r| simulate_particles_run(cfg, r))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let times = cfg.report_times();

    let sim = SimConfig {
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        dt: opts.dt,
        scheme: opts.scheme,
        n_paths: opts.n_runs,
        // A separate stream family from the particle runs.
        seed: cfg.seed ^ 0x6d65_616e_6669_656c,
        record_stride: stride,
    };
    sim.validate()?;
    let snap = sim.snapshot_times();
    if snap.len() != times.len() || snap.iter().zip(&times).any(|(a, b)| (a - b).abs() > 1e-9 * cfg.dt_report) {
        return Err(Error::Config("integrator snapshots do not line up with report times".into()));
    }
    let q = box_masses(grid, &boxes, p);
    let u0 = Field::new(grid, boxes.iter().map(|b| cfg.initial[*b].mean()).collect())?;
    let quad = grid.quadrature();
    let field_runs = for_each_path(opts.n_runs, |path| -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(times.len());
        drive_path(u0.values(), &sim, model, path, |k, _, u| {
            if sim.is_snapshot(k) {
                let mut avg = vec![0.0; p];
                for ((x, w), b) in u.iter().zip(quad).zip(&boxes) {
                    avg[*b] += x * w;
                }
                out.push(avg.iter().zip(&q).map(|(a, m)| a / m).collect());
            }
        })?;
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let estimate = |t: usize, k: usize, field: bool| -> Estimate {
        let xs: Vec<f64> = if field {
            field_runs.iter().map(|r| r[t][k]).collect()
        } else {
            particle_runs.iter().map(|r| r.means[t][k]).collect()
        };
        mean_se(&xs)
    };
    let particle: Vec<Vec<Estimate>> = (0..times.len())
        .map(|t| (0..p).map(|k| estimate(t, k, false)).collect())
        .collect();
    let field: Vec<Vec<Estimate>> = (0..times.len())
        .map(|t| (0..p).map(|k| estimate(t, k, true)).collect())
        .collect();
    let discrepancy: Vec<f64> = particle
        .iter()
        .zip(&field)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.mean - y.mean).abs()).fold(0.0, f64::max))
        .collect();
    let (arg, max_discrepancy) = discrepancy
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });

    let pm: Vec<Vec<Vec<f64>>> = particle_runs.iter().map(|r| r.means.clone()).collect();
    let ci = bootstrap_max_discrepancy(&pm, &field_runs, opts.bootstrap, opts.level, cfg.seed);

    let mut thinning = ThinningStats::default();
    for r in &particle_runs {
        thinning.candidates += r.stats.candidates;
        thinning.accepted += r.stats.accepted;
        thinning.cap_refreshes += r.stats.cap_refreshes;
        thinning.negative_rate_clips += r.stats.negative_rate_clips;
        thinning.cap_clips += r.stats.cap_clips;
    }
    Ok(MeanfieldReport {
        max_at: times[arg],
        times,
        particle,
        field,
        discrepancy,
        max_discrepancy,
        ci,
        n_runs: opts.n_runs,
        n_neurons: cfg.total(),
        thinning,
    })
}

/// Percentile interval of `max_{t,k} |ā − b̄|` under independent resampling
/// of the runs `a[r][t][k]` and `b[r][t][k]`.
fn bootstrap_max_discrepancy(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut rng = path_rng(seed, u64::MAX);
    let (na, nb) = (a.len(), b.len());
    let (nt, p) = (a[0].len(), a[0][0].len());
    let mut mean_a = vec![0.0; nt * p];
    let mut mean_b = vec![0.0; nt * p];
    let mut stats: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            mean_a.fill(0.0);
            mean_b.fill(0.0);
            for _ in 0..na {
                let r = &a[rng.random_range(0..na)];
                for (t, row) in r.iter().enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        mean_a[t * p + k] += v / na as f64;
                    }
                }
            }
            for _ in 0..nb {
                let r = &b[rng.random_range(0..nb)];
                for (t, row) in r.iter().enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        mean_b[t * p + k] += v / nb as f64;
                    }
                }
            }
            mean_a.iter().zip(&mean_b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| stats[((q * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
    (at(tail), at(1.0 - tail))
}
