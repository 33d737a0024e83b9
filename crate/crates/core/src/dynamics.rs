//! Time integration of `du = (−αu + K F(u)) dt + B(u) dW` in mild form.
//!
//! Paths are independent: path `k` draws from the ChaCha stream `k` of the
//! master seed, so ensembles give identical output under any scheduling.
//! Steppers consume Brownian increments rather than normal draws, which lets
//! coupled runs and convergence studies share one noise realization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::kernel::KernelOperator;
use crate::noise::NoiseModel;
use crate::nonlocal::NonlocalMetric;
use crate::scalar::Real;
use crate::space::{same_grid, Field, GridId, Weight};
use crate::stats::{mean_se, ols_with_se, Estimate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExponentialEuler,
    EulerMaruyama,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub alpha: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < dt ≤ T, got dt = {} and T = {}",
                self.dt, self.horizon
            )));
        }
        if self.n_paths == 0 || self.record_stride == 0 {
            return Err(Error::Config("n_paths and record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Step sizes: `⌊T/dt⌋` full steps and a shortened final one when `T/dt`
    /// is not an integer.
    pub fn step_sizes(&self) -> (usize, Option<f64>) {
        let ratio = self.horizon / self.dt;
        let full = (ratio + 1e-9).floor() as usize;
        let rest = self.horizon - full as f64 * self.dt;
        if rest > 1e-9 * self.dt {
            (full, Some(rest))
        } else {
            (full, None)
        }
    }

    pub fn total_steps(&self) -> usize {
        let (full, rest) = self.step_sizes();
        full + usize::from(rest.is_some())
    }

    /// Time after `k` steps.
    pub fn time_at(&self, k: usize) -> f64 {
        let (full, _) = self.step_sizes();
        if k <= full {
            k as f64 * self.dt
        } else {
            self.horizon
        }
    }

    /// Snapshots are taken every `record_stride` steps and at the horizon.
    pub fn is_snapshot(&self, k: usize) -> bool {
        k.is_multiple_of(self.record_stride) || k == self.total_steps()
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        (0..=self.total_steps())
            .filter(|k| self.is_snapshot(*k))
            .map(|k| self.time_at(k))
            .collect()
    }
}

/// `φ₁(z) = (eᶻ − 1)/z` with `φ₁(0) = 1`.
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Generator for path `path` of an ensemble with master seed `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Fills `dw` with independent `N(0, dt)` increments.
pub fn brownian_increments<T: Real>(rng: &mut ChaCha8Rng, dt: f64, dw: &mut [T]) {
    let s = dt.sqrt();
    for d in dw.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *d = T::of(s * z);
    }
}

/// The discretized model `{K, F, B}` on a weighted space.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub kernel: KernelOperator<T>,
    pub activation: Activation<T>,
    pub noise: NoiseModel<T>,
    pub weight: Weight<T>,
}

impl<T: Real> Model<T> {
    pub fn new(kernel: KernelOperator<T>, activation: Activation<T>, noise: NoiseModel<T>, weight: Weight<T>) -> Result<Self> {
        same_grid(noise.grid_id(), kernel.grid_id())?;
        same_grid(weight.grid_id(), kernel.grid_id())?;
        Ok(Self {
            kernel,
            activation,
            noise,
            weight,
        })
    }

    pub fn grid_id(&self) -> GridId {
        self.kernel.grid_id()
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    /// `out = K F(u)`, using `fu` as scratch.
    pub fn drift(&self, u: &[T], fu: &mut [T], out: &mut [T]) {
        if self.kernel.is_zero() {
            out.fill(T::zero());
            return;
        }
        self.activation.apply_slice(u, fu);
        self.kernel.apply_slice(fu, out);
    }
}

/// One scheme at one step size, with preallocated scratch.
pub struct Stepper<'m, T: Real> {
    model: &'m Model<T>,
    scheme: Scheme,
    alpha: T,
    dt: T,
    decay: T,
    drift_weight: T,
    gain: T,
    fu: Vec<T>,
    drift: Vec<T>,
    noise: Vec<T>,
}

impl<'m, T: Real> Stepper<'m, T> {
    pub fn new(model: &'m Model<T>, scheme: Scheme, alpha: f64, dt: f64) -> Self {
        let n = model.len();
        let z = -alpha * dt;
        // Exact OU variance over one step, so additive noise with K = 0 is
        // sampled from the true transition law.
        let gain = if z == 0.0 {
            1.0
        } else {
            ((-(2.0 * z).exp_m1()) / (-2.0 * z)).sqrt()
        };
        Self {
            model,
            scheme,
            alpha: T::of(alpha),
            dt: T::of(dt),
            decay: T::of(z.exp()),
            drift_weight: T::of(dt * phi1(z)),
            gain: T::of(gain),
            fu: vec![T::zero(); n],
            drift: vec![T::zero(); n],
            noise: vec![T::zero(); n],
        }
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Advances `u` in place with Brownian increments `dw`; returns whether
    /// the new state is finite.
    pub fn advance(&mut self, u: &mut [T], dw: &[T]) -> bool {
        self.model.drift(u, &mut self.fu, &mut self.drift);
        let noisy = !self.model.noise.is_zero();
        if noisy {
            self.model.noise.apply_slice(u, dw, &mut self.noise);
        }
        match self.scheme {
            Scheme::ExponentialEuler => {
                for ((ui, d), b) in u.iter_mut().zip(&self.drift).zip(&self.noise) {
                    let mut v = self.decay * *ui + self.drift_weight * *d;
                    if noisy {
                        v += self.gain * *b;
                    }
                    *ui = v;
                }
            }
            Scheme::EulerMaruyama => {
                for ((ui, d), b) in u.iter_mut().zip(&self.drift).zip(&self.noise) {
                    let mut v = *ui + self.dt * (*d - self.alpha * *ui);
                    if noisy {
                        v += *b;
                    }
                    *ui = v;
                }
            }
        }
        u.iter().all(|v| v.is_finite())
    }
}

/// One step from `u` with standard normal mode draws `xi`.
pub fn step<T: Real>(u: &Field<T>, cfg: &SimConfig, model: &Model<T>, xi: &[T]) -> Result<Field<T>> {
    same_grid(u.grid_id(), model.grid_id())?;
    if xi.len() != model.noise.m_modes() {
        return Err(Error::ModeCount {
            expected: model.noise.m_modes(),
            got: xi.len(),
        });
    }
    let s = T::of(cfg.dt.sqrt());
    let dw: Vec<T> = xi.iter().map(|x| *x * s).collect();
    let mut v = u.values().to_vec();
    if !Stepper::new(model, cfg.scheme, cfg.alpha, cfg.dt).advance(&mut v, &dw) {
        return Err(Error::BlowUp { time: cfg.dt, path: 0 });
    }
    Ok(Field::from_raw(u.grid_id(), v))
}

/// Integrates one path, calling `visit(k, t, u)` after every step and once
/// at `k = 0`.
pub fn drive_path<T: Real>(
    u0: &[T],
    cfg: &SimConfig,
    model: &Model<T>,
    path: u64,
    mut visit: impl FnMut(usize, f64, &[T]),
) -> Result<()> {
    let (full, rest) = cfg.step_sizes();
    let mut rng = path_rng(cfg.seed, path);
    let mut u = u0.to_vec();
    let mut dw = vec![T::zero(); model.noise.m_modes()];
    let noisy = !model.noise.is_zero();
    visit(0, 0.0, &u);
    let mut stepper = Stepper::new(model, cfg.scheme, cfg.alpha, cfg.dt);
    for k in 1..=full {
        if noisy {
            brownian_increments(&mut rng, cfg.dt, &mut dw);
        }
        if !stepper.advance(&mut u, &dw) {
            return Err(Error::BlowUp {
                time: cfg.time_at(k),
                path,
            });
        }
        visit(k, cfg.time_at(k), &u);
    }
    if let Some(h) = rest {
        if noisy {
            brownian_increments(&mut rng, h, &mut dw);
        }
        if !Stepper::new(model, cfg.scheme, cfg.alpha, h).advance(&mut u, &dw) {
            return Err(Error::BlowUp { time: cfg.horizon, path });
        }
        visit(full + 1, cfg.horizon, &u);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<f64>,
    pub states: Vec<Field<T>>,
    pub path: u64,
    pub seed: u64,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &Field<T> {
        self.states.last().expect("trajectories start with the initial state")
    }
}

pub fn simulate<T: Real>(u0: &Field<T>, cfg: &SimConfig, model: &Model<T>, path: u64) -> Result<Trajectory<T>> {
    cfg.validate()?;
    same_grid(u0.grid_id(), model.grid_id())?;
    if u0.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("initial state must be finite".into()));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    drive_path(u0.values(), cfg, model, path, |k, t, u| {
        if cfg.is_snapshot(k) {
            times.push(t);
            states.push(Field::from_raw(u0.grid_id(), u.to_vec()));
        }
    })?;
    Ok(Trajectory {
        times,
        states,
        path,
        seed: cfg.seed,
    })
}

/// Runs `work(path)` for every path in parallel; results come back in path
/// order.
pub fn for_each_path<R: Send>(n_paths: usize, work: impl Fn(u64) -> R + Sync + Send) -> Vec<R> {
    (0..n_paths as u64).into_par_iter().map(work).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentSeries {
    pub p: f64,
    pub estimates: Vec<Estimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub moments: Vec<MomentSeries>,
    pub n_paths: usize,
    pub blow_ups: usize,
    pub blow_up_fraction: f64,
    /// Set when a moment grows faster late in the run than early on.
    pub growth_warning: Option<String>,
}

/// Monte Carlo `E‖u(t)‖ᵖ` at the snapshot times.
pub fn ensemble_moments<T: Real>(u0: &Field<T>, cfg: &SimConfig, model: &Model<T>, p_list: &[f64]) -> Result<EnsembleStats> {
    cfg.validate()?;
    same_grid(u0.grid_id(), model.grid_id())?;
    if let Some(p) = p_list.iter().find(|p| p.is_nan() || **p < 2.0) {
        return Err(Error::Config(format!("moment order must be at least 2, got {p}")));
    }
    let per_path = for_each_path(cfg.n_paths, |path| {
        let mut norms = Vec::new();
        drive_path(u0.values(), cfg, model, path, |k, _, u| {
            if cfg.is_snapshot(k) {
                norms.push(model.weight.norm_of(u).as_f64());
            }
        })
        .map(|_| norms)
    });
    let times = cfg.snapshot_times();
    let finished: Vec<&Vec<f64>> = per_path.iter().filter_map(|r| r.as_ref().ok()).collect();
    let blow_ups = per_path.len() - finished.len();
    let moments: Vec<MomentSeries> = p_list
        .iter()
        .map(|p| MomentSeries {
            p: *p,
            estimates: (0..times.len())
                .map(|i| mean_se(&finished.iter().map(|n| n[i].powf(*p)).collect::<Vec<_>>()))
                .collect(),
        })
        .collect();
    let growth_warning = moments.iter().find_map(|m| growth_check(&times, m));
    Ok(EnsembleStats {
        times,
        moments,
        n_paths: cfg.n_paths,
        blow_ups,
        blow_up_fraction: blow_ups as f64 / cfg.n_paths as f64,
        growth_warning,
    })
}

/// Compares the fitted log-growth rate of the second half of the run with
/// the first; super-exponential growth shows up as a clear increase.
fn growth_check(times: &[f64], series: &MomentSeries) -> Option<String> {
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(&series.estimates)
        .filter(|(_, e)| e.mean > 0.0 && e.mean.is_finite())
        .map(|(t, e)| (*t, e.mean.ln()))
        .collect();
    if points.len() < 6 {
        return None;
    }
    let half = points.len() / 2;
    let fit = |s: &[(f64, f64)]| {
        let (x, y): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
        ols_with_se(&x, &y)
    };
    let (early, late) = (fit(&points[..half]), fit(&points[half..]));
    let allowance = 3.0 * (early.slope_se.powi(2) + late.slope_se.powi(2)).sqrt();
    let excess = late.slope - early.slope.max(0.0);
    (late.slope > 0.0 && excess > allowance + 1e-9).then(|| {
        format!(
            "E‖u‖^{} grows at rate {:.3e} late versus {:.3e} early",
            series.p, late.slope, early.slope
        )
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyConstants {
    pub beta: f64,
    pub gamma_delta: f64,
    pub eta: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    /// `(1−δ) E sup_{s≤t} ‖u(s)‖₁² + γ(δ) E ∫₀ᵗ ‖u(s)‖₁² ds`.
    pub lhs: Vec<Estimate>,
    /// `‖u₀‖₁² + η t`.
    pub rhs: Vec<f64>,
    /// `rhs − lhs`.
    pub margin: Vec<f64>,
    /// Times where `lhs − 3·SE` exceeds `rhs`.
    pub violations: Vec<f64>,
    pub blow_ups: usize,
}

/// Running sup and trapezoid integral of `‖u‖₁²` along one path.
struct EnergyTrack {
    sup: f64,
    integral: f64,
    prev: Option<(f64, f64)>,
    out: Vec<f64>,
}

impl EnergyTrack {
    fn new() -> Self {
        Self {
            sup: 0.0,
            integral: 0.0,
            prev: None,
            out: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, e: f64, record: bool, c: &EnergyConstants) {
        self.sup = self.sup.max(e);
        if let Some((t0, e0)) = self.prev {
            self.integral += 0.5 * (t - t0) * (e + e0);
        }
        self.prev = Some((t, e));
        if record {
            self.out.push((1.0 - c.delta) * self.sup + c.gamma_delta * self.integral);
        }
    }
}

fn energy_report(times: Vec<f64>, tracks: &[Vec<f64>], u0_energy: f64, c: &EnergyConstants, blow_ups: usize) -> EnergyReport {
    let lhs: Vec<Estimate> = (0..times.len())
        .map(|i| mean_se(&tracks.iter().map(|t| t[i]).collect::<Vec<_>>()))
        .collect();
    let rhs: Vec<f64> = times.iter().map(|t| u0_energy + c.eta * t).collect();
    let margin = rhs.iter().zip(&lhs).map(|(r, l)| r - l.mean).collect();
    let violations = times
        .iter()
        .zip(lhs.iter().zip(&rhs))
        .filter(|(_, (l, r))| l.mean - 3.0 * l.stderr > **r + 1e-12 * r.abs().max(1.0))
        .map(|(t, _)| *t)
        .collect();
    EnergyReport {
        times,
        lhs,
        rhs,
        margin,
        violations,
        blow_ups,
    }
}

/// The energy inequality along a stored trajectory.
pub fn h1_energy_monitor<T: Real>(traj: &Trajectory<T>, metric: &NonlocalMetric<T>, c: &EnergyConstants) -> Result<EnergyReport> {
    let mut track = EnergyTrack::new();
    for (t, u) in traj.times.iter().zip(&traj.states) {
        track.push(*t, metric.h1_norm(u)?.as_f64().powi(2), true, c);
    }
    let u0 = metric.h1_norm(&traj.states[0])?.as_f64().powi(2);
    Ok(energy_report(traj.times.clone(), &[track.out], u0, c, 0))
}

/// The energy inequality over an ensemble, integrating at every step and
/// reporting at the snapshot times.
pub fn h1_energy_ensemble<T: Real>(
    u0: &Field<T>,
    cfg: &SimConfig,
    model: &Model<T>,
    metric: &NonlocalMetric<T>,
    c: &EnergyConstants,
) -> Result<EnergyReport> {
    cfg.validate()?;
    let u0_energy = metric.h1_norm(u0)?.as_f64().powi(2);
    let per_path = for_each_path(cfg.n_paths, |path| -> Result<Vec<f64>> {
        let mut track = EnergyTrack::new();
        let mut failure = None;
        let run = drive_path(u0.values(), cfg, model, path, |k, t, u| {
            if failure.is_some() {
                return;
            }
            match metric.h1_norm_slice(u) {
                Ok(e) => track.push(t, e.as_f64().powi(2), cfg.is_snapshot(k), c),
                Err(err) => failure = Some(err),
            }
        });
        if let Some(err) = failure {
            return Err(err);
        }
        run.map(|_| track.out)
    });
    let mut tracks = Vec::with_capacity(per_path.len());
    let mut blow_ups = 0;
    for r in per_path {
        match r {
            Ok(t) => tracks.push(t),
            Err(Error::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(energy_report(cfg.snapshot_times(), &tracks, u0_energy, c, blow_ups))
}
