//! Synchronous coupling: two solutions driven by the same increments.

use serde::Serialize;

use crate::dynamics::{brownian_increments, for_each_path, path_rng, Model, SimConfig, Stepper};
use crate::error::{Error, Result};
use crate::nonlocal::NonlocalMetric;
use crate::scalar::Real;
use crate::space::{same_grid, Field};
use crate::stats::{mean_se, ols_with_se, Estimate, LineFit};

#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    /// `"h"` or `"h1"`.
    pub norm: &'static str,
    pub times: Vec<f64>,
    pub mean_sq_dist: Vec<Estimate>,
    /// Least-squares fit of `log mean_sq_dist` against time.
    pub fitted: Option<LineFit>,
    pub bound_rate: Option<f64>,
    /// Times where `mean − 3·SE` exceeds `‖v − z‖² e^{bound_rate·t}`.
    pub envelope_violations: Vec<f64>,
    /// `fitted.slope ≤ bound_rate + 3·slope_se`.
    pub rate_within_bound: Option<bool>,
    pub blow_ups: usize,
}

impl CouplingReport {
    pub fn initial(&self) -> f64 {
        self.mean_sq_dist[0].mean
    }

    /// The curve stays below the envelope and the fitted rate below the bound.
    pub fn respects_bound(&self) -> bool {
        self.envelope_violations.is_empty() && self.rate_within_bound.unwrap_or(true)
    }
}

/// `E‖u(t,v) − u(t,z)‖²` in `H` under shared noise.
pub fn couple<T: Real>(
    v: &Field<T>,
    z: &Field<T>,
    cfg: &SimConfig,
    model: &Model<T>,
    bound_rate: Option<f64>,
) -> Result<CouplingReport> {
    let w = &model.weight;
    run(v, z, cfg, model, bound_rate, "h", |d| Ok(w.dot(d, d).as_f64()))
}

/// The same in the nonlocal norm `‖·‖₁`; the difference must stay in `H₁`.
pub fn couple_h1<T: Real>(
    v: &Field<T>,
    z: &Field<T>,
    cfg: &SimConfig,
    model: &Model<T>,
    metric: &NonlocalMetric<T>,
    bound_rate: Option<f64>,
) -> Result<CouplingReport> {
    run(v, z, cfg, model, bound_rate, "h1", |d| {
        Ok(metric.h1_norm_slice(d)?.as_f64().powi(2))
    })
}

fn run<T: Real>(
    v: &Field<T>,
    z: &Field<T>,
    cfg: &SimConfig,
    model: &Model<T>,
    bound_rate: Option<f64>,
    norm: &'static str,
    dist: impl Fn(&[T]) -> Result<f64> + Sync,
) -> Result<CouplingReport> {
    cfg.validate()?;
    same_grid(v.grid_id(), model.grid_id())?;
    same_grid(z.grid_id(), model.grid_id())?;
    let (full, rest) = cfg.step_sizes();
    let m = model.noise.m_modes();
    let noisy = !model.noise.is_zero();
    let per_path = for_each_path(cfg.n_paths, |path| -> Result<Vec<f64>> {
        let mut rng = path_rng(cfg.seed, path);
        let (mut a, mut b) = (v.values().to_vec(), z.values().to_vec());
        let mut diff = vec![T::zero(); a.len()];
        let mut dw = vec![T::zero(); m];
        let mut out = Vec::new();
        let mut record = |a: &[T], b: &[T], diff: &mut [T]| -> Result<()> {
            for ((d, x), y) in diff.iter_mut().zip(a).zip(b) {
                *d = *x - *y;
            }
            out.push(dist(diff)?);
            Ok(())
        };
        record(&a, &b, &mut diff)?;
        let mut st = Stepper::new(model, cfg.scheme, cfg.alpha, cfg.dt);
        for k in 1..=cfg.total_steps() {
            let h = if k <= full {
                cfg.dt
            } else {
                rest.expect("extra step only with a remainder")
            };
            if k > full {
                st = Stepper::new(model, cfg.scheme, cfg.alpha, h);
            }
            if noisy {
                brownian_increments(&mut rng, h, &mut dw);
            }
            let finite = st.advance(&mut a, &dw) & st.advance(&mut b, &dw);
            if !finite {
                return Err(Error::BlowUp {
                    time: cfg.time_at(k),
                    path,
                });
            }
            if cfg.is_snapshot(k) {
                record(&a, &b, &mut diff)?;
            }
        }
        Ok(out)
    });
    let mut finished = Vec::with_capacity(per_path.len());
    let mut blow_ups = 0;
    for r in per_path {
        match r {
            Ok(x) => finished.push(x),
            Err(Error::BlowUp { .. }) => blow_ups += 1,
            Err(e) => return Err(e),
        }
    }
    let times = cfg.snapshot_times();
    let mut mean_sq_dist: Vec<Estimate> = (0..times.len())
        .map(|i| mean_se(&finished.iter().map(|p| p[i]).collect::<Vec<_>>()))
        .collect();
    // Every path starts from the same pair; averaging would only add rounding.
    if let Some(first) = finished.first() {
        mean_sq_dist[0] = Estimate {
            mean: first[0],
            stderr: 0.0,
        };
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&mean_sq_dist)
        .filter(|(_, e)| e.mean > 0.0)
        .map(|(t, e)| (*t, e.mean.ln()))
        .unzip();
    let fitted = (xs.len() >= 2).then(|| ols_with_se(&xs, &ys));
    let initial = mean_sq_dist[0].mean;
    let envelope_violations = match bound_rate {
        Some(rate) => times
            .iter()
            .zip(&mean_sq_dist)
            .filter(|(t, e)| e.mean - 3.0 * e.stderr > initial * (rate * **t).exp() * (1.0 + 1e-9) + 1e-300)
            .map(|(t, _)| *t)
            .collect(),
        None => Vec::new(),
    };
    let rate_within_bound = match (bound_rate, &fitted) {
        (Some(rate), Some(f)) => Some(f.slope <= rate + 3.0 * f.slope_se.min(f64::MAX) + 1e-9),
        _ => None,
    };
    Ok(CouplingReport {
        norm,
        times,
        mean_sq_dist,
        fitted,
        bound_rate,
        envelope_violations,
        rate_within_bound,
        blow_ups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::dynamics::Scheme;
    use crate::kernel::{assemble, KernelOperator, KernelSpec};
    use crate::noise::{cosine_modes, NoiseModel};
    use crate::space::{Grid, Weight};

    fn cfg(n_paths: usize) -> SimConfig {
        SimConfig {
            alpha: 1.0,
            horizon: 3.0,
            dt: 0.01,
            scheme: Scheme::ExponentialEuler,
            n_paths,
            seed: 11,
            record_stride: 10,
        }
    }

    #[test]
    fn additive_noise_cancels_exactly() {
        let g = Grid::<f64>::interval(0.0, 1.0, 21).unwrap();
        let w = Weight::uniform(&g);
        let noise = NoiseModel::additive(&g, vec![1.0, 0.5], cosine_modes(&g, 2), "cosine").unwrap();
        let m = Model::new(KernelOperator::zero(&g), Activation::Relu, noise, w.clone()).unwrap();
        let v = g.field_from_fn(|x| x[0]).unwrap();
        let z = g.constant_field(-1.0);
        let r = couple(&v, &z, &cfg(8), &m, Some(-2.0)).unwrap();
        let d0 = w.norm(&v.sub(&z).unwrap()).unwrap().powi(2);
        assert!((r.initial() - d0).abs() <= 1e-14 * d0);
        for (t, e) in r.times.iter().zip(&r.mean_sq_dist) {
            assert!((e.mean - d0 * (-2.0 * t).exp()).abs() <= 1e-10 * d0);
            assert!(e.stderr <= 1e-12 * d0);
        }
        assert!((r.fitted.unwrap().slope + 2.0).abs() < 1e-9);
        assert!(r.respects_bound());
    }

    #[test]
    fn tiny_perturbation_decays_without_blow_up() {
        let g = Grid::<f64>::interval(-3.0, 3.0, 33).unwrap();
        let w = Weight::uniform(&g);
        let k = assemble(&KernelSpec::gaussian(1.0).scaled(0.3), &g).unwrap();
        let noise = NoiseModel::pointwise(&g, Activation::Tanh, 0.1).unwrap();
        let m = Model::new(k, Activation::Logistic, noise, w.clone()).unwrap();
        let z = g.constant_field(0.2);
        let e1 = cosine_modes(&g, 1).remove(0);
        let v = z.add(&e1.scaled(1e-6)).unwrap();
        let r = couple(&v, &z, &cfg(16), &m, None).unwrap();
        assert!((r.initial() - 1e-12 * w.norm(&e1).unwrap().powi(2)).abs() < 1e-20);
        assert!(r.mean_sq_dist.last().unwrap().mean < r.initial());
        assert_eq!(r.blow_ups, 0);
    }
}
