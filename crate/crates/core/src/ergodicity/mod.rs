//! Certificates for the invariance, ergodicity and monotone assumptions,
//! plus the Monte Carlo diagnostics that test them.
//!
//! Every certificate carries the full constant map it was computed from,
//! so a margin can always be recomputed by hand from the JSON output.

mod coupling;
mod occupation;

pub use coupling::{couple, couple_h1, CouplingReport};
pub use occupation::{
    fm_distance, krylov_bogoliubov, occupation_measures, second_moment_bound, Dictionary, KbReport, OccupationMeasure,
    SecondMomentReport, TightnessCheck, TightnessSpec, Window, DICTIONARY_VERSION,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{EnergyConstants, Model};
use crate::error::{Error, Result};
use crate::kernel::{decompose, operator_norm, OperatorNorm, Verdict};
use crate::noise::NoiseConstants;
use crate::nonlocal::{build_metric, NonlocalMetric, DEFAULT_RANK_TOL};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    Invariance,
    Ergodicity,
    Monotone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Inapplicable,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub assumption: Assumption,
    pub constants: BTreeMap<String, f64>,
    /// Positive means the assumption holds; absent when inapplicable.
    pub margin: Option<f64>,
    pub verdict: Outcome,
    /// Constants that were sampled rather than computed exactly.
    pub empirical_flags: Vec<String>,
    pub notes: Vec<String>,
}

impl Certificate {
    fn new(assumption: Assumption) -> Self {
        Self {
            assumption,
            constants: BTreeMap::new(),
            margin: None,
            verdict: Outcome::Inapplicable,
            empirical_flags: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn set(&mut self, name: &str, value: f64) {
        self.constants.insert(name.to_string(), value);
    }

    fn settle(&mut self, margin: f64) {
        self.margin = Some(margin);
        self.verdict = if margin > 0.0 { Outcome::Pass } else { Outcome::Fail };
    }

    pub fn passed(&self) -> bool {
        self.verdict == Outcome::Pass
    }

    /// Named constant; panics on a name the certificate does not carry.
    pub fn constant(&self, name: &str) -> f64 {
        *self
            .constants
            .get(name)
            .unwrap_or_else(|| panic!("certificate has no constant `{name}`"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyOptions {
    /// `δ ∈ (0, 1)` in `γ(δ)` and in the second-moment constants.
    pub delta: f64,
    /// Young constant paired with `δ`; 1 by the `ζ = 1` convention.
    pub c_delta: f64,
    pub rank_tol: f64,
    /// Samples for the sampled noise constants.
    pub trials: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            delta: 0.5,
            c_delta: 1.0,
            rank_tol: DEFAULT_RANK_TOL,
            trials: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateSet {
    pub invariance: Certificate,
    pub ergodicity: Certificate,
    /// Present only for monotone `f` with a symmetric non-positive kernel.
    pub monotone: Option<Certificate>,
    pub noise: NoiseConstants,
    pub kernel_norm: OperatorNorm,
    pub definiteness: Verdict,
    pub rank: Option<usize>,
    pub rank_tol: f64,
}

impl CertificateSet {
    pub fn get(&self, a: Assumption) -> Option<&Certificate> {
        match a {
            Assumption::Invariance => Some(&self.invariance),
            Assumption::Ergodicity => Some(&self.ergodicity),
            Assumption::Monotone => self.monotone.as_ref(),
        }
    }

    /// Constants of the energy inequality, when the invariance certificate
    /// could be evaluated.
    pub fn energy_constants(&self) -> Option<EnergyConstants> {
        let c = &self.invariance;
        (c.verdict != Outcome::Inapplicable).then(|| EnergyConstants {
            beta: c.constant("beta"),
            gamma_delta: c.constant("gamma_delta"),
            eta: c.constant("eta"),
            delta: c.constant("delta"),
        })
    }
}

/// Evaluates all certificates for `model` at decay rate `alpha`.
///
/// The metric is rebuilt here so the rank cutoff in `opts` is the one
/// recorded; pass the result to diagnostics that need `H₁`.
pub fn certify<T: Real>(
    model: &Model<T>,
    alpha: f64,
    opts: &CertifyOptions,
) -> Result<(CertificateSet, Option<NonlocalMetric<T>>)> {
    if !(opts.delta > 0.0 && opts.delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {}", opts.delta)));
    }
    if !model.activation.certificate_eligible() {
        return Err(Error::NotLipschitz(model.activation.name().into()));
    }
    let (lip, f0) = model.activation.lipschitz_data()?;
    let (lip, f0) = (lip.as_f64(), f0.as_f64().abs());
    let w = &model.weight;
    let mass = w.mass().as_f64();
    let kernel_norm = operator_norm(&model.kernel, w)?;
    let k_norm = kernel_norm.value;
    let dec = decompose(&model.kernel, w)?;
    let metric = build_metric(&dec, w, T::of(opts.rank_tol));
    let metric_ref = metric.as_ref().ok();
    let noise = match model.noise.estimate_constants(w, metric_ref, opts.trials, opts.seed) {
        Ok(n) => n,
        // Noise leaving H₁ only disables the H₁ constants.
        Err(Error::SubspaceMembership { .. }) => model.noise.estimate_constants(w, None, opts.trials, opts.seed)?,
        Err(e) => return Err(e),
    };
    let (delta, c_delta) = (opts.delta, opts.c_delta);

    let shared = |c: &mut Certificate| {
        c.set("alpha", alpha);
        c.set("kernel_norm", k_norm);
        c.set("lip_f", lip);
        c.set("f0", f0);
        c.set("rho_l1", mass);
        c.set("c_b", noise.c_b);
    };

    let mut ergodicity = Certificate::new(Assumption::Ergodicity);
    shared(&mut ergodicity);
    let lambda_tilde = 2.0 * 2f64.sqrt() * k_norm * lip + noise.c_b;
    let lambda = 2.0 * k_norm * lip + noise.c_b;
    let c_tilde = 2.0 * 2f64.sqrt() * k_norm * c_delta * f0 * f0 * mass + noise.b0;
    let gamma_tilde = 2.0 * alpha - lambda_tilde - delta;
    ergodicity.set("b0", noise.b0);
    ergodicity.set("lambda_tilde", lambda_tilde);
    ergodicity.set("lambda", lambda);
    ergodicity.set("delta", delta);
    ergodicity.set("c_delta", c_delta);
    ergodicity.set("c_tilde", c_tilde);
    ergodicity.set("gamma_tilde", gamma_tilde);
    ergodicity.set(
        "c_hat",
        if gamma_tilde > 0.0 {
            c_tilde / gamma_tilde
        } else {
            f64::INFINITY
        },
    );
    ergodicity.settle(2.0 * alpha - lambda_tilde);

    let mut invariance = Certificate::new(Assumption::Invariance);
    shared(&mut invariance);
    invariance.set("delta", delta);
    invariance.set("rank_tol", opts.rank_tol);
    let h1 = noise.h1.clone();
    match (&metric, &h1) {
        (Err(e), _) => invariance.notes.push(format!("no nonlocal space: {e}")),
        (Ok(_), None) => invariance
            .notes
            .push("noise does not map into the nonlocal space; H₁ constants unavailable".into()),
        (Ok(m), Some(h1)) => {
            let c_check = m.antisym_domination(&dec, w)?.as_f64();
            let pinv2 = m.sqrt_pinv_norm().as_f64().powi(2);
            let beta = 2f64.sqrt() * (1.0 + c_check) * pinv2 * (lip + f0 * mass.sqrt()) + h1.c_tilde;
            let gamma_delta = 2.0 * alpha - beta - 9.0 / delta * h1.c_tilde_tilde;
            let eta_base = 2f64.sqrt() * f0 * mass.sqrt();
            invariance.set("c_check_k", c_check);
            invariance.set("sqrt_pinv_norm_sq", pinv2);
            invariance.set("rank", m.rank() as f64);
            invariance.set("c_tilde_b", h1.c_tilde);
            invariance.set("c_tilde_tilde_b", h1.c_tilde_tilde);
            invariance.set("beta", beta);
            invariance.set("gamma_delta", gamma_delta);
            invariance.set("gamma", 2.0 * alpha - beta);
            invariance.set("eta", eta_base + (1.0 + 9.0 / delta) * h1.c_tilde_tilde);
            invariance.set("eta_corollary", eta_base + h1.c_tilde_tilde);
            if h1.empirical {
                invariance.empirical_flags = vec!["c_tilde_b".into(), "c_tilde_tilde_b".into()];
            }
            if c_check.is_finite() {
                invariance.settle(gamma_delta);
            } else {
                invariance
                    .notes
                    .push("antisymmetric part leaves the range of the symmetric part (C_Ǩ infinite)".into());
            }
        }
    }

    let symmetric = {
        let scale = dec.sym.amax().as_f64().max(f64::MIN_POSITIVE);
        dec.antisym.amax().as_f64() <= 1e-12 * scale
    };
    let monotone = (model.activation.is_monotone() && dec.definiteness.verdict == Verdict::NonPositive && symmetric).then(|| {
        let mut c = Certificate::new(Assumption::Monotone);
        c.set("alpha", alpha);
        match &h1 {
            Some(h1) => {
                c.set("c_tilde_b", h1.c_tilde);
                if h1.empirical {
                    c.empirical_flags.push("c_tilde_b".into());
                }
                c.settle(2.0 * alpha - h1.c_tilde);
            }
            None => c.notes.push("C̃_B unavailable without the nonlocal space".into()),
        }
        c
    });

    let rank = metric.as_ref().ok().map(NonlocalMetric::rank);
    Ok((
        CertificateSet {
            invariance,
            ergodicity,
            monotone,
            noise,
            kernel_norm,
            definiteness: dec.definiteness.verdict,
            rank,
            rank_tol: opts.rank_tol,
        },
        metric.ok(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::kernel::{assemble, KernelOperator, KernelSpec};
    use crate::noise::{metric_modes, NoiseModel};
    use crate::space::{Grid, Weight};

    fn unit_kernel_model(f: Activation<f64>, noise_scale: f64) -> Model<f64> {
        let g = Grid::<f64>::interval(0.0, 1.0, 41).unwrap();
        let k = assemble(&KernelSpec::constant(1.0), &g).unwrap();
        let noise = NoiseModel::pointwise(&g, Activation::Tanh, noise_scale).unwrap();
        Model::new(k, f, noise, Weight::uniform(&g)).unwrap()
    }

    #[test]
    fn unit_kernel_logistic_ergodicity() {
        let m = unit_kernel_model(Activation::Logistic, 0.1);
        let (set, _) = certify(&m, 1.0, &CertifyOptions::default()).unwrap();
        let e = &set.ergodicity;
        assert!((e.constant("kernel_norm") - 1.0).abs() < 1e-12);
        let expected = 2.0 * 2f64.sqrt() * 0.25 + 0.1;
        assert!((e.constant("lambda_tilde") - expected).abs() < 1e-12);
        assert!((e.constant("lambda_tilde") - 0.8071).abs() < 1e-4);
        assert!(e.passed());
        let (low, _) = certify(&m, 0.3, &CertifyOptions::default()).unwrap();
        assert_eq!(low.ergodicity.verdict, Outcome::Fail);
        // Threshold α = λ̃/2.
        let (edge, _) = certify(&m, 0.4036, &CertifyOptions::default()).unwrap();
        assert!(edge.ergodicity.passed());
        let (below, _) = certify(&m, 0.4035, &CertifyOptions::default()).unwrap();
        assert!(!below.ergodicity.passed());
    }

    #[test]
    fn rank_one_relu_invariance() {
        let c = 2.0;
        let g = Grid::<f64>::interval(0.0, 1.0, 21).unwrap();
        let w = Weight::uniform(&g);
        let k = assemble(&KernelSpec::constant(c), &g).unwrap();
        let metric = build_metric(&decompose(&k, &w).unwrap(), &w, 1e-10).unwrap();
        let noise = NoiseModel::additive(&g, vec![0.05], metric_modes(&metric, 1).unwrap(), "metric").unwrap();
        let model = Model::new(k, Activation::Relu, noise, w).unwrap();
        let (set, metric) = certify(&model, 3.0, &CertifyOptions::default()).unwrap();
        assert!(metric.is_some());
        let inv = &set.invariance;
        assert!((inv.constant("beta") - 2f64.sqrt() / c).abs() < 1e-10);
        assert_eq!(inv.constant("c_check_k"), 0.0);
        let cc = inv.constant("c_tilde_tilde_b");
        // ‖e₁‖₁ = 1/√c.
        assert!((cc - 0.05 / c.sqrt()).abs() < 1e-10);
        assert!((inv.margin.unwrap() - (6.0 - 2f64.sqrt() / c - 18.0 * cc)).abs() < 1e-10);
        assert!(inv.empirical_flags.is_empty());
        assert!(set.energy_constants().is_some());
    }

    #[test]
    fn degenerate_constants_pass_for_any_alpha() {
        let g = Grid::<f64>::interval(0.0, 1.0, 11).unwrap();
        let k = assemble(&KernelSpec::gaussian(1.0), &g).unwrap();
        let m = Model::new(k, Activation::constant(0.0), NoiseModel::none(&g), Weight::uniform(&g)).unwrap();
        for alpha in [1e-6, 0.1, 10.0] {
            let (set, _) = certify(&m, alpha, &CertifyOptions::default()).unwrap();
            assert_eq!(set.ergodicity.constant("lambda_tilde"), 0.0);
            assert!(set.ergodicity.passed());
        }
    }

    #[test]
    fn heaviside_and_indefinite_kernels() {
        let m = unit_kernel_model(Activation::Heaviside, 0.1);
        assert!(matches!(
            certify(&m, 1.0, &CertifyOptions::default()),
            Err(Error::NotLipschitz(_))
        ));
        let g = Grid::<f64>::interval(-3.0, 3.0, 41).unwrap();
        let k = KernelOperator::from_fn(&g, |x, y| (x[0] * y[0]).sin()).unwrap();
        let m = Model::new(k, Activation::Tanh, NoiseModel::none(&g), Weight::uniform(&g)).unwrap();
        let (set, metric) = certify(&m, 5.0, &CertifyOptions::default()).unwrap();
        assert!(metric.is_none());
        assert_eq!(set.invariance.verdict, Outcome::Inapplicable);
        assert!(set.ergodicity.passed());
    }

    #[test]
    fn monotone_certificate_only_for_inhibition() {
        let g = Grid::<f64>::interval(-3.0, 3.0, 41).unwrap();
        let w = Weight::uniform(&g);
        let k = assemble(&KernelSpec::gaussian(1.0).scaled(-1.0), &g).unwrap();
        let noise = NoiseModel::additive(&g, vec![0.2], vec![g.constant_field(1.0)], "constant").unwrap();
        let m = Model::new(k.clone(), Activation::Tanh, noise.clone(), w.clone()).unwrap();
        let (set, _) = certify(&m, 0.7, &CertifyOptions::default()).unwrap();
        let mono = set.monotone.expect("monotone certificate");
        assert_eq!(mono.margin, Some(1.4));
        let excit = Model::new(k.scaled(-1.0), Activation::Tanh, noise, w).unwrap();
        assert!(certify(&excit, 0.7, &CertifyOptions::default()).unwrap().0.monotone.is_none());
    }

    #[test]
    fn margins_increase_with_alpha_and_decrease_with_kernel_scale() {
        let g = Grid::<f64>::interval(-2.0, 2.0, 33).unwrap();
        let w = Weight::uniform(&g);
        let k = assemble(&KernelSpec::gaussian(1.0), &g).unwrap();
        let noise = NoiseModel::pointwise(&g, Activation::Tanh, 0.1).unwrap();
        let opts = CertifyOptions::default();
        let margin = |scale: f64, alpha: f64| {
            let m = Model::new(k.scaled(scale), Activation::Logistic, noise.clone(), w.clone()).unwrap();
            certify(&m, alpha, &opts).unwrap().0.ergodicity.margin.unwrap()
        };
        assert!(margin(1.0, 1.1) > margin(1.0, 1.0));
        assert!(margin(2.0, 1.0) < margin(1.0, 1.0));
    }
}
