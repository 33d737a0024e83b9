//! Run configuration: one strict JSON document with named sections.
//!
//! Every struct rejects unknown keys, so a misspelt parameter fails loudly
//! instead of silently falling back to a default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nfield::dynamics::Scheme;
use nfield::particle::{InitialLaw, RateCap};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsSection>,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// `[lower, upper]` per axis.
    pub bounds: Vec<[f64; 2]>,
    pub points: Vec<usize>,
    #[serde(default)]
    pub weight: WeightSpec,
    /// Marks the box as a truncation of `ℝᵈ` with this radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Const {
        value: f64,
    },
    /// `ρ(x) = |x|^exponent` with the Euclidean norm.
    AbsPow {
        exponent: f64,
    },
    /// Node values in grid order.
    Table {
        values: Vec<f64>,
    },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Const { value: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub profile: KernelProfile,
    #[serde(default = "unit")]
    pub scale: f64,
    /// Rescales the assembled kernel to this operator norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelProfile {
    Gaussian {
        metric: Vec<f64>,
    },
    ExpSqrt {
        metric: Vec<f64>,
    },
    Rational {
        metric: Vec<f64>,
    },
    SincProduct,
    CosineSum {
        weights: Vec<f64>,
        frequencies: Vec<Vec<f64>>,
    },
    MexicanHat,
    MexicanHat2 {
        amplitude: f64,
        width: f64,
    },
    MexicanHat3 {
        ratio: f64,
        fast: f64,
        slow: f64,
    },
    DampedTrig {
        damping: f64,
    },
    WizardHat,
    Constant {
        value: f64,
    },
    /// Inline row-major values, a CSV of `(i, j, value)`, or a dense matrix
    /// file whose first line is `n d h`.
    Table {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
    Convolution {
        offsets: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationSection {
    Relu,
    Logistic,
    Tanh,
    Heaviside,
    SqrtLogistic,
    Constant {
        value: f64,
    },
    /// Samples inline or from a two-column CSV `(x, f)`.
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xs: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fs: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
        lip: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSection {
    None,
    Additive {
        sigma: Vec<f64>,
        #[serde(default)]
        basis: ModeBasis,
        /// Dense matrix file, one mode per column; required for `basis = file`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<PathBuf>,
    },
    Pointwise {
        map: ActivationSection,
        scale: f64,
    },
    /// `(1/√N) K(√f(u) ⊙ ξ)` with the model rate `f`.
    KernelMollified {
        population: f64,
        /// Defaults to the drift kernel.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel: Option<KernelSection>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeBasis {
    #[default]
    Cosine,
    /// Eigenmodes of `±K̂`, so the noise lives in `H₁`.
    Metric,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub alpha: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub n_paths: usize,
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialField {
    Constant {
        value: f64,
    },
    /// `amplitude · φ_mode` for the normalized cosine modes.
    Cosine {
        mode: usize,
        amplitude: f64,
    },
    /// `offset + amplitude · e_mode` for an eigenmode of the symmetric kernel
    /// part, so differences of such fields stay in the nonlocal space.
    MetricMode {
        mode: usize,
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingNorm {
    #[default]
    H,
    H1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Invariance,
    Ergodicity,
    Monotone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySettings {
    #[serde(default = "half")]
    pub delta: f64,
    #[serde(default = "unit")]
    pub c_delta: f64,
    #[serde(default = "trials")]
    pub trials: usize,
    #[serde(default = "rank_tol")]
    pub rank_tol: f64,
    /// Certificates whose failure yields exit status 2.
    #[serde(default = "gate")]
    pub gate: Vec<Gate>,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            delta: half(),
            c_delta: 1.0,
            trials: trials(),
            rank_tol: rank_tol(),
            gate: gate(),
        }
    }
}

fn half() -> f64 {
    0.5
}
fn trials() -> usize {
    200
}
fn rank_tol() -> f64 {
    nfield::nonlocal::DEFAULT_RANK_TOL
}
fn gate() -> Vec<Gate> {
    vec![Gate::Ergodicity]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    pub populations: Vec<usize>,
    pub w_tilde: Vec<Vec<f64>>,
    pub alpha: f64,
    pub rate: ActivationSection,
    #[serde(default)]
    pub rate_cap: RateCap,
    pub horizon: f64,
    pub dt_report: f64,
    pub initial: Vec<InitialLaw>,
    #[serde(default)]
    pub record_events: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Simulate {
        initial: InitialField,
        #[serde(default = "second_moment")]
        moments: Vec<f64>,
    },
    Certify {
        #[serde(default)]
        settings: CertifySettings,
    },
    Spectrum {
        #[serde(default)]
        eigenvectors: bool,
    },
    Invariant {
        initial: InitialField,
        horizons: Vec<f64>,
        #[serde(default = "tenth")]
        burn_in_fraction: f64,
        #[serde(default)]
        settings: CertifySettings,
    },
    Couple {
        v: InitialField,
        z: InitialField,
        #[serde(default)]
        norm: CouplingNorm,
        #[serde(default)]
        settings: CertifySettings,
    },
    Particle {
        particle: ParticleSection,
    },
    Compare {
        particle: ParticleSection,
        n_runs: usize,
        dt: f64,
        /// Grid intervals per population box.
        #[serde(default = "four")]
        points_per_box: usize,
        #[serde(default = "thousand")]
        bootstrap: usize,
    },
}

fn second_moment() -> Vec<f64> {
    vec![2.0]
}
fn tenth() -> f64 {
    0.1
}
fn four() -> usize {
    4
}
fn thousand() -> usize {
    1000
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate { .. } => "simulate",
            Experiment::Certify { .. } => "certify",
            Experiment::Spectrum { .. } => "spectrum",
            Experiment::Invariant { .. } => "invariant",
            Experiment::Couple { .. } => "couple",
            Experiment::Particle { .. } => "particle",
            Experiment::Compare { .. } => "compare",
        }
    }

    /// Sections the experiment reads.
    pub fn required_sections(&self) -> &'static [&'static str] {
        match self {
            Experiment::Spectrum { .. } => &["space", "kernel"],
            Experiment::Particle { .. } | Experiment::Compare { .. } => &[],
            _ => &["space", "kernel", "activation", "noise", "dynamics"],
        }
    }
}

impl RunConfig {
    /// Parses a configuration, or the `resolved_config` of a manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).context("malformed JSON")?;
        let cfg: Self = match value.get("resolved_config") {
            Some(inner) => serde_json::from_value(inner.clone()).context("resolved_config")?,
            None => serde_json::from_str(text)?,
        };
        cfg.check_sections()?;
        Ok(cfg)
    }

    fn check_sections(&self) -> Result<()> {
        for name in self.experiment.required_sections() {
            let present = match *name {
                "space" => self.space.is_some(),
                "kernel" => self.kernel.is_some(),
                "activation" => self.activation.is_some(),
                "noise" => self.noise.is_some(),
                _ => self.dynamics.is_some(),
            };
            if !present {
                bail!("experiment `{}` needs section `{name}`", self.experiment.name());
            }
        }
        Ok(())
    }

    /// Makes data-file paths absolute so a manifest runs from anywhere.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
        };
        let fix_kernel = |k: &mut KernelSection| {
            if let KernelProfile::Table { file: Some(f), .. } = &mut k.profile {
                fix(f);
            }
        };
        let fix_activation = |a: &mut ActivationSection| {
            if let ActivationSection::Custom { file: Some(f), .. } = a {
                fix(f);
            }
        };
        if let Some(k) = &mut self.kernel {
            fix_kernel(k);
        }
        if let Some(a) = &mut self.activation {
            fix_activation(a);
        }
        match &mut self.noise {
            Some(NoiseSection::Additive { file: Some(f), .. }) => fix(f),
            Some(NoiseSection::Pointwise { map, .. }) => fix_activation(map),
            Some(NoiseSection::KernelMollified { kernel: Some(k), .. }) => fix_kernel(k),
            _ => {}
        }
        if let Experiment::Particle { particle } | Experiment::Compare { particle, .. } = &mut self.experiment {
            fix_activation(&mut particle.rate);
        }
    }
}
