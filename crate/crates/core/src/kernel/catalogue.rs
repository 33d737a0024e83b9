use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::space::Grid;

/// Connectivity profile variants.
///
/// Every variant except `Table` is shift invariant: `w(x, y) = J(x − y)`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind<T> {
    /// `exp(−½⟨x, Mx⟩)` with `M` symmetric non-negative, row-major `d × d`.
    Gaussian {
        metric: Vec<T>,
    },
    /// `exp(−√⟨x, Mx⟩)`.
    ExpSqrt {
        metric: Vec<T>,
    },
    /// `(1 + ½⟨x, Mx⟩)⁻¹`.
    Rational {
        metric: Vec<T>,
    },
    /// `∏ sin(xⱼ)/xⱼ`.
    SincProduct,
    /// `Σ aᵢ cos⟨mᵢ, x⟩` with `aᵢ ≥ 0`, `Σ aᵢ = 1`, `mᵢ ≠ ±mⱼ`.
    CosineSum {
        weights: Vec<T>,
        frequencies: Vec<Vec<T>>,
    },
    /// `(1 − x²) exp(−x²/2)`.
    MexicanHat,
    /// `exp(−x²/2) − A exp(−x²/s²)` with `√2 ≤ s ≤ √2/A`.
    MexicanHat2 {
        amplitude: T,
        width: T,
    },
    /// `exp(−γ₁|x|) − Γ exp(−γ₂|x|)` with `0 < Γ ≤ γ₂/γ₁`, `γ₁ > γ₂ > 0`.
    MexicanHat3 {
        ratio: T,
        fast: T,
        slow: T,
    },
    /// `exp(−b|x|)(b sin|x| + cos x)` with `b > 0`.
    DampedTrig {
        damping: T,
    },
    /// `¼(1 − |x|) exp(−|x|)`.
    WizardHat,
    Constant(T),
    /// Dense node-by-node values, row `i` holding `w(xᵢ, ·)`.
    Table {
        n: usize,
        values: Vec<T>,
    },
    /// Piecewise-linear profile `J` through `(offset, value)` samples, zero outside.
    Convolution {
        offsets: Vec<T>,
        values: Vec<T>,
    },
}

/// A kernel variant together with a real multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind<T>,
    pub scale: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(kind: KernelKind<T>) -> Result<Self> {
        let spec = Self { kind, scale: T::one() };
        spec.check_parameters()?;
        Ok(spec)
    }

    pub fn scaled(mut self, scale: T) -> Self {
        self.scale *= scale;
        self
    }

    pub fn constant(c: T) -> Self {
        Self {
            kind: KernelKind::Constant(c),
            scale: T::one(),
        }
    }

    /// Isotropic Gaussian `exp(−c|x|²/2)` in one dimension.
    pub fn gaussian(c: T) -> Self {
        Self {
            kind: KernelKind::Gaussian { metric: vec![c] },
            scale: T::one(),
        }
    }

    pub fn table(n: usize, values: Vec<T>) -> Result<Self> {
        Self::new(KernelKind::Table { n, values })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            KernelKind::Gaussian { .. } => "gaussian",
            KernelKind::ExpSqrt { .. } => "exp_sqrt",
            KernelKind::Rational { .. } => "rational",
            KernelKind::SincProduct => "sinc_product",
            KernelKind::CosineSum { .. } => "cosine_sum",
            KernelKind::MexicanHat => "mexican_hat",
            KernelKind::MexicanHat2 { .. } => "mexican_hat2",
            KernelKind::MexicanHat3 { .. } => "mexican_hat3",
            KernelKind::DampedTrig { .. } => "damped_trig",
            KernelKind::WizardHat => "wizard_hat",
            KernelKind::Constant(_) => "constant",
            KernelKind::Table { .. } => "table",
            KernelKind::Convolution { .. } => "custom_convolution",
        }
    }

    pub fn is_shift_invariant(&self) -> bool {
        !matches!(self.kind, KernelKind::Table { .. })
    }

    /// Dimension-independent parameter constraints.
    pub fn check_parameters(&self) -> Result<()> {
        if !self.scale.is_finite() {
            return Err(Error::Constraint("scale must be finite".into()));
        }
        let sqrt2 = T::of(2.0).sqrt();
        match &self.kind {
            KernelKind::CosineSum { weights, frequencies } => {
                if weights.is_empty() || weights.len() != frequencies.len() {
                    return Err(Error::Constraint("cosine_sum needs one frequency per weight".into()));
                }
                if weights.iter().any(|a| *a < T::zero()) {
                    return Err(Error::Constraint("cosine_sum requires a_i >= 0".into()));
                }
                let total = weights.iter().fold(T::zero(), |s, a| s + *a);
                if (total - T::one()).abs() > T::of(1e-12) {
                    return Err(Error::Constraint(format!("cosine_sum requires sum a_i = 1 (got {total})")));
                }
                for i in 0..frequencies.len() {
                    for j in (i + 1)..frequencies.len() {
                        let (a, b) = (&frequencies[i], &frequencies[j]);
                        let same = a == b;
                        let opposite = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| *x == -*y);
                        if same || opposite {
                            return Err(Error::Constraint(format!(
                                "cosine_sum requires m_i != ±m_j (entries {i} and {j})"
                            )));
                        }
                    }
                }
            }
            KernelKind::MexicanHat2 { amplitude, width } => {
                if *amplitude <= T::zero() {
                    return Err(Error::Constraint("mexican_hat2 requires A > 0".into()));
                }
                if *width < sqrt2 || *width > sqrt2 / *amplitude {
                    return Err(Error::Constraint(format!(
                        "mexican_hat2 is defined for √2 ≤ s ≤ √2/A (s = {width}, A = {amplitude})"
                    )));
                }
            }
            KernelKind::MexicanHat3 { ratio, fast, slow } => {
                if !(*fast > *slow && *slow > T::zero()) {
                    return Err(Error::Constraint(format!(
                        "mexican_hat3 requires γ₁ > γ₂ > 0 (γ₁ = {fast}, γ₂ = {slow})"
                    )));
                }
                if !(*ratio > T::zero() && *ratio <= *slow / *fast) {
                    return Err(Error::Constraint(format!(
                        "mexican_hat3 requires 0 < Γ ≤ γ₂/γ₁ (Γ = {ratio}, γ₂/γ₁ = {})",
                        *slow / *fast
                    )));
                }
            }
            KernelKind::DampedTrig { damping } => {
                if *damping <= T::zero() {
                    return Err(Error::Constraint(format!("damped_trig requires b > 0 (b = {damping})")));
                }
            }
            KernelKind::Constant(c) if !c.is_finite() => {
                return Err(Error::Constraint("constant kernel must be finite".into()));
            }
            KernelKind::Table { n, values } => {
                if values.len() != n * n {
                    return Err(Error::Constraint(format!(
                        "table has {} values, expected {n}×{n}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Constraint("table entries must be finite".into()));
                }
            }
            KernelKind::Convolution { offsets, values } => {
                if offsets.len() < 2 || offsets.len() != values.len() {
                    return Err(Error::Constraint(
                        "custom_convolution needs at least two (offset, value) samples".into(),
                    ));
                }
                if offsets.windows(2).any(|p| p[1] <= p[0]) {
                    return Err(Error::Constraint(
                        "custom_convolution offsets must be strictly increasing".into(),
                    ));
                }
                if values.iter().chain(offsets).any(|v| !v.is_finite()) {
                    return Err(Error::Constraint("custom_convolution samples must be finite".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Constraints that depend on the grid dimension.
    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        let one_d_only = matches!(
            self.kind,
            KernelKind::MexicanHat
                | KernelKind::MexicanHat2 { .. }
                | KernelKind::MexicanHat3 { .. }
                | KernelKind::DampedTrig { .. }
                | KernelKind::WizardHat
                | KernelKind::Convolution { .. }
        );
        if one_d_only && dim != 1 {
            return Err(Error::Constraint(format!("{} is a one-dimensional profile", self.name())));
        }
        match &self.kind {
            KernelKind::Gaussian { metric } | KernelKind::ExpSqrt { metric } | KernelKind::Rational { metric } => {
                check_metric(metric, dim)
            }
            KernelKind::CosineSum { frequencies, .. } => {
                if frequencies.iter().any(|m| m.len() != dim) {
                    return Err(Error::Constraint(format!(
                        "cosine_sum frequencies must have {dim} components"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Profile `J(x)` for shift-invariant variants, scale included.
    pub fn profile(&self, x: &[T]) -> T {
        self.scale * self.raw_profile(x)
    }

    fn raw_profile(&self, x: &[T]) -> T {
        let half = T::of(0.5);
        let abs1 = || x[0].abs();
        match &self.kind {
            KernelKind::Gaussian { metric } => (-half * quadratic(metric, x)).exp(),
            KernelKind::ExpSqrt { metric } => (-quadratic(metric, x).max(T::zero()).sqrt()).exp(),
            KernelKind::Rational { metric } => T::one() / (T::one() + half * quadratic(metric, x)),
            KernelKind::SincProduct => x.iter().fold(T::one(), |acc, xi| acc * sinc(*xi)),
            KernelKind::CosineSum { weights, frequencies } => weights.iter().zip(frequencies).fold(T::zero(), |acc, (a, m)| {
                let phase = m.iter().zip(x).fold(T::zero(), |s, (mi, xi)| s + *mi * *xi);
                acc + *a * phase.cos()
            }),
            KernelKind::MexicanHat => {
                let x2 = x[0] * x[0];
                (T::one() - x2) * (-half * x2).exp()
            }
            KernelKind::MexicanHat2 { amplitude, width } => {
                let x2 = x[0] * x[0];
                (-half * x2).exp() - *amplitude * (-x2 / (*width * *width)).exp()
            }
            KernelKind::MexicanHat3 { ratio, fast, slow } => {
                let r = abs1();
                (-*fast * r).exp() - *ratio * (-*slow * r).exp()
            }
            KernelKind::DampedTrig { damping } => {
                let r = abs1();
                (-*damping * r).exp() * (*damping * r.sin() + x[0].cos())
            }
            KernelKind::WizardHat => {
                let r = abs1();
                T::of(0.25) * (T::one() - r) * (-r).exp()
            }
            KernelKind::Constant(c) => *c,
            KernelKind::Table { .. } => panic!("table kernels have no profile"),
            KernelKind::Convolution { offsets, values } => interpolate(offsets, values, x[0]),
        }
    }

    /// `w(xᵢ, xⱼ)` for the given node indices on `grid`.
    pub(crate) fn entry(&self, grid: &Grid<T>, i: usize, j: usize) -> T {
        match &self.kind {
            KernelKind::Table { n, values } => self.scale * values[i * n + j],
            _ => {
                let (a, b) = (grid.nodes()[i], grid.nodes()[j]);
                let d = [a[0] - b[0], a[1] - b[1]];
                self.profile(&d[..grid.dim()])
            }
        }
    }

    /// `L¹` norm over the box of the radially decreasing majorant `J₀(r) = sup_{|x| ≥ r} |J(x)|`.
    pub fn majorant_l1(&self, grid: &Grid<T>) -> Option<T> {
        if !self.is_shift_invariant() {
            return None;
        }
        let dim = grid.dim();
        let diameter = grid
            .bounds()
            .iter()
            .fold(T::zero(), |acc, (a, b)| acc + (*b - *a) * (*b - *a))
            .sqrt();
        let h = grid.spacing().iter().copied().fold(T::infinity(), |m, h| m.min(h));
        let dr = h * T::of(0.25);
        let steps = (diameter / dr).ceil().to_usize()?.max(1);
        let angles = if dim == 1 { 2 } else { 128 };
        let shell: Vec<T> = (0..=steps)
            .map(|k| {
                let r = dr * T::of_usize(k);
                (0..angles)
                    .map(|a| {
                        let p = if dim == 1 {
                            [if a == 0 { r } else { -r }, T::zero()]
                        } else {
                            let th = T::two_pi() * T::of_usize(a) / T::of_usize(angles);
                            [r * th.cos(), r * th.sin()]
                        };
                        self.profile(&p[..dim]).abs()
                    })
                    .fold(T::zero(), |m, v| m.max(v))
            })
            .collect();
        let mut majorant = shell.clone();
        for k in (0..steps).rev() {
            majorant[k] = majorant[k].max(majorant[k + 1]);
        }
        let mut integral = T::zero();
        for k in 0..steps {
            let (r0, r1) = (dr * T::of_usize(k), dr * T::of_usize(k + 1));
            let (f0, f1) = if dim == 1 {
                (majorant[k], majorant[k + 1])
            } else {
                (r0 * majorant[k], r1 * majorant[k + 1])
            };
            integral += (f0 + f1) * dr * T::of(0.5);
        }
        let surface = if dim == 1 { T::of(2.0) } else { T::two_pi() };
        Some(surface * integral)
    }
}

fn check_metric<T: Real>(metric: &[T], dim: usize) -> Result<()> {
    if metric.len() != dim * dim {
        return Err(Error::Constraint(format!(
            "metric must be {dim}×{dim} ({} entries given)",
            metric.len()
        )));
    }
    if metric.iter().any(|m| !m.is_finite()) {
        return Err(Error::Constraint("metric entries must be finite".into()));
    }
    let psd = match dim {
        1 => metric[0] >= T::zero(),
        _ => {
            metric[1] == metric[2]
                && metric[0] >= T::zero()
                && metric[3] >= T::zero()
                && metric[0] * metric[3] - metric[1] * metric[2] >= T::zero()
        }
    };
    if !psd {
        return Err(Error::Constraint("metric M must be symmetric non-negative definite".into()));
    }
    Ok(())
}

fn quadratic<T: Real>(metric: &[T], x: &[T]) -> T {
    match x {
        [a] => metric[0] * *a * *a,
        [a, b] => metric[0] * *a * *a + (metric[1] + metric[2]) * *a * *b + metric[3] * *b * *b,
        _ => unreachable!("grids are 1-D or 2-D"),
    }
}

fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::of(1e-4) {
        // Taylor expansion; error below x⁴/120.
        T::one() - x * x / T::of(6.0)
    } else {
        x.sin() / x
    }
}

fn interpolate<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let last = xs.len() - 1;
    if x < xs[0] || x > xs[last] {
        return T::zero();
    }
    let k = xs.partition_point(|v| *v <= x).clamp(1, last);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + (ys[k] - ys[k - 1]) * t
}
