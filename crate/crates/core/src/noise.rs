//! Noise coefficients `B: H → L₂(V, H)` over a finite truncation of the
//! cylindrical Wiener process.
//!
//! Two mode conventions are used:
//!
//! * additive noise carries explicit mode fields `φₖ` and amplitudes `σₖ`;
//! * pointwise and kernel-mollified noise are node-indexed: mode `j` is the
//!   unit coordinate of `V = ℓ²(nodes)`. Pointwise noise places `ξⱼ` at node
//!   `j` directly; mollified noise reads `ξⱼ/√qⱼ` as the cell average of white
//!   noise before smoothing with the kernel, so its Hilbert–Schmidt norm
//!   converges under refinement.
//!
//! With node modes every quantity below reduces to a weighted sum over nodes,
//! which is why the Lipschitz constants are exact rather than estimated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::kernel::{operator_norm, KernelOperator};
use crate::nonlocal::NonlocalMetric;
use crate::scalar::Real;
use crate::space::{same_grid, Field, Grid, GridId, Weight};

#[derive(Clone, Debug)]
pub enum NoiseKind<T: Real> {
    /// `Σₖ σₖ ξₖ φₖ`.
    Additive { sigma: Vec<T>, modes: Vec<Vec<T>> },
    /// `scale · b(uⱼ) ξⱼ` at node `j`.
    Pointwise { map: Activation<T>, scale: T },
    /// `(1/√N) K(√f(u) ⊙ ξ/√q)`.
    KernelMollified {
        kernel: KernelOperator<T>,
        rate: Activation<T>,
        root: Activation<T>,
        population: T,
    },
}

#[derive(Clone, Debug)]
pub struct NoiseModel<T: Real> {
    grid: GridId,
    kind: NoiseKind<T>,
    quad: Vec<T>,
    basis: String,
}

/// `φ₀ = 1`, `φₖ = √2 cos(kπ(x − a)/L)`; tensor products in 2-D ordered by
/// total frequency.
pub fn cosine_modes<T: Real>(grid: &Grid<T>, m: usize) -> Vec<Field<T>> {
    let bounds = grid.bounds();
    let factor = |k: usize, x: T, axis: usize| {
        let (a, b) = bounds[axis];
        if k == 0 {
            T::one()
        } else {
            T::of(2f64.sqrt()) * (T::pi() * T::of_usize(k) * (x - a) / (b - a)).cos()
        }
    };
    let pairs: Vec<(usize, usize)> = if grid.dim() == 1 {
        (0..m).map(|k| (k, 0)).collect()
    } else {
        let mut p = Vec::with_capacity(m);
        'outer: for total in 0.. {
            for kx in (0..=total).rev() {
                p.push((kx, total - kx));
                if p.len() == m {
                    break 'outer;
                }
            }
        }
        p
    };
    pairs
        .into_iter()
        .map(|(kx, ky)| {
            let values = grid
                .nodes()
                .iter()
                .map(|x| factor(kx, x[0], 0) * if grid.dim() == 2 { factor(ky, x[1], 1) } else { T::one() })
                .collect();
            Field::from_raw(grid.id(), values)
        })
        .collect()
}

/// The first `m` retained eigenmodes of a metric, which lie in `H₁`.
pub fn metric_modes<T: Real>(metric: &NonlocalMetric<T>, m: usize) -> Result<Vec<Field<T>>> {
    if m > metric.rank() {
        return Err(Error::ModeCount {
            expected: metric.rank(),
            got: m,
        });
    }
    Ok((0..m).map(|i| metric.mode(i)).collect())
}

impl<T: Real> NoiseModel<T> {
    pub fn additive(grid: &Grid<T>, sigma: Vec<T>, modes: Vec<Field<T>>, basis: &str) -> Result<Self> {
        if sigma.len() != modes.len() {
            return Err(Error::ModeCount {
                expected: modes.len(),
                got: sigma.len(),
            });
        }
        for phi in &modes {
            same_grid(phi.grid_id(), grid.id())?;
        }
        if sigma.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("noise amplitudes must be finite".into()));
        }
        Ok(Self {
            grid: grid.id(),
            kind: NoiseKind::Additive {
                sigma,
                modes: modes.into_iter().map(Field::into_values).collect(),
            },
            quad: grid.quadrature().to_vec(),
            basis: basis.to_string(),
        })
    }

    /// `B ≡ 0`.
    pub fn none(grid: &Grid<T>) -> Self {
        Self::additive(grid, Vec::new(), Vec::new(), "none").expect("empty additive noise is valid")
    }

    pub fn pointwise(grid: &Grid<T>, map: Activation<T>, scale: T) -> Result<Self> {
        map.lipschitz_data()?;
        Ok(Self {
            grid: grid.id(),
            kind: NoiseKind::Pointwise { map, scale },
            quad: grid.quadrature().to_vec(),
            basis: "node".into(),
        })
    }

    pub fn kernel_mollified(kernel: KernelOperator<T>, rate: Activation<T>, population: T) -> Result<Self> {
        if !population.is_finite() || population <= T::zero() {
            return Err(Error::Config("population scale N must be positive".into()));
        }
        let root = rate.sqrt_rate()?;
        root.lipschitz_data()?;
        Ok(Self {
            grid: kernel.grid_id(),
            quad: kernel.quadrature().to_vec(),
            kind: NoiseKind::KernelMollified {
                kernel,
                rate,
                root,
                population,
            },
            basis: "node".into(),
        })
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn kind(&self) -> &NoiseKind<T> {
        &self.kind
    }

    pub fn basis(&self) -> &str {
        &self.basis
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.kind, NoiseKind::Additive { .. })
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            NoiseKind::Additive { sigma, .. } => sigma.iter().all(|s| *s == T::zero()),
            NoiseKind::Pointwise { scale, .. } => *scale == T::zero(),
            NoiseKind::KernelMollified { kernel, .. } => kernel.is_zero(),
        }
    }

    pub fn m_modes(&self) -> usize {
        match &self.kind {
            NoiseKind::Additive { sigma, .. } => sigma.len(),
            _ => self.quad.len(),
        }
    }

    /// `out = B(u)ξ` on raw nodal values.
    pub fn apply_slice(&self, u: &[T], xi: &[T], out: &mut [T]) {
        debug_assert_eq!(xi.len(), self.m_modes());
        match &self.kind {
            NoiseKind::Additive { sigma, modes } => {
                out.fill(T::zero());
                for ((s, phi), x) in sigma.iter().zip(modes).zip(xi) {
                    let c = *s * *x;
                    for (o, p) in out.iter_mut().zip(phi) {
                        *o += c * *p;
                    }
                }
            }
            NoiseKind::Pointwise { map, scale } => {
                for ((o, ui), x) in out.iter_mut().zip(u).zip(xi) {
                    *o = *scale * map.eval(*ui) * *x;
                }
            }
            NoiseKind::KernelMollified {
                kernel,
                root,
                population,
                ..
            } => {
                let c = population.sqrt().recip();
                let g: Vec<T> = u
                    .iter()
                    .zip(xi)
                    .zip(&self.quad)
                    .map(|((ui, x), q)| c * root.eval(*ui) * *x / q.sqrt())
                    .collect();
                kernel.apply_slice(&g, out);
            }
        }
    }

    pub fn apply(&self, u: &Field<T>, xi: &[T]) -> Result<Field<T>> {
        same_grid(u.grid_id(), self.grid)?;
        if xi.len() != self.m_modes() {
            return Err(Error::ModeCount {
                expected: self.m_modes(),
                got: xi.len(),
            });
        }
        let mut out = vec![T::zero(); u.len()];
        self.apply_slice(u.values(), xi, &mut out);
        Ok(Field::from_raw(self.grid, out))
    }

    /// Squared `H`-norm of each node-mode column per unit amplitude:
    /// `ρⱼqⱼ` for pointwise, `qⱼ Σᵢ ρᵢqᵢWᵢⱼ²/N` for mollified.
    fn column_energy(&self, w: &Weight<T>) -> Vec<T> {
        match &self.kind {
            NoiseKind::Additive { .. } => Vec::new(),
            NoiseKind::Pointwise { .. } => w.measure().to_vec(),
            NoiseKind::KernelMollified { kernel, population, .. } => {
                let n = self.quad.len();
                let m = w.measure();
                kernel
                    .matrix()
                    .as_slice()
                    .chunks_exact(n)
                    .zip(&self.quad)
                    .map(|(col, q)| col.iter().zip(m).fold(T::zero(), |s, (x, r)| s + *r * *x * *x) * *q / *population)
                    .collect()
            }
        }
    }

    fn node_amplitude(&self, x: T) -> T {
        match &self.kind {
            NoiseKind::Additive { .. } => T::zero(),
            NoiseKind::Pointwise { map, scale } => *scale * map.eval(x),
            NoiseKind::KernelMollified { root, .. } => root.eval(x),
        }
    }

    /// `‖B(u)‖_{L₂(V,H)}`.
    pub fn hs_norm(&self, u: &Field<T>, w: &Weight<T>) -> Result<T> {
        same_grid(u.grid_id(), self.grid)?;
        same_grid(w.grid_id(), self.grid)?;
        Ok(match &self.kind {
            NoiseKind::Additive { sigma, modes } => sigma
                .iter()
                .zip(modes)
                .fold(T::zero(), |s, (a, phi)| s + *a * *a * w.dot(phi, phi))
                .sqrt(),
            _ => {
                let e = self.column_energy(w);
                u.values()
                    .iter()
                    .zip(&e)
                    .fold(T::zero(), |s, (x, c)| s + self.node_amplitude(*x).powi(2) * *c)
                    .sqrt()
            }
        })
    }

    /// `‖B(u) − B(v)‖_{L₂(V,H)}`.
    pub fn hs_distance(&self, u: &Field<T>, v: &Field<T>, w: &Weight<T>) -> Result<T> {
        same_grid(u.grid_id(), self.grid)?;
        same_grid(v.grid_id(), self.grid)?;
        if self.is_additive() {
            return Ok(T::zero());
        }
        let e = self.column_energy(w);
        Ok(u.values()
            .iter()
            .zip(v.values())
            .zip(&e)
            .fold(T::zero(), |s, ((a, b), c)| {
                s + (self.node_amplitude(*a) - self.node_amplitude(*b)).powi(2) * *c
            })
            .sqrt())
    }

    /// Exact `C_B`: the largest per-node ratio of column energy to `ρⱼqⱼ`,
    /// times the Lipschitz constant of the node amplitude.
    pub fn lipschitz_constant(&self, w: &Weight<T>) -> Result<T> {
        let lip = match &self.kind {
            NoiseKind::Additive { .. } => return Ok(T::zero()),
            NoiseKind::Pointwise { map, scale } => map.lipschitz_data()?.0 * scale.abs(),
            NoiseKind::KernelMollified { root, .. } => root.lipschitz_data()?.0,
        };
        let e = self.column_energy(w);
        let mut worst = T::zero();
        for (c, m) in e.iter().zip(w.measure()) {
            if *c == T::zero() {
                continue;
            }
            if *m == T::zero() {
                return Ok(T::infinity());
            }
            worst = worst.max(*c / *m);
        }
        Ok(lip * worst.sqrt())
    }

    /// `‖B(0)‖_{L₂(V,H)}`.
    pub fn b0(&self, w: &Weight<T>) -> Result<T> {
        let zero = Field::from_raw(self.grid, vec![T::zero(); self.quad.len()]);
        self.hs_norm(&zero, w)
    }

    /// Squared `H₁`-norms of the unit-amplitude columns; additive columns
    /// include `σₖ`.
    fn h1_column_energy(&self, metric: &NonlocalMetric<T>) -> Result<Vec<T>> {
        same_grid(metric.grid_id(), self.grid)?;
        let n = self.quad.len();
        match &self.kind {
            NoiseKind::Additive { sigma, modes } => sigma
                .iter()
                .zip(modes)
                .map(|(s, phi)| Ok((*s * metric.h1_norm_slice(phi)?).powi(2)))
                .collect(),
            NoiseKind::Pointwise { .. } => (0..n)
                .map(|j| {
                    let mut e = vec![T::zero(); n];
                    e[j] = T::one();
                    Ok(metric.h1_norm_slice(&e)?.powi(2))
                })
                .collect(),
            NoiseKind::KernelMollified { kernel, population, .. } => kernel
                .matrix()
                .as_slice()
                .chunks_exact(n)
                .zip(&self.quad)
                .map(|(col, q)| Ok(metric.h1_norm_slice(col)?.powi(2) * *q / *population))
                .collect(),
        }
    }

    /// `‖B(u)‖_{L₂(V,H₁)}`.
    pub fn hs_norm_h1(&self, u: &Field<T>, metric: &NonlocalMetric<T>) -> Result<T> {
        same_grid(u.grid_id(), self.grid)?;
        let e = self.h1_column_energy(metric)?;
        Ok(self.h1_norm_with(u.values(), &e))
    }

    fn h1_norm_with(&self, u: &[T], energy: &[T]) -> T {
        match &self.kind {
            NoiseKind::Additive { .. } => energy.iter().fold(T::zero(), |s, e| s + *e).sqrt(),
            _ => u
                .iter()
                .zip(energy)
                .fold(T::zero(), |s, (x, e)| s + self.node_amplitude(*x).powi(2) * *e)
                .sqrt(),
        }
    }

    /// `C̃_B` and `C̃̃_B` of the bound `‖B(u)‖_{L₂(V,H₁)} ≤ C̃_B‖u‖₁ + C̃̃_B`.
    ///
    /// Exact for additive noise. Otherwise an affine envelope fitted over
    /// `trials` random elements of `H₁` with radii spread over four decades:
    /// least-squares slope clamped at zero, intercept raised until every sample
    /// lies below the line.
    pub fn h1_constants(&self, metric: Option<&NonlocalMetric<T>>, trials: usize, seed: u64) -> Result<H1Constants> {
        let metric = metric.ok_or(Error::MissingMetric)?;
        let energy = self.h1_column_energy(metric)?;
        if self.is_additive() {
            return Ok(H1Constants {
                c_tilde: 0.0,
                c_tilde_tilde: self.h1_norm_with(&[], &energy).as_f64(),
                max_residual: 0.0,
                empirical: false,
                samples: 0,
            });
        }
        let trials = trials.max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_radius = Uniform::new(-2.0f64, 2.0).expect("valid range");
        let r = metric.rank();
        let mut xs = Vec::with_capacity(trials);
        let mut ys = Vec::with_capacity(trials);
        for t in 0..trials {
            let radius = if t == 0 {
                0.0
            } else {
                10f64.powf(log_radius.sample(&mut rng))
            };
            let z: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            // Coefficients scaled by √λᵢ so that ‖u‖₁ equals the radius.
            let c: Vec<T> = z
                .iter()
                .zip(metric.eigenvalues())
                .map(|(zi, l)| T::of(radius * zi / nz) * l.sqrt())
                .collect();
            let u = metric.synthesize(&c);
            xs.push(metric.h1_norm_of_coefficients(&c).as_f64());
            ys.push(self.h1_norm_with(&u, &energy).as_f64());
        }
        let (slope, intercept) = crate::stats::ols(&xs, &ys);
        let slope = slope.max(0.0);
        let mut lifted = intercept.max(0.0);
        let mut max_residual = 0.0f64;
        for (x, y) in xs.iter().zip(&ys) {
            max_residual = max_residual.max((y - slope * x - intercept).abs());
            lifted = lifted.max(y - slope * x);
        }
        Ok(H1Constants {
            c_tilde: slope,
            c_tilde_tilde: lifted,
            max_residual,
            empirical: true,
            samples: trials,
        })
    }

    /// All noise constants; the `H₁` pair only when a metric is supplied.
    pub fn estimate_constants(
        &self,
        w: &Weight<T>,
        metric: Option<&NonlocalMetric<T>>,
        trials: usize,
        seed: u64,
    ) -> Result<NoiseConstants> {
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let c_b = self.lipschitz_constant(w)?.as_f64();
        let operator_form = match &self.kind {
            NoiseKind::KernelMollified {
                kernel,
                root,
                population,
                ..
            } => {
                let norm = operator_norm(kernel, w)?.value;
                Some(norm * root.lipschitz_data()?.0.as_f64() / population.as_f64().sqrt())
            }
            _ => None,
        };
        let sampled = self.sampled_lipschitz(w, trials, seed)?;
        let h1 = match metric {
            Some(m) => Some(self.h1_constants(Some(m), trials, seed ^ 0x9e37_79b9_7f4a_7c15)?),
            None => None,
        };
        Ok(NoiseConstants {
            c_b,
            b0: self.b0(w)?.as_f64(),
            c_b_sampled: sampled,
            c_b_operator_form: operator_form,
            h1,
            m_modes: self.m_modes(),
            basis: self.basis.clone(),
        })
    }

    /// Largest observed `‖B(u) − B(v)‖_{L₂}/‖u − v‖` over random pairs.
    pub fn sampled_lipschitz(&self, w: &Weight<T>, trials: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_scale = Uniform::new(-2.0f64, 1.0).expect("valid range");
        let n = self.quad.len();
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let s = 10f64.powf(log_scale.sample(&mut rng));
            let mut draw = || -> Vec<T> {
                (0..n)
                    .map(|_| T::of(s * Distribution::<f64>::sample(&StandardNormal, &mut rng)))
                    .collect()
            };
            let u = Field::from_raw(self.grid, draw());
            let v = Field::from_raw(self.grid, draw());
            let d = w.norm(&u.sub(&v)?)?;
            if d > T::zero() {
                worst = worst.max((self.hs_distance(&u, &v, w)? / d).as_f64());
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct H1Constants {
    pub c_tilde: f64,
    pub c_tilde_tilde: f64,
    pub max_residual: f64,
    /// Set when the pair comes from sampling rather than a closed form.
    pub empirical: bool,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseConstants {
    pub c_b: f64,
    pub b0: f64,
    pub c_b_sampled: f64,
    /// `‖K‖ Lip(√f)/√N`, reported for comparison; not a Hilbert–Schmidt bound
    /// in general.
    pub c_b_operator_form: Option<f64>,
    pub h1: Option<H1Constants>,
    pub m_modes: usize,
    pub basis: String,
}
