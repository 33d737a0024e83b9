//! The nonlocal subspace `H₁ = ker(±K̂)^⊥` with norm `‖(±K̂)^{−1/2} v‖`.
//!
//! The eigenproblem is solved for the form matrix `G = D^{1/2} Ŵ D^{1/2}`,
//! `D = diag(ρq)`; eigenvectors `v` of `G` map to `ρ`-orthonormal fields
//! `e = D^{−1/2} v`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{form_matrix, SymDecomposition, Verdict};
use crate::scalar::Real;
use crate::space::{same_grid, Field, GridId, Weight};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative residual allowed for a field to count as an element of `H₁`.
pub const MEMBERSHIP_TOL: f64 = 1e-6;

/// Which of `±K̂` is non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor<T: Real>(self) -> T {
        match self {
            Sign::Positive => T::one(),
            Sign::Negative => -T::one(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Power {
    Half,
    NegHalf,
}

#[derive(Clone, Debug)]
pub struct NonlocalMetric<T: Real> {
    grid: GridId,
    sign: Sign,
    eigenvalues: Vec<T>,
    // Retained eigenvectors of G, one per column.
    frame: DMatrix<T>,
    modes: Vec<Vec<T>>,
    measure: Vec<T>,
    rank_tol: T,
}

pub fn build_metric<T: Real>(dec: &SymDecomposition<T>, w: &Weight<T>, rank_tol: T) -> Result<NonlocalMetric<T>> {
    same_grid(dec.grid, w.grid_id())?;
    let sign = match dec.definiteness.verdict {
        Verdict::NonNegative => Sign::Positive,
        Verdict::NonPositive => Sign::Negative,
        Verdict::Indefinite => {
            return Err(Error::Indefinite {
                lambda_min: dec.definiteness.lambda_min,
                lambda_max: dec.definiteness.lambda_max,
            })
        }
    };
    let g = form_matrix(&dec.sym, w) * sign.factor::<T>();
    let n = g.nrows();
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .expect("eigenvalues are finite")
    });
    let top = eig.eigenvalues[order[0]];
    if top <= T::zero() {
        return Err(Error::TrivialSubspace);
    }
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|k| eig.eigenvalues[*k] > rank_tol * top)
        .collect();
    let r = kept.len();
    let mut frame = DMatrix::zeros(n, r);
    let mut modes = Vec::with_capacity(r);
    let measure = w.measure().to_vec();
    for (c, k) in kept.iter().enumerate() {
        let v = eig.eigenvectors.column(*k);
        frame.set_column(c, &v);
        let e = v
            .iter()
            .zip(&measure)
            .map(|(vi, m)| if *m > T::zero() { *vi / m.sqrt() } else { T::zero() })
            .collect();
        modes.push(e);
    }
    let eigenvalues = kept.iter().map(|k| eig.eigenvalues[*k]).collect();
    Ok(NonlocalMetric {
        grid: dec.grid,
        sign,
        eigenvalues,
        frame,
        modes,
        measure,
        rank_tol,
    })
}

impl<T: Real> NonlocalMetric<T> {
    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Retained eigenvalues, strictly positive and non-increasing.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// `ρ`-orthonormal eigenfields.
    pub fn modes(&self) -> &[Vec<T>] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> Field<T> {
        Field::from_raw(self.grid, self.modes[i].clone())
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn rank_tol(&self) -> T {
        self.rank_tol
    }

    /// `‖(±K̂)^{−1/2}‖` restricted to `H₁`, i.e. `1/√λ_r`.
    pub fn sqrt_pinv_norm(&self) -> T {
        T::one() / self.eigenvalues[self.rank() - 1].sqrt()
    }

    /// `‖(±K̂)^{1/2}‖ = √λ₁`.
    pub fn sqrt_norm(&self) -> T {
        self.eigenvalues[0].sqrt()
    }

    fn dot(&self, a: &[T], b: &[T]) -> T {
        self.measure
            .iter()
            .zip(a.iter().zip(b))
            .fold(T::zero(), |s, (m, (x, y))| s + *m * *x * *y)
    }

    /// `⟨u, eᵢ⟩_ρ` for every retained mode.
    pub fn coefficients(&self, u: &[T]) -> Vec<T> {
        self.modes.iter().map(|e| self.dot(u, e)).collect()
    }

    pub fn synthesize(&self, coeffs: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.measure.len()];
        for (c, e) in coeffs.iter().zip(&self.modes) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += *c * *v;
            }
        }
        out
    }

    /// Coefficients of `u`, failing when `u` is not in `H₁` within tolerance.
    pub fn member_coefficients(&self, u: &[T]) -> Result<Vec<T>> {
        let c = self.coefficients(u);
        let p = self.synthesize(&c);
        let diff: Vec<T> = u.iter().zip(&p).map(|(a, b)| *a - *b).collect();
        let residual = self.dot(&diff, &diff).max(T::zero()).sqrt();
        let norm = self.dot(u, u).max(T::zero()).sqrt();
        if residual > T::of(MEMBERSHIP_TOL) * norm {
            return Err(Error::SubspaceMembership {
                residual: residual.as_f64(),
                norm: norm.as_f64(),
            });
        }
        Ok(c)
    }

    pub fn h1_norm_slice(&self, u: &[T]) -> Result<T> {
        let c = self.member_coefficients(u)?;
        Ok(self.h1_norm_of_coefficients(&c))
    }

    pub fn h1_norm_of_coefficients(&self, c: &[T]) -> T {
        c.iter()
            .zip(&self.eigenvalues)
            .fold(T::zero(), |s, (ci, l)| s + *ci * *ci / *l)
            .sqrt()
    }

    pub fn h1_norm(&self, u: &Field<T>) -> Result<T> {
        same_grid(u.grid_id(), self.grid)?;
        self.h1_norm_slice(u.values())
    }

    /// Spectral action `λᵢ^{±1/2}` on coefficients.
    pub fn sqrt_apply(&self, u: &Field<T>, power: Power) -> Result<Field<T>> {
        same_grid(u.grid_id(), self.grid)?;
        let c = match power {
            Power::Half => self.coefficients(u.values()),
            Power::NegHalf => self.member_coefficients(u.values())?,
        };
        let scaled: Vec<T> = c
            .iter()
            .zip(&self.eigenvalues)
            .map(|(ci, l)| match power {
                Power::Half => *ci * l.sqrt(),
                Power::NegHalf => *ci / l.sqrt(),
            })
            .collect();
        Ok(Field::from_raw(self.grid, self.synthesize(&scaled)))
    }

    /// Orthogonal projection onto `H₁`.
    pub fn project(&self, u: &Field<T>) -> Result<Field<T>> {
        same_grid(u.grid_id(), self.grid)?;
        Ok(Field::from_raw(self.grid, self.synthesize(&self.coefficients(u.values()))))
    }

    /// `Σ λᵢ eᵢ ⟨eᵢ, u⟩_ρ`, the form operator `±K̂` applied to `Π₁u`.
    pub fn apply_form(&self, u: &Field<T>) -> Result<Field<T>> {
        same_grid(u.grid_id(), self.grid)?;
        let c: Vec<T> = self
            .coefficients(u.values())
            .iter()
            .zip(&self.eigenvalues)
            .map(|(ci, l)| *ci * *l)
            .collect();
        Ok(Field::from_raw(self.grid, self.synthesize(&c)))
    }

    /// Smallest `r` with `√(Σ_{i>r} λᵢ) · R ≤ eps`.
    pub fn compact_ball_cover(&self, radius: T, eps: T) -> usize {
        let mut tail = self.eigenvalues.iter().fold(T::zero(), |s, l| s + *l);
        for (r, l) in self.eigenvalues.iter().enumerate() {
            if tail.max(T::zero()).sqrt() * radius <= eps {
                return r;
            }
            tail -= *l;
        }
        self.rank()
    }

    /// `C_Ǩ = ‖(±K̂)⁺ Ǩ‖` in the `ρ`-orthonormal frame; infinite when `Ǩ`
    /// leaves the range of `K̂` beyond [`MEMBERSHIP_TOL`].
    pub fn antisym_domination(&self, dec: &SymDecomposition<T>, w: &Weight<T>) -> Result<T> {
        same_grid(dec.grid, self.grid)?;
        let g_anti = form_matrix(&dec.antisym, w);
        if g_anti.iter().all(|v| *v == T::zero()) {
            return Ok(T::zero());
        }
        let coeffs = self.frame.tr_mul(&g_anti);
        let outside = &g_anti - &self.frame * &coeffs;
        let total = g_anti.singular_values().max();
        let leak = outside.singular_values().max();
        if leak > T::of(MEMBERSHIP_TOL) * total {
            return Ok(T::infinity());
        }
        let mut scaled = coeffs;
        for (mut row, l) in scaled.row_iter_mut().zip(&self.eigenvalues) {
            row /= *l;
        }
        Ok(scaled.singular_values().max())
    }
}
