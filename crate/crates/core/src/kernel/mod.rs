//! Kernel operators `(Ku)(x) = ∫ w(x, y) u(y) dy` on a grid.

mod catalogue;
mod fast;

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

pub use catalogue::{KernelKind, KernelSpec};
use fast::ConvPlan;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::space::{same_grid, Field, Grid, GridId, Weight};

/// Relative tolerance of the definiteness verdict.
pub const DEFINITENESS_TOL: f64 = 1e-8;

/// Dense realization of a kernel operator with Lebesgue quadrature in `y`.
#[derive(Clone, Debug)]
pub struct KernelOperator<T: Real> {
    grid: GridId,
    matrix: DMatrix<T>,
    quad: Vec<T>,
    spec: Option<KernelSpec<T>>,
    conv: Option<Arc<ConvPlan<T>>>,
    // Multiplier applied on the fast path after rescaling.
    conv_scale: T,
    zero: bool,
}

/// Builds `Wᵢⱼ = w(xᵢ, xⱼ)` from a catalogue or table spec.
pub fn assemble<T: Real>(spec: &KernelSpec<T>, grid: &Grid<T>) -> Result<KernelOperator<T>> {
    spec.check_parameters()?;
    spec.check_dimension(grid.dim())?;
    let n = grid.len();
    if let KernelKind::Table { n: tn, .. } = spec.kind {
        if tn != n {
            return Err(Error::Dimension(format!("table kernel is {tn}×{tn}, grid has {n} nodes")));
        }
    }
    let mut data = vec![T::zero(); n * n];
    // Column-major storage: chunk j holds w(·, xⱼ).
    data.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = spec.entry(grid, i, j);
        }
    });
    let matrix = DMatrix::from_vec(n, n, data);
    if let Some((i, j)) = first_non_finite(&matrix) {
        return Err(Error::Constraint(format!("kernel entry ({i}, {j}) is not finite")));
    }
    let mut op = KernelOperator::with_matrix(grid, matrix);
    if spec.is_shift_invariant() && is_toeplitz(spec, grid, &op.matrix) {
        op.conv = Some(Arc::new(ConvPlan::new(spec, grid)));
    }
    op.spec = Some(spec.clone());
    Ok(op)
}

fn first_non_finite<T: Real>(m: &DMatrix<T>) -> Option<(usize, usize)> {
    let n = m.nrows();
    m.as_slice().iter().position(|v| !v.is_finite()).map(|k| (k % n, k / n))
}

// Compares sampled entries with the profile at grid offsets.
fn is_toeplitz<T: Real>(spec: &KernelSpec<T>, grid: &Grid<T>, m: &DMatrix<T>) -> bool {
    let n = grid.len();
    let scale = m.amax().max(T::of(1e-300));
    let tol = T::of(1e-12) * scale;
    let h = grid.spacing();
    let stride = (n / 16).max(1);
    let offset = |i: usize, j: usize| -> Vec<T> {
        match grid.points() {
            [_] => vec![h[0] * T::of(i as f64 - j as f64)],
            [_, ny] => {
                let (ai, bi) = (i / ny, i % ny);
                let (aj, bj) = (j / ny, j % ny);
                vec![h[0] * T::of(ai as f64 - aj as f64), h[1] * T::of(bi as f64 - bj as f64)]
            }
            _ => unreachable!(),
        }
    };
    (0..n).step_by(stride).all(|i| {
        (0..n)
            .step_by(stride.max(3) - 1)
            .all(|j| (m[(i, j)] - spec.profile(&offset(i, j))).abs() <= tol)
    })
}

impl<T: Real> KernelOperator<T> {
    fn with_matrix(grid: &Grid<T>, matrix: DMatrix<T>) -> Self {
        let zero = matrix.iter().all(|v| *v == T::zero());
        Self {
            grid: grid.id(),
            matrix,
            quad: grid.quadrature().to_vec(),
            spec: None,
            conv: None,
            conv_scale: T::one(),
            zero,
        }
    }

    /// Operator from an explicit node matrix; never flagged convolutional.
    pub fn from_matrix(grid: &Grid<T>, matrix: DMatrix<T>) -> Result<Self> {
        let n = grid.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "kernel matrix is {}×{}, grid has {n} nodes",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some((i, j)) = first_non_finite(&matrix) {
            return Err(Error::Constraint(format!("kernel entry ({i}, {j}) is not finite")));
        }
        Ok(Self::with_matrix(grid, matrix))
    }

    /// Operator with `Wᵢⱼ = w(xᵢ, xⱼ)` for an arbitrary function.
    pub fn from_fn(grid: &Grid<T>, w: impl Fn(&[T], &[T]) -> T + Sync) -> Result<Self> {
        let n = grid.len();
        let d = grid.dim();
        let nodes = grid.nodes();
        let mut data = vec![T::zero(); n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v = w(&nodes[i][..d], &nodes[j][..d]);
            }
        });
        Self::from_matrix(grid, DMatrix::from_vec(n, n, data))
    }

    pub fn zero(grid: &Grid<T>) -> Self {
        let n = grid.len();
        Self::with_matrix(grid, DMatrix::zeros(n, n))
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.quad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn quadrature(&self) -> &[T] {
        &self.quad
    }

    pub fn spec(&self) -> Option<&KernelSpec<T>> {
        self.spec.as_ref()
    }

    pub fn is_convolutional(&self) -> bool {
        self.conv.is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix == self.matrix.transpose()
    }

    /// `c · K`.
    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        out.matrix *= c;
        out.zero = out.matrix.iter().all(|v| *v == T::zero());
        out.spec = out.spec.map(|s| s.scaled(c));
        out.conv_scale *= c;
        out
    }

    /// `(Ku)ᵢ = Σⱼ Wᵢⱼ uⱼ qⱼ` on raw nodal values.
    pub fn apply_slice(&self, u: &[T], out: &mut [T]) {
        debug_assert_eq!(u.len(), self.len());
        out.fill(T::zero());
        if self.zero {
            return;
        }
        let n = self.len();
        let data = self.matrix.as_slice();
        for (j, col) in data.chunks_exact(n).enumerate() {
            let g = u[j] * self.quad[j];
            if g == T::zero() {
                continue;
            }
            for (o, w) in out.iter_mut().zip(col) {
                *o += *w * g;
            }
        }
    }

    pub fn apply(&self, u: &Field<T>) -> Result<Field<T>> {
        same_grid(u.grid_id(), self.grid)?;
        let mut out = vec![T::zero(); self.len()];
        self.apply_slice(u.values(), &mut out);
        Ok(Field::from_raw(self.grid, out))
    }

    /// FFT path for convolution kernels.
    pub fn apply_fast(&self, u: &Field<T>) -> Result<Field<T>> {
        same_grid(u.grid_id(), self.grid)?;
        let plan = self
            .conv
            .as_ref()
            .ok_or_else(|| Error::Config("kernel is not a verified convolution".into()))?;
        let g: Vec<T> = u.values().iter().zip(&self.quad).map(|(a, q)| *a * *q).collect();
        let mut out = plan.convolve(&g);
        if self.conv_scale != T::one() {
            out.iter_mut().for_each(|v| *v *= self.conv_scale);
        }
        Ok(Field::from_raw(self.grid, out))
    }

    /// Matrix of the operator in a `ρ`-orthonormal frame: `R A R⁻¹` with
    /// `A = W diag(q)` and `R = diag(√(ρq))`, restricted to `ρ > 0`.
    fn weighted_frame(&self, w: &Weight<T>) -> Result<DMatrix<T>> {
        same_grid(w.grid_id(), self.grid)?;
        let support: Vec<usize> = (0..self.len()).filter(|i| w.values()[*i] > T::zero()).collect();
        if support.is_empty() {
            return Err(Error::DegenerateSpace("weight vanishes at every node".into()));
        }
        let r: Vec<T> = support.iter().map(|i| w.measure()[*i].sqrt()).collect();
        let m = support.len();
        Ok(DMatrix::from_fn(m, m, |a, b| {
            let (i, j) = (support[a], support[b]);
            r[a] * self.matrix[(i, j)] * self.quad[j] / r[b]
        }))
    }
}

/// Discrete operator norm on `(H, ‖·‖_ρ)` with the analytic bounds that apply.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorNorm {
    pub value: f64,
    /// `√κ`, valid for the unit weight.
    pub sqrt_kappa: Option<f64>,
    /// `√(Λ ‖ρ⁻¹‖_{L¹})`, valid for strictly positive weights.
    pub lambda_rho: Option<f64>,
    pub within_bounds: bool,
}

/// Largest singular value of the operator in a `ρ`-orthonormal frame.
pub fn operator_norm<T: Real>(k: &KernelOperator<T>, w: &Weight<T>) -> Result<OperatorNorm> {
    let frame = k.weighted_frame(w)?;
    let value = if k.is_zero() {
        0.0
    } else {
        frame.singular_values().max().as_f64()
    };
    let n = k.len();
    let (mut kappa, mut lambda) = (0.0f64, 0.0f64);
    for i in 0..n {
        let mut row_max = 0.0f64;
        for j in 0..n {
            let v = k.matrix[(i, j)].as_f64();
            kappa += v * v * k.quad[i].as_f64() * k.quad[j].as_f64();
            row_max = row_max.max(v * v);
        }
        lambda += row_max * w.measure()[i].as_f64();
    }
    let unit = w.values().iter().all(|r| *r == T::one());
    let sqrt_kappa = unit.then(|| kappa.sqrt());
    let lambda_rho = w.inverse_mass().map(|m| (lambda * m.as_f64()).sqrt());
    let slack = |b: f64| b * (1.0 + 1e-9) + 1e-12;
    let within_bounds = sqrt_kappa.is_none_or(|b| value <= slack(b)) && lambda_rho.is_none_or(|b| value <= slack(b));
    Ok(OperatorNorm {
        value,
        sqrt_kappa,
        lambda_rho,
        within_bounds,
    })
}

/// Independent estimate of the operator norm by power iteration on `MᵀM`.
pub fn operator_norm_power<T: Real>(k: &KernelOperator<T>, w: &Weight<T>, max_iter: usize, tol: f64) -> Result<f64> {
    let m = k.weighted_frame(w)?;
    if k.is_zero() {
        return Ok(0.0);
    }
    let dim = m.nrows();
    // Deterministic start with components in every direction.
    let mut x = nalgebra::DVector::from_fn(dim, |i, _| T::one() + T::of(0.1 * ((i * 7919) % 13) as f64));
    x /= x.norm();
    let mut sigma2 = T::zero();
    for _ in 0..max_iter {
        let y = m.tr_mul(&(&m * &x));
        let next = x.dot(&y);
        let ny = y.norm();
        if ny == T::zero() {
            return Ok(0.0);
        }
        x = y / ny;
        let done = (next - sigma2).abs() <= T::of(tol) * next.abs();
        sigma2 = next;
        if done {
            break;
        }
    }
    Ok(sigma2.max(T::zero()).sqrt().as_f64())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NonNegative,
    NonPositive,
    Indefinite,
}

/// Spectral summary of the symmetric form matrix.
#[derive(Clone, Debug, Serialize)]
pub struct Definiteness {
    pub verdict: Verdict,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub tolerance: f64,
    pub rank: usize,
}

/// Symmetric and antisymmetric parts of a kernel.
#[derive(Clone, Debug)]
pub struct SymDecomposition<T: Real> {
    pub grid: GridId,
    pub sym: DMatrix<T>,
    pub antisym: DMatrix<T>,
    pub definiteness: Definiteness,
    /// Whether a non-constant weight makes the form differ from the Lebesgue operator.
    pub weight_dependent: bool,
}

/// `G = D^{1/2} Ŵ D^{1/2}` with `D = diag(ρᵢ qᵢ)`.
pub fn form_matrix<T: Real>(sym: &DMatrix<T>, w: &Weight<T>) -> DMatrix<T> {
    let r: Vec<T> = w.measure().iter().map(|m| m.sqrt()).collect();
    let n = sym.nrows();
    DMatrix::from_fn(n, n, |i, j| r[i] * sym[(i, j)] * r[j])
}

pub fn decompose<T: Real>(k: &KernelOperator<T>, w: &Weight<T>) -> Result<SymDecomposition<T>> {
    same_grid(w.grid_id(), k.grid)?;
    let half = T::of(0.5);
    let wt = k.matrix.transpose();
    let sym = (&k.matrix + &wt) * half;
    let antisym = &k.matrix - &sym;
    let g = form_matrix(&sym, w);
    let eig = g.symmetric_eigenvalues();
    let (lmin, lmax) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.as_f64()), hi.max(v.as_f64()))
    });
    let verdict = classify(lmin, lmax);
    let top = lmin.abs().max(lmax.abs());
    let rank = if top == 0.0 {
        0
    } else {
        eig.iter().filter(|v| v.as_f64().abs() > 1e-10 * top).count()
    };
    Ok(SymDecomposition {
        grid: k.grid,
        sym,
        antisym,
        definiteness: Definiteness {
            verdict,
            lambda_min: lmin,
            lambda_max: lmax,
            tolerance: DEFINITENESS_TOL,
            rank,
        },
        weight_dependent: !w.is_constant(),
    })
}

fn classify(lmin: f64, lmax: f64) -> Verdict {
    if lmin >= -DEFINITENESS_TOL * lmax.max(1.0) {
        Verdict::NonNegative
    } else if lmax <= DEFINITENESS_TOL * lmin.abs().max(1.0) {
        Verdict::NonPositive
    } else {
        Verdict::Indefinite
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(a: f64, b: f64, n: usize) -> (Grid<f64>, Weight<f64>) {
        let g = Grid::interval(a, b, n).unwrap();
        let w = Weight::uniform(&g);
        (g, w)
    }

    #[test]
    fn constant_kernel_entries_and_action() {
        let (g, w) = unit(0.0, 1.0, 101);
        let k = assemble(&KernelSpec::constant(3.0), &g).unwrap();
        assert!(k.matrix().iter().all(|v| *v == 3.0));
        let ku = k.apply(&g.constant_field(1.0)).unwrap();
        assert!(ku.values().iter().all(|v| (v - 3.0).abs() <= 2.0 * 0.01));
        assert!(k.apply(&g.zeros()).unwrap().values().iter().all(|v| *v == 0.0));
        let norm = operator_norm(&k, &w).unwrap();
        assert!((norm.value - 3.0).abs() < 1e-6 && norm.within_bounds);
    }

    #[test]
    fn zero_kernel_has_zero_norm() {
        let (g, w) = unit(0.0, 1.0, 21);
        let k = KernelOperator::zero(&g);
        assert_eq!(operator_norm(&k, &w).unwrap().value, 0.0);
        let empty = Weight::new(&g, vec![0.0; 21]).unwrap();
        assert!(matches!(operator_norm(&k, &empty), Err(Error::DegenerateSpace(_))));
    }

    #[test]
    fn gaussian_indicator_fast_path_matches_dense_and_direct_sum() {
        let (g, _) = unit(-8.0, 8.0, 257);
        let k = assemble(&KernelSpec::gaussian(1.0), &g).unwrap();
        assert!(k.is_convolutional());
        let u = g.field_from_fn(|x| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        let dense = k.apply(&u).unwrap();
        let fast = k.apply_fast(&u).unwrap();
        // Direct summation oracle written out from the formula.
        let nodes = g.nodes();
        let q = g.quadrature();
        let scale = dense.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..g.len() {
            let mut s = 0.0;
            for j in 0..g.len() {
                let d = nodes[i][0] - nodes[j][0];
                s += (-0.5 * d * d).exp() * u.values()[j] * q[j];
            }
            assert!((dense.values()[i] - s).abs() <= 1e-10 * scale);
            assert!((fast.values()[i] - s).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn fast_path_in_two_dimensions() {
        let g = Grid::<f64>::new(&[(-3.0, 3.0), (-2.0, 2.0)], &[17, 13]).unwrap();
        let spec = KernelSpec::new(KernelKind::Gaussian {
            metric: vec![1.0, 0.3, 0.3, 2.0],
        })
        .unwrap();
        let k = assemble(&spec, &g).unwrap();
        assert!(k.is_convolutional());
        let u = g.field_from_fn(|x| (x[0] * 1.3).sin() + x[1] * x[1]).unwrap();
        let dense = k.apply(&u).unwrap();
        let fast = k.scaled(1.0).apply_fast(&u).unwrap();
        let scale = dense.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in dense.values().iter().zip(fast.values()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn tables_are_not_convolutional() {
        let (g, _) = unit(0.0, 1.0, 4);
        let spec = KernelSpec::table(4, (0..16).map(|v| v as f64).collect()).unwrap();
        let k = assemble(&spec, &g).unwrap();
        assert!(!k.is_convolutional());
        assert_eq!(k.matrix()[(1, 2)], 6.0);
        assert!(assemble(&KernelSpec::table(3, vec![0.0; 9]).unwrap(), &g).is_err());
    }

    #[test]
    fn gaussian_norm_svd_agrees_with_power_iteration() {
        let (g, w) = unit(-8.0, 8.0, 513);
        let k = assemble(&KernelSpec::gaussian(1.0), &g).unwrap();
        let svd = operator_norm(&k, &w).unwrap();
        let power = operator_norm_power(&k, &w, 5000, 1e-14).unwrap();
        assert!((svd.value - power).abs() <= 1e-8 * svd.value, "{} vs {power}", svd.value);
        // For a symmetric kernel and unit weight the norm is the largest |eigenvalue|.
        let dec = decompose(&k, &w).unwrap();
        let top = dec.definiteness.lambda_max.abs().max(dec.definiteness.lambda_min.abs());
        assert!((svd.value - top).abs() <= 1e-8 * top);
        assert!(svd.within_bounds);
    }

    #[test]
    fn symmetric_catalogue_kernels_have_no_antisymmetric_part() {
        let (g, w) = unit(-6.0, 6.0, 257);
        let k = assemble(&KernelSpec::gaussian(1.0), &g).unwrap();
        let dec = decompose(&k, &w).unwrap();
        assert!(dec.antisym.iter().all(|v| *v == 0.0));
        assert_eq!(dec.definiteness.verdict, Verdict::NonNegative);
        let d = &dec.definiteness;
        assert!(d.lambda_min >= -1e-8 * d.lambda_max);
    }

    #[test]
    fn pure_antisymmetric_kernel_has_zero_form() {
        let (g, w) = unit(0.0, 1.0, 31);
        let k = KernelOperator::from_fn(&g, |x, y| x[0] - y[0]).unwrap();
        let dec = decompose(&k, &w).unwrap();
        assert!(dec.sym.iter().all(|v| *v == 0.0));
        assert_eq!(dec.definiteness.verdict, Verdict::NonNegative);
        assert_eq!(dec.definiteness.rank, 0);
        assert_eq!(&dec.sym + &dec.antisym, *k.matrix());
    }

    #[test]
    fn negated_gaussian_is_non_positive() {
        let (g, w) = unit(-6.0, 6.0, 65);
        let k = assemble(&KernelSpec::gaussian(1.0).scaled(-1.0), &g).unwrap();
        assert_eq!(decompose(&k, &w).unwrap().definiteness.verdict, Verdict::NonPositive);
        let mixed = assemble(
            &KernelSpec::new(KernelKind::CosineSum {
                weights: vec![1.0],
                frequencies: vec![vec![1.0]],
            })
            .unwrap(),
            &g,
        )
        .unwrap();
        let mix = KernelOperator::from_matrix(&g, mixed.matrix() - DMatrix::identity(65, 65) * 0.5).unwrap();
        assert_eq!(decompose(&mix, &w).unwrap().definiteness.verdict, Verdict::Indefinite);
    }

    fn random_operator(n: usize, entries: Vec<f64>) -> (Grid<f64>, KernelOperator<f64>) {
        let g = Grid::interval(0.0, 1.0, n).unwrap();
        let k = KernelOperator::from_matrix(&g, DMatrix::from_vec(n, n, entries)).unwrap();
        (g, k)
    }

    proptest! {
        #[test]
        fn decomposition_reconstructs_and_is_antisymmetric(
            entries in proptest::collection::vec(-4.0f64..4.0, 100),
            rho in proptest::collection::vec(0.1f64..2.0, 10),
            u in proptest::collection::vec(-1.0f64..1.0, 10),
        ) {
            let (g, k) = random_operator(10, entries);
            let w = Weight::new(&g, rho).unwrap();
            let dec = decompose(&k, &w).unwrap();
            let recon = &dec.sym + &dec.antisym;
            for (a, b) in recon.iter().zip(k.matrix().iter()) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0));
            }
            prop_assert!(dec.sym == dec.sym.transpose());
            let d: Vec<f64> = (0..10).map(|i| w.measure()[i] * u[i]).collect();
            let mut form = 0.0;
            for i in 0..10 {
                for j in 0..10 {
                    form += d[i] * dec.antisym[(i, j)] * d[j];
                }
            }
            let norm2: f64 = u.iter().map(|x| x * x).sum();
            prop_assert!(form.abs() <= 1e-10 * norm2.max(1e-300));
        }

        #[test]
        fn dyadic_entries_reconstruct_exactly(
            entries in proptest::collection::vec(-64i32..64, 64),
        ) {
            let vals = entries.iter().map(|v| *v as f64 / 8.0).collect();
            let (g, k) = random_operator(8, vals);
            let dec = decompose(&k, &Weight::uniform(&g)).unwrap();
            prop_assert!(&dec.sym + &dec.antisym == *k.matrix());
        }

        #[test]
        fn norm_is_homogeneous(c in -5.0f64..5.0, entries in proptest::collection::vec(-1.0f64..1.0, 64)) {
            let (g, k) = random_operator(8, entries);
            let w = Weight::uniform(&g);
            let base = operator_norm(&k, &w).unwrap().value;
            let scaled = operator_norm(&k.scaled(c), &w).unwrap().value;
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-8 * base.max(1e-12));
        }

        #[test]
        fn norm_respects_analytic_bounds(
            entries in proptest::collection::vec(-1.0f64..1.0, 144),
            rho in proptest::collection::vec(0.05f64..3.0, 12),
        ) {
            let (g, k) = random_operator(12, entries);
            let w = Weight::new(&g, rho).unwrap();
            prop_assert!(operator_norm(&k, &w).unwrap().within_bounds);
            prop_assert!(operator_norm(&k, &Weight::uniform(&g)).unwrap().within_bounds);
        }

        #[test]
        fn fast_path_matches_dense_on_random_fields(
            u in proptest::collection::vec(-3.0f64..3.0, 47),
            width in 0.2f64..4.0,
        ) {
            let g = Grid::interval(-5.0, 5.0, 47).unwrap();
            let k = assemble(&KernelSpec::gaussian(width), &g).unwrap();
            let f = Field::new(&g, u).unwrap();
            let dense = k.apply(&f).unwrap();
            let fast = k.apply_fast(&f).unwrap();
            let scale = dense.values().iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            for (a, b) in dense.values().iter().zip(fast.values()) {
                prop_assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }
}
