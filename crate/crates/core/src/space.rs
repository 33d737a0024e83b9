//! Discretized weighted function spaces `L²(U, ρ)` on tensor grids.
//!
//! All integrals use the composite trapezoidal rule: boundary nodes carry
//! half of the cell width on each axis.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelOperator;
use crate::scalar::Real;

/// Identity of a grid, derived from its defining parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct GridId(pub u64);

/// Uniform tensor grid on a box in one or two dimensions.
#[derive(Clone, Debug)]
pub struct Grid<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    points: Vec<usize>,
    spacing: Vec<T>,
    axes: Vec<Vec<T>>,
    nodes: Vec<[T; 2]>,
    quad: Vec<T>,
    truncation: Option<T>,
    id: GridId,
}

impl<T: Real> Grid<T> {
    pub fn new(bounds: &[(T, T)], points: &[usize]) -> Result<Self> {
        let dim = bounds.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if points.len() != dim {
            return Err(Error::InvalidGrid(format!("{} point counts for {dim} axes", points.len())));
        }
        let mut spacing = Vec::with_capacity(dim);
        let mut axes = Vec::with_capacity(dim);
        let mut axis_quad = Vec::with_capacity(dim);
        for (axis, (&(a, b), &n)) in bounds.iter().zip(points).enumerate() {
            if n < 2 {
                return Err(Error::InvalidGrid(format!("axis {axis}: need at least 2 points, got {n}")));
            }
            if !(a.is_finite() && b.is_finite()) || b <= a {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: bounds [{a}, {b}] are not an interval"
                )));
            }
            let h = (b - a) / T::of_usize(n - 1);
            // The last node is pinned to b so both ends are exact.
            let coords: Vec<T> = (0..n).map(|i| if i + 1 == n { b } else { a + h * T::of_usize(i) }).collect();
            let mut q = vec![h; n];
            q[0] = h * T::of(0.5);
            q[n - 1] = h * T::of(0.5);
            spacing.push(h);
            axes.push(coords);
            axis_quad.push(q);
        }

        let total: usize = points.iter().product();
        let mut nodes = Vec::with_capacity(total);
        let mut quad = Vec::with_capacity(total);
        if dim == 1 {
            for (x, q) in axes[0].iter().zip(&axis_quad[0]) {
                nodes.push([*x, T::zero()]);
                quad.push(*q);
            }
        } else {
            for (x, qx) in axes[0].iter().zip(&axis_quad[0]) {
                for (y, qy) in axes[1].iter().zip(&axis_quad[1]) {
                    nodes.push([*x, *y]);
                    quad.push(*qx * *qy);
                }
            }
        }

        let lower: Vec<T> = bounds.iter().map(|b| b.0).collect();
        let upper: Vec<T> = bounds.iter().map(|b| b.1).collect();
        let id = fingerprint(&lower, &upper, points);
        Ok(Self {
            lower,
            upper,
            points: points.to_vec(),
            spacing,
            axes,
            nodes,
            quad,
            truncation: None,
            id,
        })
    }

    pub fn interval(a: T, b: T, n: usize) -> Result<Self> {
        Self::new(&[(a, b)], &[n])
    }

    /// Marks the box as a truncation of `ℝᵈ`; the radius is carried into reports.
    pub fn with_truncation(mut self, radius: T) -> Self {
        self.truncation = Some(radius);
        self
    }

    pub fn id(&self) -> GridId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn bounds(&self) -> Vec<(T, T)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }

    pub fn axis(&self, k: usize) -> &[T] {
        &self.axes[k]
    }

    /// `hᵈ`, the volume of one interior cell.
    pub fn cell_volume(&self) -> T {
        self.spacing.iter().fold(T::one(), |acc, h| acc * *h)
    }

    /// Volume of the box.
    pub fn volume(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(T::one(), |acc, (a, b)| acc * (*b - *a))
    }

    /// Node coordinates in lexicographic order; the second entry is zero in 1-D.
    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    /// Trapezoidal quadrature weight of every node.
    pub fn quadrature(&self) -> &[T] {
        &self.quad
    }

    pub fn truncation(&self) -> Option<T> {
        self.truncation
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        match multi {
            [i] => *i,
            [i, j] => i * self.points[1] + j,
            _ => panic!("grid index of wrong dimension"),
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(&[T]) -> T) -> Result<Field<T>> {
        let d = self.dim();
        let values = self.nodes.iter().map(|x| f(&x[..d])).collect();
        Field::new(self, values)
    }

    pub fn constant_field(&self, c: T) -> Field<T> {
        Field {
            grid: self.id,
            values: vec![c; self.len()],
        }
    }

    pub fn zeros(&self) -> Field<T> {
        self.constant_field(T::zero())
    }
}

fn fingerprint<T: Real>(lower: &[T], upper: &[T], points: &[usize]) -> GridId {
    // FNV-1a over the defining parameters; stable across runs and builds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |word: u64| {
        for byte in word.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(points.len() as u64);
    for ((a, b), n) in lower.iter().zip(upper).zip(points) {
        eat(a.as_f64().to_bits());
        eat(b.as_f64().to_bits());
        eat(*n as u64);
    }
    GridId(h)
}

/// Nodal values of a function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: GridId,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("field value at node {i} is not finite")));
        }
        Ok(Self { grid: grid.id(), values })
    }

    /// Wraps values already known to be finite and of the right length.
    pub(crate) fn from_raw(grid: GridId, values: Vec<T>) -> Self {
        Self { grid, values }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: T) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| *v * c).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        same_grid(self.grid, other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(Self::from_raw(self.grid, values))
    }
}

pub(crate) fn same_grid(a: GridId, b: GridId) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Dimension(format!("grid {:#x} does not match grid {:#x}", a.0, b.0)))
    }
}

/// Non-negative weight `ρ` sampled at the nodes, with its quadrature masses.
#[derive(Clone, Debug)]
pub struct Weight<T> {
    grid: GridId,
    values: Vec<T>,
    // ρᵢ qᵢ: the measure ρ dx at each node.
    measure: Vec<T>,
    quad: Vec<T>,
    mass: T,
    inverse_mass: Option<T>,
}

impl<T: Real> Weight<T> {
    pub fn new(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "weight has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::DegenerateWeight(format!(
                "weight at node {i} is {} (must be finite and non-negative)",
                values[i]
            )));
        }
        let quad = grid.quadrature().to_vec();
        let measure: Vec<T> = values.iter().zip(&quad).map(|(r, q)| *r * *q).collect();
        let mass = measure.iter().fold(T::zero(), |acc, m| acc + *m);
        let inverse_mass = if values.iter().all(|r| *r > T::zero()) {
            Some(values.iter().zip(&quad).fold(T::zero(), |acc, (r, q)| acc + *q / *r))
        } else {
            None
        };
        Ok(Self {
            grid: grid.id(),
            values,
            measure,
            quad,
            mass,
            inverse_mass,
        })
    }

    pub fn uniform(grid: &Grid<T>) -> Self {
        Self::new(grid, vec![T::one(); grid.len()]).expect("unit weight is valid")
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let d = grid.dim();
        Self::new(grid, grid.nodes().iter().map(|x| f(&x[..d])).collect())
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `ρᵢ qᵢ` per node.
    pub fn measure(&self) -> &[T] {
        &self.measure
    }

    pub fn quadrature(&self) -> &[T] {
        &self.quad
    }

    /// Discrete `‖ρ‖_{L¹}`.
    pub fn mass(&self) -> T {
        self.mass
    }

    /// Discrete `‖ρ⁻¹‖_{L¹}`; absent when some node has `ρ = 0`.
    pub fn inverse_mass(&self) -> Option<T> {
        self.inverse_mass
    }

    pub fn is_positive(&self) -> bool {
        self.inverse_mass.is_some()
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|v| *v == self.values[0])
    }

    /// Inner product of raw nodal vectors.
    pub fn dot(&self, u: &[T], v: &[T]) -> T {
        debug_assert_eq!(u.len(), self.measure.len());
        self.measure
            .iter()
            .zip(u.iter().zip(v))
            .fold(T::zero(), |acc, (m, (a, b))| acc + *m * *a * *b)
    }

    pub fn norm_of(&self, u: &[T]) -> T {
        self.dot(u, u).max(T::zero()).sqrt()
    }

    pub fn inner(&self, u: &Field<T>, v: &Field<T>) -> Result<T> {
        same_grid(u.grid_id(), self.grid)?;
        same_grid(v.grid_id(), self.grid)?;
        Ok(self.dot(u.values(), v.values()))
    }

    pub fn norm(&self, u: &Field<T>) -> Result<T> {
        Ok(self.inner(u, u)?.max(T::zero()).sqrt())
    }
}

/// `⟨u, v⟩ = Σ uᵢ vᵢ ρᵢ qᵢ`.
pub fn inner_product<T: Real>(u: &Field<T>, v: &Field<T>, w: &Weight<T>) -> Result<T> {
    w.inner(u, v)
}

pub fn weighted_norm<T: Real>(u: &Field<T>, w: &Weight<T>) -> Result<T> {
    w.norm(u)
}

/// Lower estimate of the Muckenhoupt `A₂` constant from grid-aligned boxes.
///
/// Level `ℓ` uses boxes spanning `1/2ˡ` of every axis; every grid-aligned
/// translate is visited. Box averages are plain node means.
pub fn estimate_a2_constant<T: Real>(w: &Weight<T>, grid: &Grid<T>, max_levels: usize) -> Result<T> {
    same_grid(w.grid_id(), grid.id())?;
    if max_levels == 0 {
        return Err(Error::Config("max_levels must be at least 1".into()));
    }
    if let Some(i) = w.values().iter().position(|r| *r <= T::zero()) {
        return Err(Error::DegenerateWeight(format!("weight vanishes at node {i}")));
    }
    if w.is_constant() {
        return Ok(T::one());
    }
    let rho: Vec<f64> = w.values().iter().map(|r| r.as_f64()).collect();
    let inv: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let best = match grid.points() {
        [n] => a2_search_1d(&rho, &inv, *n, max_levels),
        [nx, ny] => a2_search_2d(&rho, &inv, *nx, *ny, max_levels),
        _ => unreachable!("grids are 1-D or 2-D"),
    };
    Ok(T::of(best.max(1.0)))
}

fn box_side(n: usize, level: usize) -> usize {
    let cells = (n - 1) >> level.min(usize::BITS as usize - 1);
    cells.max(1) + 1
}

fn a2_search_1d(rho: &[f64], inv: &[f64], n: usize, levels: usize) -> f64 {
    let prefix = |v: &[f64]| {
        let mut p = vec![0.0; v.len() + 1];
        for (i, x) in v.iter().enumerate() {
            p[i + 1] = p[i] + x;
        }
        p
    };
    let (pr, pi) = (prefix(rho), prefix(inv));
    let mut best = 1.0f64;
    for level in 0..=levels {
        let side = box_side(n, level);
        let len = side as f64;
        for s in 0..=(n - side) {
            let a = (pr[s + side] - pr[s]) / len;
            let b = (pi[s + side] - pi[s]) / len;
            best = best.max(a * b);
        }
        if side == 2 {
            break;
        }
    }
    best
}

fn a2_search_2d(rho: &[f64], inv: &[f64], nx: usize, ny: usize, levels: usize) -> f64 {
    let prefix = |v: &[f64]| {
        let mut p = vec![0.0; (nx + 1) * (ny + 1)];
        for i in 0..nx {
            for j in 0..ny {
                p[(i + 1) * (ny + 1) + j + 1] =
                    v[i * ny + j] + p[i * (ny + 1) + j + 1] + p[(i + 1) * (ny + 1) + j] - p[i * (ny + 1) + j];
            }
        }
        p
    };
    let (pr, pi) = (prefix(rho), prefix(inv));
    let rect = |p: &[f64], i0: usize, j0: usize, sx: usize, sy: usize| {
        let at = |i: usize, j: usize| p[i * (ny + 1) + j];
        at(i0 + sx, j0 + sy) - at(i0, j0 + sy) - at(i0 + sx, j0) + at(i0, j0)
    };
    let mut best = 1.0f64;
    for level in 0..=levels {
        let (sx, sy) = (box_side(nx, level), box_side(ny, level));
        let count = (sx * sy) as f64;
        for i in 0..=(nx - sx) {
            for j in 0..=(ny - sy) {
                let a = rect(&pr, i, j, sx, sy) / count;
                let b = rect(&pi, i, j, sx, sy) / count;
                best = best.max(a * b);
            }
        }
        if sx == 2 && sy == 2 {
            break;
        }
    }
    best
}

/// Whether one of the structural cases holds on the discretized data.
#[derive(Clone, Debug, Serialize)]
pub struct CaseStatus {
    pub satisfied: bool,
    pub unmet: Vec<String>,
}

impl CaseStatus {
    fn from_unmet(unmet: Vec<String>) -> Self {
        Self {
            satisfied: unmet.is_empty(),
            unmet,
        }
    }
}

/// Structural constants of a discretized (grid, weight, kernel) triple.
#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    /// `ΣΣ wᵢⱼ² qᵢ qⱼ`.
    pub kappa: f64,
    /// `Σᵢ maxⱼ wᵢⱼ² ρᵢ qᵢ`.
    pub lambda: f64,
    pub rho_l1: f64,
    pub rho_inv_l1: Option<f64>,
    pub a2_lower: Option<f64>,
    /// L¹ norm of the radially decreasing majorant of a convolution profile.
    pub majorant_l1: Option<f64>,
    pub truncation_radius: Option<f64>,
    /// Bounded domain, unit weight.
    pub case_i: CaseStatus,
    /// Convolution on a truncated `ℝᵈ` with an `A₂` weight.
    pub case_ii: CaseStatus,
    /// Strictly positive weight with `ρ⁻¹` integrable and finite `Λ`.
    pub case_iii: CaseStatus,
    /// `√κ`, an operator-norm bound under case (i).
    pub sqrt_kappa_bound: Option<f64>,
    /// `[ρ]_{A₂} ‖J₀‖_{L¹}` without the dimensional maximal-function constant.
    pub a2_majorant_product: Option<f64>,
    /// `√(Λ ‖ρ⁻¹‖_{L¹})`, an operator-norm bound under case (iii).
    pub lambda_rho_bound: Option<f64>,
}

pub fn case_diagnostics<T: Real>(grid: &Grid<T>, w: &Weight<T>, kernel: &KernelOperator<T>) -> CaseReport {
    let q = grid.quadrature();
    let mat = kernel.matrix();
    let n = grid.len();
    let mut kappa = 0.0f64;
    let mut lambda = 0.0f64;
    for i in 0..n {
        let mut row_max = 0.0f64;
        for j in 0..n {
            let wij = mat[(i, j)].as_f64();
            let w2 = wij * wij;
            kappa += w2 * q[i].as_f64() * q[j].as_f64();
            row_max = row_max.max(w2);
        }
        lambda += row_max * w.measure()[i].as_f64();
    }
    let rho_l1 = w.mass().as_f64();
    let rho_inv_l1 = w.inverse_mass().map(|m| m.as_f64());
    let levels = grid
        .points()
        .iter()
        .map(|n| usize::BITS as usize - (n - 1).leading_zeros() as usize)
        .max()
        .unwrap_or(1)
        .max(1);
    let a2_lower = estimate_a2_constant(w, grid, levels).ok().map(|v| v.as_f64());
    let majorant_l1 = kernel.spec().and_then(|s| s.majorant_l1(grid)).map(|v| v.as_f64());
    let truncation_radius = grid.truncation().map(|r| r.as_f64());
    let unit_weight = w.values().iter().all(|r| *r == T::one());

    let mut unmet_i = Vec::new();
    if truncation_radius.is_some() {
        unmet_i.push("domain is a truncation of an unbounded space".to_string());
    }
    if !unit_weight {
        unmet_i.push("weight is not identically 1".to_string());
    }
    if !kappa.is_finite() {
        unmet_i.push("kernel is not square integrable".to_string());
    }

    let mut unmet_ii = Vec::new();
    if truncation_radius.is_none() {
        unmet_ii.push("domain is bounded, not a truncation of the whole space".to_string());
    }
    if !kernel.is_convolutional() {
        unmet_ii.push("kernel is not a convolution".to_string());
    }
    if majorant_l1.is_none_or(|m| !m.is_finite()) {
        unmet_ii.push("no integrable radially decreasing majorant".to_string());
    }
    if a2_lower.is_none_or(|a| !a.is_finite()) {
        unmet_ii.push("weight is not strictly positive, so no A2 estimate".to_string());
    }
    if !rho_l1.is_finite() {
        unmet_ii.push("weight is not integrable".to_string());
    }

    let mut unmet_iii = Vec::new();
    if rho_inv_l1.is_none() {
        unmet_iii.push("weight vanishes at some node".to_string());
    }
    if rho_inv_l1.is_some_and(|m| !m.is_finite()) {
        unmet_iii.push("inverse weight is not integrable".to_string());
    }
    if !rho_l1.is_finite() {
        unmet_iii.push("weight is not integrable".to_string());
    }
    if !lambda.is_finite() {
        unmet_iii.push("row-supremum constant is infinite".to_string());
    }

    let case_i = CaseStatus::from_unmet(unmet_i);
    let case_ii = CaseStatus::from_unmet(unmet_ii);
    let case_iii = CaseStatus::from_unmet(unmet_iii);
    CaseReport {
        kappa,
        lambda,
        rho_l1,
        rho_inv_l1,
        a2_lower,
        majorant_l1,
        truncation_radius,
        sqrt_kappa_bound: case_i.satisfied.then(|| kappa.sqrt()),
        a2_majorant_product: match (case_ii.satisfied, a2_lower, majorant_l1) {
            (true, Some(a), Some(m)) => Some(a * m),
            _ => None,
        },
        lambda_rho_bound: match (case_iii.satisfied, rho_inv_l1) {
            (true, Some(m)) => Some((lambda * m).sqrt()),
            _ => None,
        },
        case_i,
        case_ii,
        case_iii,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize) -> (Grid<f64>, Weight<f64>) {
        let g = Grid::interval(0.0, 1.0, n).unwrap();
        let w = Weight::uniform(&g);
        (g, w)
    }

    #[test]
    fn grid_layout() {
        let g = Grid::<f64>::new(&[(0.0, 1.0), (-1.0, 1.0)], &[3, 5]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.nodes()[g.flat_index(&[1, 2])], [0.5, 0.0]);
        assert_eq!(g.nodes()[14], [1.0, 1.0]);
        let total: f64 = g.quadrature().iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        assert!(Grid::<f64>::interval(1.0, 0.0, 5).is_err());
        assert!(Grid::<f64>::interval(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn constant_inner_product_is_exact() {
        let (g, w) = unit(101);
        let one = g.constant_field(1.0);
        assert!((inner_product(&one, &one, &w).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(inner_product(&one, &g.zeros(), &w).unwrap(), 0.0);
        assert!((weighted_norm(&one, &w).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(weighted_norm(&g.zeros(), &w).unwrap(), 0.0);
    }

    #[test]
    fn linear_squared_integral_and_refinement_order() {
        let integral = |n: usize| {
            let (g, w) = unit(n);
            let x = g.field_from_fn(|p| p[0]).unwrap();
            inner_product(&x, &x, &w).unwrap()
        };
        let h = 0.01;
        assert!((integral(101) - 1.0 / 3.0).abs() <= h * h);
        // Independent fine-grid oracle.
        let fine = integral(10001);
        assert!((fine - 1.0 / 3.0).abs() < 1e-8);
        let e1 = (integral(11) - fine).abs();
        let e2 = (integral(21) - fine).abs();
        let e3 = (integral(41) - fine).abs();
        assert!((e1 / e2).log2() >= 1.8 && (e2 / e3).log2() >= 1.8);
    }

    #[test]
    fn sqrt_weight_norm() {
        let g = Grid::<f64>::interval(0.0, 1.0, 1001).unwrap();
        let w = Weight::from_fn(&g, |x| x[0].abs().sqrt()).unwrap();
        let one = g.constant_field(1.0);
        let expect = (2.0f64 / 3.0).sqrt();
        assert!((weighted_norm(&one, &w).unwrap() - expect).abs() < 1e-3);
        assert!(w.inverse_mass().is_none());
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let (g, w) = unit(11);
        let (g2, _) = unit(12);
        assert!(matches!(inner_product(&g.zeros(), &g2.zeros(), &w), Err(Error::Dimension(_))));
        assert!(Field::new(&g, vec![0.0; 3]).is_err());
        assert!(Field::new(&g, vec![f64::NAN; 11]).is_err());
    }

    #[test]
    fn a2_of_constant_weights_is_one() {
        for (n, c) in [(11, 1.0), (64, 3.0), (2001, 0.1)] {
            let g = Grid::interval(-1.0, 1.0, n).unwrap();
            let w = Weight::new(&g, vec![c; n]).unwrap();
            assert_eq!(estimate_a2_constant(&w, &g, 6).unwrap(), 1.0);
        }
        let g = Grid::<f64>::new(&[(0.0, 1.0), (0.0, 2.0)], &[9, 17]).unwrap();
        let w = Weight::new(&g, vec![7.0; g.len()]).unwrap();
        assert_eq!(estimate_a2_constant(&w, &g, 3).unwrap(), 1.0);
    }

    // All grid-aligned intervals with at least two nodes; O(n²) with prefix sums.
    fn brute_force_a2(rho: &[f64]) -> f64 {
        let n = rho.len();
        let mut p = vec![0.0; n + 1];
        let mut pi = vec![0.0; n + 1];
        for i in 0..n {
            p[i + 1] = p[i] + rho[i];
            pi[i + 1] = pi[i] + 1.0 / rho[i];
        }
        let mut best = 0.0f64;
        for s in 0..n {
            for e in (s + 2)..=n {
                let len = (e - s) as f64;
                best = best.max((p[e] - p[s]) / len * (pi[e] - pi[s]) / len);
            }
        }
        best
    }

    #[test]
    fn a2_of_root_weight_against_exhaustive_search() {
        // 2001 nodes put a node on the origin where the weight vanishes.
        let g = Grid::<f64>::interval(-1.0, 1.0, 2001).unwrap();
        let w = Weight::from_fn(&g, |x| x[0].abs().sqrt()).unwrap();
        assert!(matches!(estimate_a2_constant(&w, &g, 8), Err(Error::DegenerateWeight(_))));

        let g = Grid::<f64>::interval(-1.0, 1.0, 2000).unwrap();
        let w = Weight::from_fn(&g, |x| x[0].abs().sqrt()).unwrap();
        let oracle = brute_force_a2(w.values());
        let mut prev = 0.0;
        for levels in 1..=11 {
            let est = estimate_a2_constant(&w, &g, levels).unwrap();
            assert!(est.is_finite() && est >= prev && est <= oracle + 1e-12);
            prev = est;
        }
        assert!(oracle < 2.0, "root weight has a modest A2 constant, got {oracle}");
    }

    #[test]
    fn case_report_for_bounded_constant_kernel() {
        use crate::kernel::{assemble, KernelSpec};
        let (g, w) = unit(101);
        let k = assemble(&KernelSpec::constant(2.0), &g).unwrap();
        let r = case_diagnostics(&g, &w, &k);
        assert!(r.case_i.satisfied && r.case_iii.satisfied && !r.case_ii.satisfied);
        assert!((r.kappa - 4.0).abs() <= 2.0 * 0.01);
        assert!((r.sqrt_kappa_bound.unwrap() - 2.0).abs() < 1e-12);
        let again = case_diagnostics(&g, &w, &k);
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());

        let mut rho = vec![1.0; 101];
        rho[50] = 0.0;
        let w0 = Weight::new(&g, rho).unwrap();
        let r0 = case_diagnostics(&g, &w0, &k);
        assert!(!r0.case_iii.satisfied && r0.rho_inv_l1.is_none() && r0.a2_lower.is_none());
    }

    proptest! {
        #[test]
        fn cauchy_schwarz(
            u in proptest::collection::vec(-5.0f64..5.0, 33),
            v in proptest::collection::vec(-5.0f64..5.0, 33),
            rho in proptest::collection::vec(0.0f64..3.0, 33),
        ) {
            let g = Grid::interval(0.0, 2.0, 33).unwrap();
            let w = Weight::new(&g, rho).unwrap();
            let u = Field::new(&g, u).unwrap();
            let v = Field::new(&g, v).unwrap();
            let ip = inner_product(&u, &v, &w).unwrap();
            prop_assert!((ip - inner_product(&v, &u, &w).unwrap()).abs() < 1e-12);
            prop_assert!(ip.abs() <= weighted_norm(&u, &w).unwrap() * weighted_norm(&v, &w).unwrap() + 1e-10);
        }

        #[test]
        fn a2_is_at_least_one_and_monotone_in_levels(
            rho in proptest::collection::vec(0.05f64..4.0, 9..80),
        ) {
            let n = rho.len();
            let g = Grid::interval(0.0, 1.0, n).unwrap();
            let w = Weight::new(&g, rho).unwrap();
            let mut prev = 1.0;
            for levels in 1..8 {
                let a = estimate_a2_constant(&w, &g, levels).unwrap();
                prop_assert!(a >= prev);
                prev = a;
            }
        }
    }
}
