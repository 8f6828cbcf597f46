//! Spatial autoregression on buffered lattices: stencil construction,
//! sparse assembly of the autoregressive matrix `B`, precision matrices
//! `Q = BᵀB` (order 1) and `Q₂ = (BB)ᵀ(BB)` (order 2), factorization,
//! marginal variances, center-point correlation vectors, and simulation.

mod chol;
mod csr;

pub use chol::BandCholesky;
pub use csr::SparseOperator;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::stream::{label, substream};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Per-node autoregression parameters: `κ²` and the symmetric positive
/// definite anisotropy matrix `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SarSpec {
    pub kappa2: f64,
    pub h11: f64,
    pub h12: f64,
    pub h22: f64,
}

impl SarSpec {
    pub fn new(kappa2: f64, h11: f64, h12: f64, h22: f64) -> Result<Self> {
        let spec = SarSpec { kappa2, h11, h12, h22 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn isotropic(kappa2: f64) -> Result<Self> {
        SarSpec::new(kappa2, 1.0, 0.0, 1.0)
    }

    /// `H = U diag(λ₁, λ₂) Uᵀ` with `U` the rotation by `theta`.
    pub fn from_eigenvalues(kappa2: f64, lambda1: f64, lambda2: f64, theta: f64) -> Result<Self> {
        if !(lambda1 > 0.0) || !(lambda2 > 0.0) {
            return Err(Error::Parameter(format!(
                "anisotropy eigenvalues must be positive, got {lambda1}, {lambda2}"
            )));
        }
        let (s, c) = theta.sin_cos();
        SarSpec::new(
            kappa2,
            lambda1 * c * c + lambda2 * s * s,
            (lambda1 - lambda2) * s * c,
            lambda1 * s * s + lambda2 * c * c,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa2 > 0.0) {
            return Err(Error::Parameter(format!("kappa2 must be strictly positive, got {}", self.kappa2)));
        }
        if !(self.h11 > 0.0) || !(self.h22 > 0.0) || self.h11 * self.h22 - self.h12 * self.h12 <= 0.0 {
            return Err(Error::Parameter(format!(
                "H must be symmetric positive definite, got [[{}, {}], [{}, {}]]",
                self.h11, self.h12, self.h12, self.h22
            )));
        }
        Ok(())
    }
}

/// Nine-point autoregressive weights indexed by offsets
/// `(di, dj) ∈ {-1, 0, 1}²`, `di` along the row (s2) axis and `dj` along
/// the column (s1) axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil3x3 {
    w: [[f64; 3]; 3],
}

impl Stencil3x3 {
    pub fn weight(&self, di: i32, dj: i32) -> f64 {
        self.w[(di + 1) as usize][(dj + 1) as usize]
    }

    /// Sum of all nine weights; equals `κ²` for a consistent stencil.
    pub fn sum(&self) -> f64 {
        self.w.iter().flatten().sum()
    }
}

/// Discretize `κ² - ∇·H∇` at one node into its autoregressive row.
///
/// Left/right neighbours get `-H₁₁/h₁²`, up/down `-H₂₂/h₂²`, the center
/// `κ² + 2H₁₁/h₁² + 2H₂₂/h₂²`. The cross term uses the centered
/// second-order difference, placing `±H₁₂/(2 h₁ h₂)` on the corners with
/// positive sign where the two offsets disagree.
pub fn build_stencil(spec: &SarSpec, h1: f64, h2: f64) -> Result<Stencil3x3> {
    spec.validate()?;
    if !(h1 > 0.0) || !(h2 > 0.0) {
        return Err(Error::Parameter(format!("spacings must be positive, got {h1}, {h2}")));
    }
    let ax = spec.h11 / (h1 * h1);
    let ay = spec.h22 / (h2 * h2);
    let cross = spec.h12 / (2.0 * h1 * h2);
    let w = [
        // di = -1 (row below in s2)
        [-cross, -ay, cross],
        // di = 0
        [-ax, spec.kappa2 + 2.0 * ax + 2.0 * ay, -ax],
        // di = +1
        [cross, -ay, -cross],
    ];
    Ok(Stencil3x3 { w })
}

/// How rows at the outer frame of the lattice are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgePolicy {
    /// Drop the absent neighbours and augment the center so the row sum
    /// stays `κ²`. Keeps edge rows diagonally dominant.
    #[default]
    RowSumKappa2,
    /// Drop the absent neighbours and keep the full center value. Only
    /// sensible when a buffer pushes the frame away from the interior.
    KeepCenter,
}

/// Per-node autoregression parameters over a buffered lattice.
#[derive(Debug, Clone)]
pub struct SarSpecField {
    grid: Grid,
    specs: Vec<SarSpec>,
}

impl SarSpecField {
    /// `specs` holds one entry per buffered node, row-major.
    pub fn new(grid: Grid, specs: Vec<SarSpec>) -> Result<Self> {
        if specs.len() != grid.buffered_len() {
            return Err(Error::Shape(format!(
                "expected {} specs for the buffered lattice, got {}",
                grid.buffered_len(),
                specs.len()
            )));
        }
        for (k, s) in specs.iter().enumerate() {
            s.validate().map_err(|e| Error::Parameter(format!("node {k}: {e}")))?;
        }
        Ok(SarSpecField { grid, specs })
    }

    pub fn constant(grid: Grid, spec: SarSpec) -> Result<Self> {
        SarSpecField::new(grid, vec![spec; grid.buffered_len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn specs(&self) -> &[SarSpec] {
        &self.specs
    }
}

/// Assemble the sparse autoregressive matrix over all buffered nodes.
///
/// Row `i` carries node `i`'s stencil weights at itself and its
/// neighbours. With `EdgePolicy::KeepCenter` a buffer of at least one
/// node is required, since frame rows then mis-state the operator.
pub fn assemble_b(field: &SarSpecField, policy: EdgePolicy) -> Result<SparseOperator> {
    let grid = field.grid();
    if policy == EdgePolicy::KeepCenter && grid.buffer() == 0 {
        return Err(Error::Config(
            "boundary clipping disabled (KeepCenter) requires a buffer of at least 1 node".into(),
        ));
    }
    let bx = grid.buffered_nx();
    let by = grid.buffered_ny();
    let n = bx * by;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..by {
        for j in 0..bx {
            let spec = &field.specs()[i * bx + j];
            let st = build_stencil(spec, grid.h1(), grid.h2())?;
            let mut row = Vec::with_capacity(9);
            let mut dropped = 0.0;
            for di in -1i32..=1 {
                for dj in -1i32..=1 {
                    let w = st.weight(di, dj);
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let ni = i as i64 + di as i64;
                    let nj = j as i64 + dj as i64;
                    if ni < 0 || nj < 0 || ni >= by as i64 || nj >= bx as i64 {
                        dropped += w;
                    } else {
                        row.push(((ni as usize) * bx + nj as usize, w));
                    }
                }
            }
            let center = match policy {
                // full row sums to κ²; keep that by folding dropped
                // weights into the center
                EdgePolicy::RowSumKappa2 => st.weight(0, 0) + dropped,
                EdgePolicy::KeepCenter => st.weight(0, 0),
            };
            row.push((i * bx + j, center));
            rows.push(row);
        }
    }
    SparseOperator::from_rows(n, n, rows)
}

/// Precision matrix of the given order: `BᵀB` or `(BB)ᵀ(BB)`.
pub fn precision(b: &SparseOperator, order: usize) -> Result<SparseOperator> {
    match order {
        1 => Ok(b.normal_matrix()),
        2 => {
            let bb = b.matmul(b)?;
            Ok(bb.normal_matrix())
        }
        other => Err(Error::Parameter(format!("order must be 1 or 2, got {other}"))),
    }
}

/// Factor a symmetric positive definite precision matrix. The handle
/// supports solves, the log-determinant and the inverse diagonal.
pub fn factorize(q: &SparseOperator) -> Result<BandCholesky> {
    BandCholesky::factor(q)
}

/// Diagonal of `Q⁻¹`, the per-node marginal variances of the field.
pub fn marginal_variances(chol: &BandCholesky) -> Vec<f64> {
    chol.inverse_diagonal()
}

/// Correlations between the center node of an `N × N` lattice and every
/// node, under the SAR model with the given constant spec.
///
/// The lattice is used as-is (no buffer); comparing only correlations
/// against the center keeps edge effects out of the comparison. The
/// returned vector has length `N²` with the center entry exactly 1.
pub fn correlation_from_center(spec: &SarSpec, n: usize, order: usize) -> Result<Vec<f64>> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::Parameter(format!("lattice size must be odd, got {n}")));
    }
    let grid = Grid::new(n, n, 1.0, 1.0, 0)?;
    let field = SarSpecField::constant(grid, *spec)?;
    let b = assemble_b(&field, EdgePolicy::RowSumKappa2)?;
    let q = precision(&b, order)?;
    let chol = factorize(&q)?;
    let diag = chol.inverse_diagonal();
    let center = (n / 2) * n + n / 2;
    let mut rhs = vec![0.0; n * n];
    rhs[center] = 1.0;
    let col = chol.solve(&rhs);
    let dc = diag[center];
    let mut corr: Vec<f64> = (0..n * n).map(|i| col[i] / (diag[i] * dc).sqrt()).collect();
    corr[center] = 1.0;
    Ok(corr)
}

/// Draw fields over the buffered lattice by solving `B y = e` (`order`
/// times) against independent standard normal noise.
///
/// Each draw uses its own stream keyed by `(seed, draw index)`, so the
/// result is reproducible at any worker count.
pub fn simulate(
    b: &SparseOperator,
    order: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let q = precision(b, order)?;
    let chol = factorize(&q)?;
    simulate_with(b, &chol, order, n_draws, seed)
}

/// As [`simulate`] but reusing an existing factorization of the
/// order-matched precision matrix.
pub fn simulate_with(
    b: &SparseOperator,
    chol: &BandCholesky,
    order: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if order != 1 && order != 2 {
        return Err(Error::Parameter(format!("order must be 1 or 2, got {order}")));
    }
    let n = b.n_rows();
    let draws: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, &[label::SIMULATE, k as u64]);
            let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            solve_autoregression(b, chol, order, &e)
        })
        .collect();
    Ok(draws)
}

/// `y = B⁻¹ e` (order 1) or `y = (BB)⁻¹ e` (order 2) through the normal
/// equations: `Q y = Bᵀ e` resp. `Q₂ y = (BB)ᵀ e`.
pub(crate) fn solve_autoregression(
    b: &SparseOperator,
    chol: &BandCholesky,
    order: usize,
    e: &[f64],
) -> Vec<f64> {
    let rhs = match order {
        1 => b.matvec_transpose(e),
        _ => b.matvec_transpose(&b.matvec_transpose(e)),
    };
    chol.solve(&rhs)
}

/// Apply the autoregression `order` times: `w = B^order · y`.
pub(crate) fn apply_autoregression(b: &SparseOperator, order: usize, y: &[f64]) -> Vec<f64> {
    match order {
        1 => b.matvec(y),
        _ => b.matvec(&b.matvec(y)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;

    fn unit_grid(nx: usize, ny: usize, buffer: usize) -> Grid {
        Grid::new(nx, ny, 1.0, 1.0, buffer).unwrap()
    }

    #[test]
    fn isotropic_stencil_reduces_to_five_point() {
        // H = I, unit spacing: center 4 + κ², unit negative neighbours
        let st = build_stencil(&SarSpec::isotropic(0.25).unwrap(), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(st.weight(0, 0), 4.25);
        for (di, dj) in [(0, 1), (0, -1), (1, 0), (-1, 0)] {
            assert_abs_diff_eq!(st.weight(di, dj), -1.0);
        }
        for (di, dj) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            assert_abs_diff_eq!(st.weight(di, dj), 0.0);
        }
        assert_abs_diff_eq!(st.sum(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_anisotropy_weights_axes() {
        let st = build_stencil(&SarSpec::new(1.0, 4.0, 0.0, 1.0).unwrap(), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(st.weight(0, 0), 11.0);
        assert_abs_diff_eq!(st.weight(0, 1), -4.0);
        assert_abs_diff_eq!(st.weight(0, -1), -4.0);
        assert_abs_diff_eq!(st.weight(1, 0), -1.0);
        assert_abs_diff_eq!(st.weight(-1, 0), -1.0);
        assert_abs_diff_eq!(st.weight(1, 1), 0.0);
    }

    #[test]
    fn cross_term_corner_pattern() {
        // H12 = 0.5 puts ±H12/2 on the corners: positive where the
        // offsets disagree, negative where they agree.
        let st = build_stencil(&SarSpec::new(0.5, 1.0, 0.5, 1.0).unwrap(), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(st.weight(0, 0), 4.5);
        assert_abs_diff_eq!(st.weight(0, 1), -1.0);
        assert_abs_diff_eq!(st.weight(1, 0), -1.0);
        assert_abs_diff_eq!(st.weight(1, -1), 0.25);
        assert_abs_diff_eq!(st.weight(-1, 1), 0.25);
        assert_abs_diff_eq!(st.weight(1, 1), -0.25);
        assert_abs_diff_eq!(st.weight(-1, -1), -0.25);
        assert_abs_diff_eq!(st.sum(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn spacing_scales_weights() {
        let st = build_stencil(&SarSpec::isotropic(1.0).unwrap(), 0.5, 2.0).unwrap();
        assert_abs_diff_eq!(st.weight(0, 1), -4.0); // 1/h1²
        assert_abs_diff_eq!(st.weight(1, 0), -0.25); // 1/h2²
        assert_abs_diff_eq!(st.weight(0, 0), 1.0 + 8.0 + 0.5);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(SarSpec::new(0.0, 1.0, 0.0, 1.0).is_err()); // κ² must be > 0
        assert!(SarSpec::new(1.0, 1.0, 1.5, 1.0).is_err()); // H not PD
        assert!(SarSpec::new(1.0, -1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_interior_assembly() {
        // 1×1 interior with buffer 1: 9 nodes, interior row is the full
        // five-point stencil (5, four -1s)
        let grid = unit_grid(1, 1, 1);
        let field = SarSpecField::constant(grid, SarSpec::isotropic(1.0).unwrap()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        assert_eq!(b.n_rows(), 9);
        let (cols, vals) = b.row(4);
        assert_eq!(cols, &[1, 3, 4, 5, 7]);
        assert_eq!(vals, &[-1.0, -1.0, 5.0, -1.0, -1.0]);
        // frame rows keep row sum κ²
        for i in 0..9 {
            let (_, vals) = b.row(i);
            assert_abs_diff_eq!(vals.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_spec_gives_symmetric_b() {
        let grid = unit_grid(4, 3, 1);
        let spec = SarSpec::new(0.3, 1.5, 0.2, 0.8).unwrap();
        let field = SarSpecField::constant(grid, spec).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        assert!(b.max_asymmetry() < 1e-14);
    }

    #[test]
    fn keep_center_requires_buffer() {
        let grid = unit_grid(3, 3, 0);
        let field = SarSpecField::constant(grid, SarSpec::isotropic(1.0).unwrap()).unwrap();
        match assemble_b(&field, EdgePolicy::KeepCenter) {
            Err(Error::Config(_)) => {}
            other => panic!("expected configuration error, got {other:?}"),
        }
        assert!(assemble_b(&field, EdgePolicy::RowSumKappa2).is_ok());
    }

    #[test]
    fn assembly_matches_dense_stencil_placement() {
        // brute-force dense assembly oracle on a 5×5 buffered lattice
        // with random per-node specs
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let grid = unit_grid(3, 3, 1);
        let bx = grid.buffered_nx();
        let by = grid.buffered_ny();
        let specs: Vec<SarSpec> = (0..grid.buffered_len())
            .map(|_| {
                let l1 = 0.5 + rng.random::<f64>();
                let l2 = 0.5 + rng.random::<f64>();
                let theta = rng.random::<f64>() * std::f64::consts::PI;
                SarSpec::from_eigenvalues(0.5 + rng.random::<f64>(), l1, l2, theta).unwrap()
            })
            .collect();
        let field = SarSpecField::new(grid, specs.clone()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();

        let n = bx * by;
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..by as i64 {
            for j in 0..bx as i64 {
                let r = (i * bx as i64 + j) as usize;
                let st = build_stencil(&specs[r], 1.0, 1.0).unwrap();
                let mut dropped = 0.0;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let w = st.weight(di as i32, dj as i32);
                        let (ni, nj) = (i + di, j + dj);
                        if ni < 0 || nj < 0 || ni >= by as i64 || nj >= bx as i64 {
                            dropped += w;
                        } else {
                            dense[(r, (ni * bx as i64 + nj) as usize)] = w;
                        }
                    }
                }
                dense[(r, r)] = st.weight(0, 0) + dropped;
            }
        }
        assert_eq!(b.to_dense(), dense);
    }

    #[test]
    fn precision_identity_and_symmetric_square() {
        let id = SparseOperator::identity(6);
        assert_eq!(precision(&id, 1).unwrap().to_dense(), DMatrix::identity(6, 6));

        // symmetric B: Q = B², checked densely on a 3×3 lattice
        let grid = unit_grid(1, 1, 1);
        let field = SarSpecField::constant(grid, SarSpec::isotropic(0.5).unwrap()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        let bd = b.to_dense();
        assert!((q.to_dense() - &bd * &bd).abs().max() < 1e-12);
    }

    #[test]
    fn order_two_matches_dense_product() {
        let grid = unit_grid(5, 5, 1);
        let field = SarSpecField::constant(grid, SarSpec::new(0.4, 1.2, 0.1, 0.9).unwrap()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let q2 = precision(&b, 2).unwrap();
        let bd = b.to_dense();
        let bb = &bd * &bd;
        let expect = bb.transpose() * &bb;
        assert!((q2.to_dense() - expect).abs().max() < 1e-12);
    }

    #[test]
    fn precision_pattern_bounds() {
        // order-1 Q reaches second-order neighbours: ≤ 13 nonzeros per
        // interior row without a cross term, ≤ 25 with one
        let grid = unit_grid(7, 7, 1);
        let axis = SarSpecField::constant(grid, SarSpec::new(0.5, 1.3, 0.0, 0.7).unwrap()).unwrap();
        let b = assemble_b(&axis, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        for i in 0..q.n_rows() {
            assert!(q.row(i).0.len() <= 13);
        }
        let full = SarSpecField::constant(grid, SarSpec::new(0.5, 1.3, 0.3, 0.7).unwrap()).unwrap();
        let b = assemble_b(&full, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        for i in 0..q.n_rows() {
            assert!(q.row(i).0.len() <= 25);
        }
    }

    #[test]
    fn random_spec_fields_stay_spd() {
        // strict diagonal dominance needs κ² > 2|H12|; the generator
        // respects that envelope and every Q must then factor
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for _ in 0..25 {
            let grid = unit_grid(6, 5, 2);
            let specs: Vec<SarSpec> = (0..grid.buffered_len())
                .map(|_| {
                    let kappa2 = 0.1 + rng.random::<f64>() * 2.0;
                    if rng.random::<bool>() {
                        let h11 = 0.3 + rng.random::<f64>() * 2.0;
                        let h22 = 0.3 + rng.random::<f64>() * 2.0;
                        SarSpec::new(kappa2, h11, 0.0, h22).unwrap()
                    } else {
                        let h11 = 0.3 + rng.random::<f64>() * 2.0;
                        let h22 = 0.3 + rng.random::<f64>() * 2.0;
                        let cap = (0.45 * kappa2).min(0.9 * (h11 * h22).sqrt());
                        let h12 = (rng.random::<f64>() * 2.0 - 1.0) * cap;
                        SarSpec::new(kappa2, h11, h12, h22).unwrap()
                    }
                })
                .collect();
            let field = SarSpecField::new(grid, specs).unwrap();
            let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
            assert!(b.is_strictly_diagonally_dominant());
            let q = precision(&b, 1).unwrap();
            assert!(q.max_asymmetry() < 1e-12);
            assert!(factorize(&q).is_ok());
        }
    }

    #[test]
    fn strong_anisotropy_beyond_dominance_still_factors() {
        // 4:1-style anisotropy at 30°: not diagonally dominant, but the
        // discretized operator stays positive definite
        let grid = unit_grid(9, 9, 2);
        let spec = SarSpec::from_eigenvalues(0.2, 8.0, 0.8, std::f64::consts::PI / 6.0).unwrap();
        let field = SarSpecField::constant(grid, spec).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        assert!(!b.is_strictly_diagonally_dominant());
        let q = precision(&b, 1).unwrap();
        assert!(factorize(&q).is_ok());
    }

    #[test]
    fn marginal_variances_match_dense_inverse() {
        let grid = unit_grid(9, 9, 1);
        let field = SarSpecField::constant(grid, SarSpec::isotropic(0.3).unwrap()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        let chol = factorize(&q).unwrap();
        let mv = marginal_variances(&chol);
        let inv = q.to_dense().try_inverse().unwrap();
        for i in 0..q.n_rows() {
            assert_abs_diff_eq!(mv[i], inv[(i, i)], epsilon = 1e-8);
            assert!(mv[i] > 0.0);
        }
    }

    #[test]
    fn solve_residual_small() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let grid = unit_grid(5, 10, 0);
        let field = SarSpecField::constant(grid, SarSpec::isotropic(0.8).unwrap()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        let chol = factorize(&q).unwrap();
        let rhs: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x = chol.solve(&rhs);
        let qx = q.matvec(&x);
        let bmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = qx.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(res < 1e-10 * bmax);
    }

    #[test]
    fn center_correlation_trivial_and_symmetric() {
        let spec = SarSpec::isotropic(0.04).unwrap();
        assert_eq!(correlation_from_center(&spec, 1, 1).unwrap(), vec![1.0]);

        let n = 15;
        let corr = correlation_from_center(&spec, n, 1).unwrap();
        assert_abs_diff_eq!(corr[(n / 2) * n + n / 2], 1.0);
        // dihedral symmetry of the square
        for i in 0..n {
            for j in 0..n {
                let v = corr[i * n + j];
                for (a, b) in [
                    (j, i),
                    (n - 1 - i, j),
                    (i, n - 1 - j),
                    (n - 1 - i, n - 1 - j),
                    (n - 1 - j, n - 1 - i),
                    (j, n - 1 - i),
                    (n - 1 - j, i),
                ] {
                    assert_abs_diff_eq!(corr[a * n + b], v, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn center_correlation_matches_dense_inverse() {
        let spec = SarSpec::isotropic(0.04).unwrap();
        let n = 15;
        let corr = correlation_from_center(&spec, n, 1).unwrap();

        let grid = unit_grid(n, n, 0);
        let field = SarSpecField::constant(grid, spec).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        let inv = q.to_dense().try_inverse().unwrap();
        let c = (n / 2) * n + n / 2;
        for i in 0..n * n {
            let expect = inv[(i, c)] / (inv[(i, i)] * inv[(c, c)]).sqrt();
            assert_abs_diff_eq!(corr[i], expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn simulate_identity_is_standard_normal() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let b = SparseOperator::identity(100);
        let draws = simulate(&b, 1, 100, 424242).unwrap();
        let mut pooled: Vec<f64> = draws.into_iter().flatten().collect();
        assert_eq!(pooled.len(), 10_000);
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = pooled.len() as f64;
        let mut d = 0.0f64;
        for (k, v) in pooled.iter().enumerate() {
            let cdf = normal.cdf(*v);
            d = d.max((cdf - k as f64 / n).abs()).max(((k + 1) as f64 / n - cdf).abs());
        }
        // Kolmogorov-Smirnov at α = 0.001: c(α)/√n with c = 1.949
        assert!(d < 1.949 / n.sqrt(), "KS statistic {d} too large");
    }

    #[test]
    fn simulate_is_deterministic() {
        let grid = unit_grid(4, 4, 1);
        let field = SarSpecField::constant(grid, SarSpec::isotropic(0.5).unwrap()).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let a = simulate(&b, 1, 3, 99).unwrap();
        let c = simulate(&b, 1, 3, 99).unwrap();
        assert_eq!(a, c);
        let d = simulate(&b, 1, 3, 100).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn simulate_covariance_matches_inverse_precision() {
        // order 1, small lattice: empirical covariance of draws against
        // Q⁻¹ columns at the center
        let n = 9;
        let grid = unit_grid(n, n, 0);
        let spec = SarSpec::isotropic(0.1).unwrap();
        let field = SarSpecField::constant(grid, spec).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        let q = precision(&b, 1).unwrap();
        let chol = factorize(&q).unwrap();
        let draws = simulate_with(&b, &chol, 1, 4000, 7).unwrap();
        let exact = correlation_from_center(&spec, n, 1).unwrap();
        let diag = chol.inverse_diagonal();
        let c = (n / 2) * n + n / 2;
        let mut worst = 0.0f64;
        for i in 0..n * n {
            let mut cov = 0.0;
            for d in &draws {
                cov += d[i] * d[c];
            }
            cov /= draws.len() as f64;
            let emp = cov / (diag[i] * diag[c]).sqrt();
            worst = worst.max((emp - exact[i]).abs());
        }
        assert!(worst < 0.06, "worst deviation {worst}");
    }
}
