//! Global non-stationary autoregression model: per-node translation of
//! locally estimated Matérn parameters, buffered assembly, marginal
//! variance normalization, simulation, and correlation maps.

use crate::calibrate::CalibrationTable;
use crate::error::{Error, Result};
use crate::grid::{Field, FieldEnsemble, Grid, ParamFields};
use crate::sar::{
    apply_autoregression, assemble_b, factorize, precision, solve_autoregression, BandCholesky,
    EdgePolicy, SarSpec, SarSpecField, SparseOperator,
};
use crate::stream::{label, substream};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// How the constant-marginal-variance normalization is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Scale fields by `1/√diag(Q⁻¹)` after solving; marginal variances
    /// equal `σ²(s)` exactly.
    #[default]
    PostScale,
    /// Scale the rows of `B` by `√diag(Q⁻¹)` before forming the
    /// precision matrix; approximate, kept for comparison.
    RowWeight,
}

/// Per-node autoregression parameters translated from local Matérn
/// estimates, on the interior grid.
#[derive(Debug, Clone)]
pub struct TranslatedSpecs {
    pub grid: Grid,
    pub specs: Vec<SarSpec>,
    /// Marginal standard deviation σ(s) per interior node.
    pub sigma: Vec<f64>,
    /// Nugget variance carried as metadata (not added to simulations by
    /// default).
    pub tau2: Vec<f64>,
    /// True where a table query fell outside the calibrated sweep and was
    /// clamped.
    pub clamped: Vec<bool>,
}

/// Translate local Matérn parameters into per-node autoregression specs.
///
/// The anisotropy matrix takes its eigenvalues from the calibration table
/// at `(ξ₁², ξ₂²)`, rotated by the node's θ, and is normalized to unit
/// determinant so it carries shape only; `κ_S²` comes from the isotropic
/// map at the geometric-mean range and carries the scale.
pub fn translate_params(params: &ParamFields, table: &CalibrationTable) -> Result<TranslatedSpecs> {
    let n = params.grid.interior_len();
    let mut specs = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut tau2 = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    for (k, p) in params.params.iter().enumerate() {
        if p.nu != table.nu {
            return Err(Error::Config(format!(
                "node {k} has smoothness {} but the table was calibrated for {}",
                p.nu.value(),
                table.nu.value()
            )));
        }
        let (inv_range, c1) = table.sar_inv_range(p.geometric_range());
        let kappa2 = 1.0 / (inv_range * inv_range);
        let (l1, c2) = table.eigenvalue(p.xi1 * p.xi1);
        let (l2, c3) = table.eigenvalue(p.xi2 * p.xi2);
        let det_root = (l1 * l2).sqrt();
        let spec = SarSpec::from_eigenvalues(kappa2, l1 / det_root, l2 / det_root, p.theta)
            .map_err(|e| Error::Parameter(format!("node {k}: {e}")))?;
        specs.push(spec);
        sigma.push(p.sigma2.sqrt());
        tau2.push(p.tau2);
        clamped.push(c1 || c2 || c3);
    }
    Ok(TranslatedSpecs { grid: params.grid, specs, sigma, tau2, clamped })
}

/// Default buffer width: `max(10, ceil(2 · max range))` nodes per side.
pub fn default_buffer(params: &ParamFields) -> usize {
    let max_range = params.params.iter().map(|p| p.xi1.max(p.xi2)).fold(0.0f64, f64::max);
    10usize.max((2.0 * max_range).ceil() as usize)
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub order: usize,
    pub buffer: usize,
    pub normalization: Normalization,
    /// Add `τ(s)·ε` measurement noise to simulated interior fields.
    pub nugget_in_simulation: bool,
}

impl BuildOptions {
    pub fn new(order: usize, buffer: usize) -> Self {
        BuildOptions {
            order,
            buffer,
            normalization: Normalization::PostScale,
            nugget_in_simulation: false,
        }
    }
}

/// Assembled and factorized global model, immutable once built.
#[derive(Debug)]
pub struct NonstatSarModel {
    grid: Grid,
    order: usize,
    normalization: Normalization,
    nugget_in_simulation: bool,
    b: SparseOperator,
    chol: BandCholesky,
    norm_diag: Vec<f64>,
    sigma_buffered: Vec<f64>,
    tau2_interior: Vec<f64>,
}

// extend interior per-node values into the buffer by nearest-node copy
fn pad_to_buffer<T: Copy>(grid: &Grid, interior: &[T]) -> Vec<T> {
    let bx = grid.buffered_nx();
    let by = grid.buffered_ny();
    let b = grid.buffer();
    let mut out = Vec::with_capacity(bx * by);
    for i in 0..by {
        let si = i.saturating_sub(b).min(grid.ny() - 1);
        for j in 0..bx {
            let sj = j.saturating_sub(b).min(grid.nx() - 1);
            out.push(interior[grid.idx(si, sj)]);
        }
    }
    out
}

/// Assemble `B` over the buffered lattice, factor the order-matched
/// precision matrix, and compute the normalization diagonal.
pub fn build_global_model(specs: &TranslatedSpecs, opts: &BuildOptions) -> Result<NonstatSarModel> {
    if opts.order != 1 && opts.order != 2 {
        return Err(Error::Parameter(format!("order must be 1 or 2, got {}", opts.order)));
    }
    let grid = specs.grid.with_buffer(opts.buffer);
    let padded = pad_to_buffer(&grid, &specs.specs);
    let sigma_buffered = pad_to_buffer(&grid, &specs.sigma);
    let field = SarSpecField::new(grid, padded)?;
    let b = assemble_b(&field, EdgePolicy::RowSumKappa2)?;

    let describe_failure = |e: Error, stage: &str| -> Error {
        if let Error::Factorization { pivot, value } = e {
            let bx = grid.buffered_nx();
            let (i, j) = (pivot / bx, pivot % bx);
            let s = &field.specs()[pivot];
            Error::Parameter(format!(
                "{stage} failed at buffered node ({i}, {j}) with pivot {value:.6e}: \
                 kappa2={}, H=[[{}, {}], [{}, {}]]",
                s.kappa2, s.h11, s.h12, s.h12, s.h22
            ))
        } else {
            e
        }
    };

    let (b, chol, norm_diag) = match opts.normalization {
        Normalization::PostScale => {
            let q = precision(&b, opts.order)?;
            let chol =
                factorize(&q).map_err(|e| describe_failure(e, "precision factorization"))?;
            let norm_diag = chol.inverse_diagonal();
            (b, chol, norm_diag)
        }
        Normalization::RowWeight => {
            let q0 = precision(&b, opts.order)?;
            let chol0 =
                factorize(&q0).map_err(|e| describe_failure(e, "precision factorization"))?;
            let d0 = chol0.inverse_diagonal();
            let weighted = b.scale_rows(&d0.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
            let q = precision(&weighted, opts.order)?;
            let chol = factorize(&q)
                .map_err(|e| describe_failure(e, "row-weighted precision factorization"))?;
            let norm_diag = chol.inverse_diagonal();
            (weighted, chol, norm_diag)
        }
    };

    Ok(NonstatSarModel {
        grid,
        order: opts.order,
        normalization: opts.normalization,
        nugget_in_simulation: opts.nugget_in_simulation,
        b,
        chol,
        norm_diag,
        sigma_buffered,
        tau2_interior: specs.tau2.clone(),
    })
}

impl NonstatSarModel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.b
    }

    pub fn factorization(&self) -> &BandCholesky {
        &self.chol
    }

    /// `diag(Q⁻¹)` over the buffered lattice.
    pub fn norm_diag(&self) -> &[f64] {
        &self.norm_diag
    }

    pub fn sigma_buffered(&self) -> &[f64] {
        &self.sigma_buffered
    }

    pub fn tau2_interior(&self) -> &[f64] {
        &self.tau2_interior
    }

    /// Marginal variance of the normalized model at every interior node;
    /// exactly `σ²(s)` under post-scaling by construction, recomputed
    /// here from `diag(Q⁻¹)` for verification.
    pub fn marginal_variances_interior(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.interior_len());
        for i in 0..self.grid.ny() {
            for j in 0..self.grid.nx() {
                let k = self.grid.interior_to_buffered(i, j);
                let raw = self.norm_diag[k];
                let s = self.sigma_buffered[k];
                let v = match self.normalization {
                    Normalization::PostScale => s * s * raw / raw,
                    Normalization::RowWeight => s * s * raw,
                };
                out.push(v);
            }
        }
        out
    }

    /// Scale a raw buffered solve into field units.
    fn scale(&self, k: usize, y: f64) -> f64 {
        match self.normalization {
            Normalization::PostScale => y / self.norm_diag[k].sqrt() * self.sigma_buffered[k],
            Normalization::RowWeight => y * self.sigma_buffered[k],
        }
    }

    /// Undo [`NonstatSarModel::scale`].
    fn unscale(&self, k: usize, z: f64) -> f64 {
        match self.normalization {
            Normalization::PostScale => z * self.norm_diag[k].sqrt() / self.sigma_buffered[k],
            Normalization::RowWeight => z / self.sigma_buffered[k],
        }
    }

    /// One scaled draw over the full buffered lattice.
    fn draw_buffered(&self, seed: u64, index: usize) -> Vec<f64> {
        let n = self.b.n_rows();
        let mut rng = substream(seed, &[label::SIMULATE, index as u64]);
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = solve_autoregression(&self.b, &self.chol, self.order, &e);
        (0..n).map(|k| self.scale(k, y[k])).collect()
    }

    fn crop(&self, buffered: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.interior_len());
        for i in 0..self.grid.ny() {
            for j in 0..self.grid.nx() {
                out.push(buffered[self.grid.interior_to_buffered(i, j)]);
            }
        }
        out
    }
}

/// Draw `n` independent fields from the model; deterministic per seed at
/// any worker count. Returns interior fields on the model's grid.
pub fn simulate_ensemble(model: &NonstatSarModel, n: usize, seed: u64) -> Result<FieldEnsemble> {
    let interior_grid = model.grid.with_buffer(0);
    if n == 0 {
        return Ok(FieldEnsemble::empty(interior_grid));
    }
    let fields: Vec<Field> = (0..n)
        .into_par_iter()
        .map(|k| {
            let buffered = model.draw_buffered(seed, k);
            let mut values = model.crop(&buffered);
            if model.nugget_in_simulation {
                // nugget stream is separate from the draw stream so the
                // smooth field is unchanged when the flag flips
                let mut rng = substream(seed, &[label::NUGGET, k as u64]);
                for (v, t2) in values.iter_mut().zip(&model.tau2_interior) {
                    *v += t2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Field::new(interior_grid, values)
        })
        .collect::<Result<Vec<_>>>()?;
    FieldEnsemble::new(interior_grid, fields)
}

/// Scaled draws over the full buffered lattice, for diagnostics that need
/// the exact algebraic inverse.
pub fn simulate_buffered(model: &NonstatSarModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n).into_par_iter().map(|k| model.draw_buffered(seed, k)).collect()
}

/// Whitening transform on a full buffered field: exact inverse of the
/// simulation map, `w = B^order · unscale(z)`.
pub fn whiten_buffered(model: &NonstatSarModel, buffered: &[f64]) -> Result<Vec<f64>> {
    if buffered.len() != model.b.n_rows() {
        return Err(Error::Shape(format!(
            "buffered field has {} values, model lattice has {}",
            buffered.len(),
            model.b.n_rows()
        )));
    }
    let y: Vec<f64> = (0..buffered.len()).map(|k| model.unscale(k, buffered[k])).collect();
    Ok(apply_autoregression(&model.b, model.order, &y))
}

/// Whitening transform on an interior field: un-scale, zero-pad into the
/// buffer, apply `B` (`order` times), crop back. The outermost `order`
/// interior rings see the zero padding; whiteness statistics should
/// exclude them.
pub fn whiten(model: &NonstatSarModel, field: &Field) -> Result<Field> {
    let interior = model.grid.with_buffer(0);
    if field.grid() != &interior {
        return Err(Error::Shape(format!(
            "field grid {}x{} does not match the model interior {}x{}",
            field.grid().nx(),
            field.grid().ny(),
            interior.nx(),
            interior.ny()
        )));
    }
    let mut buffered = vec![0.0; model.b.n_rows()];
    for i in 0..model.grid.ny() {
        for j in 0..model.grid.nx() {
            let k = model.grid.interior_to_buffered(i, j);
            buffered[k] = model.unscale(k, field.get(i, j));
        }
    }
    let w = apply_autoregression(&model.b, model.order, &buffered);
    Field::new(interior, model.crop(&w))
}

/// Correlation of every interior node with the chosen interior node under
/// the model; exactly 1 at the node itself.
pub fn correlation_map(model: &NonstatSarModel, location: (usize, usize)) -> Result<Field> {
    let (i, j) = location;
    if i >= model.grid.ny() || j >= model.grid.nx() {
        return Err(Error::Parameter(format!(
            "location ({i}, {j}) outside the {}x{} interior",
            model.grid.nx(),
            model.grid.ny()
        )));
    }
    let t = model.grid.interior_to_buffered(i, j);
    let mut rhs = vec![0.0; model.b.n_rows()];
    rhs[t] = 1.0;
    let col = model.chol.solve(&rhs);
    let dt = model.norm_diag[t];
    let mut corr: Vec<f64> = (0..col.len())
        .map(|k| col[k] / (model.norm_diag[k] * dt).sqrt())
        .collect();
    corr[t] = 1.0;
    Field::new(model.grid.with_buffer(0), model.crop(&corr))
}
