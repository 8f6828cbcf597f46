//! Lattice geometry and field containers shared by every other module.
//!
//! A [`Grid`] describes a rectangular lattice of `nx` columns by `ny` rows
//! with spacings `h1` (along the first coordinate axis, column direction)
//! and `h2` (row direction), plus an optional buffer of padding nodes per
//! side used by the autoregression modules to push edge effects away from
//! the region of interest. Fields and ensembles store interior values only;
//! buffered vectors exist only inside the model-building code.
//!
//! Node ordering is row-major with the column index `j` fastest:
//! `index = i * nx + j`.

use crate::error::{Error, Result};
use crate::matern::Smoothness;

/// Rectangular lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h1: f64,
    h2: f64,
    buffer: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, h1: f64, h2: f64, buffer: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Parameter(format!(
                "grid dimensions must be positive, got nx={nx}, ny={ny}"
            )));
        }
        if !(h1 > 0.0) || !(h2 > 0.0) {
            return Err(Error::Parameter(format!(
                "grid spacings must be positive, got h1={h1}, h2={h2}"
            )));
        }
        Ok(Grid { nx, ny, h1, h2, buffer })
    }

    /// Unit-spacing grid with no buffer.
    pub fn square(nx: usize, ny: usize) -> Result<Self> {
        Grid::new(nx, ny, 1.0, 1.0, 0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    /// Same geometry with a different buffer width.
    pub fn with_buffer(&self, buffer: usize) -> Grid {
        Grid { buffer, ..*self }
    }

    /// Number of interior nodes (`nx * ny`).
    pub fn interior_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn buffered_nx(&self) -> usize {
        self.nx + 2 * self.buffer
    }

    pub fn buffered_ny(&self) -> usize {
        self.ny + 2 * self.buffer
    }

    /// Total node count including the buffer frame.
    pub fn buffered_len(&self) -> usize {
        self.buffered_nx() * self.buffered_ny()
    }

    /// Row-major interior linear index, `j` fastest.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.ny && j < self.nx);
        i * self.nx + j
    }

    /// Inverse of [`Grid::idx`].
    pub fn coords_of(&self, idx: usize) -> (usize, usize) {
        debug_assert!(idx < self.interior_len());
        (idx / self.nx, idx % self.nx)
    }

    /// Row-major linear index over the buffered lattice.
    pub fn buffered_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.buffered_ny() && j < self.buffered_nx());
        i * self.buffered_nx() + j
    }

    /// Buffered index of an interior node.
    pub fn interior_to_buffered(&self, i: usize, j: usize) -> usize {
        self.buffered_idx(i + self.buffer, j + self.buffer)
    }

    /// Physical coordinates `(s1, s2)` of interior node `(i, j)`.
    pub fn node_coords(&self, i: usize, j: usize) -> [f64; 2] {
        [j as f64 * self.h1, i as f64 * self.h2]
    }
}

/// A single scalar field registered to the interior of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.interior_len() {
            return Err(Error::Shape(format!(
                "field has {} values but the grid interior holds {} nodes",
                values.len(),
                grid.interior_len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at node {k}")));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![0.0; grid.interior_len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }
}

/// Replicate fields sharing one grid, e.g. ensemble members of a climate
/// model run under perturbed initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnsemble {
    grid: Grid,
    replicates: Vec<Field>,
}

impl FieldEnsemble {
    pub fn new(grid: Grid, replicates: Vec<Field>) -> Result<Self> {
        if replicates.is_empty() {
            return Err(Error::Parameter("ensemble needs at least one replicate".into()));
        }
        for (k, f) in replicates.iter().enumerate() {
            if f.grid() != &grid {
                return Err(Error::Shape(format!("replicate {k} is registered to a different grid")));
            }
        }
        Ok(FieldEnsemble { grid, replicates })
    }

    /// Ensemble with no replicates; allowed only as a simulation output
    /// container (`n = 0` draws).
    pub(crate) fn empty(grid: Grid) -> Self {
        FieldEnsemble { grid, replicates: Vec::new() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    pub fn replicates(&self) -> &[Field] {
        &self.replicates
    }

    pub fn replicate(&self, k: usize) -> &Field {
        &self.replicates[k]
    }

    /// Values of node `(i, j)` across all replicates.
    pub fn node_values(&self, i: usize, j: usize) -> Vec<f64> {
        let idx = self.grid.idx(i, j);
        self.replicates.iter().map(|f| f.values()[idx]).collect()
    }
}

/// Anisotropic Matérn parameters attached to one node.
///
/// `xi1`/`xi2` are correlation ranges along the rotated principal axes (in
/// grid units), `theta` the rotation of those axes in `[0, π)`, `sigma2`
/// the process variance and `tau2` the nugget. The isotropic range is the
/// special case `xi1 == xi2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalParams {
    pub xi1: f64,
    pub xi2: f64,
    pub theta: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub nu: Smoothness,
}

impl LocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi1 > 0.0) || !(self.xi2 > 0.0) {
            return Err(Error::Parameter(format!(
                "ranges must be positive, got xi1={}, xi2={}",
                self.xi1, self.xi2
            )));
        }
        if !(0.0..std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::Parameter(format!("theta must lie in [0, π), got {}", self.theta)));
        }
        if !(self.sigma2 >= 0.0) || !(self.tau2 >= 0.0) {
            return Err(Error::Parameter(format!(
                "variances must be non-negative, got sigma2={}, tau2={}",
                self.sigma2, self.tau2
            )));
        }
        Ok(())
    }

    /// Geometric mean of the two ranges, the scalar range in the isotropic
    /// case.
    pub fn geometric_range(&self) -> f64 {
        (self.xi1 * self.xi2).sqrt()
    }
}

/// Locally estimated parameters over all interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFields {
    pub grid: Grid,
    pub params: Vec<LocalParams>,
    /// Optimizer convergence flag per node.
    pub converged: Vec<bool>,
    /// True where the node was an actual window center; false for edge
    /// nodes filled by nearest-center replication.
    pub fitted: Vec<bool>,
}

impl ParamFields {
    pub fn new(
        grid: Grid,
        params: Vec<LocalParams>,
        converged: Vec<bool>,
        fitted: Vec<bool>,
    ) -> Result<Self> {
        let n = grid.interior_len();
        if params.len() != n || converged.len() != n || fitted.len() != n {
            return Err(Error::Shape(format!(
                "parameter field length mismatch: grid interior {n}, params {}, converged {}, fitted {}",
                params.len(),
                converged.len(),
                fitted.len()
            )));
        }
        for (k, p) in params.iter().enumerate() {
            p.validate().map_err(|e| Error::Parameter(format!("node {k}: {e}")))?;
        }
        Ok(ParamFields { grid, params, converged, fitted })
    }

    /// Constant parameter field (all nodes identical, marked converged).
    pub fn constant(grid: Grid, p: LocalParams) -> Result<Self> {
        let n = grid.interior_len();
        ParamFields::new(grid, vec![p; n], vec![true; n], vec![true; n])
    }

    pub fn converged_fraction(&self) -> f64 {
        let c = self.converged.iter().filter(|&&b| b).count();
        c as f64 / self.converged.len() as f64
    }
}

/// Per-node standardization of an ensemble: subtract the ensemble mean and
/// divide by the unbiased ensemble standard deviation at each grid box.
///
/// Returns the standardized ensemble together with the mean and sd fields
/// needed to invert the transform.
pub fn standardize(ensemble: &FieldEnsemble) -> Result<(FieldEnsemble, Field, Field)> {
    let p = ensemble.len();
    if p < 2 {
        return Err(Error::Parameter(format!(
            "standardization needs at least 2 replicates, got {p}"
        )));
    }
    let grid = *ensemble.grid();
    let n = grid.interior_len();
    let mut mean = vec![0.0; n];
    let mut sd = vec![0.0; n];
    let mut degenerate = Vec::new();

    for k in 0..n {
        let mut m = 0.0;
        for f in ensemble.replicates() {
            m += f.values()[k];
        }
        m /= p as f64;
        let mut ss = 0.0;
        for f in ensemble.replicates() {
            let d = f.values()[k] - m;
            ss += d * d;
        }
        let s = (ss / (p - 1) as f64).sqrt();
        if s <= 1e-13 * m.abs().max(1.0) {
            degenerate.push(k);
        }
        mean[k] = m;
        sd[k] = s;
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateNodes(degenerate));
    }

    let replicates = ensemble
        .replicates()
        .iter()
        .map(|f| {
            let values = f
                .values()
                .iter()
                .enumerate()
                .map(|(k, v)| (v - mean[k]) / sd[k])
                .collect();
            Field::new(grid, values)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((
        FieldEnsemble::new(grid, replicates)?,
        Field::new(grid, mean)?,
        Field::new(grid, sd)?,
    ))
}
