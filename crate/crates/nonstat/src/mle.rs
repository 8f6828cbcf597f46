//! Moving-window local maximum-likelihood estimation of anisotropic
//! Matérn parameters from replicate ensembles.
//!
//! Each window is modeled as a stationary anisotropic Matérn field plus a
//! nugget; the negative log likelihood over `p` replicates (mean zero, as
//! after standardization) is
//! `(p/2)·log|G| + ½ Σ_j yⱼᵀ G⁻¹ yⱼ` with `G = σ²R + τ²I`, evaluated
//! through one dense Cholesky factorization per parameter vector.
//! Optimization runs on transformed coordinates: log ranges, the rotation
//! through `(cos 2θ, sin 2θ)` so the period-π symmetry of anisotropy
//! ellipses has no seam, and a logit nugget under the `σ² = 1 − τ²`
//! constraint (log variances otherwise).

use crate::error::{Error, Result};
use crate::grid::{FieldEnsemble, LocalParams, ParamFields};
use crate::matern::{covariance_matrix, AnisoTransform, MaternSpec, Smoothness};
use crate::optim::{NelderMead, NmResult};
use rayon::prelude::*;

/// Moving-window geometry: odd `size`, stride 1 for the exhaustive set of
/// windows centered at every eligible node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub size: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(size: usize, stride: usize) -> Result<Self> {
        if size < 3 || size % 2 == 0 {
            return Err(Error::Parameter(format!(
                "window size must be odd and at least 3, got {size}"
            )));
        }
        if stride == 0 {
            return Err(Error::Parameter("stride must be positive".into()));
        }
        Ok(WindowSpec { size, stride })
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    /// Nodes with a full window, in row-major order.
    pub fn centers(&self, ensemble: &FieldEnsemble) -> Result<Vec<(usize, usize)>> {
        let grid = ensemble.grid();
        let h = self.half();
        if grid.nx() < self.size || grid.ny() < self.size {
            return Err(Error::Parameter(format!(
                "window {}x{} does not fit a {}x{} grid",
                self.size,
                self.size,
                grid.nx(),
                grid.ny()
            )));
        }
        let mut centers = Vec::new();
        let mut i = h;
        while i + h < grid.ny() {
            let mut j = h;
            while j + h < grid.nx() {
                centers.push((i, j));
                j += self.stride;
            }
            i += self.stride;
        }
        Ok(centers)
    }
}

/// Values and locations of one extracted window: `size²` locations in
/// row-major window order with grid-unit coordinates, `p` replicates.
#[derive(Debug, Clone)]
pub struct Window {
    pub size: usize,
    pub locations: Vec<[f64; 2]>,
    pub replicates: Vec<Vec<f64>>,
}

/// Copy the window centered at `(i, j)` out of the ensemble.
pub fn extract_window(
    ensemble: &FieldEnsemble,
    center: (usize, usize),
    spec: &WindowSpec,
) -> Result<Window> {
    let grid = ensemble.grid();
    let h = spec.half();
    let (ci, cj) = center;
    if ci < h || cj < h || ci + h >= grid.ny() || cj + h >= grid.nx() {
        return Err(Error::WindowOutOfBounds { i: ci, j: cj, half: h });
    }
    let mut locations = Vec::with_capacity(spec.size * spec.size);
    let mut index = Vec::with_capacity(spec.size * spec.size);
    for i in (ci - h)..=(ci + h) {
        for j in (cj - h)..=(cj + h) {
            locations.push(grid.node_coords(i, j));
            index.push(grid.idx(i, j));
        }
    }
    let replicates = ensemble
        .replicates()
        .iter()
        .map(|f| index.iter().map(|&k| f.values()[k]).collect())
        .collect();
    Ok(Window { size: spec.size, locations, replicates })
}

/// Negative local log likelihood of the window under the given
/// parameters; `+∞` when the covariance is not positive definite, which
/// the optimizer treats as infeasible.
pub fn local_negloglik(params: &LocalParams, window: &Window) -> f64 {
    let transform = match AnisoTransform::new(params.xi1, params.xi2, params.theta) {
        Ok(t) => t,
        Err(_) => return f64::INFINITY,
    };
    let spec = match MaternSpec::new(params.nu, params.sigma2, transform) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    let g = match covariance_matrix(&window.locations, &spec, params.tau2) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let chol = match g.cholesky() {
        Some(c) => c,
        None => return f64::INFINITY,
    };
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let p = window.replicates.len() as f64;
    let mut quad = 0.0;
    for y in &window.replicates {
        let mut z = nalgebra::DVector::from_column_slice(y);
        chol.l_dirty().solve_lower_triangular_unchecked_mut(&mut z);
        quad += z.norm_squared();
    }
    0.5 * p * logdet + 0.5 * quad
}

/// Variance handling during the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    /// Free `log σ²` and `log τ²`.
    #[default]
    None,
    /// `σ² = 1 − τ²` with a logit-transformed nugget, for standardized
    /// fields.
    SumToOne,
}

/// Window fit settings. `isotropic` collapses the ranges to one
/// parameter with θ = 0; `fix_variances` keeps `σ², τ²` at their `init`
/// values (used by the range-only Monte Carlo study).
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub constraint: Constraint,
    pub init: LocalParams,
    pub max_iter: usize,
    pub tol: f64,
    pub isotropic: bool,
    pub fix_variances: bool,
}

impl FitOptions {
    /// Window-relative defaults: ranges start at half the window size,
    /// nugget at 0.1 under the sum-to-one constraint.
    pub fn standardized(window_size: usize, nu: Smoothness) -> Self {
        let half = window_size as f64 / 2.0;
        FitOptions {
            constraint: Constraint::SumToOne,
            init: LocalParams { xi1: half, xi2: half, theta: 0.0, sigma2: 0.9, tau2: 0.1, nu },
            max_iter: 400,
            tol: 1e-5,
            isotropic: false,
            fix_variances: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub params: LocalParams,
    pub converged: bool,
    pub negloglik: f64,
    pub iterations: usize,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// transformed-coordinate encoding; layout depends on the options
fn encode(p: &LocalParams, o: &FitOptions) -> Vec<f64> {
    let mut x = Vec::with_capacity(6);
    x.push(p.xi1.ln());
    if !o.isotropic {
        x.push(p.xi2.ln());
        x.push((2.0 * p.theta).cos());
        x.push((2.0 * p.theta).sin());
    }
    if !o.fix_variances {
        match o.constraint {
            Constraint::SumToOne => x.push(logit(p.tau2.clamp(1e-6, 1.0 - 1e-6))),
            Constraint::None => {
                x.push(p.sigma2.max(1e-12).ln());
                x.push(p.tau2.max(1e-12).ln());
            }
        }
    }
    x
}

fn decode(x: &[f64], o: &FitOptions) -> LocalParams {
    let mut k = 0;
    let mut next = || {
        let v = x[k];
        k += 1;
        v
    };
    let xi1 = next().exp();
    let (xi2, theta) = if o.isotropic {
        (xi1, 0.0)
    } else {
        let xi2 = next().exp();
        let (a, b) = (next(), next());
        let theta = 0.5 * b.atan2(a);
        (xi2, theta.rem_euclid(std::f64::consts::PI))
    };
    let (sigma2, tau2) = if o.fix_variances {
        (o.init.sigma2, o.init.tau2)
    } else {
        match o.constraint {
            Constraint::SumToOne => {
                let t = sigmoid(next());
                (1.0 - t, t)
            }
            Constraint::None => {
                let s = next().exp();
                let t = next().exp();
                (s, t)
            }
        }
    };
    LocalParams { xi1, xi2, theta, sigma2, tau2, nu: o.init.nu }
}

// relabel so xi1 >= xi2 with theta in [0, π)
fn canonicalize(p: LocalParams) -> LocalParams {
    let mut p = p;
    if p.xi1 < p.xi2 {
        std::mem::swap(&mut p.xi1, &mut p.xi2);
        p.theta += std::f64::consts::FRAC_PI_2;
    }
    p.theta = p.theta.rem_euclid(std::f64::consts::PI);
    p
}

/// Maximum-likelihood fit of one window; restarts once from the
/// perturbed optimum when the first simplex run fails to converge.
pub fn fit_window(window: &Window, options: &FitOptions) -> Result<FitResult> {
    if window.replicates.is_empty() {
        return Err(Error::Parameter("window has no replicates".into()));
    }
    options.init.validate()?;
    let objective = |x: &[f64]| local_negloglik(&decode(x, options), window);

    let x0 = encode(&options.init, options);
    let steps: Vec<f64> = x0.iter().map(|_| 0.4).collect();
    let nm = NelderMead { max_iter: options.max_iter, tol: options.tol };
    let mut run: NmResult = nm.minimize(objective, &x0, &steps)?;
    let mut iterations = run.iterations;
    if !run.converged {
        // one restart from the perturbed optimum
        let x1: Vec<f64> = run.x.iter().map(|v| v + 0.05).collect();
        let retry = nm.minimize(objective, &x1, &steps)?;
        iterations += retry.iterations;
        if retry.fx < run.fx || retry.converged {
            run = retry;
        }
    }
    Ok(FitResult {
        params: canonicalize(decode(&run.x, options)),
        converged: run.converged,
        negloglik: run.fx,
        iterations,
    })
}

/// Per-center fit record emitted alongside the parameter fields.
#[derive(Debug, Clone, Copy)]
pub struct WindowDiagnostic {
    pub i: usize,
    pub j: usize,
    pub negloglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FitAllResult {
    pub fields: ParamFields,
    pub diagnostics: Vec<WindowDiagnostic>,
}

/// Fit every window and assign estimates to window centers. Nodes
/// without a full window (the outer ring, plus off-stride nodes) copy the
/// nearest center's estimate and are flagged unfitted. `workers = 0` uses
/// the current thread pool; the result is identical at any worker count.
pub fn fit_all_windows(
    ensemble: &FieldEnsemble,
    spec: &WindowSpec,
    options: &FitOptions,
    workers: usize,
) -> Result<FitAllResult> {
    let centers = spec.centers(ensemble)?;
    let fit_one = |&(i, j): &(usize, usize)| -> Result<FitResult> {
        let window = extract_window(ensemble, (i, j), spec)?;
        fit_window(&window, options)
    };
    let results: Vec<FitResult> = if workers == 0 {
        centers.par_iter().map(fit_one).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| centers.par_iter().map(fit_one).collect::<Result<Vec<_>>>())?
    };

    let grid = *ensemble.grid();
    let h = spec.half();
    let last_i = centers.last().map(|c| c.0).unwrap_or(h);
    let last_j = centers.iter().map(|c| c.1).max().unwrap_or(h);
    let cols = centers.iter().take_while(|c| c.0 == centers[0].0).count();
    // nearest center on the strided center lattice
    let nearest = |v: usize, last: usize| -> usize {
        let clamped = v.clamp(h, last);
        let offset = clamped - h;
        let snapped = ((offset as f64 / spec.stride as f64).round() as usize) * spec.stride;
        (h + snapped).min(last)
    };

    let n = grid.interior_len();
    let mut params = Vec::with_capacity(n);
    let mut converged = Vec::with_capacity(n);
    let mut fitted = Vec::with_capacity(n);
    for i in 0..grid.ny() {
        for j in 0..grid.nx() {
            let (si, sj) = (nearest(i, last_i), nearest(j, last_j));
            let row = (si - h) / spec.stride;
            let col = (sj - h) / spec.stride;
            let r = &results[row * cols + col];
            params.push(r.params);
            converged.push(r.converged);
            fitted.push((si, sj) == (i, j));
        }
    }
    let diagnostics = centers
        .iter()
        .zip(&results)
        .map(|(&(i, j), r)| WindowDiagnostic {
            i,
            j,
            negloglik: r.negloglik,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect();
    Ok(FitAllResult { fields: ParamFields::new(grid, params, converged, fitted)?, diagnostics })
}

/// Draw `p` replicates of a stationary Matérn window by dense Cholesky,
/// used by the estimation study and tests.
pub fn simulate_matern_window(
    size: usize,
    params: &LocalParams,
    p: usize,
    rng: &mut impl rand::Rng,
) -> Result<Window> {
    let mut locations = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            locations.push([j as f64, i as f64]);
        }
    }
    let transform = AnisoTransform::new(params.xi1, params.xi2, params.theta)?;
    let spec = MaternSpec::new(params.nu, params.sigma2, transform)?;
    let g = covariance_matrix(&locations, &spec, params.tau2)?;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Parameter("window covariance is not positive definite".into()))?;
    let l = chol.l();
    let n = locations.len();
    let replicates = (0..p)
        .map(|_| {
            let z = nalgebra::DVector::from_fn(n, |_, _| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            (&l * z).as_slice().to_vec()
        })
        .collect();
    Ok(Window { size, locations, replicates })
}
