//! Model checking: whiteness statistics of transformed fields, and the
//! Monte Carlo study of local range estimation accuracy.

use crate::error::{Error, Result};
use crate::grid::{Field, FieldEnsemble, LocalParams};
use crate::matern::Smoothness;
use crate::mle::{fit_window, simulate_matern_window, Constraint, FitOptions};
use crate::stream::{label, substream};
use rayon::prelude::*;

pub use crate::emulator::{whiten, whiten_buffered};

/// Whiteness summary of a transformed ensemble.
///
/// `variance_field` holds per-node sample variances across replicates
/// (for a single replicate, variances pooled over 5×5 neighbourhoods,
/// flagged by `pooled_p1`). The summary quantiles are computed from
/// variances pooled over non-overlapping 5×5 blocks, which keeps them
/// interpretable at small replicate counts; lag-1 correlations pool all
/// node pairs across all replicates.
#[derive(Debug, Clone)]
pub struct WhitenessReport {
    pub variance_field: Field,
    pub pooled_p1: bool,
    pub lag_corr_h: f64,
    pub lag_corr_v: f64,
    pub summary: WhitenessSummary,
}

#[derive(Debug, Clone, Copy)]
pub struct WhitenessSummary {
    pub max_abs_lag_corr: f64,
    /// 5%, 25%, 50%, 75%, 95% quantiles of block-pooled variances.
    pub var_quantiles: [f64; 5],
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

// pooled Pearson correlation over lagged node pairs across all replicates
fn lag_correlation(ens: &FieldEnsemble, ring: usize, horizontal: bool) -> f64 {
    let grid = ens.grid();
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0.0;
    let (ilo, ihi) = (ring, grid.ny() - ring);
    let (jlo, jhi) = (ring, grid.nx() - ring);
    for f in ens.replicates() {
        for i in ilo..ihi {
            for j in jlo..jhi {
                let (ni, nj) = if horizontal { (i, j + 1) } else { (i + 1, j) };
                if ni >= ihi || nj >= jhi {
                    continue;
                }
                let a = f.get(i, j);
                let b = f.get(ni, nj);
                sx += a;
                sy += b;
                sxx += a * a;
                syy += b * b;
                sxy += a * b;
                count += 1.0;
            }
        }
    }
    let cov = sxy / count - (sx / count) * (sy / count);
    let va = sxx / count - (sx / count) * (sx / count);
    let vb = syy / count - (sy / count) * (sy / count);
    cov / (va * vb).sqrt()
}

/// Compute the whiteness report, ignoring a ring of `ring` nodes at the
/// interior boundary (pass the model order after whitening cropped
/// fields, 0 otherwise).
pub fn whiteness_stats(ens: &FieldEnsemble, ring: usize) -> Result<WhitenessReport> {
    let grid = *ens.grid();
    let p = ens.len();
    if p == 0 {
        return Err(Error::Parameter("whiteness statistics need at least one replicate".into()));
    }
    if grid.nx() <= 2 * ring + 1 || grid.ny() <= 2 * ring + 1 {
        return Err(Error::Parameter(format!(
            "ring {ring} leaves no interior on a {}x{} grid",
            grid.nx(),
            grid.ny()
        )));
    }

    // per-node variance across replicates, or 5x5 spatial pooling at p=1
    let pooled_p1 = p == 1;
    let mut variance = vec![0.0; grid.interior_len()];
    if pooled_p1 {
        let f = ens.replicate(0);
        for i in 0..grid.ny() {
            for j in 0..grid.nx() {
                let (mut s, mut ss, mut m) = (0.0, 0.0, 0.0);
                for di in -2i64..=2 {
                    for dj in -2i64..=2 {
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= grid.ny() as i64 || nj >= grid.nx() as i64 {
                            continue;
                        }
                        let v = f.get(ni as usize, nj as usize);
                        s += v;
                        ss += v * v;
                        m += 1.0;
                    }
                }
                variance[grid.idx(i, j)] = (ss - s * s / m) / (m - 1.0);
            }
        }
    } else {
        for i in 0..grid.ny() {
            for j in 0..grid.nx() {
                let vals = ens.node_values(i, j);
                let mean: f64 = vals.iter().sum::<f64>() / p as f64;
                let var: f64 =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (p - 1) as f64;
                variance[grid.idx(i, j)] = var;
            }
        }
    }

    // block-pooled variances for the summary quantiles
    let mut block_vars = Vec::new();
    let mut bi = ring;
    while bi + 5 <= grid.ny() - ring {
        let mut bj = ring;
        while bj + 5 <= grid.nx() - ring {
            let mut sum = 0.0;
            for i in bi..bi + 5 {
                for j in bj..bj + 5 {
                    sum += variance[grid.idx(i, j)];
                }
            }
            block_vars.push(sum / 25.0);
            bj += 5;
        }
        bi += 5;
    }
    if block_vars.is_empty() {
        // region smaller than one block: pool everything
        let mut sum = 0.0;
        let mut m = 0.0;
        for i in ring..grid.ny() - ring {
            for j in ring..grid.nx() - ring {
                sum += variance[grid.idx(i, j)];
                m += 1.0;
            }
        }
        block_vars.push(sum / m);
    }
    block_vars.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let var_quantiles =
        [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&block_vars, q));

    let lag_corr_h = lag_correlation(ens, ring, true);
    let lag_corr_v = lag_correlation(ens, ring, false);

    Ok(WhitenessReport {
        variance_field: Field::new(grid, variance)?,
        pooled_p1,
        lag_corr_h,
        lag_corr_v,
        summary: WhitenessSummary {
            max_abs_lag_corr: lag_corr_h.abs().max(lag_corr_v.abs()),
            var_quantiles,
        },
    })
}

/// Factorial design of the local-estimation accuracy study: window sizes
/// × range multipliers (range = multiplier × window) × smoothness ×
/// replicate counts, `repetitions` independent repetitions per cell.
#[derive(Debug, Clone)]
pub struct McDesign {
    pub window_sizes: Vec<usize>,
    pub range_multipliers: Vec<f64>,
    pub nus: Vec<Smoothness>,
    pub replicate_counts: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for McDesign {
    /// Desk-scale 3×2×2×3 factorial with 20 repetitions.
    fn default() -> Self {
        McDesign {
            window_sizes: vec![9, 15, 21],
            range_multipliers: vec![1.0, 2.0],
            nus: vec![Smoothness::One, Smoothness::Two],
            replicate_counts: vec![5, 15, 30],
            repetitions: 20,
            seed: 20240901,
        }
    }
}

impl McDesign {
    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty()
            || self.range_multipliers.is_empty()
            || self.nus.is_empty()
            || self.replicate_counts.is_empty()
            || self.repetitions == 0
        {
            return Err(Error::Parameter("factorial design has an empty factor".into()));
        }
        for &w in &self.window_sizes {
            if w < 3 || w % 2 == 0 {
                return Err(Error::Parameter(format!("window sizes must be odd ≥ 3, got {w}")));
            }
        }
        for &m in &self.range_multipliers {
            if !(m > 0.0) {
                return Err(Error::Parameter(format!("range multipliers must be positive, got {m}")));
            }
        }
        for &p in &self.replicate_counts {
            if p == 0 {
                return Err(Error::Parameter("replicate counts must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.window_sizes.len()
            * self.range_multipliers.len()
            * self.nus.len()
            * self.replicate_counts.len()
    }
}

/// One repetition's estimate in one factorial cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McRow {
    pub window: usize,
    pub range_multiplier: f64,
    pub nu: f64,
    pub p: usize,
    pub repetition: usize,
    pub estimate: f64,
    pub percent_error: f64,
    pub converged: bool,
}

/// Per-cell summary statistics over repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCell {
    pub window: usize,
    pub range_multiplier: f64,
    pub nu: f64,
    pub p: usize,
    pub median_percent_error: f64,
    pub iqr_percent_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct McResults {
    pub rows: Vec<McRow>,
    pub cells: Vec<McCell>,
}

/// Run the factorial study. Each (window, range, ν, repetition) task
/// simulates `max(p)` replicates from the stationary Matérn truth on its
/// own deterministic stream and fits the range by maximum likelihood on
/// nested replicate prefixes, so replicate counts share common random
/// numbers. Per-repetition failures are recorded in the rows, not fatal.
pub fn run_mc_study(design: &McDesign, workers: usize) -> Result<McResults> {
    design.validate()?;
    let p_max = *design.replicate_counts.iter().max().unwrap();

    let mut tasks = Vec::new();
    for &w in &design.window_sizes {
        for &mult in &design.range_multipliers {
            for &nu in &design.nus {
                for rep in 0..design.repetitions {
                    tasks.push((w, mult, nu, rep));
                }
            }
        }
    }

    let run_task = |&(w, mult, nu, rep): &(usize, f64, Smoothness, usize)| -> Result<Vec<McRow>> {
        let range = mult * w as f64;
        let truth = LocalParams {
            xi1: range,
            xi2: range,
            theta: 0.0,
            sigma2: 1.0,
            tau2: 0.0,
            nu,
        };
        let nu_code = match nu {
            Smoothness::Half => 0u64,
            Smoothness::One => 1,
            Smoothness::Two => 2,
        };
        let mut rng = substream(
            design.seed,
            &[label::MC_STUDY, w as u64, mult.to_bits(), nu_code, rep as u64],
        );
        let window = simulate_matern_window(w, &truth, p_max, &mut rng)?;
        let mut rows = Vec::with_capacity(design.replicate_counts.len());
        for &p in &design.replicate_counts {
            let sub = crate::mle::Window {
                size: window.size,
                locations: window.locations.clone(),
                replicates: window.replicates[..p].to_vec(),
            };
            let options = FitOptions {
                constraint: Constraint::None,
                init: LocalParams { xi1: w as f64 / 2.0, xi2: w as f64 / 2.0, ..truth },
                max_iter: 200,
                tol: 1e-5,
                isotropic: true,
                fix_variances: true,
            };
            let fit = fit_window(&sub, &options)?;
            let estimate = fit.params.xi1;
            rows.push(McRow {
                window: w,
                range_multiplier: mult,
                nu: nu.value(),
                p,
                repetition: rep,
                estimate,
                percent_error: (estimate - range).abs() / range * 100.0,
                converged: fit.converged,
            });
        }
        Ok(rows)
    };

    let nested: Vec<Vec<McRow>> = if workers == 0 {
        tasks.par_iter().map(run_task).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run_task).collect::<Result<Vec<_>>>())?
    };
    let rows: Vec<McRow> = nested.into_iter().flatten().collect();

    // summarize cells in design enumeration order
    let mut cells = Vec::with_capacity(design.cell_count());
    for &w in &design.window_sizes {
        for &mult in &design.range_multipliers {
            for &nu in &design.nus {
                for &p in &design.replicate_counts {
                    let mut errs: Vec<f64> = rows
                        .iter()
                        .filter(|r| {
                            r.window == w
                                && r.range_multiplier == mult
                                && r.nu == nu.value()
                                && r.p == p
                        })
                        .map(|r| r.percent_error)
                        .collect();
                    let failures = rows
                        .iter()
                        .filter(|r| {
                            r.window == w
                                && r.range_multiplier == mult
                                && r.nu == nu.value()
                                && r.p == p
                                && !r.converged
                        })
                        .count();
                    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    cells.push(McCell {
                        window: w,
                        range_multiplier: mult,
                        nu: nu.value(),
                        p,
                        median_percent_error: quantile(&errs, 0.5),
                        iqr_percent_error: quantile(&errs, 0.75) - quantile(&errs, 0.25),
                        failures,
                    });
                }
            }
        }
    }
    Ok(McResults { rows, cells })
}

impl McResults {
    /// Raw per-repetition estimates, one row each.
    pub fn write_rows_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "window,range_multiplier,nu,p,repetition,estimate,percent_error")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.window, r.range_multiplier, r.nu, r.p, r.repetition, r.estimate, r.percent_error
            )?;
        }
        Ok(())
    }

    /// Median/IQR summary, one row per factorial cell.
    pub fn write_summary_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "window,range_multiplier,nu,p,median_percent_error,iqr_percent_error,failures")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.window,
                c.range_multiplier,
                c.nu,
                c.p,
                c.median_percent_error,
                c.iqr_percent_error,
                c.failures
            )?;
        }
        Ok(())
    }
}
