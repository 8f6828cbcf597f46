//! Derivative-free minimizers: a Nelder-Mead simplex for the window
//! likelihoods and a bracketed golden-section search for the 1-D
//! calibration objectives.

use crate::error::{Error, Result};

/// Nelder-Mead configuration. Standard reflection/expansion/contraction/
/// shrink coefficients; convergence when the simplex diameter (max
/// ∞-distance from the best vertex) falls below `tol`.
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead { max_iter: 400, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration; non-increasing.
    pub best_trace: Vec<f64>,
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Result<NmResult>
    where
        F: FnMut(&[f64]) -> f64,
    {
        const ALPHA: f64 = 1.0;
        const GAMMA: f64 = 2.0;
        const RHO: f64 = 0.5;
        const SIGMA: f64 = 0.5;

        let dim = x0.len();
        assert_eq!(steps.len(), dim);
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        simplex.push(x0.to_vec());
        for d in 0..dim {
            let mut p = x0.to_vec();
            p[d] += steps[d];
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        if values.iter().all(|v| !v.is_finite()) {
            return Err(Error::Calibration(
                "all starting simplex vertices are infeasible".into(),
            ));
        }

        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        for it in 0..self.max_iter {
            iterations = it + 1;
            // order by objective, best first
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
            let sorted: Vec<Vec<f64>> = order.iter().map(|&k| simplex[k].clone()).collect();
            let sorted_vals: Vec<f64> = order.iter().map(|&k| values[k]).collect();
            simplex = sorted;
            values = sorted_vals;
            trace.push(values[0]);

            let diameter = simplex[1..]
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                })
                .fold(0.0f64, f64::max);
            if diameter < self.tol {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..dim)
                .map(|d| simplex[..dim].iter().map(|p| p[d]).sum::<f64>() / dim as f64)
                .collect();
            let worst = values[dim];
            let second_worst = values[dim - 1];

            let reflect: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + ALPHA * (centroid[d] - simplex[dim][d]))
                .collect();
            let f_reflect = f(&reflect);

            if f_reflect < values[0] {
                // try expanding further
                let expand: Vec<f64> = (0..dim)
                    .map(|d| centroid[d] + GAMMA * (reflect[d] - centroid[d]))
                    .collect();
                let f_expand = f(&expand);
                if f_expand < f_reflect {
                    simplex[dim] = expand;
                    values[dim] = f_expand;
                } else {
                    simplex[dim] = reflect;
                    values[dim] = f_reflect;
                }
            } else if f_reflect < second_worst {
                simplex[dim] = reflect;
                values[dim] = f_reflect;
            } else {
                let contract: Vec<f64> = if f_reflect < worst {
                    (0..dim).map(|d| centroid[d] + RHO * (reflect[d] - centroid[d])).collect()
                } else {
                    (0..dim).map(|d| centroid[d] + RHO * (simplex[dim][d] - centroid[d])).collect()
                };
                let f_contract = f(&contract);
                if f_contract < worst.min(f_reflect) {
                    simplex[dim] = contract;
                    values[dim] = f_contract;
                } else {
                    // shrink toward the best vertex
                    for k in 1..=dim {
                        for d in 0..dim {
                            simplex[k][d] = simplex[0][d] + SIGMA * (simplex[k][d] - simplex[0][d]);
                        }
                        values[k] = f(&simplex[k]);
                    }
                }
            }
        }

        let mut best = 0;
        for k in 1..=dim {
            if values[k] < values[best] {
                best = k;
            }
        }
        Ok(NmResult {
            x: simplex[best].clone(),
            fx: values[best],
            iterations,
            converged,
            best_trace: trace,
        })
    }
}

/// Golden-section minimization on a bracket `[a, b]`; `tol` is the final
/// interval width on `x`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Scan `grid` and return the bracket `(grid[m-1], grid[m+1])` around the
/// global minimum, rejecting objectives that show a second interior local
/// minimum (the calibration relies on a unimodal objective).
pub fn bracket_scan<F>(mut f: F, grid: &[f64]) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    assert!(grid.len() >= 3);
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut best = 0;
    for k in 1..values.len() {
        if values[k] < values[best] {
            best = k;
        }
    }
    let scale = values[best].abs().max(1e-12);
    let mut minima = Vec::new();
    for k in 1..values.len() - 1 {
        if values[k] + 1e-9 * scale < values[k - 1] && values[k] + 1e-9 * scale < values[k + 1] {
            minima.push(k);
        }
    }
    if minima.len() > 1 {
        let detail: Vec<String> =
            minima.iter().map(|&k| format!("x={}, f={:.6e}", grid[k], values[k])).collect();
        return Err(Error::Calibration(format!(
            "objective is not unimodal on the scan grid; local minima at {}",
            detail.join("; ")
        )));
    }
    let lo = if best == 0 { 0 } else { best - 1 };
    let hi = (best + 1).min(grid.len() - 1);
    Ok((grid[lo], grid[hi]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nelder_mead_rosenbrock() {
        let nm = NelderMead { max_iter: 2000, tol: 1e-9 };
        let res = nm
            .minimize(
                |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
                &[-1.2, 1.0],
                &[0.5, 0.5],
            )
            .unwrap();
        assert!(res.converged);
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn nelder_mead_trace_is_monotone() {
        let nm = NelderMead::default();
        let res = nm
            .minimize(|x| x[0] * x[0] + 3.0 * (x[1] + 2.0).powi(2), &[4.0, 4.0], &[1.0, 1.0])
            .unwrap();
        for w in res.best_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "best value increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn nelder_mead_handles_infeasible_regions() {
        let nm = NelderMead::default();
        let res = nm
            .minimize(
                |x| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) },
                &[1.0],
                &[0.5],
            )
            .unwrap();
        assert_abs_diff_eq!(res.x[0], 2.0, epsilon = 1e-4);

        let err = nm.minimize(|_| f64::INFINITY, &[0.0], &[1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn golden_section_quartic() {
        let (x, _) = golden_section(|x| (x - 1.3).powi(4), -4.0, 6.0, 1e-8);
        assert_abs_diff_eq!(x, 1.3, epsilon = 1e-2);
        let (x, _) = golden_section(|x| (x - 1.3).powi(2), -4.0, 6.0, 1e-10);
        assert_abs_diff_eq!(x, 1.3, epsilon = 1e-6);
    }

    #[test]
    fn bracket_scan_detects_bimodal() {
        let grid: Vec<f64> = (0..50).map(|k| k as f64 * 0.2).collect();
        let unimodal = bracket_scan(|x| (x - 3.0).powi(2), &grid).unwrap();
        assert!(unimodal.0 <= 3.0 && 3.0 <= unimodal.1);

        let bimodal = bracket_scan(|x| (x - 2.0).powi(2) * (x - 7.0).powi(2), &grid);
        assert!(bimodal.is_err());
    }
}
