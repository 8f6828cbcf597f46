// Dev probe: KeepCenter vs RowSumKappa2 edge rules in the center
// correlation experiment.

use nonstat::calibrate::{matern_center_correlations, relative_error};
use nonstat::grid::Grid;
use nonstat::matern::{AnisoTransform, Smoothness};
use nonstat::optim::{bracket_scan, golden_section};
use nonstat::sar::{assemble_b, factorize, precision, EdgePolicy, SarSpec, SarSpecField};
use rayon::prelude::*;

fn sar_center_corr(spec: &SarSpec, n: usize, order: usize, policy: EdgePolicy) -> Vec<f64> {
    let grid = Grid::new(n, n, 1.0, 1.0, 0).unwrap();
    let field = SarSpecField::constant(grid, *spec).unwrap();
    let b = match policy {
        EdgePolicy::RowSumKappa2 => assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap(),
        EdgePolicy::KeepCenter => {
            // KeepCenter refuses buffer 0 by contract; assemble by hand
            let st = nonstat::sar::build_stencil(spec, 1.0, 1.0).unwrap();
            let mut rows = Vec::with_capacity(n * n);
            for i in 0..n as i64 {
                for j in 0..n as i64 {
                    let mut row = vec![((i * n as i64 + j) as usize, st.weight(0, 0))];
                    for di in -1i32..=1 {
                        for dj in -1i32..=1 {
                            if di == 0 && dj == 0 {
                                continue;
                            }
                            let w = st.weight(di, dj);
                            if w == 0.0 {
                                continue;
                            }
                            let (ni, nj) = (i + di as i64, j + dj as i64);
                            if ni >= 0 && nj >= 0 && ni < n as i64 && nj < n as i64 {
                                row.push(((ni * n as i64 + nj) as usize, w));
                            }
                        }
                    }
                    rows.push(row);
                }
            }
            nonstat::sar::SparseOperator::from_rows(n * n, n * n, rows).unwrap()
        }
    };
    let q = precision(&b, order).unwrap();
    let chol = factorize(&q).unwrap();
    let diag = chol.inverse_diagonal();
    let center = (n / 2) * n + n / 2;
    let mut rhs = vec![0.0; n * n];
    rhs[center] = 1.0;
    let col = chol.solve(&rhs);
    (0..n * n).map(|k| col[k] / (diag[k] * diag[center]).sqrt()).collect()
}

fn main() {
    let n = 51;
    let nu = Smoothness::One;
    let results: Vec<String> = (1..=20)
        .into_par_iter()
        .map(|k| {
            let kappa_inv = k as f64;
            let sigma_m =
                matern_center_correlations(&AnisoTransform::isotropic(kappa_inv).unwrap(), nu, n)
                    .unwrap();
            let obj = |inv: f64| {
                let spec = SarSpec::isotropic(1.0 / (inv * inv)).unwrap();
                let s = sar_center_corr(&spec, n, 1, EdgePolicy::KeepCenter);
                sigma_m.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            };
            let grid: Vec<f64> =
                (0..25).map(|t| 0.5 * (120f64.ln() * t as f64 / 24.0).exp()).collect();
            let (lo, hi) = bracket_scan(obj, &grid).unwrap();
            let (best, _) = golden_section(obj, lo, hi, 1e-3);
            let cal = relative_error(
                &sigma_m,
                &sar_center_corr(
                    &SarSpec::isotropic(1.0 / (best * best)).unwrap(),
                    n,
                    1,
                    EdgePolicy::KeepCenter,
                ),
            )
            .unwrap();
            let naive = relative_error(
                &sigma_m,
                &sar_center_corr(
                    &SarSpec::isotropic(1.0 / (kappa_inv * kappa_inv)).unwrap(),
                    n,
                    1,
                    EdgePolicy::KeepCenter,
                ),
            )
            .unwrap();
            format!("k_inv={kappa_inv:4}: sar_inv={best:7.3} rel_cal={cal:.4} rel_naive={naive:.4}")
        })
        .collect();
    println!("KeepCenter edge rule, nu=1, N=51:");
    for r in results {
        println!("{r}");
    }
}
