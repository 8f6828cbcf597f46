// Dev probe: effect of extending the lattice (buffer) on the center
// correlation vectors and the resulting naive/calibrated errors.

use nonstat::calibrate::{matern_center_correlations, relative_error};
use nonstat::grid::Grid;
use nonstat::matern::{AnisoTransform, Smoothness};
use nonstat::sar::{assemble_b, factorize, precision, EdgePolicy, SarSpec, SarSpecField};
use std::time::Instant;

fn sar_center_corr_buffered(spec: &SarSpec, n: usize, order: usize, buffer: usize) -> Vec<f64> {
    let grid = Grid::new(n, n, 1.0, 1.0, buffer).unwrap();
    let field = SarSpecField::constant(grid, *spec).unwrap();
    let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
    let q = precision(&b, order).unwrap();
    let chol = factorize(&q).unwrap();
    let diag = chol.inverse_diagonal();
    let total = grid.buffered_nx();
    let ci = buffer + n / 2;
    let center = ci * total + ci;
    let mut rhs = vec![0.0; grid.buffered_len()];
    rhs[center] = 1.0;
    let col = chol.solve(&rhs);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let k = (i + buffer) * total + (j + buffer);
            out.push(col[k] / (diag[k] * diag[center]).sqrt());
        }
    }
    out
}

fn main() {
    let n = 51;
    let nu = Smoothness::One;
    for kappa_inv in [5.0, 10.0, 12.0, 20.0] {
        let sigma_m =
            matern_center_correlations(&AnisoTransform::isotropic(kappa_inv).unwrap(), nu, n)
                .unwrap();
        for buffer in [0usize, 10, 25, 40] {
            let t = Instant::now();
            let spec = SarSpec::isotropic(1.0 / (kappa_inv * kappa_inv)).unwrap();
            let sigma_s = sar_center_corr_buffered(&spec, n, 1, buffer);
            let err = relative_error(&sigma_m, &sigma_s).unwrap();
            println!(
                "k_inv={kappa_inv:4} buffer={buffer:3}: naive rel err = {err:.4}  ({:.2?})",
                t.elapsed()
            );
        }
        println!();
    }
}
