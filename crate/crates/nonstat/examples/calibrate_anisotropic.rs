//! Anisotropic translation: optimal eigenvalues of the autoregression
//! anisotropy matrix for a 4:1 Matérn range ratio, across rotation
//! angles.
//!
//! ```text
//! cargo run --example calibrate_anisotropic
//! ```

use nonstat::calibrate::calibrate_anisotropic;
use nonstat::matern::Smoothness;
use rayon::prelude::*;

fn main() -> nonstat::Result<()> {
    let (xi1, xi2) = (8.0, 2.0);
    let n = 31;
    let angles = [0.0f64, 30.0, 60.0, 90.0];

    println!("anisotropic calibration, xi {xi1}:{xi2}, nu = 1, N = {n}");
    println!(
        "{:>7} {:>10} {:>10} {:>9} {:>10}",
        "theta", "lambda1", "lambda2", "rel_cal", "rel_naive"
    );
    let results = angles
        .par_iter()
        .map(|&deg| {
            calibrate_anisotropic(xi1, xi2, deg.to_radians(), Smoothness::One, n)
                .map(|pair| (deg, pair))
        })
        .collect::<nonstat::Result<Vec<_>>>()?;
    for (deg, (p1, p2)) in &results {
        println!(
            "{:>6}° {:>10.2} {:>10.3} {:>9.4} {:>10.4}",
            deg, p1.sar_value, p2.sar_value, p1.rel_err_calibrated, p1.rel_err_naive
        );
    }
    println!(
        "\nfixed Matérn eigenvalues are D² = ({}, {}); the fitted lattice eigenvalues \
         come out smaller at long ranges, and the angle moves them only mildly.",
        xi1 * xi1,
        xi2 * xi2
    );
    Ok(())
}
