// Dev probe: AC3 instance selection for the 4:1 anisotropic sweep.

use nonstat::calibrate::calibrate_anisotropic;
use nonstat::matern::Smoothness;
use rayon::prelude::*;

fn main() {
    for (xi1, xi2) in [(12.0, 3.0), (16.0, 4.0), (20.0, 5.0)] {
        let angles = [0.0f64, 30.0, 60.0, 90.0];
        let results: Vec<_> = angles
            .par_iter()
            .map(|&deg| {
                let (p1, p2) =
                    calibrate_anisotropic(xi1, xi2, deg.to_radians(), Smoothness::One, 51)
                        .unwrap();
                (deg, p1, p2)
            })
            .collect();
        println!("\nxi1={xi1}, xi2={xi2}  (D2 = {}, {})", xi1 * xi1, xi2 * xi2);
        let mut l1s = Vec::new();
        let mut l2s = Vec::new();
        for (deg, p1, p2) in &results {
            println!(
                "  theta={deg:3}: l1={:8.3} l2={:7.3} rel_cal={:.4} rel_naive={:.4}",
                p1.sar_value, p2.sar_value, p1.rel_err_calibrated, p1.rel_err_naive
            );
            l1s.push(p1.sar_value);
            l2s.push(p2.sar_value);
        }
        let spread = |v: &[f64]| {
            let (mn, mx) = (v.iter().cloned().fold(f64::MAX, f64::min), v.iter().cloned().fold(0.0f64, f64::max));
            (mx - mn) / mn
        };
        println!("  theta spread: l1 {:.1}%, l2 {:.1}%", spread(&l1s) * 100.0, spread(&l2s) * 100.0);
    }
}
