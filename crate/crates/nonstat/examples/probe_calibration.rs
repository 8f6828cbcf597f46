// Dev probe: full-scale calibration behavior (timings, error magnitudes,
// orientation of the anisotropic lattice model).

use nonstat::calibrate::{calibrate_anisotropic, calibrate_isotropic};
use nonstat::matern::Smoothness;
use nonstat::sar::{correlation_from_center, SarSpec};
use rayon::prelude::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();

    // orientation: anisotropic SAR at theta = 30 deg, lambda1 >> lambda2
    let n = 31;
    let theta = 30f64.to_radians();
    let spec = SarSpec::from_eigenvalues(1.0, 30.0, 2.0, theta).unwrap();
    let corr = correlation_from_center(&spec, n, 1).unwrap();
    let c = (n / 2) as f64;
    // correlation at radius 6 along theta vs across theta
    let probe = |ang: f64| -> f64 {
        let (dx, dy) = (6.0 * ang.cos(), 6.0 * ang.sin());
        let (j, i) = ((c + dx).round() as usize, (c + dy).round() as usize);
        corr[i * n + j]
    };
    println!(
        "orientation: corr along 30deg = {:.3}, along 120deg = {:.3}  (want first >> second)",
        probe(theta),
        probe(theta + std::f64::consts::FRAC_PI_2)
    );

    // isotropic sweep, nu = 1, N = 51
    let t1 = Instant::now();
    let sweep: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let points: Vec<_> = sweep
        .par_iter()
        .map(|&k| calibrate_isotropic(k, Smoothness::One, 51).unwrap())
        .collect();
    println!("\nisotropic nu=1 N=51  ({:.1?})", t1.elapsed());
    println!("k_inv  sar_inv   rel_cal   rel_naive");
    for p in &points {
        println!(
            "{:5}  {:7.3}  {:8.4}  {:8.4}",
            p.matern_value,
            1.0 / p.sar_value,
            p.rel_err_calibrated,
            p.rel_err_naive
        );
    }

    // nu = 2 spot checks
    let t2 = Instant::now();
    for k in [5.0, 15.0] {
        let p = calibrate_isotropic(k, Smoothness::Two, 51).unwrap();
        println!(
            "nu=2 k_inv={:4}: sar_inv={:7.3} rel_cal={:.4} rel_naive={:.4}",
            k,
            1.0 / p.sar_value,
            p.rel_err_calibrated,
            p.rel_err_naive
        );
    }
    println!("nu=2 pair took {:.1?}", t2.elapsed());

    // anisotropic 4:1, nu = 1, theta sweep
    let t3 = Instant::now();
    let angles: Vec<f64> = vec![0.0, 30.0, 60.0, 90.0];
    let results: Vec<_> = angles
        .par_iter()
        .map(|&deg| {
            let (p1, p2) =
                calibrate_anisotropic(8.0, 2.0, deg.to_radians(), Smoothness::One, 51).unwrap();
            (deg, p1, p2)
        })
        .collect();
    println!("\nanisotropic 4:1 (xi1=8, xi2=2), nu=1, N=51  ({:.1?})", t3.elapsed());
    println!("theta  l1_hat (D2={})   l2_hat (D2={})   rel_cal  rel_naive", 64.0, 4.0);
    for (deg, p1, p2) in &results {
        println!(
            "{:5}  {:8.3}          {:8.3}         {:7.4}  {:7.4}",
            deg, p1.sar_value, p2.sar_value, p1.rel_err_calibrated, p1.rel_err_naive
        );
    }

    println!("\ntotal {:.1?}", t0.elapsed());
}
