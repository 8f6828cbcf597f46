// Dev probe: end-to-end recovery and simulation tolerances ahead of the
// acceptance suite.

use nonstat::calibrate::build_table;
use nonstat::diagnostics::{run_mc_study, whiteness_stats, McDesign};
use nonstat::emulator::{
    build_global_model, simulate_ensemble, translate_params, BuildOptions,
};
use nonstat::grid::{FieldEnsemble, Grid, LocalParams, ParamFields};
use nonstat::matern::Smoothness;
use nonstat::mle::{fit_all_windows, FitOptions, WindowSpec};
use nonstat::sar::{correlation_from_center, precision, SarSpec};
use std::time::Instant;

fn main() {
    // AC5: stationary isotropic 15x15, 5000 draws vs exact correlations
    let t = Instant::now();
    let spec = SarSpec::isotropic(0.04).unwrap();
    let n = 15;
    let exact = correlation_from_center(&spec, n, 1).unwrap();
    let grid = Grid::square(n, n).unwrap();
    let field = nonstat::sar::SarSpecField::constant(grid, spec).unwrap();
    let b = nonstat::sar::assemble_b(&field, nonstat::sar::EdgePolicy::RowSumKappa2).unwrap();
    let q = precision(&b, 1).unwrap();
    let chol = nonstat::sar::factorize(&q).unwrap();
    let diag = chol.inverse_diagonal();
    let c = (n / 2) * n + n / 2;
    for seed in [1u64, 2, 3, 42] {
        let draws = nonstat::sar::simulate_with(&b, &chol, 1, 5000, seed).unwrap();
        let mut worst = 0.0f64;
        for k in 0..n * n {
            let mut cov = 0.0;
            for d in &draws {
                cov += d[k] * d[c];
            }
            cov /= draws.len() as f64;
            let emp = cov / (diag[k] * diag[c]).sqrt();
            worst = worst.max((emp - exact[k]).abs());
        }
        println!("AC5 seed {seed}: worst |emp - exact| = {worst:.4}");
    }
    println!("AC5 block took {:.1?}\n", t.elapsed());

    // AC7: two-region recovery + whitening
    let t = Instant::now();
    let table =
        build_table(&[2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0], Smoothness::One, 51, None).unwrap();
    println!("table built in {:.1?}", t.elapsed());

    let t = Instant::now();
    let grid = Grid::square(48, 40).unwrap();
    let mk = |xi: f64| LocalParams {
        xi1: xi,
        xi2: xi,
        theta: 0.0,
        sigma2: 0.99,
        tau2: 0.01,
        nu: Smoothness::One,
    };
    let mut params = Vec::new();
    for _i in 0..40 {
        for j in 0..48 {
            params.push(if j < 24 { mk(3.0) } else { mk(9.0) });
        }
    }
    let truth =
        ParamFields::new(grid, params, vec![true; 1920], vec![true; 1920]).unwrap();
    let translated = translate_params(&truth, &table).unwrap();
    let model = build_global_model(&translated, &BuildOptions::new(1, 18)).unwrap();
    let data = simulate_ensemble(&model, 30, 777).unwrap();
    println!("truth model + 30 draws in {:.1?}", t.elapsed());

    let t = Instant::now();
    let spec = WindowSpec::new(9, 1).unwrap();
    let options = FitOptions::standardized(9, Smoothness::One);
    let fit = fit_all_windows(&data, &spec, &options, 0).unwrap();
    println!(
        "fit {} windows in {:.1?} ({:.1}% converged)",
        fit.diagnostics.len(),
        t.elapsed(),
        fit.fields.converged_fraction() * 100.0
    );

    // log-range MAE away from the break at column 23.5
    let mut errs = Vec::new();
    for d in &fit.diagnostics {
        let j = d.j as f64;
        if !(4.0..=43.0).contains(&j) {
            continue;
        }
        let truth_xi: f64 = if j <= 14.0 {
            3.0
        } else if j >= 33.0 {
            9.0
        } else {
            continue;
        };
        let node = grid.idx(d.i, d.j);
        let est = fit.fields.params[node].geometric_range();
        errs.push((est.ln() - truth_xi.ln()).abs());
    }
    let mae: f64 = errs.iter().sum::<f64>() / errs.len() as f64;
    println!("AC7 log-range MAE over {} centers: {mae:.3} (want < 0.3)", errs.len());

    // rebuild from fitted params and whiten the truth replicates
    let t = Instant::now();
    let tr2 = translate_params(&fit.fields, &table).unwrap();
    let refit =
        build_global_model(&tr2, &BuildOptions::new(1, nonstat::emulator::default_buffer(&fit.fields)))
            .unwrap();
    let whitened: Vec<_> = data
        .replicates()
        .iter()
        .map(|f| nonstat::diagnostics::whiten(&refit, f).unwrap())
        .collect();
    let whitened = FieldEnsemble::new(grid, whitened).unwrap();
    let report = whiteness_stats(&whitened, refit.order()).unwrap();
    println!(
        "AC7 whiteness in {:.1?}: max |lag| = {:.4} (want < 0.1), var q05/q95 = {:.3}/{:.3} (want within [0.7, 1.3])",
        t.elapsed(),
        report.summary.max_abs_lag_corr,
        report.summary.var_quantiles[0],
        report.summary.var_quantiles[4]
    );

    // AC8 desk-scale MC
    let t = Instant::now();
    let design = McDesign::default();
    let results = run_mc_study(&design, 0).unwrap();
    println!("\nAC8 MC study in {:.1?}", t.elapsed());
    for c in &results.cells {
        if c.window == 9 && c.range_multiplier == 1.0 && c.nu == 1.0 && c.p == 30 {
            println!(
                "AC8 key cell (w=9, mult=1, nu=1, p=30): median = {:.2}% (want <= 15%)",
                c.median_percent_error
            );
        }
    }
    // monotonicity in p
    for &w in &design.window_sizes {
        for &m in &design.range_multipliers {
            for nu in [1.0, 2.0] {
                let med = |p: usize| {
                    results
                        .cells
                        .iter()
                        .find(|c| c.window == w && c.range_multiplier == m && c.nu == nu && c.p == p)
                        .unwrap()
                        .median_percent_error
                };
                let (m5, m30) = (med(5), med(30));
                let ok = if m30 <= m5 { "ok" } else { "VIOLATION" };
                println!("  (w={w}, mult={m}, nu={nu}): median p5 = {m5:.1}%, p30 = {m30:.1}% {ok}");
            }
        }
    }
}
