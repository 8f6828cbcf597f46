//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the measured values.
//!
//! Run with `cargo test -p nonstat --test acceptance -- --nocapture`.

use nonstat::calibrate::{
    build_table, calibrate_anisotropic, calibrate_isotropic, matern_center_correlations,
    relative_error, CalibrationPoint,
};
use nonstat::diagnostics::{run_mc_study, whiten_buffered, whiteness_stats, McDesign};
use nonstat::emulator::{
    build_global_model, default_buffer, simulate_buffered, simulate_ensemble, translate_params,
    whiten, BuildOptions,
};
use nonstat::grid::{FieldEnsemble, Grid, LocalParams, ParamFields};
use nonstat::matern::{bessel_k, matern_correlation, AnisoTransform, Smoothness};
use nonstat::mle::{fit_all_windows, FitOptions, WindowSpec};
use nonstat::sar::{
    assemble_b, correlation_from_center, factorize, precision, EdgePolicy, SarSpec, SarSpecField,
};
use std::sync::OnceLock;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

// the isotropic ν=1 sweep is shared between criteria 1 and 2
fn iso_sweep() -> &'static Vec<CalibrationPoint> {
    static SWEEP: OnceLock<Vec<CalibrationPoint>> = OnceLock::new();
    SWEEP.get_or_init(|| {
        (1..=20)
            .map(|k| calibrate_isotropic(k as f64, Smoothness::One, 51).unwrap())
            .collect()
    })
}

#[test]
fn criterion_01_calibration_error_ordering() {
    let points = iso_sweep();
    let mut max_cal = 0.0f64;
    let mut min_naive_tail = f64::INFINITY;
    let mut failures = Vec::new();
    for p in points.iter() {
        max_cal = max_cal.max(p.rel_err_calibrated);
        if p.rel_err_calibrated > 0.08 {
            failures.push(format!(
                "rel_err_calibrated({}) = {:.4} > 0.08",
                p.matern_value, p.rel_err_calibrated
            ));
        }
        if p.matern_value >= 10.0 {
            min_naive_tail = min_naive_tail.min(p.rel_err_naive);
            if p.rel_err_naive < 0.15 {
                failures.push(format!(
                    "rel_err_naive({}) = {:.4} < 0.15",
                    p.matern_value, p.rel_err_naive
                ));
            }
        }
    }
    let detail = format!(
        "nu=1, N=51, sweep 1..20: max rel_err_calibrated = {max_cal:.4} (<= 0.08), \
         min rel_err_naive over [10, 20] = {min_naive_tail:.4} (>= 0.15){}",
        if failures.is_empty() {
            String::new()
        } else {
            format!("; violations: {}", failures.join("; "))
        }
    );
    report(1, failures.is_empty(), &detail);
}

#[test]
fn criterion_02_calibration_optimality_and_monotonicity() {
    let points = iso_sweep();

    // exhaustive grid on the inverse autoregression range; vectors are
    // reused across all sweep points
    let grid_vals: Vec<f64> = {
        let mut v = Vec::new();
        let mut x = 0.5;
        while x <= 60.0 + 1e-9 {
            v.push(x);
            x += 0.05;
        }
        v
    };
    let sar_vectors: Vec<Vec<f64>> = grid_vals
        .iter()
        .map(|&inv| {
            correlation_from_center(&SarSpec::isotropic(1.0 / (inv * inv)).unwrap(), 51, 1)
                .unwrap()
        })
        .collect();

    let mut worst_gap = 0.0f64;
    let mut failures = Vec::new();
    for p in points.iter() {
        let sigma_m = matern_center_correlations(
            &AnisoTransform::isotropic(p.matern_value).unwrap(),
            Smoothness::One,
            51,
        )
        .unwrap();
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (k, s) in sar_vectors.iter().enumerate() {
            let d: f64 = sigma_m.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_val {
                best_val = d;
                best = k;
            }
        }
        let gap = (1.0 / p.sar_value - grid_vals[best]).abs();
        worst_gap = worst_gap.max(gap);
        if gap > 0.05 {
            failures.push(format!(
                "at range {}: golden {:.4} vs grid {:.4}",
                p.matern_value,
                1.0 / p.sar_value,
                grid_vals[best]
            ));
        }
    }
    let mut monotone = true;
    for w in points.windows(2) {
        if 1.0 / w[1].sar_value <= 1.0 / w[0].sar_value {
            monotone = false;
            failures.push(format!(
                "calibrated inverse range not increasing at range {}",
                w[1].matern_value
            ));
        }
    }
    let detail = format!(
        "golden-section vs exhaustive grid (step 0.05): worst gap = {worst_gap:.4} (<= 0.05); \
         calibrated inverse range strictly increasing: {monotone}"
    );
    report(2, failures.is_empty(), &detail);
}

#[test]
fn criterion_03_anisotropic_calibration() {
    // 4:1 ratio at the long end of the validated sweep, four angles
    let (xi1, xi2) = (20.0, 5.0);
    let angles = [0.0f64, 30.0, 60.0, 90.0];
    let results: Vec<(f64, CalibrationPoint, CalibrationPoint)> = angles
        .iter()
        .map(|&deg| {
            let (p1, p2) =
                calibrate_anisotropic(xi1, xi2, deg.to_radians(), Smoothness::One, 51).unwrap();
            (deg, p1, p2)
        })
        .collect();

    let mut failures = Vec::new();
    let mut max_rel = 0.0f64;
    for (deg, p1, p2) in &results {
        max_rel = max_rel.max(p1.rel_err_calibrated);
        if p1.sar_value > xi1 * xi1 {
            failures.push(format!("theta={deg}: l1 = {:.2} > {}", p1.sar_value, xi1 * xi1));
        }
        if p2.sar_value > xi2 * xi2 {
            failures.push(format!("theta={deg}: l2 = {:.2} > {}", p2.sar_value, xi2 * xi2));
        }
        if p1.rel_err_calibrated > 0.10 {
            failures.push(format!(
                "theta={deg}: rel_err_calibrated = {:.4} > 0.10",
                p1.rel_err_calibrated
            ));
        }
    }
    let spread = |pick: fn(&(f64, CalibrationPoint, CalibrationPoint)) -> f64| {
        let vals: Vec<f64> = results.iter().map(pick).collect();
        let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = vals.iter().cloned().fold(0.0f64, f64::max);
        (mx - mn) / mn
    };
    let s1 = spread(|r| r.1.sar_value);
    let s2 = spread(|r| r.2.sar_value);
    if s1 >= 0.10 {
        failures.push(format!("l1 varies {:.1}% across theta", s1 * 100.0));
    }
    if s2 >= 0.10 {
        failures.push(format!("l2 varies {:.1}% across theta", s2 * 100.0));
    }
    let detail = format!(
        "xi 20:5, nu=1, theta in {{0,30,60,90}}deg: eigenvalues <= D2 at all angles, \
         max rel_err_calibrated = {max_rel:.4} (<= 0.10), theta spread l1 = {:.1}%, l2 = {:.1}% (< 10%){}",
        s1 * 100.0,
        s2 * 100.0,
        if failures.is_empty() { String::new() } else { format!("; violations: {}", failures.join("; ")) }
    );
    report(3, failures.is_empty(), &detail);
}

#[test]
fn criterion_04_spd_robustness() {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(404);
    // 20x20 buffered lattices: 14x14 interior with a 3-node buffer
    let grid = Grid::new(14, 14, 1.0, 1.0, 3).unwrap();
    let mut dominant = 0;
    let mut factored = 0;
    for _ in 0..100 {
        let specs: Vec<SarSpec> = (0..grid.buffered_len())
            .map(|_| {
                let kappa2 = 0.05 + rng.random::<f64>() * 1.5;
                let h11 = 0.3 + rng.random::<f64>() * 2.0;
                let h22 = 0.3 + rng.random::<f64>() * 2.0;
                if rng.random::<bool>() {
                    SarSpec::new(kappa2, h11, 0.0, h22).unwrap()
                } else {
                    // cross terms inside the diagonal-dominance envelope
                    let cap = (0.45 * kappa2).min(0.9 * (h11 * h22).sqrt());
                    let h12 = (rng.random::<f64>() * 2.0 - 1.0) * cap;
                    SarSpec::new(kappa2, h11, h12, h22).unwrap()
                }
            })
            .collect();
        let field = SarSpecField::new(grid, specs).unwrap();
        let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
        if b.is_strictly_diagonally_dominant() {
            dominant += 1;
        }
        let q = precision(&b, 1).unwrap();
        if factorize(&q).is_ok() {
            factored += 1;
        }
    }
    let detail = format!(
        "100 random spec fields on 20x20 buffered lattices: {factored}/100 factorized with \
         positive pivots, {dominant}/100 strictly diagonally dominant"
    );
    report(4, dominant == 100 && factored == 100, &detail);
}

#[test]
fn criterion_05_simulation_correctness() {
    let spec = SarSpec::isotropic(0.04).unwrap();
    let n = 15;
    let exact = correlation_from_center(&spec, n, 1).unwrap();
    let grid = Grid::square(n, n).unwrap();
    let field = SarSpecField::constant(grid, spec).unwrap();
    let b = assemble_b(&field, EdgePolicy::RowSumKappa2).unwrap();
    let q = precision(&b, 1).unwrap();
    let chol = factorize(&q).unwrap();
    let diag = chol.inverse_diagonal();
    let c = (n / 2) * n + n / 2;
    let draws = nonstat::sar::simulate_with(&b, &chol, 1, 5000, 1).unwrap();
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
    let detail = format!(
        "stationary isotropic 15x15, 5000 draws: max |empirical - exact| center correlation = \
         {worst:.4} (< 0.05)"
    );
    report(5, worst < 0.05, &detail);
}

#[test]
fn criterion_06_normalization_exactness() {
    // 30x30 model with a smooth range gradient; verify the normalized
    // marginal variances against an independent diag(Q⁻¹) from solves
    let table = build_table(&[2.0, 3.0, 4.0, 6.0, 8.0], Smoothness::One, 31, None).unwrap();
    let grid = Grid::square(30, 30).unwrap();
    let params: Vec<LocalParams> = (0..900)
        .map(|k| {
            let j = k % 30;
            let xi = 2.5 + 4.0 * j as f64 / 29.0;
            let sigma2 = 0.8 + 0.4 * ((k / 30) as f64 / 29.0);
            LocalParams { xi1: xi, xi2: xi, theta: 0.0, sigma2, tau2: 0.01, nu: Smoothness::One }
        })
        .collect();
    let pf = ParamFields::new(grid, params, vec![true; 900], vec![true; 900]).unwrap();
    let translated = translate_params(&pf, &table).unwrap();
    let model = build_global_model(&translated, &BuildOptions::new(1, 10)).unwrap();

    let total = model.operator().n_rows();
    let mut worst = 0.0f64;
    for i in 0..30 {
        for j in 0..30 {
            let k = model.grid().interior_to_buffered(i, j);
            // independent route: diag entry via a full solve
            let mut rhs = vec![0.0; total];
            rhs[k] = 1.0;
            let d_solve = model.factorization().solve(&rhs)[k];
            let sigma2 = pf.params[grid.idx(i, j)].sigma2;
            // the model scales fields by sigma/sqrt(norm_diag): implied
            // marginal variance = sigma² · d_solve / norm_diag
            let var = sigma2 * d_solve / model.norm_diag()[k];
            worst = worst.max((var - sigma2).abs());
        }
    }
    let detail = format!(
        "30x30 non-stationary model: max |marginal variance - sigma2(s)| = {worst:.2e} (< 1e-6)"
    );
    report(6, worst < 1e-6, &detail);
}

#[test]
fn criterion_07_end_to_end_recovery() {
    let table =
        build_table(&[2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0], Smoothness::One, 51, None).unwrap();

    // two-region truth: xi = 3 left of column 24, xi = 9 right of it
    let grid = Grid::square(48, 40).unwrap();
    let mk = |xi: f64| LocalParams {
        xi1: xi,
        xi2: xi,
        theta: 0.0,
        sigma2: 0.99,
        tau2: 0.01,
        nu: Smoothness::One,
    };
    let params: Vec<LocalParams> =
        (0..1920).map(|k| if k % 48 < 24 { mk(3.0) } else { mk(9.0) }).collect();
    let truth = ParamFields::new(grid, params, vec![true; 1920], vec![true; 1920]).unwrap();
    let translated = translate_params(&truth, &table).unwrap();
    let model = build_global_model(&translated, &BuildOptions::new(1, 18)).unwrap();
    let data = simulate_ensemble(&model, 30, 777).unwrap();

    // fit with the default 9x9 window
    let spec = WindowSpec::new(9, 1).unwrap();
    let options = FitOptions::standardized(9, Smoothness::One);
    let fit = fit_all_windows(&data, &spec, &options, 0).unwrap();

    // log-range error at centers at least w columns from the break
    let mut errs = Vec::new();
    for d in &fit.diagnostics {
        let truth_xi = if d.j <= 14 {
            3.0f64
        } else if d.j >= 33 {
            9.0
        } else {
            continue;
        };
        let est = fit.fields.params[grid.idx(d.i, d.j)].geometric_range();
        errs.push((est.ln() - truth_xi.ln()).abs());
    }
    let mae: f64 = errs.iter().sum::<f64>() / errs.len() as f64;

    // rebuild from the estimates and whiten the truth replicates
    let tr2 = translate_params(&fit.fields, &table).unwrap();
    let refit =
        build_global_model(&tr2, &BuildOptions::new(1, default_buffer(&fit.fields))).unwrap();
    let whitened: Vec<_> = data
        .replicates()
        .iter()
        .map(|f| whiten(&refit, f).unwrap())
        .collect();
    let whitened = FieldEnsemble::new(grid, whitened).unwrap();
    let rep = whiteness_stats(&whitened, refit.order()).unwrap();

    let pass = mae < 0.3
        && rep.summary.max_abs_lag_corr < 0.1
        && rep.summary.var_quantiles[0] >= 0.7
        && rep.summary.var_quantiles[4] <= 1.3;
    let detail = format!(
        "two-region truth (xi 3 vs 9, p=30, w=9): log-range MAE = {mae:.3} (< 0.3) over {} centers; \
         whitened max |lag-1 corr| = {:.4} (< 0.1), variance q05/q95 = {:.3}/{:.3} (within [0.7, 1.3])",
        errs.len(),
        rep.summary.max_abs_lag_corr,
        rep.summary.var_quantiles[0],
        rep.summary.var_quantiles[4]
    );
    report(7, pass, &detail);
}

#[test]
fn criterion_08_mc_study() {
    let design = McDesign::default();
    let results = run_mc_study(&design, 0).unwrap();

    let key = results
        .cells
        .iter()
        .find(|c| c.window == 9 && c.range_multiplier == 1.0 && c.nu == 1.0 && c.p == 30)
        .expect("key cell in the default design");
    let mut failures = Vec::new();
    if key.median_percent_error > 15.0 {
        failures.push(format!(
            "key cell median {:.2}% > 15%",
            key.median_percent_error
        ));
    }
    for &w in &design.window_sizes {
        for &m in &design.range_multipliers {
            for nu in [1.0, 2.0] {
                let med = |p: usize| {
                    results
                        .cells
                        .iter()
                        .find(|c| {
                            c.window == w && c.range_multiplier == m && c.nu == nu && c.p == p
                        })
                        .unwrap()
                        .median_percent_error
                };
                if med(30) > med(5) {
                    failures.push(format!(
                        "(w={w}, mult={m}, nu={nu}): median p30 {:.1}% > p5 {:.1}%",
                        med(30),
                        med(5)
                    ));
                }
            }
        }
    }
    let detail = format!(
        "desk-scale factorial ({} cells, 20 repetitions): key cell (w=9, range=9, nu=1, p=30) \
         median = {:.2}% (<= 15%); median error at p=30 <= p=5 for all 12 (w, range, nu) \
         combinations under common random numbers{}",
        results.cells.len(),
        key.median_percent_error,
        if failures.is_empty() { String::new() } else { format!("; violations: {}", failures.join("; ")) }
    );
    report(8, failures.is_empty(), &detail);
}

#[test]
fn criterion_09_kernel_accuracy() {
    // exponential special case
    let mut worst_half = 0.0f64;
    let mut d = 1e-3;
    while d <= 50.0 {
        let c = matern_correlation(d, Smoothness::Half).unwrap();
        worst_half = worst_half.max((c - (-d).exp()).abs());
        d *= 1.05;
    }

    // integer smoothness against the series/asymptotic oracle plus frozen
    // high-precision reference values
    let refs: &[(f64, f64, f64)] = &[
        (0.5, 1.656441120003300893696, 7.550183551240869436568),
        (1.0, 0.6019072301972345747375, 1.624838898635177482811),
        (2.0, 0.1398658818165224272846, 0.2537597545660558629373),
        (5.0, 0.004044613445452164208365, 0.005308943712223459958081),
        (9.5, 0.00003160203411042674560859, 0.00003671094477065575551215),
        (14.0, 2.858343653440249663243e-7, 3.169705631615941271787e-7),
        (20.0, 5.883057969557038177650e-10, 6.329543612292228110482e-10),
        (30.0, 2.167732001891549424867e-14, 2.276992963255826332825e-14),
    ];
    let mut worst_int = 0.0f64;
    for &(x, k1, k2) in refs {
        let c1 = matern_correlation(x, Smoothness::One).unwrap();
        let c2 = matern_correlation(x, Smoothness::Two).unwrap();
        worst_int = worst_int.max((c1 - x * k1).abs() / (x * k1));
        let expect2 = 0.5 * x * x * k2;
        worst_int = worst_int.max((c2 - expect2).abs() / expect2);
        worst_int = worst_int.max((bessel_k(1, x).unwrap() - k1).abs() / k1);
        worst_int = worst_int.max((bessel_k(2, x).unwrap() - k2).abs() / k2);
    }

    // whiten ∘ simulate recovers the driving noise
    let table = build_table(&[2.0, 3.0, 5.0], Smoothness::One, 21, None).unwrap();
    let grid = Grid::square(8, 8).unwrap();
    let pf = ParamFields::constant(
        grid,
        LocalParams { xi1: 3.0, xi2: 3.0, theta: 0.0, sigma2: 1.0, tau2: 0.0, nu: Smoothness::One },
    )
    .unwrap();
    let translated = translate_params(&pf, &table).unwrap();
    let model = build_global_model(&translated, &BuildOptions::new(1, 8)).unwrap();
    let n = model.operator().n_rows();
    use rand::Rng;
    let mut rng = nonstat::stream::substream(909, &[7]);
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let draw = {
        // scaled field corresponding to e, via the public buffered pathway
        let y = model.factorization().solve(&model.operator().matvec_transpose(&e));
        (0..n)
            .map(|k| y[k] / model.norm_diag()[k].sqrt() * model.sigma_buffered()[k])
            .collect::<Vec<f64>>()
    };
    let w = whiten_buffered(&model, &draw).unwrap();
    let worst_recovery =
        w.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);

    let pass = worst_half < 1e-10 && worst_int < 1e-8 && worst_recovery < 1e-10;
    let detail = format!(
        "nu=1/2 vs exp: max abs dev = {worst_half:.2e} (< 1e-10); nu in {{1,2}} vs reference \
         values: max rel dev = {worst_int:.2e} (< 1e-8); whiten∘simulate noise recovery: max \
         abs dev = {worst_recovery:.2e} (< 1e-10)"
    );
    report(9, pass, &detail);
}

#[test]
fn criterion_10_pipeline_determinism() {
    // drive the CLI binary end to end twice (plus a different worker
    // count) and require byte-identical outputs
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_nonstat");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let run = |args: &[&str], workers: &str| {
        let out = Command::new(bin)
            .args(args)
            .env("NONSTAT_WORKERS", workers)
            .output()
            .expect("spawn nonstat");
        assert!(
            out.status.success(),
            "command {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    };

    // small synthetic ensemble as pipeline input
    let grid = Grid::square(20, 16).unwrap();
    let pf = ParamFields::constant(
        grid,
        LocalParams { xi1: 3.0, xi2: 3.0, theta: 0.0, sigma2: 1.0, tau2: 0.01, nu: Smoothness::One },
    )
    .unwrap();
    let table = build_table(&[2.0, 3.0, 5.0], Smoothness::One, 21, None).unwrap();
    let translated = translate_params(&pf, &table).unwrap();
    let model = build_global_model(&translated, &BuildOptions::new(1, 8)).unwrap();
    let data = simulate_ensemble(&model, 8, 4).unwrap();
    let input = root.join("input.nsf");
    nonstat::io::write_ensemble(&data, &input).unwrap();

    let mut digests: Vec<Vec<(String, String)>> = Vec::new();
    for (label, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let base = root.join(label);
        std::fs::create_dir_all(&base).unwrap();
        let tdir = base.join("cal");
        run(
            &[
                "calibrate",
                "--out",
                tdir.to_str().unwrap(),
                "--nu",
                "1",
                "--n",
                "21",
                "--sweep",
                "2,3,5",
            ],
            workers,
        );
        let table_path = tdir.join("table_nu1.csv");
        let params_path = base.join("params.nsf");
        let diag_path = base.join("diag.csv");
        run(
            &[
                "fit",
                "--input",
                input.to_str().unwrap(),
                "--out",
                params_path.to_str().unwrap(),
                "--diagnostics",
                diag_path.to_str().unwrap(),
                "--window",
                "7",
            ],
            workers,
        );
        let model_dir = base.join("model");
        run(
            &[
                "build",
                "--params",
                params_path.to_str().unwrap(),
                "--table",
                table_path.to_str().unwrap(),
                "--out",
                model_dir.to_str().unwrap(),
                "--buffer",
                "8",
            ],
            workers,
        );
        let sims_path = base.join("sims.nsf");
        run(
            &[
                "simulate",
                "--model",
                model_dir.to_str().unwrap(),
                "--out",
                sims_path.to_str().unwrap(),
                "--n",
                "3",
                "--seed",
                "11",
            ],
            workers,
        );
        let cm_dir = base.join("maps");
        run(
            &[
                "corrmap",
                "--model",
                model_dir.to_str().unwrap(),
                "--out",
                cm_dir.to_str().unwrap(),
                "--at",
                "8,10",
            ],
            workers,
        );
        let white_path = base.join("white.nsf");
        let report_path = base.join("report.txt");
        run(
            &[
                "whiten",
                "--model",
                model_dir.to_str().unwrap(),
                "--input",
                input.to_str().unwrap(),
                "--out",
                white_path.to_str().unwrap(),
                "--report",
                report_path.to_str().unwrap(),
            ],
            workers,
        );
        let mc_dir = base.join("mc");
        run(
            &[
                "mc-study",
                "--out",
                mc_dir.to_str().unwrap(),
                "--windows",
                "5",
                "--multipliers",
                "1",
                "--nus",
                "1",
                "--replicates",
                "5,10",
                "--repetitions",
                "3",
                "--seed",
                "2",
            ],
            workers,
        );

        // digest every produced file except the provenance (whose input
        // paths legitimately differ across output directories)
        let mut files: Vec<(String, String)> = Vec::new();
        fn walk(dir: &std::path::Path, base: &std::path::Path, out: &mut Vec<(String, String)>) {
            for entry in std::fs::read_dir(dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    walk(&path, base, out);
                } else {
                    let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                    if rel.ends_with("provenance.toml") {
                        continue;
                    }
                    let bytes = std::fs::read(&path).unwrap();
                    out.push((rel, format!("{:x}", md5ish(&bytes))));
                }
            }
        }
        walk(&base, &base, &mut files);
        files.sort();
        assert!(files.len() >= 9, "expected at least 9 output files, got {}", files.len());
        digests.push(files);
    }

    let identical = digests[0] == digests[1] && digests[1] == digests[2];
    let detail = format!(
        "calibrate→fit→build→simulate→corrmap→whiten→mc-study re-run twice and at a different \
         worker count: {} output files byte-identical across runs: {identical}",
        digests[0].len()
    );
    report(10, identical, &detail);
}

// small stable digest for file comparison, no extra dependency
fn md5ish(bytes: &[u8]) -> u128 {
    let mut h: u128 = 0xcbf2_9ce4_8422_2325_cbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(0x0000_0100_0000_01b3_0000_0100_0000_01b3);
    }
    h
}
