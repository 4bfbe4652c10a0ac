//! Acceptance suite: one test per release criterion, each printing a
//! `ACCEPTANCE <n> PASS` line with its measured numbers. Tolerances are
//! pinned here, not tuned at runtime.

use std::time::Instant;

use sis_core::ensemble::run_path;
use sis_core::*;

fn p1() -> SisParams {
    SisParams::new(100.0, 0.5, 25.0, 0.02, 10.0).unwrap()
}

fn extinct_params() -> SisParams {
    SisParams::new(100.0, 0.2, 25.0, 0.02, 10.0).unwrap()
}

/// Step-doubling RK4 reference for dI/dt = beta I (N-I) - (mu+gamma) I.
fn rk4_reference(p: &SisParams, t: f64, tol: f64) -> f64 {
    if t == 0.0 {
        return p.i0();
    }
    let f = |x: f64| p.beta() * x * (p.population() - x) - p.mu_plus_gamma() * x;
    let run = |steps: usize| {
        let h = t / steps as f64;
        let mut x = p.i0();
        for _ in 0..steps {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x
    };
    let mut steps = (64.0_f64)
        .max(8.0 * t * p.delta().abs().max(p.beta() * p.population()))
        .ceil() as usize;
    let mut prev = run(steps);
    loop {
        steps *= 2;
        let next = run(steps);
        if (next - prev).abs() <= tol * next.abs().max(1e-30) || steps > 1 << 24 {
            return next;
        }
        prev = next;
    }
}

fn uniform(key: &mut u64, lo: f64, hi: f64) -> f64 {
    *key = sis_core::rng::mix2(*key, 1);
    lo + (hi - lo) * (*key >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn acceptance_1_deterministic_exactness() {
    let start = Instant::now();
    let mut key = 0xACC1u64;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = uniform(&mut key, 10.0, 1000.0);
        let mg = uniform(&mut key, 0.1, 50.0);
        let beta = uniform(&mut key, 0.3, 3.0) * mg / n;
        let i0 = uniform(&mut key, 0.02, 0.98) * n;
        let p = SisParams::new(n, beta, mg, 0.0, i0).unwrap();
        let t_end = (12.0 / p.delta().abs().max(4.0)).min(3.0);
        let grid = TimeGrid::new(t_end, 100).unwrap();
        let traj = deterministic_solution(&p, &grid);
        for k in 1..grid.n_knots() {
            let reference = rk4_reference(&p, grid.knot(k), 1e-11);
            let rel = (traj.states[k] - reference).abs() / reference.abs().max(1e-30);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 1 {}: deterministic vs step-doubling RK4, worst rel err {worst:.3e} \
         (tol 1e-8) over 20 param sets x 100 points in {elapsed:.2?}",
        if worst <= 1e-8 { "PASS" } else { "FAIL" }
    );
    assert!(worst <= 1e-8, "worst relative error {worst}");
    assert!(elapsed.as_secs_f64() < 1.0, "criterion budget is 1 s");
}

#[test]
fn acceptance_2_sigma_zero_collapse() {
    let start = Instant::now();
    let p = p1().with_sigma(0.0).unwrap();

    // Exact evaluators on a 2^10 grid over [0, 1].
    let grid = TimeGrid::new(1.0, 1 << 10).unwrap();
    let det = deterministic_solution(&p, &grid);
    let path = sample_path(grid, 7);
    let strat = stratonovich_exact(&p, &path);
    let wz = wong_zakai_exact(&p, &path);
    let tvd = time_varying_deterministic(&p, &vec![p.beta(); grid.n_cells()], &grid).unwrap();
    let max_log_gap = |t: &Trajectory| {
        (0..grid.n_knots())
            .map(|k| (t.log_state(k) - det.log_state(k)).abs())
            .fold(0.0f64, f64::max)
    };
    let (e_strat, e_wz, e_tvd) = (max_log_gap(&strat), max_log_gap(&wz), max_log_gap(&tvd));

    // Schemes at their pinned meshes over [0, 0.1].
    let rel_term = |traj: &Trajectory, reference: &Trajectory| {
        (traj.terminal() - reference.terminal()).abs() / reference.terminal()
    };
    let g_em = TimeGrid::new(0.1, 1000).unwrap(); // h = 1e-4
    let det_em = deterministic_solution(&p, &g_em);
    let e_em_gray = rel_term(&euler_maruyama(&p, Model::ItoGray, &sample_path(g_em, 1)).unwrap(), &det_em);
    let e_em_corr = rel_term(
        &euler_maruyama(&p, Model::ItoCorrected, &sample_path(g_em, 1)).unwrap(),
        &det_em,
    );
    let e_logodds = rel_term(&logodds_euler(&p, &sample_path(g_em, 1)), &det_em);
    let g_heun = TimeGrid::new(0.1, 200).unwrap(); // h = 5e-4
    let det_heun = deterministic_solution(&p, &g_heun);
    let e_heun = rel_term(&heun_stratonovich(&p, &sample_path(g_heun, 1)).unwrap(), &det_heun);
    let g_rk = TimeGrid::new(0.1, 1 << 8).unwrap();
    let det_rk = deterministic_solution(&p, &g_rk);
    let e_rk4 = rel_term(&wz_rk4(&p, &sample_path(g_rk, 1), 16).unwrap(), &det_rk);

    let ok = e_strat <= 1e-10
        && e_wz <= 1e-12
        && e_tvd <= 1e-12
        && e_em_gray <= 5e-3
        && e_em_corr <= 5e-3
        && e_logodds <= 5e-3
        && e_heun <= 1e-5
        && e_rk4 <= 1e-6;
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 2 {}: sigma=0 collapse; exact evaluators {e_strat:.1e}/{e_wz:.1e}/{e_tvd:.1e} \
         (tol 1e-10/1e-12/1e-12), EM {e_em_gray:.1e},{e_em_corr:.1e} (5e-3), logodds {e_logodds:.1e} (5e-3), \
         heun {e_heun:.1e} (1e-5), rk4 {e_rk4:.1e} (1e-6) in {elapsed:.2?}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
    assert!(elapsed.as_secs_f64() < 10.0, "criterion budget is 10 s");
}

#[test]
fn acceptance_3_wong_zakai_convergence() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        schema_version: 1,
        params: p1().raw(),
        t_end: 1.0,
        cells: 16,
        scheme: Method::LogoddsEuler,
        model: Model::Stratonovich,
        substeps: 1,
        n_paths: 100,
        base_seed: 0x5150,
        refinement_levels: 9,      // meshes 2^-4 .. 2^-12
        reference_extra_levels: 6, // reference grid 2^18
        crossing_band: None,
        burn_in_fraction: 0.0,
    };
    let table = wz_convergence_study(&cfg).unwrap();
    let medians: Vec<f64> = table.rows.iter().map(|r| r.median_error).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    let ratio = medians[0] / medians[medians.len() - 1];
    let tail_orders: Vec<f64> = table.rows[table.rows.len() - 3..]
        .iter()
        .map(|r| r.observed_order.unwrap())
        .collect();
    let orders_in_band = tail_orders.iter().all(|o| (0.2..=1.2).contains(o));
    let ok = decreasing && ratio >= 8.0 && orders_in_band;
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 3 {}: dyadic ladder 2^4..2^12, 100 seeds; medians strictly decreasing = \
         {decreasing}, first/final = {ratio:.1} (>= 8), tail orders {tail_orders:?} in [0.2, 1.2] \
         in {elapsed:.2?}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "medians: {medians:?}");
    assert!(elapsed.as_secs_f64() < 300.0, "criterion budget is 5 min");
}

#[test]
fn acceptance_4_interpretation_separation() {
    let start = Instant::now();
    let mut params = p1().raw();
    params.sigma = 0.03;
    let cfg = ExperimentConfig {
        schema_version: 1,
        params,
        t_end: 1.0,
        cells: 16,
        scheme: Method::EulerMaruyama,
        model: Model::ItoCorrected,
        substeps: 1,
        n_paths: 200,
        base_seed: 0xC0DE,
        refinement_levels: 9,      // meshes 2^-4 .. 2^-12
        reference_extra_levels: 4, // reference grid 2^16
        crossing_band: None,
        burn_in_fraction: 0.0,
    };
    let (corrected, gray) = scheme_cross_check(&cfg).unwrap();
    let med = |t: &ConvergenceTable| -> Vec<f64> { t.rows.iter().map(|r| r.median_error).collect() };
    let (mc, mg) = (med(&corrected), med(&gray));
    let corrected_decreasing = mc.windows(2).all(|w| w[1] < w[0]);
    let corrected_ratio = mc[0] / mc[mc.len() - 1];
    let separation = mg[mg.len() - 1] / mc[mc.len() - 1];
    let gray_tail = &mg[mg.len() - 3..];
    let gray_stable = gray_tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / gray_tail.iter().cloned().fold(f64::INFINITY, f64::min)
        <= 1.5;
    let ok = corrected_decreasing && corrected_ratio >= 4.0 && separation >= 5.0 && gray_stable;
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 4 {}: corrected-drift errors decreasing = {corrected_decreasing} \
         (first/final {corrected_ratio:.0} >= 4); plain-drift floor {:.3} = {separation:.1}x \
         corrected final (>= 5), stable tail = {gray_stable}; in {elapsed:.2?}",
        if ok { "PASS" } else { "FAIL" },
        mg[mg.len() - 1]
    );
    assert!(ok, "corrected: {mc:?}, gray: {mg:?}");
    assert!(elapsed.as_secs_f64() < 300.0, "criterion budget is 5 min");
}

#[test]
fn acceptance_5_threshold_dichotomy() {
    let start = Instant::now();

    // (a) extinct regime: r0 = 0.8, sup eta = delta = -5.
    let cfg_extinct = ExperimentConfig {
        schema_version: 1,
        params: extinct_params().raw(),
        t_end: 200.0,
        cells: 12_800, // h = 1/64
        scheme: Method::LogoddsEuler,
        model: Model::Stratonovich,
        substeps: 1,
        n_paths: 500,
        base_seed: 0xE57,
        refinement_levels: 0,
        reference_extra_levels: 6,
        crossing_band: None,
        burn_in_fraction: 0.0,
    };
    let (report, _) = run_ensemble(&cfg_extinct).unwrap();
    let mut rates: Vec<f64> = (0..cfg_extinct.n_paths as u64)
        .map(|i| lyapunov_estimate(&run_path(&cfg_extinct, i).unwrap(), 0.0).unwrap())
        .collect();
    rates.sort_by(|a, b| a.total_cmp(b));
    let mean = report.lyapunov.mean;
    let p95 = rates[(0.95 * (rates.len() - 1) as f64).round() as usize];
    let median_terminal = report.terminal.q50;
    let ok_a = (-5.5..=-4.5).contains(&mean)
        && p95 <= -4.5
        && median_terminal <= 1e-3 * 100.0
        && report.underflow;

    // (b) recurrent regime: r0 = 2 at the reference parameters.
    let p = p1();
    let verdict = recurrence_classify(&p).unwrap();
    let xi = eta_root(&CoefficientTriple::strat_corrected(&p)).unwrap();
    let cfg_rec = ExperimentConfig {
        schema_version: 1,
        params: p.raw(),
        t_end: 200.0,
        cells: 204_800, // h = 2^-10
        scheme: Method::LogoddsEuler,
        model: Model::Stratonovich,
        substeps: 1,
        n_paths: 200,
        base_seed: 0xBEEF,
        refinement_levels: 0,
        reference_extra_levels: 6,
        crossing_band: Some([xi - 5.0, xi + 5.0]),
        burn_in_fraction: 0.0,
    };
    let trajectories: Vec<Trajectory> = (0..cfg_rec.n_paths as u64)
        .map(|i| run_path(&cfg_rec, i).unwrap())
        .collect();
    let mut counts: Vec<u64> = trajectories
        .iter()
        .map(|t| crossing_count(t, xi - 5.0, xi + 5.0).unwrap())
        .collect();
    counts.sort_unstable();
    let median_crossings = counts[counts.len() / 2];
    let bracket = persistence_bracket(&trajectories, xi, 0.5).unwrap();
    let ok_b = verdict.verdict == Recurrence::RecurrentOnInterior
        && (xi - 49.0004).abs() < 1e-3
        && median_crossings >= 3
        && bracket.fraction >= 0.9;

    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 5 {}: (a) Lyapunov mean {mean:.4} in [-5.5, -4.5], p95 {p95:.4} <= -4.5, \
         median terminal {median_terminal:.1e} <= 0.1, underflow flagged = {}; \
         (b) verdict {:?}, xi = {xi:.4}, median band excursions {median_crossings} >= 3, \
         trailing-half bracketing {:.3} >= 0.9; in {elapsed:.2?}",
        if ok_a && ok_b { "PASS" } else { "FAIL" },
        report.underflow,
        verdict.verdict,
        bracket.fraction
    );
    assert!(ok_a, "extinct-regime checks failed");
    assert!(ok_b, "recurrent-regime checks failed");
    assert!(elapsed.as_secs_f64() < 600.0, "criterion budget is 10 min");
}

#[test]
fn acceptance_6_general_framework() {
    let start = Instant::now();
    let p = p1();

    // Ordering harness on the removal-dominated pair: same f and g, h
    // dropped on the high side.
    let low = CoefficientTriple::strat_corrected(&p);
    let (f_src, g_src) = (low.clone(), low.clone());
    let high = CoefficientTriple::new(
        "no-removal",
        std::sync::Arc::new(move |x| f_src.f_at(x)),
        std::sync::Arc::new(|_| 0.0),
        vec![std::sync::Arc::new(move |x| g_src.g_at(0, x))],
        p.population(),
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let noise: Vec<Vec<BrownianPath>> = (0..100).map(|s| vec![sample_path(grid, s)]).collect();
    let ordering = comparison_harness(&low, &high, &noise, p.i0()).unwrap();

    // Roots against the closed-form quadratics.
    let strat = CoefficientTriple::strat_corrected(&p);
    let gray = CoefficientTriple::ito_gray(&p);
    let xi_strat = eta_root(&strat).unwrap();
    let xi_gray = eta_root(&gray).unwrap();
    let exact_strat = strat.eta_closed().unwrap().root_in(p.population()).unwrap();
    let exact_gray = gray.eta_closed().unwrap().root_in(p.population()).unwrap();
    let root_err = (xi_strat - exact_strat)
        .abs()
        .max((xi_gray - exact_gray).abs());
    let roots_ok = root_err <= 1e-9
        && (xi_strat - 49.000_399_680_319_64).abs() <= 1e-6
        && (xi_gray - 48.957_880_828_179_885).abs() <= 1e-6
        && (exact_gray - ito_persistence_level(&p).unwrap()).abs() <= 1e-9;

    // Boundary non-attainment for the log-odds scheme across both regimes.
    let mut interior_ok = true;
    for params in [p, extinct_params()] {
        for seed in 0..50u64 {
            let grid = TimeGrid::new(20.0, 1 << 12).unwrap();
            let traj = logodds_euler(&params, &sample_path(grid, seed));
            interior_ok &= traj.strictly_interior(params.population()) && traj.boundary.clamps == 0;
        }
    }

    let ok = ordering.violations == 0 && roots_ok && interior_ok;
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 6 {}: ordering violations {} (of {} paths x {} steps), \
         root-vs-quadratic error {root_err:.2e} <= 1e-9 (xi_strat {xi_strat:.6}, xi_gray {xi_gray:.6}), \
         log-odds interior everywhere = {interior_ok}; in {elapsed:.2?}",
        if ok { "PASS" } else { "FAIL" },
        ordering.violations,
        ordering.paths,
        ordering.steps_per_path
    );
    assert!(ok);
    assert!(elapsed.as_secs_f64() < 120.0, "criterion budget is 2 min");
}

#[test]
fn acceptance_7_scale_function() {
    let start = Instant::now();
    let p = p1();
    let theta_zero = scale_density(&p, 0.0).unwrap();
    let theta_minus_one = scale_density(&p, -1.0).unwrap();
    let theta_rel = (theta_minus_one - 99.334_507_142_971_596).abs() / 99.334_507_142_971_596;

    let mut key = 0x5CA7Eu64;
    let mut agree = 0;
    let mut checked = 0;
    while checked < 100 {
        let n = uniform(&mut key, 20.0, 500.0);
        let mg = uniform(&mut key, 1.0, 50.0);
        let beta = uniform(&mut key, 0.2, 3.0) * mg / n;
        let sigma = uniform(&mut key, 0.5, 3.0) / n;
        let p = SisParams::new(n, beta, mg, sigma, n / 2.0).unwrap();
        let spec = ScaleSpec::from_params(&p).unwrap();
        if spec.linear_coef.abs() < 0.05 || spec.exp_coef < 0.05 {
            continue; // numerically undecidable hair at the threshold
        }
        let v = recurrence_classify(&p).unwrap();
        if v.psi_left_diverges == (p.delta() >= 0.0) && v.psi_right_diverges {
            agree += 1;
        }
        checked += 1;
    }
    let ok = theta_zero == 1.0 && theta_rel <= 1e-6 && agree == 100;
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 7 {}: theta(0) = {theta_zero} (exact), theta(-1) rel err {theta_rel:.2e} \
         <= 1e-6, doubling test agrees with sign(delta) on {agree}/100 random sets; in {elapsed:.2?}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
    assert!(elapsed.as_secs_f64() < 60.0, "criterion budget is 1 min");
}

#[test]
fn acceptance_8_reproducibility() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        schema_version: 1,
        params: p1().raw(),
        t_end: 2.0,
        cells: 1 << 10,
        scheme: Method::LogoddsEuler,
        model: Model::Stratonovich,
        substeps: 1,
        n_paths: 64,
        base_seed: 0xD15C,
        refinement_levels: 0,
        reference_extra_levels: 6,
        crossing_band: Some([44.0, 54.0]),
        burn_in_fraction: 0.0,
    };
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let (report, _) = run_ensemble(&cfg).unwrap();
                emit::report_json(&report)
            })
    };
    let one = run_with(1);
    let eight = run_with(8);
    let rerun = run_with(8);
    let ok = one == eight && eight == rerun;
    let elapsed = start.elapsed();
    println!(
        "ACCEPTANCE 8 {}: reports byte-identical across 1 and 8 workers and across reruns \
         ({} bytes); in {elapsed:.2?}",
        if ok { "PASS" } else { "FAIL" },
        one.len()
    );
    assert!(ok);
    assert!(elapsed.as_secs_f64() < 60.0, "criterion budget is 1 min");
}
