//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL` line.

use std::time::{Duration, Instant};

use fbsde_hjb::benchmarks::{merton_grid, riskmin_grid};
use fbsde_hjb::driver::{driver_terms, ito_ventzell_steps};
use fbsde_hjb::field::FieldMode;
use fbsde_hjb::*;

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> (T, Duration) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed())
    })
}

fn riskmin_params() -> MarketParams {
    MarketParams::constant(0.2, 0.4, 1.0, 1.0, Utility::Linear)
}

fn merton_params() -> MarketParams {
    MarketParams::constant(0.05, 0.2, 1.0, 1.0, Utility::Log)
}

#[test]
fn criterion_01_riskmin_value() {
    let p = riskmin_params();
    let spec = build_riskmin(&p).unwrap();
    let grid = riskmin_grid(&p, 200, 400).unwrap();
    let (r, elapsed) = single_threaded(|| solve(&spec, &grid).unwrap());
    let exact = 1.125;
    let rel = (r.y0_at_x0 - exact).abs() / exact;
    report(
        1,
        rel <= 1e-3 && elapsed.as_secs_f64() <= 10.0,
        format!("y(0,1) = {:.10}, exact {exact}, rel err {rel:.2e}, {:.2?} single-threaded", r.y0_at_x0, elapsed),
    );
}

#[test]
fn criterion_02_riskmin_control() {
    let p = riskmin_params();
    let spec = build_riskmin(&p).unwrap();
    let grid = riskmin_grid(&p, 200, 400).unwrap();
    let r = solve(&spec, &grid).unwrap();
    let nx = grid.nx();
    let (mut hits, mut total) = (0usize, 0usize);
    for n in 0..=grid.nt() {
        for &u in &r.control_row(n)[1..nx - 1] {
            total += 1;
            if (u - 1.25).abs() <= 5e-2 {
                hits += 1;
            }
        }
    }
    let share = hits as f64 / total as f64;
    report(2, share >= 0.95, format!("{hits}/{total} interior nodes within 5e-2 of 1.25 ({:.2}%)", 100.0 * share));
}

#[test]
fn criterion_03_merton_log_value() {
    let p = merton_params();
    let spec = build_merton(&p).unwrap();
    let grid = merton_grid(&p, 200, 400).unwrap();
    let (r, elapsed) = single_threaded(|| solve(&spec, &grid).unwrap());
    let exact = merton_log_value(0.0, 1.0, &p).unwrap();
    let err = (r.y0_at_x0 - exact).abs();
    report(
        3,
        (exact - 0.03125).abs() < 1e-12 && err <= 1e-3 && elapsed.as_secs_f64() <= 10.0,
        format!("y(0,1) = {:.8}, exact {exact}, abs err {err:.2e}, {:.2?} single-threaded", r.y0_at_x0, elapsed),
    );
}

#[test]
fn criterion_04_classical_equivalence() {
    let p = merton_params();
    let grid = merton_grid(&p, 200, 400).unwrap();
    let r = classical_hjb_crosscheck(&p, &grid).unwrap();
    report(
        4,
        r.max_discrepancy <= 1e-12 && r.nodes_checked > 0,
        format!(
            "max optimizer discrepancy {:.1e} over {} nodes ({} skipped), solver vs classical {:.1e}",
            r.max_discrepancy, r.nodes_checked, r.nodes_skipped, r.max_solver_gap
        ),
    );
}

#[test]
fn criterion_05_entropy_identity() {
    let start = Instant::now();
    let constant = riskmin_params();
    let ramp = riskmin_params().with_drift(|t| 0.2 * t);
    let mut pass = true;
    let mut details = Vec::new();
    for (label, p, seed) in [("constant b", &constant, 42u64), ("b = 0.2t", &ramp, 43)] {
        let id = minimal_risk_identity(p, 100_000, 1e-3, seed).unwrap();
        let e = id.entropy;
        let ok = id.mc_within_3se && id.identity_gap <= 1e-10;
        pass &= ok;
        details.push(format!(
            "{label}: H_hat {:.5} +- {:.5} vs {:.5}, identity gap {:.1e}",
            e.entropy_hat, e.std_err, e.closed_form, id.identity_gap
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed.as_secs_f64() <= 30.0;
    details.push(format!("{elapsed:.2?}"));
    report(5, pass, details.join("; "));
}

#[test]
fn criterion_06_bsde_residual() {
    let p = riskmin_params().with_drift(|t| 0.2 * t);
    let spec = build_riskmin(&p).unwrap();
    let sol = riskmin_closed_form(&p).unwrap();
    let mut rms = Vec::new();
    let mut step_rms = Vec::new();
    let mut mismatch: f64 = 0.0;
    let mut dx = 0.0;
    for dt in [1e-2f64, 5e-3, 2.5e-3] {
        let nt = (1.0 / dt).round() as usize;
        let grid = riskmin_grid(&p, 201, nt).unwrap();
        dx = grid.dx();
        let field = DecouplingField::from_fn(grid, 0, |t, x| sol.y_hat(t, x)).unwrap();
        let s = sol.clone();
        let policy = ControlPolicy::feedback("riskmin", move |t, _| s.u_hat(t));
        let bundle = simulate_forward(&spec, &policy, 2_000, dt, 7).unwrap();
        let bundle = reconstruct_backward(&field, bundle, &spec).unwrap();
        let r = bsde_residual(&spec, &bundle).unwrap();
        rms.push(r.path_rms);
        step_rms.push(r.step.rms);
        mismatch = mismatch.max(r.terminal_mismatch);
    }
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[0] / w[1]).collect();
    let halves = ratios.iter().all(|r| (r - 2.0).abs() <= 0.6);
    let bound = dx * dx;
    report(
        6,
        halves && mismatch <= bound,
        format!(
            "path RMS [{}], ratios {ratios:.3?}, per-step RMS [{}], terminal mismatch {mismatch:.1e} <= dx^2 = {bound:.1e}",
            sci(&rms),
            sci(&step_rms)
        ),
    );
}

fn brownian_spec(alpha: f64, beta: f64) -> ProblemSpec {
    ProblemSpec {
        name: "brownian".into(),
        coefficients: CoefficientSet::zero().with_alpha(move |_| alpha).with_beta(move |_| beta),
        jumps: JumpMeasure::none(),
        controls: ControlSet::interval(-1.0, 1.0, 0.1),
        horizon: 1.0,
        x0: 0.0,
        sense: Sense::Maximize,
        deterministic_coefficients: true,
        domain: (-6.0, 6.0),
    }
}

#[test]
fn criterion_07_ito_ventzell() {
    let spec = brownian_spec(0.1, 1.0);
    let dts = [1e-2f64, 5e-3, 2.5e-3];
    let mut identity_max: f64 = 0.0;
    let mut square_rms = Vec::new();
    for dt in dts {
        let nt = (1.0 / dt).round() as usize;
        let grid = SpaceTimeGrid::uniform(1.0, nt, -8.0, 8.0, 4097).unwrap();
        let bundle = simulate_forward(&spec, &ControlPolicy::Constant(0.0), 200, dt, 11).unwrap();
        let identity = DecouplingField::from_fn(grid.clone(), 0, |_, x| x).unwrap();
        let square = DecouplingField::from_fn(grid, 0, |_, x| x * x).unwrap();
        let mut steps = Vec::new();
        for p in 0..bundle.n_paths {
            for r in ito_ventzell_steps(&identity, &spec, &bundle, p, dt).unwrap() {
                identity_max = identity_max.max(r.abs());
            }
            steps.extend(ito_ventzell_steps(&square, &spec, &bundle, p, dt).unwrap());
        }
        square_rms.push(ResidualStats::from_values(&steps).rms);
    }
    let ratios: Vec<f64> = square_rms.windows(2).map(|w| w[0] / w[1]).collect();
    let decays = ratios.iter().all(|r| (r - 2.0).abs() <= 0.5);
    report(
        7,
        identity_max <= 1e-12 && decays,
        format!("identity max residual {identity_max:.1e}; x^2 per-step RMS [{}], ratios {ratios:.3?}", sci(&square_rms)),
    );
}

#[test]
fn criterion_08_comparison() {
    let p = riskmin_params();
    let base = build_riskmin(&p).unwrap();
    let grid = riskmin_grid(&p, 81, 160).unwrap();
    let tol = 10.0 * grid.max_dt();
    let y_base = solve(&base, &grid).unwrap();

    let c = 0.3;
    let mut shifted = base.clone();
    shifted.coefficients = shifted.coefficients.with_terminal(move |x| x + c);
    let y_shift = solve(&shifted, &grid).unwrap();

    let mut pushed = base.clone();
    let g0 = base.coefficients.g_driver.clone();
    pushed.coefficients = pushed.coefficients.with_driver(move |a| g0(a) + 0.01);
    let y_push = solve(&pushed, &grid).unwrap();

    let nx = grid.nx();
    let (mut err_c, mut err_t): (f64, f64) = (0.0, 0.0);
    for (j, ((a, b), d)) in
        y_base.field.y_values().iter().zip(y_shift.field.y_values()).zip(y_push.field.y_values()).enumerate()
    {
        let t = grid.t_nodes()[j / nx];
        err_c = err_c.max((b - a - c).abs());
        err_t = err_t.max((d - a - 0.01 * (1.0 - t)).abs());
    }
    let verdict = verify_comparison(&base, &shifted, &grid).unwrap().verdict;

    let decl = ComparisonDeclarations::default();
    let h_rm = check_comparison_hypotheses(&base, &decl);
    let h_mt = check_comparison_hypotheses(&build_merton(&merton_params()).unwrap(), &decl);
    let mut jumpy = base.clone();
    jumpy.jumps = JumpMeasure::single(0.5, 1.0);
    let mut coupled = base.clone();
    coupled.coefficients = coupled.coefficients.with_alpha(|a| 0.2 * a.u + a.z);
    let flags = h_rm.no_jumps
        && h_rm.alpha_independent_of_z
        && h_mt.no_jumps
        && h_mt.alpha_independent_of_z
        && !check_comparison_hypotheses(&jumpy, &decl).no_jumps
        && !check_comparison_hypotheses(&coupled, &decl).alpha_independent_of_z;
    report(
        8,
        err_c <= tol && err_t <= tol && verdict == ComparisonVerdict::Pass && flags,
        format!("terminal shift err {err_c:.1e}, driver shift err {err_t:.1e}, tol {tol:.1e}, verdict {verdict:?}, flags ok {flags}"),
    );
}

#[test]
fn criterion_09_jumps() {
    let mut spec = brownian_spec(0.0, 0.3);
    spec.coefficients = spec.coefficients.with_gamma(|_, zeta| zeta);
    spec.jumps = JumpMeasure::single(0.5, 2.0);
    let bundle = simulate_forward(&spec, &ControlPolicy::Constant(0.0), 100_000, 1e-2, 5).unwrap();
    let stats = bundle.stats(&spec);
    let z = (stats.mean_x_terminal - spec.x0).abs() / stats.se_mean_x_terminal;

    let grid = SpaceTimeGrid::uniform(1.0, 4, -3.0, 3.0, 601).unwrap();
    let cells = 5 * 601;
    let y: Vec<f64> = (0..cells).map(|j| grid.x_nodes()[j % 601].sin()).collect();
    let k: Vec<f64> = (0..cells).map(|j| 0.5 * grid.x_nodes()[j % 601].cos()).collect();
    let field = DecouplingField::new(grid, 1, y, vec![0.0; cells], k, FieldMode::StochasticReadonly).unwrap();
    let derivs = field.estimate_derivatives(2).unwrap();
    let terms_at = |eps: f64| {
        let mut s = spec.clone();
        s.coefficients = s.coefficients.with_gamma(move |_, zeta| eps * zeta);
        s.deterministic_coefficients = false;
        let ctx = DriverContext::from_field(&s, &field, 2, &derivs).unwrap();
        driver_terms(&ctx, 300 + 37, 0.0).unwrap()
    };
    let (a, b) = (terms_at(0.1), terms_at(0.05));
    let order_y = (a.jump_y / b.jump_y).log2();
    let order_k = (a.jump_k / b.jump_k).log2();
    let orders_ok = (order_y - 2.0).abs() <= 0.2 && (order_k - 1.0).abs() <= 0.2;
    report(
        9,
        z <= 4.0 && orders_ok,
        format!(
            "mean X(T) - x0 = {:.2e} ({z:.2} SE); jump-y order {order_y:.3}, jump-k order {order_k:.3}",
            stats.mean_x_terminal - spec.x0
        ),
    );
}

fn payload() -> String {
    let p = riskmin_params();
    let spec = build_riskmin(&p).unwrap();
    let grid = riskmin_grid(&p, 41, 40).unwrap();
    let solved = solve(&spec, &grid).unwrap();
    let policy = ControlPolicy::Field { grid: grid.clone(), values: solved.control_field.clone() };
    let bundle = simulate_forward(&spec, &policy, 2_000, 0.025, 42).unwrap();
    let bundle = reconstruct_backward(&solved.field, bundle, &spec).unwrap();
    let residual = bsde_residual(&spec, &bundle).unwrap();
    let entropy = minimal_risk_identity(&p, 5_000, 1e-2, 42).unwrap();
    serde_json::json!({
        "y0": solved.y0_at_x0,
        "y": solved.field.y_values(),
        "u": solved.control_field,
        "diagnostics": solved.diagnostics,
        "bundle": bundle.stats(&spec),
        "residual": residual,
        "entropy": entropy,
    })
    .to_string()
}

#[test]
fn criterion_10_determinism() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(payload)
    };
    let (one, eight, again) = (run(1), run(8), run(8));
    report(
        10,
        one == eight && eight == again,
        format!("{} byte payload, 1 vs 8 threads identical {}, rerun identical {}", one.len(), one == eight, eight == again),
    );
}
