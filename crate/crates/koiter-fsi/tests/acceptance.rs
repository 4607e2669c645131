//! Acceptance gate: one test per acceptance criterion. Each test prints a
//! single `PASS`/`FAIL` line with the measured constants next to their
//! pinned thresholds and then asserts. The large coupled run is shared
//! between the energy-inequality and regularity-monitor criteria.

use std::sync::OnceLock;
use std::time::Instant;

use koiter_fsi::discrete::{BoxGrid3, ScalarField2D, Spectral2D};
use koiter_fsi::geometry::{ReferenceSurface, TubularChart};
use koiter_fsi::shell::{simpson_weights, ShellModel, ShellParams};
use koiter_fsi::solver::diagnostics::{energy_baselines, regularity_diagnostics};
use koiter_fsi::solver::fluid::{shell_grid_for, FluidOptions, FluidSolver};
use koiter_fsi::solver::{time_loop, FluidState, RunParams, RunResult, ShellState};
use koiter_fsi::validation::{
    extension_convergence, frechet_consistency, geometry_closed_forms, korn_equality,
    simpson_telescoping, skew_conservation, SuiteResult,
};

const TP: f64 = 2.0 * std::f64::consts::PI;

fn report(idx: usize, name: &str, passed: bool, detail: &str, t0: Instant, budget_s: f64) {
    let dt = t0.elapsed().as_secs_f64();
    let in_budget = dt <= budget_s;
    let tag = if passed && in_budget { "PASS" } else { "FAIL" };
    println!("{tag} [{idx}/9] {name}: {detail} [{dt:.1}s of {budget_s:.0}s]");
    assert!(passed, "[{idx}/9] {name}: {detail}");
    assert!(in_budget, "[{idx}/9] {name}: took {dt:.1}s, budget {budget_s:.0}s");
}

fn report_suite(idx: usize, s: &SuiteResult, t0: Instant, budget_s: f64) {
    report(idx, s.name, s.passed, &s.detail, t0, budget_s);
}

/// Flat-channel coupled scenario on an `n×n×nz` unit box with a single-mode
/// pressure-free pulse η₀ = 1e−3·cos(2πy₁), shell (h, λ, μ) = (0.1, 1, 1).
fn pulse_run(n: usize, nz: usize, dt: f64, steps: usize) -> (ShellModel<f64>, RunResult) {
    let grid = BoxGrid3::new(n, n, nz, 1.0, 1.0, 1.0);
    let surf = ReferenceSurface::<f64>::flat_channel(1.0);
    let chart = TubularChart::new(surf, 0.25);
    let fsolver = FluidSolver::new(grid, chart, FluidOptions::new(1.0, dt, 1e-10));
    let sg = shell_grid_for(grid);
    let model = ShellModel::new(surf, sg, ShellParams::new(0.1, 1.0, 1.0, 1e-3));
    let eta0 = ScalarField2D::from_fn(sg, |y1, _| 1e-3 * (TP * y1).cos());
    let shell0 = ShellState { eta: eta0, vel: ScalarField2D::zeros(sg) };
    let mut params = RunParams::new(steps, dt);
    // the finite-difference directional Jacobian in the structure Newton
    // bottoms out near 1e-9 on the 32² shell grid, so 1e-10 is unreachable
    params.newton_tol = 1e-8;
    let res = time_loop(&model, &fsolver, shell0, FluidState::quiescent(grid), &params);
    (model, res)
}

struct BigRun {
    failure: Option<String>,
    worst_increase: f64,
    sup_w14: f64,
    sup_wh2: f64,
    base_w14: f64,
    base_wh2: f64,
}

static BIG: OnceLock<BigRun> = OnceLock::new();

/// 32×32×16 pulse, 200 steps of Δt = 1e−3, shared between criteria 5 and 9.
fn big_run() -> &'static BigRun {
    BIG.get_or_init(|| {
        let (model, res) = pulse_run(32, 16, 1e-3, 200);
        let e0 = res.ledger.rows[0].total_energy();
        let mut worst = f64::NEG_INFINITY;
        for w in res.ledger.rows.windows(2) {
            let inc = w[1].total_energy() + w[1].viscous_dissipation
                + w[1].numerical_dissipation
                - w[0].total_energy();
            worst = worst.max(inc / e0);
        }
        let reg = regularity_diagnostics(&model, &res.shells, 1e-3, 0.25);
        let (base_w14, base_wh2) = energy_baselines(&model, e0);
        BigRun {
            failure: res.failure.map(|e| e.to_string()),
            worst_increase: worst,
            sup_w14: reg.sup_w14,
            sup_wh2: reg.sup_weighted_h2,
            base_w14,
            base_wh2,
        }
    })
}

#[test]
fn acceptance_1_geometry_closed_forms() {
    let t0 = Instant::now();
    report_suite(1, &geometry_closed_forms(1000), t0, 1.0);
}

#[test]
fn acceptance_2_simpson_telescoping() {
    let t0 = Instant::now();
    report_suite(2, &simpson_telescoping(100, simpson_weights()), t0, 5.0);
}

#[test]
fn acceptance_3_frechet_consistency() {
    let t0 = Instant::now();
    report_suite(3, &frechet_consistency(20), t0, 10.0);
}

#[test]
fn acceptance_4_extension_convergence() {
    let t0 = Instant::now();
    report_suite(4, &extension_convergence(&[16, 32, 64]), t0, 60.0);
}

#[test]
fn acceptance_5_coupled_energy_inequality() {
    let t0 = Instant::now();
    let big = big_run();
    let skew = skew_conservation(1.0);
    let passed = big.failure.is_none() && big.worst_increase <= 1e-8 && skew.passed;
    let detail = format!(
        "200-step 32×32×16 pulse{}: max per-step energy increase {:.3e}·E⁰ (tolerance 1e-8); \
         inviscid frozen-wall identity: {}",
        big.failure.as_deref().map(|e| format!(" FAILED ({e})")).unwrap_or_default(),
        big.worst_increase,
        skew.detail,
    );
    report(5, "coupled-energy-inequality", passed, &detail, t0, 600.0);
}

#[test]
fn acceptance_6_korn_equality() {
    let t0 = Instant::now();
    report_suite(6, &korn_equality(16), t0, 120.0);
}

#[test]
fn acceptance_7_epsilon_uniform_regularity() {
    let t0 = Instant::now();
    // fixed two-mode scenario: a soft base mode plus a (4,2) mode whose
    // stiffness is regularization-dominated at ε = 1e−2 (killed fast) but
    // bending-dominated at ε = 1e−4 (persists and carries ∇³ mass)
    let grid = BoxGrid3::new(16, 16, 8, 1.0, 1.0, 1.0);
    let surf = ReferenceSurface::<f64>::flat_channel(1.0);
    let dt = 1.5e-4;
    let s = 0.25;
    let mut quots = Vec::new();
    let mut g3_ints = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let chart = TubularChart::new(surf, 0.25);
        let fsolver = FluidSolver::new(grid, chart, FluidOptions::new(0.01, dt, 1e-10));
        let sg = shell_grid_for(grid);
        let model = ShellModel::new(surf, sg, ShellParams::new(1.0, 1.0, 1.0, eps));
        let eta0 = ScalarField2D::from_fn(sg, |y1, y2| {
            1e-3 * (TP * y1).cos() + 2.5e-5 * (TP * (4.0 * y1 + 2.0 * y2)).cos()
        });
        let shell0 = ShellState { eta: eta0, vel: ScalarField2D::zeros(sg) };
        let mut params = RunParams::new(400, dt);
        params.newton_tol = 1e-8;
        let res = time_loop(&model, &fsolver, shell0, FluidState::quiescent(grid), &params);
        assert!(res.failure.is_none(), "ε = {eps:.0e} run failed: {:?}", res.failure.unwrap());
        let reg = regularity_diagnostics(&model, &res.shells, dt, s);
        let sp = Spectral2D::new(model.grid);
        let g3_int: f64 =
            res.shells.iter().map(|st| sp.grad3_norm_sq(&st.eta) * dt).sum();
        quots.push(reg.shift_quotient_integral);
        g3_ints.push(g3_int);
    }
    let quot_ratio = quots.iter().cloned().fold(0.0, f64::max)
        / quots.iter().cloned().fold(f64::INFINITY, f64::min);
    let g3_growth = g3_ints[2] / g3_ints[0];
    let passed =
        quot_ratio < 2.0 && g3_ints[1] > g3_ints[0] && g3_ints[2] > g3_ints[1] && g3_growth >= 2.0;
    let detail = format!(
        "s = {s} shift-quotient integrals [{:.3e}, {:.3e}, {:.3e}] for ε ∈ [1e-2, 1e-3, 1e-4], \
         spread ×{quot_ratio:.2} (< ×2); ∫‖∇³η‖² dt [{:.3e}, {:.3e}, {:.3e}] grows ×{g3_growth:.2} \
         (≥ ×2, monotone)",
        quots[0], quots[1], quots[2], g3_ints[0], g3_ints[1], g3_ints[2]
    );
    report(7, "epsilon-uniform-regularity", passed, &detail, t0, 900.0);
}

#[test]
fn acceptance_8_dt_self_convergence() {
    let t0 = Instant::now();
    // same trajectory integrated to t = 0.1 at Δt, Δt/2, Δt/4: successive
    // differences of the final total energy must shrink at first order
    let mut totals = Vec::new();
    for (dt, steps) in [(2e-3, 50usize), (1e-3, 100), (5e-4, 200)] {
        let (_, res) = pulse_run(16, 8, dt, steps);
        assert!(res.failure.is_none(), "Δt = {dt:.1e} run failed: {:?}", res.failure.unwrap());
        totals.push(res.ledger.rows.last().unwrap().total_energy());
    }
    let d1 = (totals[0] - totals[1]).abs();
    let d2 = (totals[1] - totals[2]).abs();
    let ratio = d2 / d1;
    let passed = d1 > 0.0 && (0.3..=0.75).contains(&ratio);
    let detail = format!(
        "final-energy differences under Δt halving {d1:.3e} → {d2:.3e}, contraction \
         {ratio:.3} (first order: within [0.3, 0.75])"
    );
    report(8, "dt-self-convergence", passed, &detail, t0, 600.0);
}

#[test]
fn acceptance_9_regularity_monitors() {
    let t0 = Instant::now();
    let big = big_run();
    let passed = big.failure.is_none()
        && big.sup_w14 <= 10.0 * big.base_w14
        && big.sup_wh2 <= 10.0 * big.base_wh2;
    let detail = format!(
        "200-step 32×32×16 pulse: sup W¹⁴ {:.3e} ≤ 10×{:.3e}, sup weighted-H² {:.3e} ≤ \
         10×{:.3e}",
        big.sup_w14, big.base_w14, big.sup_wh2, big.base_wh2
    );
    report(9, "regularity-monitors", passed, &detail, t0, 900.0);
}
