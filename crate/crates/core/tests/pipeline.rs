mod common;

use common::*;
use negaref::refractor::normalized_height_bound;
use negaref::*;

fn solve(s: &Scenario) -> SolveOutcome<f64> {
    let cfg = SolverConfig { auto_refine: true, ..SolverConfig::default() };
    solve_discrete(&s.problem(), &cfg).unwrap()
}

#[test]
fn solve_then_verify_both_regimes() {
    for kappa in [-1.5, -0.5] {
        let s = random_scenario(kappa, 8, 10_000, 3);
        let out = solve(&s);
        assert!(out.report.converged, "{:?}", out.report);
        assert!(out.report.surplus_m1 > 0.0);
        assert!(out.solution.within_bracket(EPSILON));

        let a = trace_cells(&out.solution, &out.grid, 1e-9).unwrap();
        let trace = raytrace_verify(&out.solution, &out.grid, &a, 1e-9).unwrap();
        assert!(trace.passes(), "{trace:?}");
        assert!(trace.tie_fraction < 0.01);

        let c_eps = fresnel_bound(&s.medium, EPSILON).unwrap().c_eps;
        let audit = energy_audit(
            &out.solution,
            &s.density,
            &out.grid,
            &AuditConfig { c_eps: Some(c_eps), seed: 9, ..AuditConfig::default() },
        )
        .unwrap();
        assert!(audit.passes(), "{audit:?}");

        let n = normalize_solution(&out.solution, &out.grid, Normalization::MinRadiusOne).unwrap();
        let a = trace_cells(&n, &out.grid, 1e-9).unwrap();
        assert!(a.max_rho() <= normalized_height_bound(&s.medium, EPSILON));
    }
}

#[test]
fn discretized_target_solves() {
    let medium = MediumPair::from_kappa(-1.5, 1.2, 0.5).unwrap();
    let d = discretize_target(&SourceDensity::uniform(1.0), north_cap(0.3), 12, 10_000).unwrap();
    let grid = build_grid(north_cap(0.4), 10_000).unwrap();
    let f = SourceDensity::uniform(1.0);
    let total = budget_total(&medium, &f, &grid, 0.1);
    let targets = d.targets.scaled(total / d.targets.total());
    let p = Problem { medium, density: &f, grid: &grid, targets: &targets, epsilon: EPSILON, lossless: false };
    let out = solve_discrete(&p, &SolverConfig { auto_refine: true, ..SolverConfig::default() }).unwrap();
    assert!(out.report.converged, "{:?}", out.report);
}

#[test]
fn weak_convergence_of_discretizations() {
    let g = SourceDensity::CosinePower { axis: Direction::north(), exponent: 3.0 };
    let cap = north_cap(0.3);
    let fine = build_grid(cap, 20_000).unwrap();
    let test_fn = |m: &Direction64| {
        let c = m.components();
        (4.0 * c[0]).sin() + (3.0 * c[1] + 1.0).cos() * c[2]
    };
    let w = fine.weights();
    let exact: f64 = csum(fine.nodes().iter().enumerate().map(|(j, x)| {
        g.value_at(j, x).unwrap() * w[j] * test_fn(x)
    }));
    let mut last = f64::INFINITY;
    for l in [8, 32, 128] {
        let d = discretize_target(&g, cap, l, 20_000).unwrap();
        assert!((d.targets.total() - d.fine_total).abs() <= 1e-10 * d.fine_total);
        let approx = csum(d.targets.directions().iter().zip(d.targets.energies()).map(|(m, &e)| e * test_fn(m)));
        let err = (approx - exact).abs();
        assert!(err < last, "l = {l}: {err} vs {last}");
        last = err;
    }
}

#[test]
fn infeasible_and_inadmissible_inputs_are_refused() {
    let s = random_scenario(-1.5, 4, 2_000, 1);
    let far = TargetMeasure::new(
        vec![Direction::north(), Direction::new(0.0, 0.0, -1.0).unwrap()],
        vec![0.01, 0.01],
    )
    .unwrap();
    let p = Problem { targets: &far, ..s.problem() };
    assert!(matches!(solve_discrete(&p, &SolverConfig::default()), Err(Error::Admissibility { .. })));

    let bad = SolverConfig { rel_tol: 0.0, ..SolverConfig::default() };
    assert!(matches!(solve_discrete(&s.problem(), &bad), Err(Error::Config(_))));
}

#[test]
fn single_precision_pipeline() {
    let medium = MediumPair32::from_kappa(-1.5, 1.2, 0.5).unwrap();
    let grid = build_grid(SphericalCap32::new(Direction32::north(), 0.4).unwrap(), 4_000).unwrap();
    let f = SourceDensity32::uniform(1.0);
    let targets = TargetMeasure32::new(
        vec![Direction32::from_spherical(0.1, 0.0), Direction32::from_spherical(0.1, 2.0), Direction32::from_spherical(0.2, 4.0)],
        vec![0.04, 0.05, 0.03],
    )
    .unwrap();
    let p = Problem { medium, density: &f, grid: &grid, targets: &targets, epsilon: 0.1f32, lossless: false };
    let cfg = SolverConfig { rel_tol: 2e-2, tie_tol: 1e-5, ..SolverConfig::default() };
    let out = solve_discrete(&p, &cfg).unwrap();
    assert!(out.report.converged, "{:?}", out.report);
}
