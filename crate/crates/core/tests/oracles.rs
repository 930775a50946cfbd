mod common;

use nalgebra::DVector;
use turnpike_core::{ocp, pmp};

#[test]
fn unconstrained_lq_matches_riccati() {
    let sc = common::lq_scenario();
    let problem = sc.ocp_with(&DVector::from_vec(vec![1.0, -0.5]), 4.0, 16);
    let pair = ocp::solve(&problem, 1).unwrap();
    let (inputs, value) = common::riccati(&problem);
    let scale = inputs.iter().map(|u| u.amax()).fold(1.0, f64::max);
    let worst = pair.inputs.iter().zip(&inputs).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    assert!(worst <= 1e-8 * scale, "input mismatch {worst:e}");
    assert!((pair.objective - value).abs() <= 1e-8 * value.abs().max(1.0), "{} vs {value}", pair.objective);
}

#[test]
fn small_problem_matches_brute_force() {
    let sc = common::load("two_cycle.json");
    let mut problem = sc.ocp_with(&DVector::from_vec(vec![1.4, 0.4]), 1.5, 6);
    problem.bounds.upper[0] = 1.2;
    let pair = ocp::solve(&problem, 5).unwrap();
    let (u, value) = common::brute_force(&problem, 64);
    let worst = pair.inputs.iter().zip(&u).map(|(a, b)| (a[0] - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-4, "inputs {:?} vs {u:?}", pair.inputs);
    assert!((pair.objective - value).abs() <= 1e-4 * value.abs().max(1.0));
    // the tightened box must actually bind somewhere
    assert!(pair.diagnostics.active.iter().any(|a| a[0] != 0), "{u:?}");
}

#[test]
fn objective_recomputation_is_consistent() {
    let sc = common::load("two_cycle.json");
    let problem = sc.ocp(&(sc.nominal.clone().unwrap() * 1.2), 6.0);
    let pair = ocp::solve(&problem, 2).unwrap();
    let sim = common::simulated_cost(&problem, &pair.inputs, 64);
    assert!((pair.objective - sim).abs() <= 1e-6 * sim.abs().max(1.0), "{} vs {sim}", pair.objective);
    assert!((ocp::objective(&pair, &problem) - pair.objective).abs() <= 1e-9 * sim.abs().max(1.0));
}

#[test]
fn multipliers_match_interval_switching_function() {
    let sc = common::load("two_cycle.json");
    let problem = sc.ocp(&(sc.nominal.clone().unwrap() * 0.5), 6.0);
    let pair = ocp::solve(&problem, 4).unwrap();
    let adjoint = pmp::costate(&pair, &problem);
    let s = pmp::switching_functions(&pair, &adjoint, &problem);
    let scale = pair.diagnostics.multipliers.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let worst = pair
        .diagnostics
        .multipliers
        .iter()
        .zip(&s)
        .map(|(g, s)| (g - s * pair.step).amax())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-8 * scale.max(1.0), "{worst:e} against {scale:e}");
    assert!(adjoint.terminal_residual <= 1e-12 * adjoint.nodes[0].amax().max(1.0));
}
