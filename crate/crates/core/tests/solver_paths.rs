use mollow_core::model::{build_model, SensorSpec, SystemParams};
use mollow_core::steady_state::{solve_steady_state_with, SolverMethod, SteadyStateOptions};

#[test]
fn direct_and_iterative_agree_at_sixty_four_states() {
    let p = SystemParams::new(3.0, 1.0).unwrap();
    let sensors = [
        SensorSpec::new(1.5, 1.0, 1).unwrap().with_truncation(4).unwrap(),
        SensorSpec::new(-3.0, 2.0, 3).unwrap(),
        SensorSpec::new(0.0, 2.0, 1).unwrap(),
    ];
    let m = build_model(p, &sensors, 0.3).unwrap();
    assert_eq!(m.total_dim(), 64);
    let solve = |method| {
        solve_steady_state_with(m.liouvillian(), &SteadyStateOptions { method, ..Default::default() }).unwrap()
    };
    let direct = solve(SolverMethod::Direct);
    let iterative = solve(SolverMethod::Iterative);
    assert!(direct.trace_distance(&iterative) < 1e-9);
}
