//! Monte Carlo cross-checks: simulated policy values agree with PDE values
//! within statistical plus discretization error, and no recorded policy
//! beats the reference.

mod common;

use common::{bc, benchmark_grid, benchmark_problem, reference};
use hjb_lab::diagnostics::{detect_floor, FLOOR_RATIO_DEFAULT};
use hjb_lab::grid::GridSpec;
use hjb_lab::iterate::{run_gia, run_pia, IterationConfig};
use hjb_lab::montecarlo::{simulate_policy_value, McConfig};

const POINTS: [(f64, f64); 5] = [(0.0, 0.0), (0.0, 1.0), (0.0, -1.0), (0.25, 0.5), (0.5, -2.0)];

fn node(grid: &GridSpec, t: f64, x: f64) -> (usize, usize) {
    let i = (t / grid.dt()).round() as usize;
    let j = ((x - grid.x_min) / grid.dx()).round() as usize;
    assert!((grid.t(i) - t).abs() < 1e-12 && (grid.x(j) - x).abs() < 1e-12);
    (i, j)
}

fn discretization_floor() -> f64 {
    let trace = run_gia(
        &benchmark_problem(),
        &benchmark_grid(),
        &bc(),
        &IterationConfig::default(),
        &reference().value,
    )
    .unwrap();
    detect_floor(&trace.errors, FLOOR_RATIO_DEFAULT).unwrap().level
}

#[test]
fn simulated_policy_value_matches_the_pde_at_five_points() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    // Force six iterates so the fifth policy exists.
    let config = IterationConfig {
        max_iters: 6,
        stop_tol: 1e-30,
        record_fields: true,
        ..IterationConfig::default()
    };
    let trace = run_pia(&problem, &grid, &bc(), &config, &reference().value).unwrap();
    let v5 = &trace.values.as_ref().unwrap()[5];
    let a5 = &trace.policies.as_ref().unwrap()[5];
    let floor = discretization_floor();
    let mc = McConfig {
        n_paths: 50_000,
        n_steps: 400,
        seed: 7,
        antithetic: true,
    };
    for (t, x) in POINTS {
        let est = simulate_policy_value(&problem, a5, t, x, &mc).unwrap();
        let (i, j) = node(&grid, t, x);
        let gap = (est.mean - v5.at(i, j)).abs();
        let bound = 3.0 * est.std_error + 2.0 * floor;
        eprintln!(
            "mc at ({t}, {x}): mean {} vs pde {}, gap {gap}, bound {bound}",
            est.mean,
            v5.at(i, j)
        );
        assert!(gap <= bound, "gap {gap} above {bound} at ({t}, {x})");
        assert!(!est.escape_warning);
    }
}

#[test]
fn no_recorded_policy_beats_the_reference() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let config = IterationConfig {
        record_fields: true,
        ..IterationConfig::default()
    };
    let trace = run_pia(&problem, &grid, &bc(), &config, &reference().value).unwrap();
    let floor = discretization_floor();
    let (i, j) = node(&grid, 0.0, 0.0);
    let v_star = reference().value.at(i, j);
    let mc = McConfig {
        n_paths: 20_000,
        n_steps: 400,
        seed: 19,
        antithetic: true,
    };
    for (n, policy) in trace.policies.as_ref().unwrap().iter().enumerate() {
        let est = simulate_policy_value(&problem, policy, 0.0, 0.0, &mc).unwrap();
        let bound = v_star + 3.0 * est.std_error + floor;
        eprintln!("policy {n}: mc mean {} vs bound {bound}", est.mean);
        assert!(est.mean <= bound, "policy {n} beats the reference: {} > {bound}", est.mean);
    }
    let est = simulate_policy_value(&problem, &reference().policy, 0.0, 0.0, &mc).unwrap();
    assert!(est.mean <= v_star + 3.0 * est.std_error + floor);
}

#[test]
fn benchmark_paths_stay_inside_the_sanity_box() {
    let problem = benchmark_problem();
    let mc = McConfig {
        n_paths: 10_000,
        n_steps: 400,
        seed: 3,
        antithetic: false,
    };
    let est = simulate_policy_value(&problem, &reference().policy, 0.0, 0.0, &mc).unwrap();
    assert_eq!(est.escaped_paths, 0);
    assert!(!est.escape_warning);
    let again = simulate_policy_value(&problem, &reference().policy, 0.0, 0.0, &mc).unwrap();
    assert_eq!(est.mean.to_bits(), again.mean.to_bits());
    assert_eq!(est.std_error.to_bits(), again.std_error.to_bits());
}
