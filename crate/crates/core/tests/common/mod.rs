//! Shared fixture: the benchmark problem (drift sin a, reward cos a,
//! terminal arctan, sigma = sqrt 2) on its default grid, plus a reference
//! solution computed once per test binary.
#![allow(dead_code)]

use std::sync::OnceLock;

use hjb_lab::grid::GridSpec;
use hjb_lab::hjb_ref::{solve_bellman, BellmanSolution, INNER_MAX_DEFAULT, INNER_TOL_DEFAULT};
use hjb_lab::linpde::BoundaryCondition;
use hjb_lab::problem::{make_example, ControlProblem, ExampleParams};

pub fn benchmark_grid() -> GridSpec {
    GridSpec::new(-6.0, 6.0, 599, 1.0, 400).unwrap()
}

pub fn benchmark_problem() -> ControlProblem {
    make_example(ExampleParams::unit())
}

pub fn bc() -> BoundaryCondition<'static> {
    BoundaryCondition::LinearExtrapolation
}

pub fn reference() -> &'static BellmanSolution {
    static REF: OnceLock<BellmanSolution> = OnceLock::new();
    REF.get_or_init(|| {
        solve_bellman(
            &benchmark_problem(),
            &benchmark_grid(),
            &bc(),
            INNER_TOL_DEFAULT,
            INNER_MAX_DEFAULT,
        )
        .unwrap()
    })
}
