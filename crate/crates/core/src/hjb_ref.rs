//! Reference solver for the Bellman equation
//!
//!   dv/dt + (sigma^2/2) v_xx + sup_a { b(a,t,x) v_x + f(a,t,x) } = 0,
//!   v(T, .) = g,
//!
//! by Howard iteration inside every backward time step: alternate a nodewise
//! policy update with one implicit linear solve until the row stops moving,
//! then store the row together with the policy recomputed from it, so the
//! stored pair is a fixed point of the discrete scheme.
//!
//! Policy updates maximize the same upwinded difference quotients the
//! implicit solver applies (forward quotient where the drift is nonnegative,
//! backward where it is negative). Keeping the update and the solver on one
//! discrete Hamiltonian makes every update an ascent step for the M-matrix
//! system; maximizing a different quotient (for example the central one) can
//! lose monotonicity at the difference level even though it looks natural
//! analytically.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PolicyField, ValueField};
use crate::linpde::{step_rows, BoundaryCondition};
use crate::problem::ControlProblem;

pub const INNER_TOL_DEFAULT: f64 = 1e-12;
pub const INNER_MAX_DEFAULT: usize = 50;

/// Value field and maximizing policy returned by [`solve_bellman`].
pub struct BellmanSolution {
    pub value: ValueField,
    pub policy: PolicyField,
}

/// Forward and backward difference quotients at column `j` of a row;
/// both collapse to the one available side at the boundary columns.
pub(crate) fn one_sided_quotients(row: &[f64], j: usize, dx: f64) -> (f64, f64) {
    let last = row.len() - 1;
    if j == 0 {
        let q = (row[1] - row[0]) / dx;
        (q, q)
    } else if j == last {
        let q = (row[last] - row[last - 1]) / dx;
        (q, q)
    } else {
        ((row[j + 1] - row[j]) / dx, (row[j] - row[j - 1]) / dx)
    }
}

/// Nodewise policy update for one time level: for each column, take the
/// Hamiltonian maximizer for the forward quotient and for the backward
/// quotient, then keep whichever scores higher on the upwinded discrete
/// Hamiltonian  max(b,0)*p_fw + min(b,0)*p_bw + f.
pub(crate) fn improve_row(
    problem: &ControlProblem,
    grid: &GridSpec,
    t: f64,
    row: &[f64],
) -> Result<Vec<f64>> {
    let dx = grid.dx();
    let mut out = Vec::with_capacity(row.len());
    for j in 0..row.len() {
        let x = grid.x(j);
        let (pf, pb) = one_sided_quotients(row, j, dx);
        let cand_f = problem.argmax_control(t, x, pf)?;
        let a = if pf == pb {
            cand_f
        } else {
            let cand_b = problem.argmax_control(t, x, pb)?;
            let upwinded = |a: f64| {
                let b = (problem.drift)(a, t, x);
                b.max(0.0) * pf + b.min(0.0) * pb + (problem.running_reward)(a, t, x)
            };
            if upwinded(cand_f) >= upwinded(cand_b) {
                cand_f
            } else {
                cand_b
            }
        };
        out.push(a);
    }
    Ok(out)
}

/// Evaluate drift and running-reward rows under a fixed policy row.
pub(crate) fn policy_rows(
    problem: &ControlProblem,
    grid: &GridSpec,
    t: f64,
    a_row: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut mu = Vec::with_capacity(a_row.len());
    let mut rho = Vec::with_capacity(a_row.len());
    for (j, &a) in a_row.iter().enumerate() {
        let x = grid.x(j);
        let b = (problem.drift)(a, t, x);
        let f = (problem.running_reward)(a, t, x);
        if !b.is_finite() {
            return Err(Error::NonFiniteCoefficient { what: "advection", t, x });
        }
        if !f.is_finite() {
            return Err(Error::NonFiniteCoefficient { what: "source", t, x });
        }
        mu.push(b);
        rho.push(f);
    }
    Ok((mu, rho))
}

/// Solve the Bellman equation on the grid. `inner_tol` and `inner_max`
/// bound the per-step Howard loop; see [`INNER_TOL_DEFAULT`] and
/// [`INNER_MAX_DEFAULT`] for the standard settings.
pub fn solve_bellman(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    inner_tol: f64,
    inner_max: usize,
) -> Result<BellmanSolution> {
    if !(inner_tol.is_finite() && inner_tol > 0.0) {
        return Err(Error::InvalidProblem(format!(
            "inner tolerance must be positive and finite, got {inner_tol}"
        )));
    }
    if inner_max < 1 {
        return Err(Error::InvalidProblem(
            "inner iteration budget must be at least 1".into(),
        ));
    }
    problem.validate_on(grid)?;

    let nt = grid.nt;
    let mut value = ValueField::constant(*grid, 0.0);
    let mut policy = PolicyField::constant(*grid, 0.0);

    for j in 0..grid.n_cols() {
        let x = grid.x(j);
        let g = (problem.terminal_reward)(x);
        if !g.is_finite() {
            return Err(Error::NonFiniteCoefficient {
                what: "terminal",
                t: grid.horizon,
                x,
            });
        }
        value.set(nt, j, g);
    }
    let terminal_policy = improve_row(problem, grid, grid.horizon, value.row(nt))?;
    policy.row_mut(nt).copy_from_slice(&terminal_policy);

    let dhalf: Vec<Vec<f64>> = (0..nt)
        .map(|i| {
            (0..grid.n_cols())
                .map(|j| problem.diffusion_sq_half(grid.t(i), grid.x(j)))
                .collect()
        })
        .collect();

    for i in (0..nt).rev() {
        let t = grid.t(i);
        let next = value.row(i + 1).to_vec();
        let mut w = next.clone();
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..inner_max {
            let a_row = improve_row(problem, grid, t, &w)?;
            let (mu, rho) = policy_rows(problem, grid, t, &a_row)?;
            let w_new = step_rows(grid, i, &next, &mu, &rho, &dhalf[i], bc)?;
            residual = w
                .iter()
                .zip(&w_new)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            w = w_new;
            if residual < inner_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PolicyLoopStalled {
                time_index: i,
                max_iters: inner_max,
                residual,
            });
        }
        let a_row = improve_row(problem, grid, t, &w)?;
        value.row_mut(i).copy_from_slice(&w);
        policy.row_mut(i).copy_from_slice(&a_row);
    }

    Ok(BellmanSolution { value, policy })
}
