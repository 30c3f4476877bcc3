//! Policy improvement and gradient iteration drivers.
//!
//! Both algorithms build a sequence of value iterates v^0, v^1, ... by
//! alternating policy evaluation (one linear PDE solve) with a nodewise
//! policy update:
//!
//! * policy improvement: v^n solves the linear PDE with advection b^{a^n}
//!   and source f^{a^n}; a^{n+1} maximizes the upwinded discrete Hamiltonian
//!   built from v^n's one-sided difference quotients (see `hjb_ref`);
//! * gradient iteration: the drift-gradient product is frozen one iterate
//!   back. a^n maximizes the Hamiltonian at the central difference quotient
//!   p^{n-1} of v^{n-1}, and v^n solves a pure source problem with
//!   rho = b^{a^n} p^{n-1} + f^{a^n} and zero advection.
//!
//! A run stops once consecutive iterates differ by less than `stop_tol` in
//! sup norm over the whole grid, or after `max_iters` evaluations. The trace
//! records, per iterate, the sup error against a reference solution on the
//! reporting window, the consecutive difference, the evaluation wall time,
//! and optionally the value and policy fields themselves.

use std::io::{self, Write};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{
    sup_norm_diff, sup_norm_diff_window, GridSpec, PolicyField, ValueField,
};
use crate::hjb_ref::improve_row;
use crate::linpde::{solve_backward, BoundaryCondition, GridPoint, PdeCoefficients};
use crate::problem::ControlProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    PolicyImprovement,
    GradientIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Consecutive iterates came within `stop_tol`.
    Tolerance,
    /// The iteration budget ran out first.
    MaxIters,
}

/// Starting policy a^0.
pub enum InitialPolicy {
    Constant(f64),
    Field(PolicyField),
}

pub struct IterationConfig {
    /// Upper bound on the number of policy evaluations (trace rows).
    pub max_iters: usize,
    /// Stop once sup |v^{n+1} - v^n| falls below this (must be positive).
    pub stop_tol: f64,
    pub initial_policy: InitialPolicy,
    /// Starting value iterate for gradient iteration; when absent, v^0 is
    /// the policy evaluation of `initial_policy`. Ignored by policy
    /// improvement, which always evaluates its initial policy.
    pub initial_value: Option<ValueField>,
    /// Keep every iterate's value and policy field in the trace.
    pub record_fields: bool,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            max_iters: 15,
            stop_tol: 1e-10,
            initial_policy: InitialPolicy::Constant(0.0),
            initial_value: None,
            record_fields: false,
        }
    }
}

pub struct IterationTrace {
    pub algorithm: Algorithm,
    pub grid: GridSpec,
    /// Sup error against the reference on the reporting window, per iterate.
    pub errors: Vec<f64>,
    /// sup |v^n - v^{n-1}| over the whole grid; NaN for the first iterate.
    pub consec_diffs: Vec<f64>,
    /// Wall time of each iterate's PDE evaluation, milliseconds.
    pub wall_ms: Vec<f64>,
    pub stop_reason: StopReason,
    /// Value iterates v^0.., present when fields were recorded.
    pub values: Option<Vec<ValueField>>,
    /// Policies aligned with `values`: policies[n] produced values[n].
    /// For gradient iteration, policies[0] is the configured initial policy
    /// even when v^0 was supplied directly.
    pub policies: Option<Vec<PolicyField>>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.errors.len()
    }

    /// CSV with header `iter,sup_error,consec_diff,wall_ms`; the first row's
    /// consecutive difference prints as NaN.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,sup_error,consec_diff,wall_ms")?;
        for n in 0..self.errors.len() {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                n, self.errors[n], self.consec_diffs[n], self.wall_ms[n]
            )?;
        }
        Ok(())
    }
}

/// Evaluate a fixed Markov policy: solve the linear PDE with advection
/// b(a(t,x), t, x) and source f(a(t,x), t, x).
pub fn evaluate_policy(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    policy: &PolicyField,
) -> Result<ValueField> {
    if policy.grid() != grid {
        return Err(Error::InvalidIterationConfig(
            "policy grid differs from the solve grid".into(),
        ));
    }
    let coeffs = PdeCoefficients {
        advection: Box::new(|gp: GridPoint| (problem.drift)(policy.at(gp.i, gp.j), gp.t, gp.x)),
        source: Box::new(|gp: GridPoint| {
            (problem.running_reward)(policy.at(gp.i, gp.j), gp.t, gp.x)
        }),
        diffusion_sq_half: Box::new(|gp: GridPoint| problem.diffusion_sq_half(gp.t, gp.x)),
        terminal: Box::new(|x| (problem.terminal_reward)(x)),
    };
    solve_backward(&coeffs, grid, bc)
}

/// Upwind-consistent policy update applied to every time level of a value
/// field (see `hjb_ref::improve_row`).
pub(crate) fn improve_policy(
    problem: &ControlProblem,
    grid: &GridSpec,
    v: &ValueField,
) -> Result<PolicyField> {
    let mut out = PolicyField::constant(*grid, 0.0);
    for i in 0..grid.n_rows() {
        let row = improve_row(problem, grid, grid.t(i), v.row(i))?;
        out.row_mut(i).copy_from_slice(&row);
    }
    Ok(out)
}

pub(crate) fn materialize_initial(
    problem: &ControlProblem,
    grid: &GridSpec,
    initial: &InitialPolicy,
) -> Result<PolicyField> {
    match initial {
        InitialPolicy::Constant(a) => {
            if !problem.control_set.contains(*a) {
                return Err(Error::InvalidIterationConfig(format!(
                    "initial control {a} outside the control set"
                )));
            }
            Ok(PolicyField::constant(*grid, *a))
        }
        InitialPolicy::Field(f) => {
            if f.grid() != grid {
                return Err(Error::InvalidIterationConfig(
                    "initial policy grid differs from the solve grid".into(),
                ));
            }
            for i in 0..grid.n_rows() {
                for j in 0..grid.n_cols() {
                    if !problem.control_set.contains(f.at(i, j)) {
                        return Err(Error::InvalidIterationConfig(format!(
                            "initial policy leaves the control set at node ({i}, {j})"
                        )));
                    }
                }
            }
            Ok(f.clone())
        }
    }
}

fn validate_config(
    problem: &ControlProblem,
    grid: &GridSpec,
    config: &IterationConfig,
    reference: &ValueField,
) -> Result<()> {
    if config.max_iters < 1 {
        return Err(Error::InvalidIterationConfig(
            "max_iters must be at least 1".into(),
        ));
    }
    if !(config.stop_tol.is_finite() && config.stop_tol > 0.0) {
        return Err(Error::InvalidIterationConfig(format!(
            "stop_tol must be positive and finite, got {}",
            config.stop_tol
        )));
    }
    if reference.grid() != grid {
        return Err(Error::InvalidIterationConfig(
            "reference grid differs from the solve grid".into(),
        ));
    }
    if let Some(v0) = &config.initial_value {
        if v0.grid() != grid {
            return Err(Error::InvalidIterationConfig(
                "initial value grid differs from the solve grid".into(),
            ));
        }
    }
    problem.validate_on(grid)
}

/// Run the policy improvement algorithm against a precomputed reference.
pub fn run_pia(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    config: &IterationConfig,
    reference: &ValueField,
) -> Result<IterationTrace> {
    validate_config(problem, grid, config, reference)?;
    let mut policy = materialize_initial(problem, grid, &config.initial_policy)?;

    let mut errors = Vec::new();
    let mut diffs = Vec::new();
    let mut walls = Vec::new();
    let mut values = config.record_fields.then(Vec::new);
    let mut policies = config.record_fields.then(Vec::new);
    let mut prev: Option<ValueField> = None;
    let mut stop_reason = StopReason::MaxIters;

    for _ in 0..config.max_iters {
        if let Some(ps) = policies.as_mut() {
            ps.push(policy.clone());
        }
        let start = Instant::now();
        let v = evaluate_policy(problem, grid, bc, &policy)?;
        walls.push(start.elapsed().as_secs_f64() * 1e3);
        errors.push(sup_norm_diff_window(&v, reference)?);
        let d = match &prev {
            Some(p) => sup_norm_diff(&v, p)?,
            None => f64::NAN,
        };
        diffs.push(d);
        if let Some(vs) = values.as_mut() {
            vs.push(v.clone());
        }
        if d < config.stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
        policy = improve_policy(problem, grid, &v)?;
        prev = Some(v);
    }

    Ok(IterationTrace {
        algorithm: Algorithm::PolicyImprovement,
        grid: *grid,
        errors,
        consec_diffs: diffs,
        wall_ms: walls,
        stop_reason,
        values,
        policies,
    })
}

/// One gradient-iteration update: maximize the Hamiltonian at the central
/// quotients of `v_prev`, then solve the pure source problem. Returns the
/// policy and the new iterate.
fn gia_step(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    v_prev: &ValueField,
) -> Result<(PolicyField, ValueField)> {
    let mut a_field = PolicyField::constant(*grid, 0.0);
    let mut source = ValueField::constant(*grid, 0.0);
    for i in 0..grid.n_rows() {
        let t = grid.t(i);
        for j in 0..grid.n_cols() {
            let p = v_prev.gradient(i, j);
            let a = problem.argmax_control(t, grid.x(j), p)?;
            a_field.set(i, j, a);
            source.set(i, j, problem.hamiltonian(a, t, grid.x(j), p));
        }
    }
    let coeffs = PdeCoefficients {
        advection: Box::new(|_: GridPoint| 0.0),
        source: Box::new(|gp: GridPoint| source.at(gp.i, gp.j)),
        diffusion_sq_half: Box::new(|gp: GridPoint| problem.diffusion_sq_half(gp.t, gp.x)),
        terminal: Box::new(|x| (problem.terminal_reward)(x)),
    };
    let v = solve_backward(&coeffs, grid, bc)?;
    Ok((a_field, v))
}

/// Run the gradient iteration algorithm against a precomputed reference.
pub fn run_gia(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    config: &IterationConfig,
    reference: &ValueField,
) -> Result<IterationTrace> {
    validate_config(problem, grid, config, reference)?;
    let initial_policy = materialize_initial(problem, grid, &config.initial_policy)?;

    let mut walls = Vec::new();
    let start = Instant::now();
    let mut v_prev = match &config.initial_value {
        Some(v0) => v0.clone(),
        None => evaluate_policy(problem, grid, bc, &initial_policy)?,
    };
    walls.push(start.elapsed().as_secs_f64() * 1e3);

    let mut errors = vec![sup_norm_diff_window(&v_prev, reference)?];
    let mut diffs = vec![f64::NAN];
    let mut values = config.record_fields.then(|| vec![v_prev.clone()]);
    let mut policies = config.record_fields.then(|| vec![initial_policy]);
    let mut stop_reason = StopReason::MaxIters;

    for _ in 1..config.max_iters {
        let start = Instant::now();
        let (a_field, v) = gia_step(problem, grid, bc, &v_prev)?;
        walls.push(start.elapsed().as_secs_f64() * 1e3);
        errors.push(sup_norm_diff_window(&v, reference)?);
        let d = sup_norm_diff(&v, &v_prev)?;
        diffs.push(d);
        if let Some(vs) = values.as_mut() {
            vs.push(v.clone());
            policies.as_mut().unwrap().push(a_field);
        }
        v_prev = v;
        if d < config.stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    Ok(IterationTrace {
        algorithm: Algorithm::GradientIteration,
        grid: *grid,
        errors,
        consec_diffs: diffs,
        wall_ms: walls,
        stop_reason,
        values,
        policies,
    })
}

pub const MONOTONE_TOL_DEFAULT: f64 = 1e-8;

/// Outcome of a monotonicity check over consecutive recorded iterates.
#[derive(Debug, Clone)]
pub struct MonotoneReport {
    /// margins[n] = min over reporting-window nodes (all time levels) of
    /// v^{n+1} - v^n.
    pub margins: Vec<f64>,
    /// Smallest margin; +inf when fewer than two iterates were recorded.
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Verify that recorded value iterates increase monotonically (up to `tol`)
/// on the reporting window. Needs a trace with recorded fields.
pub fn check_monotone(trace: &IterationTrace, tol: f64) -> Result<MonotoneReport> {
    let values = trace.values.as_ref().ok_or(Error::FieldsNotRecorded)?;
    let cols = trace.grid.window_cols();
    let mut margins = Vec::new();
    for pair in values.windows(2) {
        let mut margin = f64::INFINITY;
        for i in 0..trace.grid.n_rows() {
            for j in cols.clone() {
                margin = margin.min(pair[1].at(i, j) - pair[0].at(i, j));
            }
        }
        margins.push(margin);
    }
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = margins.iter().all(|m| *m >= -tol);
    Ok(MonotoneReport {
        margins,
        worst,
        tol,
        pass,
    })
}
