//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough context
//! to point at the offending module, grid location, or configuration field,
//! so a driver can print one actionable line and stop.

/// Errors produced by the solvers, iteration drivers, and diagnostics.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Grid construction parameters out of range.
    #[error("grid: {0}")]
    InvalidGrid(String),

    /// Two fields that must share a grid do not.
    #[error("grid: field shapes differ: {expected_rows}x{expected_cols} vs {got_rows}x{got_cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    /// Problem data rejected at construction or validation time.
    #[error("problem: {0}")]
    InvalidProblem(String),

    /// A closed-form maximizer handle returned a control outside the control set.
    #[error(
        "problem: argmax handle returned {control} outside the control set \
         [{lo}, {hi}] at (t={t}, x={x})"
    )]
    OracleOutOfRange {
        control: f64,
        lo: f64,
        hi: f64,
        t: f64,
        x: f64,
    },

    /// A PDE coefficient evaluated to NaN or infinity.
    #[error("pde: non-finite {what} coefficient at (t={t}, x={x})")]
    NonFiniteCoefficient { what: &'static str, t: f64, x: f64 },

    /// The tridiagonal solve hit a zero pivot.
    #[error("pde: singular tridiagonal system at time step {time_index}")]
    SingularSystem { time_index: usize },

    /// Order verification needs at least three grids.
    #[error("pde: order verification needs at least 3 grids, got {0}")]
    TooFewGrids(usize),

    /// The per-step Howard loop in the reference solver did not converge.
    #[error(
        "bellman: policy loop at time step {time_index} still moving after \
         {max_iters} rounds (worst residual {residual:e})"
    )]
    PolicyLoopStalled {
        time_index: usize,
        max_iters: usize,
        residual: f64,
    },

    /// Iteration driver configuration out of range.
    #[error("iterate: {0}")]
    InvalidIterationConfig(String),

    /// An operation needs per-iteration fields that the trace did not record.
    #[error("iterate: trace does not carry recorded per-iteration fields")]
    FieldsNotRecorded,

    /// Perturbation settings out of range.
    #[error("perturb: {0}")]
    InvalidPerturbation(String),

    /// Monte Carlo configuration out of range.
    #[error("montecarlo: {0}")]
    InvalidMcConfig(String),

    /// Monte Carlo start point outside the reporting window.
    #[error("montecarlo: start point (t={t}, x={x}) lies outside the reporting window")]
    PointOutsideWindow { t: f64, x: f64 },

    /// The error trace never shows a contraction regime before its floor.
    #[error("diagnostics: no pre-floor regime in the error trace")]
    NoPreFloorRegime,

    /// Diagnostics input rejected (too short, non-positive, or inconsistent).
    #[error("diagnostics: {0}")]
    InvalidDiagnostics(String),
}

pub type Result<T> = std::result::Result<T, Error>;
