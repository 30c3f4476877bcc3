//! Implicit upwind solver for linear backward parabolic PDEs
//!
//!   dv/dt + (sigma^2/2) v_xx + mu(t,x) v_x + rho(t,x) = 0,   v(T, .) = g,
//!
//! discretized with backward Euler in time and first-order upwinding of the
//! advection term: the forward difference quotient where mu >= 0, backward
//! where mu < 0. Each backward step solves a tridiagonal system with
//!
//!   (1/dt + 2D + |mu|/dx) w_j - (D + mu^+/dx) w_{j+1} - (D - mu^-/dx) w_{j-1}
//!       = v_next_j / dt + rho_j,      D = (sigma^2/2) / dx^2,
//!
//! an M-matrix (positive diagonal, nonpositive off-diagonals, row sums 1/dt),
//! so the scheme obeys a discrete comparison principle. Coefficients and the
//! source are evaluated at the new time level. Systems are solved by the
//! Thomas algorithm.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};

/// Node location handed to coefficient callbacks: both the integer indices
/// and the coordinates, so callers backed by grid fields can index directly
/// while analytic callers read (t, x).
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub x: f64,
}

pub type CoeffFn<'a> = Box<dyn Fn(GridPoint) -> f64 + 'a>;

/// Coefficient bundle for one linear solve.
pub struct PdeCoefficients<'a> {
    /// mu(t, x), the advection coefficient.
    pub advection: CoeffFn<'a>,
    /// rho(t, x), the inhomogeneous source.
    pub source: CoeffFn<'a>,
    /// sigma(t, x)^2 / 2.
    pub diffusion_sq_half: CoeffFn<'a>,
    /// g(x), the terminal condition.
    pub terminal: Box<dyn Fn(f64) -> f64 + 'a>,
}

/// Lateral boundary treatment.
pub enum BoundaryCondition<'a> {
    /// Force the second spatial difference to zero at the boundary columns,
    /// i.e. extrapolate the solution linearly past the last interior nodes.
    LinearExtrapolation,
    /// Prescribed boundary values h_left(t), h_right(t).
    Dirichlet {
        left: Box<dyn Fn(f64) -> f64 + 'a>,
        right: Box<dyn Fn(f64) -> f64 + 'a>,
    },
}

/// March the terminal condition backward to t = 0.
pub fn solve_backward(
    coeffs: &PdeCoefficients,
    grid: &GridSpec,
    bc: &BoundaryCondition,
) -> Result<ValueField> {
    let mut v = ValueField::constant(*grid, 0.0);
    let nt = grid.nt;
    let horizon = grid.horizon;
    for j in 0..grid.n_cols() {
        let x = grid.x(j);
        let g = (coeffs.terminal)(x);
        if !g.is_finite() {
            return Err(Error::NonFiniteCoefficient {
                what: "terminal",
                t: horizon,
                x,
            });
        }
        v.set(nt, j, g);
    }

    let n_cols = grid.n_cols();
    let mut mu = vec![0.0; n_cols];
    let mut rho = vec![0.0; n_cols];
    let mut dhalf = vec![0.0; n_cols];
    for i in (0..nt).rev() {
        let t = grid.t(i);
        for j in 0..n_cols {
            let gp = GridPoint {
                i,
                j,
                t,
                x: grid.x(j),
            };
            mu[j] = (coeffs.advection)(gp);
            rho[j] = (coeffs.source)(gp);
            dhalf[j] = (coeffs.diffusion_sq_half)(gp);
            for (value, what) in [(mu[j], "advection"), (rho[j], "source"), (dhalf[j], "diffusion")]
            {
                if !value.is_finite() {
                    return Err(Error::NonFiniteCoefficient { what, t, x: gp.x });
                }
            }
        }
        let next = v.row(i + 1).to_vec();
        let row = step_rows(grid, i, &next, &mu, &rho, &dhalf, bc)?;
        v.row_mut(i).copy_from_slice(&row);
    }
    Ok(v)
}

/// One implicit backward step: given the row at t_{i+1} and coefficient rows
/// evaluated at t_i (full width, boundary entries unused), produce the full
/// row at t_i.
pub(crate) fn step_rows(
    grid: &GridSpec,
    i: usize,
    next_row: &[f64],
    mu: &[f64],
    rho: &[f64],
    dhalf: &[f64],
    bc: &BoundaryCondition,
) -> Result<Vec<f64>> {
    let nx = grid.nx;
    let dx = grid.dx();
    let dt = grid.dt();
    let t = grid.t(i);

    let mut sub = vec![0.0; nx];
    let mut diag = vec![0.0; nx];
    let mut sup = vec![0.0; nx];
    let mut rhs = vec![0.0; nx];
    for k in 0..nx {
        let j = k + 1;
        let d = dhalf[j] / (dx * dx);
        let mu_p = mu[j].max(0.0);
        let mu_m = mu[j].min(0.0);
        sub[k] = -(d - mu_m / dx);
        diag[k] = 1.0 / dt + 2.0 * d + (mu_p - mu_m) / dx;
        sup[k] = -(d + mu_p / dx);
        rhs[k] = next_row[j] / dt + rho[j];
    }

    match bc {
        BoundaryCondition::LinearExtrapolation => {
            // Eliminate the ghost columns w_0 = 2w_1 - w_2 and
            // w_{nx+1} = 2w_nx - w_{nx-1} into the first and last rows.
            diag[0] += 2.0 * sub[0];
            sup[0] -= sub[0];
            sub[0] = 0.0;
            diag[nx - 1] += 2.0 * sup[nx - 1];
            sub[nx - 1] -= sup[nx - 1];
            sup[nx - 1] = 0.0;
        }
        BoundaryCondition::Dirichlet { left, right } => {
            rhs[0] -= sub[0] * left(t);
            sub[0] = 0.0;
            rhs[nx - 1] -= sup[nx - 1] * right(t);
            sup[nx - 1] = 0.0;
        }
    }

    let interior =
        thomas(&sub, &diag, &sup, &rhs).ok_or(Error::SingularSystem { time_index: i })?;

    let mut row = vec![0.0; grid.n_cols()];
    row[1..=nx].copy_from_slice(&interior);
    match bc {
        BoundaryCondition::LinearExtrapolation => {
            row[0] = 2.0 * row[1] - row[2];
            row[nx + 1] = 2.0 * row[nx] - row[nx - 1];
        }
        BoundaryCondition::Dirichlet { left, right } => {
            row[0] = left(t);
            row[nx + 1] = right(t);
        }
    }
    Ok(row)
}

/// Tridiagonal solve; `None` on a vanishing or non-finite pivot.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return None;
    }
    c[0] = sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for k in 1..n {
        pivot = diag[k] - sub[k] * c[k - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        c[k] = sup[k] / pivot;
        d[k] = (rhs[k] - sub[k] * d[k - 1]) / pivot;
    }
    let mut w = d;
    for k in (0..n - 1).rev() {
        w[k] = w[k] - c[k] * w[k + 1];
    }
    Some(w)
}

/// Refinement axis for order verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementAxis {
    Space,
    Time,
}

/// A problem with known exact solution, used to measure convergence orders.
/// The caller supplies the source that makes `exact` solve the PDE.
pub struct ManufacturedCase<'a> {
    pub exact: Box<dyn Fn(f64, f64) -> f64 + 'a>,
    pub advection: Box<dyn Fn(f64, f64) -> f64 + 'a>,
    pub diffusion_sq_half: Box<dyn Fn(f64, f64) -> f64 + 'a>,
    pub source: Box<dyn Fn(f64, f64) -> f64 + 'a>,
}

/// Errors and observed orders across a refinement sequence.
#[derive(Debug, Clone)]
pub struct RefinementSummary {
    /// Sup error over all nodes and levels, one entry per grid.
    pub errors: Vec<f64>,
    /// orders[k] = ln(e_k/e_{k+1}) / ln(h_k/h_{k+1}) with h the step along
    /// the chosen axis; NaN where an error vanishes.
    pub orders: Vec<f64>,
}

/// Solve the manufactured case on each grid (Dirichlet data taken from the
/// exact solution) and report sup errors plus observed orders along `axis`.
/// Needs at least three grids to produce two comparable order estimates.
pub fn verify_order(
    case: &ManufacturedCase,
    grids: &[GridSpec],
    axis: RefinementAxis,
) -> Result<RefinementSummary> {
    if grids.len() < 3 {
        return Err(Error::TooFewGrids(grids.len()));
    }
    let mut errors = Vec::with_capacity(grids.len());
    for grid in grids {
        let coeffs = PdeCoefficients {
            advection: Box::new(|gp: GridPoint| (case.advection)(gp.t, gp.x)),
            source: Box::new(|gp: GridPoint| (case.source)(gp.t, gp.x)),
            diffusion_sq_half: Box::new(|gp: GridPoint| (case.diffusion_sq_half)(gp.t, gp.x)),
            terminal: Box::new(|x| (case.exact)(grid.horizon, x)),
        };
        let bc = BoundaryCondition::Dirichlet {
            left: Box::new(|t| (case.exact)(t, grid.x_min)),
            right: Box::new(|t| (case.exact)(t, grid.x_max)),
        };
        let v = solve_backward(&coeffs, grid, &bc)?;
        let mut worst = 0.0f64;
        for i in 0..grid.n_rows() {
            for j in 0..grid.n_cols() {
                worst = worst.max((v.at(i, j) - (case.exact)(grid.t(i), grid.x(j))).abs());
            }
        }
        errors.push(worst);
    }
    let step = |g: &GridSpec| match axis {
        RefinementAxis::Space => g.dx(),
        RefinementAxis::Time => g.dt(),
    };
    let orders = errors
        .windows(2)
        .zip(grids.windows(2))
        .map(|(e, g)| {
            if e[0] > 0.0 && e[1] > 0.0 {
                (e[0] / e[1]).ln() / (step(&g[0]) / step(&g[1])).ln()
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(RefinementSummary { errors, orders })
}
