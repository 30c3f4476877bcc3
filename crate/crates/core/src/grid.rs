//! Space-time grids and the scalar fields that live on them.
//!
//! The grid is uniform on [x_min, x_max] x [0, horizon]: nx interior spatial
//! nodes plus two boundary columns, x_j = x_min + j*dx for j = 0..=nx+1 with
//! dx = (x_max - x_min)/(nx + 1), and time levels t_i = i*dt for i = 0..=nt
//! with dt = horizon/nt.
//!
//! Error norms for iteration diagnostics are taken on the reporting window,
//! the inner half [x_min/2, x_max/2] of the spatial domain, which keeps
//! pollution from the artificial lateral boundaries out of the numbers.

use std::io::{self, Write};
use std::ops::RangeInclusive;

use crate::error::{Error, Result};

/// Uniform space-time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Number of interior spatial nodes (at least 3).
    pub nx: usize,
    pub horizon: f64,
    /// Number of time steps (at least 1).
    pub nt: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, nx: usize, horizon: f64, nt: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if nx < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 interior nodes, got nx={nx}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "need a positive finite horizon, got {horizon}"
            )));
        }
        if nt < 1 {
            return Err(Error::InvalidGrid("need at least 1 time step".into()));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            horizon,
            nt,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Total spatial columns, boundaries included.
    pub fn n_cols(&self) -> usize {
        self.nx + 2
    }

    /// Total time levels, terminal included.
    pub fn n_rows(&self) -> usize {
        self.nt + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + self.dx() * j as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        self.dt() * i as f64
    }

    /// Column range of the reporting window [x_min/2, x_max/2].
    ///
    /// Membership is tested with a small relative fuzz so nodes that land on
    /// the window edge up to rounding are kept.
    pub fn window_cols(&self) -> RangeInclusive<usize> {
        let fuzz = 1e-9 * self.dx();
        let lo = self.x_min / 2.0 - fuzz;
        let hi = self.x_max / 2.0 + fuzz;
        let mut first = self.n_cols();
        let mut last = 0;
        for j in 0..self.n_cols() {
            let x = self.x(j);
            if x >= lo && x <= hi {
                if first == self.n_cols() {
                    first = j;
                }
                last = j;
            }
        }
        first..=last
    }

    /// Whether (t, x) lies in the reporting window with t short of the horizon.
    pub fn window_contains(&self, t: f64, x: f64) -> bool {
        let fuzz = 1e-9 * self.dx();
        (0.0..self.horizon).contains(&t)
            && x >= self.x_min / 2.0 - fuzz
            && x <= self.x_max / 2.0 + fuzz
    }
}

/// Scalar field sampled on a [`GridSpec`], stored row-major by time level.
///
/// [`ValueField`] and [`PolicyField`] are aliases of this one storage type;
/// the two names keep solver signatures self-describing.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    data: Vec<f64>,
}

pub type ValueField = Field;
pub type PolicyField = Field;

impl Field {
    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            data: vec![value; grid.n_rows() * grid.n_cols()],
            grid,
        }
    }

    /// Build a field by sampling `f(t, x)` at every node.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.n_rows() * grid.n_cols());
        for i in 0..grid.n_rows() {
            let t = grid.t(i);
            for j in 0..grid.n_cols() {
                data.push(f(t, grid.x(j)));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.n_cols() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.grid.n_cols() + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.n_cols();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.grid.n_cols();
        &mut self.data[i * w..(i + 1) * w]
    }

    /// Spatial difference quotient at node (i, j): central at interior nodes,
    /// one-sided at the two boundary columns. Exact for affine data.
    pub fn gradient(&self, i: usize, j: usize) -> f64 {
        let dx = self.grid.dx();
        let last = self.grid.n_cols() - 1;
        if j == 0 {
            (self.at(i, 1) - self.at(i, 0)) / dx
        } else if j == last {
            (self.at(i, last) - self.at(i, last - 1)) / dx
        } else {
            (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * dx)
        }
    }

    /// Bilinear interpolation at (t, x), clamped to the grid rectangle.
    pub fn interpolate(&self, t: f64, x: f64) -> f64 {
        let g = &self.grid;
        let s = (t / g.dt()).clamp(0.0, g.nt as f64);
        let r = ((x - g.x_min) / g.dx()).clamp(0.0, (g.n_cols() - 1) as f64);
        let i0 = (s.floor() as usize).min(g.n_rows() - 2);
        let j0 = (r.floor() as usize).min(g.n_cols() - 2);
        let wt = s - i0 as f64;
        let wx = r - j0 as f64;
        let v00 = self.at(i0, j0);
        let v01 = self.at(i0, j0 + 1);
        let v10 = self.at(i0 + 1, j0);
        let v11 = self.at(i0 + 1, j0 + 1);
        (1.0 - wt) * ((1.0 - wx) * v00 + wx * v01) + wt * ((1.0 - wx) * v10 + wx * v11)
    }

    /// Write the field as CSV with header `t,x,value`, one row per node,
    /// time-major. Floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,value")?;
        for i in 0..self.grid.n_rows() {
            let t = self.grid.t(i);
            for j in 0..self.grid.n_cols() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    t,
                    self.grid.x(j),
                    self.at(i, j)
                )?;
            }
        }
        Ok(())
    }

    fn check_shape(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch {
                expected_rows: self.grid.n_rows(),
                expected_cols: self.grid.n_cols(),
                got_rows: other.grid.n_rows(),
                got_cols: other.grid.n_cols(),
            });
        }
        Ok(())
    }
}

/// Sup-norm distance over every node of the grid.
pub fn sup_norm_diff(a: &Field, b: &Field) -> Result<f64> {
    a.check_shape(b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Sup-norm distance over reporting-window columns at all time levels.
pub fn sup_norm_diff_window(a: &Field, b: &Field) -> Result<f64> {
    a.check_shape(b)?;
    let cols = a.grid.window_cols();
    let mut worst = 0.0f64;
    for i in 0..a.grid.n_rows() {
        for j in cols.clone() {
            worst = worst.max((a.at(i, j) - b.at(i, j)).abs());
        }
    }
    Ok(worst)
}
