//! Monte Carlo policy evaluation by Euler-Maruyama simulation.
//!
//! For a fixed Markov policy a(t, x) the gain functional
//!
//!   J(t, x) = E[ integral_t^T f(a(s, X_s), s, X_s) ds + g(X_T) ],
//!   dX_s = b(a(s, X_s), s, X_s) ds + sigma(s, X_s) dW_s,  X_t = x,
//!
//! is estimated from independent discretized paths. The policy is looked up
//! by clamped bilinear interpolation. Increments come from the counter-based
//! generator keyed by (path, step), so the estimate is independent of thread
//! count and scheduling: paths are simulated in parallel, collected in index
//! order, and reduced sequentially.
//!
//! With antithetic sampling, path pairs share flipped Gaussian increments
//! and each pair mean counts as one sample for the standard error.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PolicyField;
use crate::problem::ControlProblem;
use crate::rng::{CounterRng, STREAM_MC};

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    /// Number of simulated paths (at least 2; even when antithetic).
    pub n_paths: usize,
    /// Euler steps per path (at least 1).
    pub n_steps: usize,
    pub seed: u64,
    /// Simulate flipped-noise path pairs and average within each pair.
    pub antithetic: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation of the (pair-)samples over sqrt(count).
    pub std_error: f64,
    pub n_paths: usize,
    /// Paths that left the sanity box |x| > 10 max(|x_min|, |x_max|).
    pub escaped_paths: usize,
    /// Set when more than 1% of paths escaped.
    pub escape_warning: bool,
}

/// Estimate the gain of `policy` started at (t, x).
pub fn simulate_policy_value(
    problem: &ControlProblem,
    policy: &PolicyField,
    t: f64,
    x: f64,
    mc: &McConfig,
) -> Result<McEstimate> {
    if mc.n_paths < 2 {
        return Err(Error::InvalidMcConfig(format!(
            "need at least 2 paths, got {}",
            mc.n_paths
        )));
    }
    if mc.n_steps < 1 {
        return Err(Error::InvalidMcConfig("need at least 1 step".into()));
    }
    if mc.antithetic && mc.n_paths % 2 != 0 {
        return Err(Error::InvalidMcConfig(format!(
            "antithetic pairing needs an even path count, got {}",
            mc.n_paths
        )));
    }
    let grid = policy.grid();
    if !grid.window_contains(t, x) {
        return Err(Error::PointOutsideWindow { t, x });
    }

    let dt = (grid.horizon - t) / mc.n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let box_bound = 10.0 * grid.x_max.abs().max(grid.x_min.abs());
    let rng = CounterRng::new(mc.seed, STREAM_MC);

    let walk = |path_key: u64, flip: f64| -> (f64, usize) {
        let mut xs = x;
        let mut acc = 0.0;
        let mut escaped = 0usize;
        for step in 0..mc.n_steps {
            let s = t + dt * step as f64;
            let a = policy.interpolate(s, xs);
            acc += (problem.running_reward)(a, s, xs) * dt;
            let z = flip * rng.normal(path_key, step as u64);
            xs += (problem.drift)(a, s, xs) * dt + (problem.diffusion)(s, xs) * sqrt_dt * z;
            if escaped == 0 && xs.abs() > box_bound {
                escaped = 1;
            }
        }
        (acc + (problem.terminal_reward)(xs), escaped)
    };

    let samples: Vec<(f64, usize)> = if mc.antithetic {
        (0..mc.n_paths / 2)
            .into_par_iter()
            .map(|k| {
                let (plus, e_plus) = walk(k as u64, 1.0);
                let (minus, e_minus) = walk(k as u64, -1.0);
                (0.5 * (plus + minus), e_plus + e_minus)
            })
            .collect()
    } else {
        (0..mc.n_paths)
            .into_par_iter()
            .map(|k| walk(k as u64, 1.0))
            .collect()
    };

    let n = samples.len();
    let mean = samples.iter().map(|(v, _)| v).sum::<f64>() / n as f64;
    let var = samples
        .iter()
        .map(|(v, _)| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    let std_error = (var / n as f64).sqrt();
    let escaped_paths: usize = samples.iter().map(|(_, e)| e).sum();
    Ok(McEstimate {
        mean,
        std_error,
        n_paths: mc.n_paths,
        escaped_paths,
        escape_warning: escaped_paths as f64 > 0.01 * mc.n_paths as f64,
    })
}
