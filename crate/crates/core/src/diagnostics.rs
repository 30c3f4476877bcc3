//! Convergence-rate estimation, error-floor detection, and report assembly.
//!
//! An iteration trace yields sup errors e_0, e_1, ... against a reference.
//! The contraction factor is estimated from the ratios r_k = e_{k+1} / e_k:
//! the pre-floor window is the maximal prefix with r_k <= floor_ratio, and
//! the fitted factor is the geometric mean q = exp(mean ln r_k) over that
//! prefix. The floor is the first iterate whose ratio exceeds floor_ratio
//! (discretization error has taken over); its level is the smallest error
//! from there on.
//!
//! Perturbation sweeps record (epsilon, plateau gap) pairs; the scaling
//! exponent of gap ~ epsilon^s is the least-squares slope in ln-ln
//! coordinates.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::iterate::{check_monotone, Algorithm, IterationTrace, MonotoneReport, StopReason};

/// Ratios above this are treated as the error floor.
pub const FLOOR_RATIO_DEFAULT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Geometric-mean contraction factor over the pre-floor window.
    pub q: f64,
    /// Iterate indices in the pre-floor regime (at least three, so the fit
    /// averages two or more ratios).
    pub window: Range<usize>,
}

fn validate_errors(errors: &[f64]) -> Result<()> {
    if errors.is_empty() {
        return Err(Error::InvalidDiagnostics("empty error sequence".into()));
    }
    for (n, e) in errors.iter().enumerate() {
        if !(e.is_finite() && *e > 0.0) {
            return Err(Error::InvalidDiagnostics(format!(
                "error at iterate {n} must be positive and finite, got {e}"
            )));
        }
    }
    Ok(())
}

fn validate_floor_ratio(floor_ratio: f64) -> Result<()> {
    if !(floor_ratio.is_finite() && floor_ratio > 0.0 && floor_ratio < 1.0) {
        return Err(Error::InvalidDiagnostics(format!(
            "floor ratio must lie in (0, 1), got {floor_ratio}"
        )));
    }
    Ok(())
}

/// Fit the contraction factor from the maximal prefix of contracting ratios.
pub fn estimate_rate(errors: &[f64], floor_ratio: f64) -> Result<RateFit> {
    validate_errors(errors)?;
    validate_floor_ratio(floor_ratio)?;
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for k in 0..errors.len().saturating_sub(1) {
        let r = errors[k + 1] / errors[k];
        if r > floor_ratio {
            break;
        }
        log_sum += r.ln();
        count += 1;
    }
    if count < 2 {
        return Err(Error::NoPreFloorRegime);
    }
    Ok(RateFit {
        q: (log_sum / count as f64).exp(),
        window: 0..count + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorInfo {
    /// First iterate whose incoming ratio exceeded the floor ratio; the last
    /// iterate when every ratio kept contracting.
    pub iter: usize,
    /// Smallest error from `iter` onward.
    pub level: f64,
}

/// Locate the error floor of a trace.
pub fn detect_floor(errors: &[f64], floor_ratio: f64) -> Result<FloorInfo> {
    validate_errors(errors)?;
    validate_floor_ratio(floor_ratio)?;
    let mut iter = errors.len() - 1;
    for k in 0..errors.len() - 1 {
        if errors[k + 1] / errors[k] > floor_ratio {
            iter = k + 1;
            break;
        }
    }
    let level = errors[iter..].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(FloorInfo { iter, level })
}

/// Least-squares slope of ln(gap) against ln(epsilon). Pairs with a
/// non-positive gap (for example, a bit-identical unperturbed rerun) are
/// skipped; at least three usable pairs are required.
pub fn fit_stability_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    let mut pts = Vec::new();
    for (eps, gap) in pairs {
        if !(eps.is_finite() && *eps > 0.0 && gap.is_finite()) {
            return Err(Error::InvalidDiagnostics(format!(
                "sweep pair ({eps}, {gap}) needs a positive finite epsilon and a finite gap"
            )));
        }
        if *gap > 0.0 {
            pts.push((eps.ln(), gap.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InvalidDiagnostics(format!(
            "need at least 3 pairs with positive gaps for a slope fit, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxy = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
    let sxx = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum::<f64>();
    if sxx == 0.0 {
        return Err(Error::InvalidDiagnostics(
            "all sweep epsilons coincide; slope is undefined".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// One Monte Carlo cross-check of a PDE value at a space-time point.
#[derive(Debug, Clone, Copy)]
pub struct McCrossCheck {
    pub t: f64,
    pub x: f64,
    /// Which iterate's policy was simulated.
    pub policy_iter: usize,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub pde_value: f64,
}

/// A perturbation sweep: plateau gaps per perturbation size, produced on the
/// same grid as the trace it accompanies.
#[derive(Debug, Clone)]
pub struct StabilitySweep {
    pub label: String,
    pub grid: GridSpec,
    /// (epsilon, plateau gap) pairs.
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub label: String,
    pub pairs: Vec<(f64, f64)>,
    /// ln-ln slope; absent when too few pairs had positive gaps.
    pub slope: Option<f64>,
}

/// Everything the text report renders, assembled from a finished trace.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub algorithm: Algorithm,
    pub grid: GridSpec,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub final_error: f64,
    /// Absent when no pre-floor regime was found.
    pub fitted_q: Option<f64>,
    pub fit_window: Option<Range<usize>>,
    pub floor_iter: usize,
    pub floor_level: f64,
    /// Present for policy improvement traces with recorded fields.
    pub monotone: Option<MonotoneReport>,
    pub mc_crosschecks: Vec<McCrossCheck>,
    pub sweeps: Vec<SweepSummary>,
}

/// Summarize a trace. Monotonicity is checked (with `monotone_tol`) only for
/// policy improvement traces that recorded their fields; sweeps must share
/// the trace's grid.
pub fn build_report(
    trace: &IterationTrace,
    floor_ratio: f64,
    monotone_tol: Option<f64>,
    mc_crosschecks: Vec<McCrossCheck>,
    sweeps: &[StabilitySweep],
) -> Result<ConvergenceReport> {
    for sweep in sweeps {
        if sweep.grid != trace.grid {
            return Err(Error::InvalidDiagnostics(format!(
                "sweep '{}' ran on a different grid than the trace",
                sweep.label
            )));
        }
    }
    let floor = detect_floor(&trace.errors, floor_ratio)?;
    let (fitted_q, fit_window) = match estimate_rate(&trace.errors, floor_ratio) {
        Ok(fit) => (Some(fit.q), Some(fit.window)),
        Err(_) => (None, None),
    };
    let monotone = match monotone_tol {
        Some(tol) if trace.algorithm == Algorithm::PolicyImprovement && trace.values.is_some() => {
            Some(check_monotone(trace, tol)?)
        }
        _ => None,
    };
    let sweeps = sweeps
        .iter()
        .map(|s| SweepSummary {
            label: s.label.clone(),
            pairs: s.pairs.clone(),
            slope: fit_stability_slope(&s.pairs).ok(),
        })
        .collect();
    Ok(ConvergenceReport {
        algorithm: trace.algorithm,
        grid: trace.grid,
        iterations: trace.iterations(),
        stop_reason: trace.stop_reason,
        final_error: *trace.errors.last().unwrap(),
        fitted_q,
        fit_window,
        floor_iter: floor.iter,
        floor_level: floor.level,
        monotone,
        mc_crosschecks,
        sweeps,
    })
}

impl ConvergenceReport {
    /// Stable `key = value` text; keys are part of the output contract.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let alg = match self.algorithm {
            Algorithm::PolicyImprovement => "policy_improvement",
            Algorithm::GradientIteration => "gradient_iteration",
        };
        let stop = match self.stop_reason {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIters => "max_iters",
        };
        writeln!(out, "algorithm = {alg}").unwrap();
        writeln!(
            out,
            "grid = x_min={} x_max={} nx={} horizon={} nt={}",
            self.grid.x_min, self.grid.x_max, self.grid.nx, self.grid.horizon, self.grid.nt
        )
        .unwrap();
        writeln!(out, "iterations = {}", self.iterations).unwrap();
        writeln!(out, "stop_reason = {stop}").unwrap();
        writeln!(out, "final_error = {:.16e}", self.final_error).unwrap();
        match self.fitted_q {
            Some(q) => writeln!(out, "fitted_q = {q:.16e}").unwrap(),
            None => writeln!(out, "fitted_q = n/a").unwrap(),
        }
        match &self.fit_window {
            Some(w) => writeln!(out, "fit_window = {}..{}", w.start, w.end).unwrap(),
            None => writeln!(out, "fit_window = n/a").unwrap(),
        }
        writeln!(out, "floor_iter = {}", self.floor_iter).unwrap();
        writeln!(out, "floor_level = {:.16e}", self.floor_level).unwrap();
        if let Some(m) = &self.monotone {
            writeln!(out, "monotone_pass = {}", m.pass).unwrap();
            writeln!(out, "monotone_worst = {:.16e}", m.worst).unwrap();
            writeln!(out, "monotone_tol = {:.16e}", m.tol).unwrap();
        }
        for c in &self.mc_crosschecks {
            writeln!(
                out,
                "mc_point t={} x={} policy_iter={} mc_mean={:.16e} mc_stderr={:.16e} \
                 pde_value={:.16e} abs_gap={:.16e}",
                c.t,
                c.x,
                c.policy_iter,
                c.mc_mean,
                c.mc_stderr,
                c.pde_value,
                (c.mc_mean - c.pde_value).abs()
            )
            .unwrap();
        }
        for s in &self.sweeps {
            match s.slope {
                Some(v) => writeln!(out, "sweep {} slope = {v:.16e}", s.label).unwrap(),
                None => writeln!(out, "sweep {} slope = n/a", s.label).unwrap(),
            }
            for (eps, gap) in &s.pairs {
                writeln!(out, "sweep {} eps={eps:.16e} gap={gap:.16e}", s.label).unwrap();
            }
        }
        out
    }
}
