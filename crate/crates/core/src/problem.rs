//! Controlled-diffusion problem data and pointwise Hamiltonian maximization.
//!
//! The state follows dX_s = b(a, s, X_s) ds + sigma(s, X_s) dW_s and the
//! objective is the expected running-plus-terminal reward
//! E[ integral_t^T f(a_s, s, X_s) ds + g(X_T) ], maximized over controls
//! taking values in a closed interval. The Hamiltonian at spatial gradient p,
//!
//!   H(a; t, x, p) = b(a, t, x) * p + f(a, t, x),
//!
//! drives every policy update: the improved control at a node is the
//! pointwise maximizer of H over the control set.

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Default sample count for grid-search maximization.
pub const GRID_SEARCH_DEFAULT_SAMPLES: usize = 2001;

/// Smallest admissible diffusion coefficient; the implicit scheme needs a
/// uniformly parabolic operator.
pub const SIGMA_MIN: f64 = 1e-8;

pub type ControlFn = Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type StateFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type TerminalFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed interval of admissible controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSet {
    lo: f64,
    hi: f64,
}

impl ControlSet {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidProblem(format!(
                "control set needs finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo && a <= self.hi
    }

    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.lo, self.hi)
    }
}

/// How `argmax_control` locates the Hamiltonian maximizer.
pub enum ArgmaxMethod {
    /// Exact maximizer handle `(t, x, p) -> a`. Must return controls inside
    /// the control set (clamp in the handle if needed).
    ClosedForm(ControlFn),
    /// Evaluate H at `samples` equally spaced controls (endpoints included)
    /// and keep the best; ties keep the leftmost sample.
    GridSearch { samples: usize },
    /// Golden-section search, assuming H is unimodal in the control; stops
    /// once the bracket is shorter than `tol`. Localization of the maximizer
    /// is noise-limited near sqrt(f64 epsilon) times the control scale, even
    /// for smaller `tol`; the maximized value is accurate to curvature times
    /// that squared.
    GoldenSection { tol: f64 },
}

/// Problem data bundle. Handles are plain pure functions.
pub struct ControlProblem {
    /// Drift b(a, t, x).
    pub drift: ControlFn,
    /// Running reward f(a, t, x).
    pub running_reward: ControlFn,
    /// Diffusion sigma(t, x); must stay above [`SIGMA_MIN`] on the grid.
    pub diffusion: StateFn,
    /// Terminal reward g(x).
    pub terminal_reward: TerminalFn,
    pub control_set: ControlSet,
    pub argmax: ArgmaxMethod,
}

impl ControlProblem {
    /// H(a; t, x, p) = b(a, t, x) p + f(a, t, x).
    pub fn hamiltonian(&self, a: f64, t: f64, x: f64, p: f64) -> f64 {
        (self.drift)(a, t, x) * p + (self.running_reward)(a, t, x)
    }

    /// sigma(t, x)^2 / 2, the coefficient the PDE solver consumes.
    pub fn diffusion_sq_half(&self, t: f64, x: f64) -> f64 {
        let s = (self.diffusion)(t, x);
        0.5 * s * s
    }

    /// Pointwise maximizer of the Hamiltonian over the control set.
    pub fn argmax_control(&self, t: f64, x: f64, p: f64) -> Result<f64> {
        match &self.argmax {
            ArgmaxMethod::ClosedForm(handle) => {
                let a = handle(t, x, p);
                if !self.control_set.contains(a) {
                    return Err(Error::OracleOutOfRange {
                        control: a,
                        lo: self.control_set.lo,
                        hi: self.control_set.hi,
                        t,
                        x,
                    });
                }
                Ok(a)
            }
            ArgmaxMethod::GridSearch { samples } => Ok(self.grid_search(t, x, p, *samples)),
            ArgmaxMethod::GoldenSection { tol } => Ok(self.golden_section(t, x, p, *tol)),
        }
    }

    fn grid_search(&self, t: f64, x: f64, p: f64, samples: usize) -> f64 {
        let (lo, hi) = (self.control_set.lo, self.control_set.hi);
        if samples < 2 || hi == lo {
            return lo;
        }
        let step = (hi - lo) / (samples - 1) as f64;
        let mut best_a = lo;
        let mut best_h = self.hamiltonian(lo, t, x, p);
        for k in 1..samples {
            let a = if k == samples - 1 { hi } else { lo + step * k as f64 };
            let h = self.hamiltonian(a, t, x, p);
            if h > best_h {
                best_h = h;
                best_a = a;
            }
        }
        best_a
    }

    fn golden_section(&self, t: f64, x: f64, p: f64, tol: f64) -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let (mut lo, mut hi) = (self.control_set.lo, self.control_set.hi);
        let tol = tol.max(1e-15);
        if hi - lo <= tol {
            return self.control_set.clamp(0.5 * (lo + hi));
        }
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let mut hc = self.hamiltonian(c, t, x, p);
        let mut hd = self.hamiltonian(d, t, x, p);
        while hi - lo > tol {
            if hc >= hd {
                hi = d;
                d = c;
                hd = hc;
                c = hi - INV_PHI * (hi - lo);
                hc = self.hamiltonian(c, t, x, p);
            } else {
                lo = c;
                c = d;
                hc = hd;
                d = lo + INV_PHI * (hi - lo);
                hd = self.hamiltonian(d, t, x, p);
            }
        }
        self.control_set.clamp(0.5 * (lo + hi))
    }

    /// Check that the diffusion stays uniformly parabolic on the grid.
    pub fn validate_on(&self, grid: &GridSpec) -> Result<()> {
        for i in 0..grid.n_rows() {
            for j in 0..grid.n_cols() {
                let (t, x) = (grid.t(i), grid.x(j));
                let s = (self.diffusion)(t, x);
                if !s.is_finite() || s < SIGMA_MIN {
                    return Err(Error::InvalidProblem(format!(
                        "diffusion {s} below the admissible minimum {SIGMA_MIN} at (t={t}, x={x})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameters of the built-in benchmark family: drift b = s(t) sin a,
/// running reward f = k(t) cos a, terminal reward g = arctan, diffusion
/// sigma = sqrt(2), controls in a subinterval of [-pi/2, pi/2].
pub struct ExampleParams {
    /// s(t), the drift scale.
    pub drift_scale: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// k(t), the running-reward scale; keep it positive.
    pub reward_scale: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub control_set: ControlSet,
}

impl ExampleParams {
    /// s = k = 1 on the full control interval [-pi/2, pi/2].
    pub fn unit() -> Self {
        Self {
            drift_scale: Box::new(|_| 1.0),
            reward_scale: Box::new(|_| 1.0),
            control_set: full_control_set(),
        }
    }
}

pub fn full_control_set() -> ControlSet {
    ControlSet::new(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2).unwrap()
}

/// Build the benchmark problem. Its Hamiltonian
/// H(a) = s(t) p sin a + k(t) cos a is maximized over the full interval at
/// a = arctan(s(t) p / k(t)); on a subinterval the maximizer is that value
/// clamped, since H is unimodal in a.
pub fn make_example(params: ExampleParams) -> ControlProblem {
    let ExampleParams {
        drift_scale,
        reward_scale,
        control_set,
    } = params;
    let s_drift = std::sync::Arc::new(drift_scale);
    let k_reward = std::sync::Arc::new(reward_scale);
    let (s1, s2) = (s_drift.clone(), s_drift.clone());
    let (k1, k2) = (k_reward.clone(), k_reward.clone());
    ControlProblem {
        drift: Box::new(move |a, t, _x| s1(t) * a.sin()),
        running_reward: Box::new(move |a, t, _x| k1(t) * a.cos()),
        diffusion: Box::new(|_, _| std::f64::consts::SQRT_2),
        terminal_reward: Box::new(|x| x.atan()),
        control_set,
        argmax: ArgmaxMethod::ClosedForm(Box::new(move |t, _x, p| {
            let ratio = s2(t) * p / k2(t);
            let a = if ratio.is_nan() { 0.0 } else { ratio.atan() };
            control_set.clamp(a)
        })),
    }
}

/// Named built-in problems. "example_s1k1" is the s = k = 1 benchmark.
pub fn by_name(name: &str) -> Option<ControlProblem> {
    match name {
        "example_s1k1" => Some(make_example(ExampleParams::unit())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn unit_example() -> ControlProblem {
        make_example(ExampleParams::unit())
    }

    #[test]
    fn hamiltonian_reference_values() {
        let p = unit_example();
        assert!((p.hamiltonian(0.0, 0.3, 0.7, 0.0) - 1.0).abs() < 1e-15);
        assert!(
            (p.hamiltonian(FRAC_PI_4, 0.0, 0.0, 1.0) - std::f64::consts::SQRT_2).abs() < 1e-14
        );
        let expected = 2.0 * 1.0f64.sin() + 1.0f64.cos();
        assert!((p.hamiltonian(1.0, 0.0, 0.0, 2.0) - expected).abs() < 1e-14);
        assert!((expected - 2.223_244_275_483_533).abs() < 1e-12);
    }

    #[test]
    fn closed_form_argmax() {
        let p = unit_example();
        assert_eq!(p.argmax_control(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((p.argmax_control(0.0, 0.0, 1.0).unwrap() - FRAC_PI_4).abs() < 1e-15);
        // Large gradients saturate toward the interval ends but stay inside.
        let a = p.argmax_control(0.0, 0.0, 1e12).unwrap();
        assert!(p.control_set.contains(a) && a > FRAC_PI_2 - 1e-6);
    }

    #[test]
    fn grid_search_argmax_within_one_step() {
        let mut p = unit_example();
        p.argmax = ArgmaxMethod::GridSearch { samples: 10001 };
        let a = p.argmax_control(0.0, 0.0, 2.0).unwrap();
        let step = std::f64::consts::PI / 10000.0;
        assert!((a - 2.0f64.atan()).abs() <= step + 1e-15);
    }

    #[test]
    fn grid_search_and_closed_form_agree_to_resolution() {
        let cf = unit_example();
        let mut gs = unit_example();
        gs.argmax = ArgmaxMethod::GridSearch {
            samples: GRID_SEARCH_DEFAULT_SAMPLES,
        };
        let spacing = std::f64::consts::PI / (GRID_SEARCH_DEFAULT_SAMPLES - 1) as f64;
        for k in -40..=40 {
            let p = 0.25 * k as f64;
            let a_cf = cf.argmax_control(0.2, 0.0, p).unwrap();
            let a_gs = gs.argmax_control(0.2, 0.0, p).unwrap();
            assert!((a_cf - a_gs).abs() <= spacing + 1e-15, "p={p}");
            let h_cf = cf.hamiltonian(a_cf, 0.2, 0.0, p);
            let h_gs = cf.hamiltonian(a_gs, 0.2, 0.0, p);
            assert!(h_cf >= h_gs - 1e-12, "closed form must dominate, p={p}");
            let curvature = (1.0 + p * p).sqrt();
            assert!(h_cf - h_gs <= curvature * spacing * spacing, "p={p}");
        }
    }

    #[test]
    fn maximized_hamiltonian_identity() {
        // For s = k = 1, H at the maximizer equals sqrt(1 + p^2).
        let prob = unit_example();
        for k in -80..=80 {
            let p = 0.125 * k as f64;
            let a = prob.argmax_control(0.0, 0.0, p).unwrap();
            let h = prob.hamiltonian(a, 0.0, 0.0, p);
            assert!((h - (1.0 + p * p).sqrt()).abs() < 1e-10, "p={p}");
        }
    }

    #[test]
    fn golden_section_matches_closed_form() {
        let cf = unit_example();
        let mut golden = unit_example();
        golden.argmax = ArgmaxMethod::GoldenSection { tol: 1e-10 };
        for k in -8..=8 {
            let p = 0.5 * k as f64;
            let a = golden.argmax_control(0.1, 0.0, p).unwrap();
            let a_cf = cf.argmax_control(0.1, 0.0, p).unwrap();
            // Bracketing on function values cannot localize the maximizer
            // beyond ~sqrt(f64 epsilon) * scale, so compare arguments
            // coarsely and the maximized value tightly.
            assert!((a - a_cf).abs() < 5e-7, "p={p}");
            let regret = cf.hamiltonian(a_cf, 0.1, 0.0, p) - cf.hamiltonian(a, 0.1, 0.0, p);
            assert!(regret <= 1e-12, "regret {regret} at p={p}");
        }
    }

    #[test]
    fn argmax_invariant_under_reward_shift() {
        let mut base = unit_example();
        base.argmax = ArgmaxMethod::GridSearch { samples: 501 };
        let mut shifted = unit_example();
        shifted.running_reward = Box::new(|a: f64, _t, _x| a.cos() + 5.0);
        shifted.argmax = ArgmaxMethod::GridSearch { samples: 501 };
        for k in -10..=10 {
            let p = 0.3 * k as f64;
            let a = base.argmax_control(0.0, 0.0, p).unwrap();
            let b = shifted.argmax_control(0.0, 0.0, p).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "p={p}");
        }
    }

    #[test]
    fn example_handles_reference_values() {
        let p = unit_example();
        assert!(((p.drift)(FRAC_PI_2, 0.7, 3.0) - 1.0).abs() < 1e-15);
        assert_eq!((p.terminal_reward)(0.0), 0.0);
        assert!(((p.terminal_reward)(1.0) - FRAC_PI_4).abs() < 1e-15);
        assert!((p.diffusion_sq_half(0.0, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn registry_lookup() {
        assert!(by_name("example_s1k1").is_some());
        assert!(by_name("missing_entry").is_none());
    }

    #[test]
    fn out_of_range_oracle_is_rejected() {
        let mut p = unit_example();
        p.argmax = ArgmaxMethod::ClosedForm(Box::new(|_, _, _| 10.0));
        assert!(matches!(
            p.argmax_control(0.0, 0.0, 1.0),
            Err(Error::OracleOutOfRange { .. })
        ));
    }

    #[test]
    fn diffusion_validation() {
        let grid = GridSpec::new(-1.0, 1.0, 9, 1.0, 2).unwrap();
        assert!(unit_example().validate_on(&grid).is_ok());
        let mut degenerate = unit_example();
        degenerate.diffusion = Box::new(|_, _| 0.0);
        assert!(degenerate.validate_on(&grid).is_err());
    }

    #[test]
    fn singleton_control_set() {
        let set = ControlSet::new(0.0, 0.0).unwrap();
        let mut p = make_example(ExampleParams {
            drift_scale: Box::new(|_| 1.0),
            reward_scale: Box::new(|_| 1.0),
            control_set: set,
        });
        assert_eq!(p.argmax_control(0.0, 0.0, 5.0).unwrap(), 0.0);
        p.argmax = ArgmaxMethod::GridSearch { samples: 11 };
        assert_eq!(p.argmax_control(0.0, 0.0, 5.0).unwrap(), 0.0);
    }
}
