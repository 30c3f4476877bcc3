//! TOML experiment configuration: sections per concern, defaults equal to
//! the benchmark reproduction settings (the grid, tolerances, sweep sizes,
//! and Monte Carlo sizes the README documents).

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use hjb_lab::grid::GridSpec;
use hjb_lab::problem::{make_example, ControlProblem, ControlSet, ExampleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Pia,
    Gia,
    ReferenceOnly,
    StabilityPde,
    StabilityArgmax,
    McCrosscheck,
    Figures,
}

pub const EXPERIMENT_NAMES: [&str; 7] = [
    "pia",
    "gia",
    "reference_only",
    "stability_pde",
    "stability_argmax",
    "mc_crosscheck",
    "figures",
];

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pia" => Ok(Self::Pia),
            "gia" => Ok(Self::Gia),
            "reference_only" => Ok(Self::ReferenceOnly),
            "stability_pde" => Ok(Self::StabilityPde),
            "stability_argmax" => Ok(Self::StabilityArgmax),
            "mc_crosscheck" => Ok(Self::McCrosscheck),
            "figures" => Ok(Self::Figures),
            other => Err(format!(
                "unknown experiment `{other}`; expected one of {}",
                EXPERIMENT_NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Pia => "pia",
            Self::Gia => "gia",
            Self::ReferenceOnly => "reference_only",
            Self::StabilityPde => "stability_pde",
            Self::StabilityArgmax => "stability_argmax",
            Self::McCrosscheck => "mc_crosscheck",
            Self::Figures => "figures",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Which pipeline to run; the one required key.
    pub experiment: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub iterate: IterateSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub montecarlo: McSection,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default = "default_problem_name")]
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_control_lo")]
    pub control_lo: f64,
    #[serde(default = "default_control_hi")]
    pub control_hi: f64,
}

fn default_problem_name() -> String {
    "example_s1k1".into()
}

fn default_horizon() -> f64 {
    1.0
}

fn default_control_lo() -> f64 {
    -FRAC_PI_2
}

fn default_control_hi() -> f64 {
    FRAC_PI_2
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            name: default_problem_name(),
            horizon: default_horizon(),
            control_lo: default_control_lo(),
            control_hi: default_control_hi(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_nt")]
    pub nt: usize,
}

fn default_x_min() -> f64 {
    -6.0
}

fn default_x_max() -> f64 {
    6.0
}

fn default_nx() -> usize {
    599
}

fn default_nt() -> usize {
    400
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min: default_x_min(),
            x_max: default_x_max(),
            nx: default_nx(),
            nt: default_nt(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_inner_max")]
    pub inner_max: usize,
}

fn default_inner_tol() -> f64 {
    1e-12
}

fn default_inner_max() -> usize {
    50
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            inner_tol: default_inner_tol(),
            inner_max: default_inner_max(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub initial_control: f64,
    /// Write every iterate's value/policy fields instead of just the last.
    #[serde(default)]
    pub write_fields: bool,
}

fn default_max_iters() -> usize {
    15
}

fn default_stop_tol() -> f64 {
    1e-10
}

impl Default for IterateSection {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            stop_tol: default_stop_tol(),
            initial_control: 0.0,
            write_fields: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "default_argmax_offsets")]
    pub argmax_offsets: Vec<f64>,
    #[serde(default = "default_pde_noise")]
    pub pde_noise: Vec<f64>,
}

fn default_argmax_offsets() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

fn default_pde_noise() -> Vec<f64> {
    vec![1e-2, 1e-3]
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            argmax_offsets: default_argmax_offsets(),
            pde_noise: default_pde_noise(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_antithetic")]
    pub antithetic: bool,
    /// Which iterate's policy the cross-check simulates.
    #[serde(default = "default_policy_iter")]
    pub policy_iter: usize,
    /// (t, x) evaluation points inside the reporting window.
    #[serde(default = "default_points")]
    pub points: Vec<[f64; 2]>,
}

fn default_n_paths() -> usize {
    200_000
}

fn default_n_steps() -> usize {
    400
}

fn default_antithetic() -> bool {
    true
}

fn default_policy_iter() -> usize {
    5
}

fn default_points() -> Vec<[f64; 2]> {
    vec![
        [0.0, 0.0],
        [0.0, 1.0],
        [0.0, -1.0],
        [0.25, 0.5],
        [0.5, -2.0],
    ]
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            n_steps: default_n_steps(),
            antithetic: default_antithetic(),
            policy_iter: default_policy_iter(),
            points: default_points(),
        }
    }
}

impl Config {
    /// Read and validate a config file. All failures here are config errors.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: Config =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn experiment(&self) -> Result<Experiment, String> {
        match &self.experiment {
            None => Err("missing required key `experiment`".into()),
            Some(name) => name.parse(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        self.experiment()?;
        let p = &self.problem;
        if !(p.horizon.is_finite() && p.horizon > 0.0) {
            return Err(format!("problem.horizon must be positive, got {}", p.horizon));
        }
        if !(p.control_lo.is_finite() && p.control_hi.is_finite() && p.control_lo <= p.control_hi)
        {
            return Err(format!(
                "problem.control_lo..control_hi must be a finite interval, got [{}, {}]",
                p.control_lo, p.control_hi
            ));
        }
        if p.control_lo < -FRAC_PI_2 - 1e-12 || p.control_hi > FRAC_PI_2 + 1e-12 {
            return Err(format!(
                "control interval [{}, {}] must lie inside [-pi/2, pi/2]",
                p.control_lo, p.control_hi
            ));
        }
        if p.name != "example_s1k1" {
            return Err(format!(
                "unknown problem.name `{}`; known problems: example_s1k1",
                p.name
            ));
        }
        self.grid()?;
        let s = &self.solver;
        if !(s.inner_tol.is_finite() && s.inner_tol > 0.0) {
            return Err(format!("solver.inner_tol must be positive, got {}", s.inner_tol));
        }
        if s.inner_max < 1 {
            return Err("solver.inner_max must be at least 1".into());
        }
        let it = &self.iterate;
        if it.max_iters < 1 {
            return Err("iterate.max_iters must be at least 1".into());
        }
        if !(it.stop_tol.is_finite() && it.stop_tol > 0.0) {
            return Err(format!("iterate.stop_tol must be positive, got {}", it.stop_tol));
        }
        if !(it.initial_control >= p.control_lo && it.initial_control <= p.control_hi) {
            return Err(format!(
                "iterate.initial_control {} outside the control interval",
                it.initial_control
            ));
        }
        let st = &self.stability;
        if st.argmax_offsets.is_empty() || st.pde_noise.is_empty() {
            return Err("stability sweeps must be nonempty".into());
        }
        for v in st.argmax_offsets.iter().chain(&st.pde_noise) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(format!("stability sweep entries must be nonnegative, got {v}"));
            }
        }
        let mc = &self.montecarlo;
        if mc.n_paths < 2 {
            return Err("montecarlo.n_paths must be at least 2".into());
        }
        if mc.antithetic && mc.n_paths % 2 != 0 {
            return Err("montecarlo.n_paths must be even with antithetic sampling".into());
        }
        if mc.n_steps < 1 {
            return Err("montecarlo.n_steps must be at least 1".into());
        }
        if mc.points.is_empty() {
            return Err("montecarlo.points must be nonempty".into());
        }
        // The points are only consumed by the Monte Carlo experiment, so a
        // stale default (for example under a shortened horizon) must not
        // block the other pipelines.
        if self.experiment()? == Experiment::McCrosscheck {
            let grid = self.grid()?;
            for [t, x] in &mc.points {
                if !grid.window_contains(*t, *x) {
                    return Err(format!(
                        "montecarlo point (t={t}, x={x}) lies outside the reporting window \
                         [0, {}) x [{}, {}]",
                        grid.horizon,
                        grid.x_min / 2.0,
                        grid.x_max / 2.0
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec, String> {
        GridSpec::new(
            self.grid.x_min,
            self.grid.x_max,
            self.grid.nx,
            self.problem.horizon,
            self.grid.nt,
        )
        .map_err(|e| e.to_string())
    }

    pub fn build_problem(&self) -> Result<ControlProblem, String> {
        let control_set =
            ControlSet::new(self.problem.control_lo, self.problem.control_hi)
                .map_err(|e| e.to_string())?;
        match self.problem.name.as_str() {
            "example_s1k1" => Ok(make_example(ExampleParams {
                drift_scale: Box::new(|_| 1.0),
                reward_scale: Box::new(|_| 1.0),
                control_set,
            })),
            other => Err(format!("unknown problem.name `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_the_benchmark_settings() {
        let config: Config = toml::from_str("experiment = \"pia\"").unwrap();
        config.validate().unwrap();
        assert_eq!(config.experiment().unwrap(), Experiment::Pia);
        assert_eq!(config.seed, 42);
        let grid = config.grid().unwrap();
        assert_eq!((grid.nx, grid.nt), (599, 400));
        assert_eq!((grid.x_min, grid.x_max), (-6.0, 6.0));
        assert_eq!(grid.horizon, 1.0);
        assert_eq!(config.iterate.max_iters, 15);
        assert_eq!(config.iterate.stop_tol, 1e-10);
        assert_eq!(config.montecarlo.n_paths, 200_000);
        assert_eq!(config.stability.argmax_offsets, vec![0.2, 0.1, 0.05]);
    }

    #[test]
    fn missing_experiment_names_the_key() {
        let config: Config = toml::from_str("seed = 7").unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.contains("`experiment`"), "{err}");
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        let config: Config = toml::from_str("experiment = \"warp\"").unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.contains("warp"), "{err}");
    }

    #[test]
    fn semantic_errors_are_reported() {
        let bad = |body: &str| {
            let config: Config = toml::from_str(body).unwrap();
            config.validate().unwrap_err()
        };
        assert!(bad("experiment = \"pia\"\n[problem]\nhorizon = -1.0").contains("horizon"));
        assert!(bad("experiment = \"pia\"\n[problem]\ncontrol_lo = 2.0").contains("control"));
        assert!(bad("experiment = \"pia\"\n[iterate]\nstop_tol = 0.0").contains("stop_tol"));
        assert!(bad("experiment = \"pia\"\n[montecarlo]\nn_paths = 1").contains("n_paths"));
        assert!(
            bad("experiment = \"pia\"\n[montecarlo]\nn_paths = 11\nantithetic = true")
                .contains("even")
        );
        assert!(bad("experiment = \"pia\"\n[grid]\nnx = 1").contains("grid"));
        assert!(
            bad("experiment = \"mc_crosscheck\"\n[montecarlo]\npoints = [[0.5, 5.9]]")
                .contains("window")
        );
        // The same stale point is fine for experiments that never simulate.
        let config: Config =
            toml::from_str("experiment = \"pia\"\n[montecarlo]\npoints = [[0.5, 5.9]]").unwrap();
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = toml::from_str::<Config>("experiment = \"pia\"\ntypo_key = 1").unwrap_err();
        assert!(err.to_string().contains("typo_key"), "{err}");
    }
}
