//! Perturbed reruns of the iteration drivers.
//!
//! The two inner operations of both algorithms can be deliberately damaged:
//! the PDE evaluation (additive noise on the solved iterate, or replacing
//! the solve by one on a coarser grid) and the Hamiltonian maximization
//! (offsetting the maximizer by a constant or by state-dependent noise).
//! A perturbed run mirrors a recorded clean trace iteration for iteration
//! and reports, per iteration, the sup gap to the clean iterate and the sup
//! error against the reference, both on the reporting window.
//!
//! All injected noise is keyed counter-based on (seed, iteration, row,
//! column), so runs are reproducible under any scheduling. With both modes
//! switched off the rerun executes exactly the clean code path and matches
//! it bit for bit.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid::{sup_norm_diff_window, GridSpec, PolicyField, ValueField};
use crate::iterate::{
    evaluate_policy, improve_policy, Algorithm, IterationConfig, IterationTrace,
};
use crate::linpde::{solve_backward, BoundaryCondition, GridPoint, PdeCoefficients};
use crate::problem::ControlProblem;
use crate::rng::{CounterRng, STREAM_ARGMAX_NOISE, STREAM_PDE_NOISE};

/// How the policy-evaluation solve is damaged.
pub enum PdePerturbation {
    None,
    /// Add independent uniform noise of amplitude `eta` to every node of the
    /// solved iterate.
    AdditiveNoise { eta: f64 },
    /// Solve on a grid coarsened by `factor` in both axes (at least 2) and
    /// interpolate the result back bilinearly.
    CoarseSolve { factor: usize },
}

/// How the maximizer output is damaged.
pub enum ArgmaxPerturbation {
    None,
    /// Add `eps0` to every maximizer, clamped into the control set.
    ConstantOffset { eps0: f64 },
    /// Add uniform noise of amplitude `eps0`, independent per node and
    /// iteration, clamped into the control set.
    StateNoise { eps0: f64 },
}

pub struct PerturbationSpec {
    pub pde: PdePerturbation,
    pub argmax: ArgmaxPerturbation,
    pub seed: u64,
}

impl PerturbationSpec {
    fn validate(&self) -> Result<()> {
        match self.pde {
            PdePerturbation::AdditiveNoise { eta } if !(eta.is_finite() && eta >= 0.0) => {
                return Err(Error::InvalidPerturbation(format!(
                    "noise amplitude must be finite and nonnegative, got {eta}"
                )));
            }
            PdePerturbation::CoarseSolve { factor } if factor < 2 => {
                return Err(Error::InvalidPerturbation(format!(
                    "coarsening factor must be at least 2, got {factor}"
                )));
            }
            _ => {}
        }
        match self.argmax {
            ArgmaxPerturbation::ConstantOffset { eps0 } | ArgmaxPerturbation::StateNoise { eps0 }
                if !eps0.is_finite() =>
            {
                Err(Error::InvalidPerturbation(format!(
                    "maximizer offset must be finite, got {eps0}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Per-iteration gaps of a perturbed rerun.
pub struct PerturbedTrace {
    /// sup |clean v^n - perturbed v^n| on the reporting window.
    pub gaps: Vec<f64>,
    /// sup |reference - perturbed v^n| on the reporting window.
    pub errors_vs_reference: Vec<f64>,
    /// sup |perturbed v^n| over the grid, for boundedness checks.
    pub sup_values: Vec<f64>,
    /// Mean of the last (up to) three gaps: the settled gap level.
    pub plateau_gap: f64,
}

impl PerturbedTrace {
    /// CSV with header `iter,gap_sup,error_vs_reference`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iter,gap_sup,error_vs_reference")?;
        for n in 0..self.gaps.len() {
            writeln!(
                w,
                "{},{:.16e},{:.16e}",
                n, self.gaps[n], self.errors_vs_reference[n]
            )?;
        }
        Ok(())
    }
}

fn plateau(gaps: &[f64]) -> f64 {
    let k = gaps.len().min(3);
    if k == 0 {
        return 0.0;
    }
    gaps[gaps.len() - k..].iter().sum::<f64>() / k as f64
}

fn sup_abs(v: &ValueField) -> f64 {
    let g = v.grid();
    let mut worst = 0.0f64;
    for i in 0..g.n_rows() {
        for j in 0..g.n_cols() {
            worst = worst.max(v.at(i, j).abs());
        }
    }
    worst
}

fn check_clean_trace(
    clean: &IterationTrace,
    grid: &GridSpec,
    algorithm: Algorithm,
) -> Result<()> {
    if clean.algorithm != algorithm {
        return Err(Error::InvalidPerturbation(
            "clean trace comes from the other algorithm".into(),
        ));
    }
    if clean.grid != *grid {
        return Err(Error::InvalidPerturbation(
            "clean trace grid differs from the solve grid".into(),
        ));
    }
    if clean.values.is_none() {
        return Err(Error::FieldsNotRecorded);
    }
    Ok(())
}

/// Coarsen both axes by `factor`, keeping the grid admissible.
fn coarsen(grid: &GridSpec, factor: usize) -> GridSpec {
    GridSpec {
        x_min: grid.x_min,
        x_max: grid.x_max,
        nx: (grid.nx / factor).max(3),
        horizon: grid.horizon,
        nt: (grid.nt / factor).max(1),
    }
}

/// Post-process a solved iterate. `coarse_solve` re-solves the same linear
/// problem on a given coarser grid; each driver supplies its own equation.
fn apply_pde_perturbation(
    mode: &PdePerturbation,
    grid: &GridSpec,
    v: ValueField,
    iter: usize,
    rng: &CounterRng,
    coarse_solve: impl FnOnce(&GridSpec) -> Result<ValueField>,
) -> Result<ValueField> {
    match mode {
        PdePerturbation::None => Ok(v),
        PdePerturbation::AdditiveNoise { eta } => {
            let mut out = v;
            for i in 0..grid.n_rows() {
                for j in 0..grid.n_cols() {
                    let noise = eta * rng.symmetric(iter as u64, i as u64, j as u64);
                    out.set(i, j, out.at(i, j) + noise);
                }
            }
            Ok(out)
        }
        PdePerturbation::CoarseSolve { factor } => {
            let coarse_v = coarse_solve(&coarsen(grid, *factor))?;
            Ok(ValueField::from_fn(*grid, |t, x| coarse_v.interpolate(t, x)))
        }
    }
}

fn apply_argmax_perturbation(
    mode: &ArgmaxPerturbation,
    problem: &ControlProblem,
    policy: &mut PolicyField,
    iter: usize,
    rng: &CounterRng,
) {
    let grid = *policy.grid();
    match mode {
        ArgmaxPerturbation::None => {}
        ArgmaxPerturbation::ConstantOffset { eps0 } => {
            for i in 0..grid.n_rows() {
                for j in 0..grid.n_cols() {
                    let a = problem.control_set.clamp(policy.at(i, j) + eps0);
                    policy.set(i, j, a);
                }
            }
        }
        ArgmaxPerturbation::StateNoise { eps0 } => {
            for i in 0..grid.n_rows() {
                for j in 0..grid.n_cols() {
                    let noise = eps0 * rng.symmetric(iter as u64, i as u64, j as u64);
                    let a = problem.control_set.clamp(policy.at(i, j) + noise);
                    policy.set(i, j, a);
                }
            }
        }
    }
}

/// Rerun policy improvement under the perturbation spec, mirroring `clean`
/// iteration for iteration. `config` must be the configuration the clean
/// trace was produced with.
pub fn run_pia_perturbed(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    config: &IterationConfig,
    spec: &PerturbationSpec,
    clean: &IterationTrace,
    reference: &ValueField,
) -> Result<PerturbedTrace> {
    spec.validate()?;
    check_clean_trace(clean, grid, Algorithm::PolicyImprovement)?;
    let clean_values = clean.values.as_ref().unwrap();
    let rng_pde = CounterRng::new(spec.seed, STREAM_PDE_NOISE);
    let rng_arg = CounterRng::new(spec.seed, STREAM_ARGMAX_NOISE);

    let mut policy = crate::iterate::materialize_initial(problem, grid, &config.initial_policy)?;
    let mut gaps = Vec::new();
    let mut errors = Vec::new();
    let mut sups = Vec::new();
    for n in 0..clean.iterations() {
        let exact = evaluate_policy(problem, grid, bc, &policy)?;
        let v = apply_pde_perturbation(&spec.pde, grid, exact, n, &rng_pde, |coarse| {
            // Same policy evaluation, on the coarse grid, with the policy
            // looked up bilinearly from the fine field.
            let coeffs = PdeCoefficients {
                advection: Box::new(|gp: GridPoint| {
                    (problem.drift)(policy.interpolate(gp.t, gp.x), gp.t, gp.x)
                }),
                source: Box::new(|gp: GridPoint| {
                    (problem.running_reward)(policy.interpolate(gp.t, gp.x), gp.t, gp.x)
                }),
                diffusion_sq_half: Box::new(|gp: GridPoint| problem.diffusion_sq_half(gp.t, gp.x)),
                terminal: Box::new(|x| (problem.terminal_reward)(x)),
            };
            solve_backward(&coeffs, coarse, bc)
        })?;
        gaps.push(sup_norm_diff_window(&v, &clean_values[n])?);
        errors.push(sup_norm_diff_window(&v, reference)?);
        sups.push(sup_abs(&v));
        let mut next = improve_policy(problem, grid, &v)?;
        apply_argmax_perturbation(&spec.argmax, problem, &mut next, n, &rng_arg);
        policy = next;
    }
    let plateau_gap = plateau(&gaps);
    Ok(PerturbedTrace {
        gaps,
        errors_vs_reference: errors,
        sup_values: sups,
        plateau_gap,
    })
}

/// Rerun gradient iteration under the perturbation spec, starting from the
/// clean run's v^0 and mirroring it iteration for iteration.
pub fn run_gia_perturbed(
    problem: &ControlProblem,
    grid: &GridSpec,
    bc: &BoundaryCondition,
    _config: &IterationConfig,
    spec: &PerturbationSpec,
    clean: &IterationTrace,
    reference: &ValueField,
) -> Result<PerturbedTrace> {
    spec.validate()?;
    check_clean_trace(clean, grid, Algorithm::GradientIteration)?;
    let clean_values = clean.values.as_ref().unwrap();
    let rng_pde = CounterRng::new(spec.seed, STREAM_PDE_NOISE);
    let rng_arg = CounterRng::new(spec.seed, STREAM_ARGMAX_NOISE);

    let mut v_prev = clean_values[0].clone();
    let mut gaps = vec![sup_norm_diff_window(&v_prev, &clean_values[0])?];
    let mut errors = vec![sup_norm_diff_window(&v_prev, reference)?];
    let mut sups = vec![sup_abs(&v_prev)];

    for n in 1..clean.iterations() {
        // Maximize at the central quotients of the previous perturbed
        // iterate, damage the maximizer, then solve the pure source problem
        // with the damaged policy. Mirrors `iterate`'s gradient step exactly
        // when both modes are off.
        let mut a_field = PolicyField::constant(*grid, 0.0);
        let mut gradient = ValueField::constant(*grid, 0.0);
        for i in 0..grid.n_rows() {
            let t = grid.t(i);
            for j in 0..grid.n_cols() {
                let p = v_prev.gradient(i, j);
                a_field.set(i, j, problem.argmax_control(t, grid.x(j), p)?);
                gradient.set(i, j, p);
            }
        }
        apply_argmax_perturbation(&spec.argmax, problem, &mut a_field, n, &rng_arg);
        let mut source = ValueField::constant(*grid, 0.0);
        for i in 0..grid.n_rows() {
            let t = grid.t(i);
            for j in 0..grid.n_cols() {
                let h = problem.hamiltonian(a_field.at(i, j), t, grid.x(j), gradient.at(i, j));
                source.set(i, j, h);
            }
        }
        let coeffs = PdeCoefficients {
            advection: Box::new(|_: GridPoint| 0.0),
            source: Box::new(|gp: GridPoint| source.at(gp.i, gp.j)),
            diffusion_sq_half: Box::new(|gp: GridPoint| problem.diffusion_sq_half(gp.t, gp.x)),
            terminal: Box::new(|x| (problem.terminal_reward)(x)),
        };
        let exact = solve_backward(&coeffs, grid, bc)?;
        let v = apply_pde_perturbation(&spec.pde, grid, exact, n, &rng_pde, |coarse| {
            // Same pure source problem on the coarse grid, with the frozen
            // Hamiltonian source looked up bilinearly from the fine field.
            let coarse_coeffs = PdeCoefficients {
                advection: Box::new(|_: GridPoint| 0.0),
                source: Box::new(|gp: GridPoint| source.interpolate(gp.t, gp.x)),
                diffusion_sq_half: Box::new(|gp: GridPoint| problem.diffusion_sq_half(gp.t, gp.x)),
                terminal: Box::new(|x| (problem.terminal_reward)(x)),
            };
            solve_backward(&coarse_coeffs, coarse, bc)
        })?;
        gaps.push(sup_norm_diff_window(&v, &clean_values[n])?);
        errors.push(sup_norm_diff_window(&v, reference)?);
        sups.push(sup_abs(&v));
        v_prev = v;
    }
    let plateau_gap = plateau(&gaps);
    Ok(PerturbedTrace {
        gaps,
        errors_vs_reference: errors,
        sup_values: sups,
        plateau_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb_ref::{solve_bellman, INNER_MAX_DEFAULT, INNER_TOL_DEFAULT};
    use crate::iterate::{run_gia, run_pia};
    use crate::problem::{make_example, ExampleParams};

    struct Setup {
        grid: GridSpec,
        problem: ControlProblem,
        reference: ValueField,
        config: IterationConfig,
    }

    fn setup() -> Setup {
        let grid = GridSpec::new(-4.0, 4.0, 79, 0.5, 25).unwrap();
        let problem = make_example(ExampleParams::unit());
        let reference =
            solve_bellman(&problem, &grid, &bc(), INNER_TOL_DEFAULT, INNER_MAX_DEFAULT)
                .unwrap()
                .value;
        let config = IterationConfig {
            record_fields: true,
            ..IterationConfig::default()
        };
        Setup {
            grid,
            problem,
            reference,
            config,
        }
    }

    fn bc() -> BoundaryCondition<'static> {
        BoundaryCondition::LinearExtrapolation
    }

    fn none_spec() -> PerturbationSpec {
        PerturbationSpec {
            pde: PdePerturbation::None,
            argmax: ArgmaxPerturbation::None,
            seed: 7,
        }
    }

    #[test]
    fn unperturbed_rerun_is_bit_identical_pia() {
        let s = setup();
        let clean = run_pia(&s.problem, &s.grid, &bc(), &s.config, &s.reference).unwrap();
        let p = run_pia_perturbed(
            &s.problem,
            &s.grid,
            &bc(),
            &s.config,
            &none_spec(),
            &clean,
            &s.reference,
        )
        .unwrap();
        assert!(p.gaps.iter().all(|g| *g == 0.0), "gaps {:?}", p.gaps);
        for (a, b) in p.errors_vs_reference.iter().zip(&clean.errors) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn unperturbed_rerun_is_bit_identical_gia() {
        let s = setup();
        let clean = run_gia(&s.problem, &s.grid, &bc(), &s.config, &s.reference).unwrap();
        let p = run_gia_perturbed(
            &s.problem,
            &s.grid,
            &bc(),
            &s.config,
            &none_spec(),
            &clean,
            &s.reference,
        )
        .unwrap();
        assert!(p.gaps.iter().all(|g| *g == 0.0), "gaps {:?}", p.gaps);
        for (a, b) in p.errors_vs_reference.iter().zip(&clean.errors) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn recorded_fields_are_required() {
        let s = setup();
        let thin = IterationConfig::default();
        let clean = run_pia(&s.problem, &s.grid, &bc(), &thin, &s.reference).unwrap();
        assert!(matches!(
            run_pia_perturbed(
                &s.problem,
                &s.grid,
                &bc(),
                &thin,
                &none_spec(),
                &clean,
                &s.reference
            ),
            Err(Error::FieldsNotRecorded)
        ));
    }

    #[test]
    fn spec_validation() {
        let bad_eta = PerturbationSpec {
            pde: PdePerturbation::AdditiveNoise { eta: -1.0 },
            argmax: ArgmaxPerturbation::None,
            seed: 0,
        };
        assert!(bad_eta.validate().is_err());
        let bad_factor = PerturbationSpec {
            pde: PdePerturbation::CoarseSolve { factor: 1 },
            argmax: ArgmaxPerturbation::None,
            seed: 0,
        };
        assert!(bad_factor.validate().is_err());
        let bad_eps = PerturbationSpec {
            pde: PdePerturbation::None,
            argmax: ArgmaxPerturbation::ConstantOffset { eps0: f64::NAN },
            seed: 0,
        };
        assert!(bad_eps.validate().is_err());
    }

    #[test]
    fn algorithm_mismatch_is_rejected() {
        let s = setup();
        let clean = run_gia(&s.problem, &s.grid, &bc(), &s.config, &s.reference).unwrap();
        assert!(run_pia_perturbed(
            &s.problem,
            &s.grid,
            &bc(),
            &s.config,
            &none_spec(),
            &clean,
            &s.reference
        )
        .is_err());
    }

    #[test]
    fn state_noise_is_seed_reproducible() {
        let s = setup();
        let clean = run_pia(&s.problem, &s.grid, &bc(), &s.config, &s.reference).unwrap();
        let spec = |seed| PerturbationSpec {
            pde: PdePerturbation::None,
            argmax: ArgmaxPerturbation::StateNoise { eps0: 0.1 },
            seed,
        };
        let run = |seed| {
            run_pia_perturbed(
                &s.problem,
                &s.grid,
                &bc(),
                &s.config,
                &spec(seed),
                &clean,
                &s.reference,
            )
            .unwrap()
        };
        let (a, b, c) = (run(5), run(5), run(6));
        for (x, y) in a.gaps.iter().zip(&b.gaps) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(a.gaps.iter().zip(&c.gaps).skip(1).any(|(x, y)| x != y));
    }

    #[test]
    fn coarse_solve_produces_moderate_gap() {
        let s = setup();
        let clean = run_pia(&s.problem, &s.grid, &bc(), &s.config, &s.reference).unwrap();
        let spec = PerturbationSpec {
            pde: PdePerturbation::CoarseSolve { factor: 2 },
            argmax: ArgmaxPerturbation::None,
            seed: 0,
        };
        let p = run_pia_perturbed(
            &s.problem,
            &s.grid,
            &bc(),
            &s.config,
            &spec,
            &clean,
            &s.reference,
        )
        .unwrap();
        assert!(p.plateau_gap > 0.0);
        // Halving the resolution costs a discretization-sized error, so the
        // gap should stay well under the coarse grid spacing.
        assert!(p.plateau_gap < s.grid.dx() * 2.0, "gap {}", p.plateau_gap);
        assert!(p.gaps.iter().all(|g| g.is_finite()));
    }
}
