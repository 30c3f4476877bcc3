//! Experiment pipelines behind the `hjblab` binary.
//!
//! Each experiment builds the configured control problem and grid, runs one
//! of the solvers or iteration drivers from the core crate, and writes its
//! artifacts (CSV traces, field dumps, and a key-value `report.txt`) into
//! the output directory. All artifacts are deterministic functions of the
//! config and seed: floats print with 17 significant digits, line endings
//! are `\n`, and the only field that varies between identical runs is the
//! `wall_ms` timing column of trace files.

use std::fmt::Write as _;
use std::path::Path;

use hjb_lab::diagnostics::{build_report, McCrossCheck, StabilitySweep, FLOOR_RATIO_DEFAULT};
use hjb_lab::grid::GridSpec;
use hjb_lab::hjb_ref::{solve_bellman, BellmanSolution};
use hjb_lab::iterate::{
    run_gia, run_pia, InitialPolicy, IterationConfig, IterationTrace, MONOTONE_TOL_DEFAULT,
};
use hjb_lab::linpde::BoundaryCondition;
use hjb_lab::montecarlo::{simulate_policy_value, McConfig};
use hjb_lab::perturb::{
    run_gia_perturbed, run_pia_perturbed, ArgmaxPerturbation, PdePerturbation, PerturbationSpec,
};
use hjb_lab::problem::ControlProblem;

use crate::config::{Config, Experiment};
use crate::output::OutputDir;

/// Failures split by exit code: config errors exit 2, runtime errors exit 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn rt(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub struct RunOptions<'a> {
    pub config_path: &'a Path,
    pub out_dir: &'a Path,
    /// Overrides the config's `seed` key when present.
    pub seed_override: Option<u64>,
    pub quiet: bool,
}

/// Load the config, run the selected experiment, and write its artifacts.
/// On failure every file written so far is removed.
pub fn run(opts: &RunOptions) -> Result<(), CliError> {
    let config = Config::load(opts.config_path).map_err(CliError::Config)?;
    let experiment = config.experiment().map_err(CliError::Config)?;
    let seed = opts.seed_override.unwrap_or(config.seed);
    let mut out = OutputDir::create(opts.out_dir).map_err(|e| {
        CliError::Runtime(format!(
            "cannot create output directory {}: {e}",
            opts.out_dir.display()
        ))
    })?;
    say(
        opts.quiet,
        format!("running {experiment} -> {}", out.dir().display()),
    );
    let result = match experiment {
        Experiment::Pia => iteration_experiment(&config, &mut out, opts.quiet, true),
        Experiment::Gia => iteration_experiment(&config, &mut out, opts.quiet, false),
        Experiment::ReferenceOnly => reference_only(&config, &mut out, opts.quiet),
        Experiment::StabilityPde => stability_pde(&config, seed, &mut out, opts.quiet),
        Experiment::StabilityArgmax => stability_argmax(&config, seed, &mut out, opts.quiet),
        Experiment::McCrosscheck => mc_crosscheck(&config, seed, &mut out, opts.quiet),
        Experiment::Figures => figures(&config, &mut out, opts.quiet),
    };
    result.map(|()| out.finish())
}

fn say(quiet: bool, msg: String) {
    if !quiet {
        println!("{msg}");
    }
}

fn bc() -> BoundaryCondition<'static> {
    BoundaryCondition::LinearExtrapolation
}

struct Lab {
    problem: ControlProblem,
    grid: GridSpec,
}

fn build_lab(config: &Config) -> Result<Lab, CliError> {
    Ok(Lab {
        problem: config.build_problem().map_err(CliError::Config)?,
        grid: config.grid().map_err(CliError::Config)?,
    })
}

fn solve_reference(config: &Config, lab: &Lab) -> Result<BellmanSolution, CliError> {
    solve_bellman(
        &lab.problem,
        &lab.grid,
        &bc(),
        config.solver.inner_tol,
        config.solver.inner_max,
    )
    .map_err(rt)
}

/// The iteration settings every experiment starts from: fields are always
/// recorded because reports, field dumps, and perturbed reruns consume them.
fn iteration_config(config: &Config, max_iters: usize, stop_tol: f64) -> IterationConfig {
    IterationConfig {
        max_iters,
        stop_tol,
        initial_policy: InitialPolicy::Constant(config.iterate.initial_control),
        initial_value: None,
        record_fields: true,
    }
}

fn configured_iteration(config: &Config) -> IterationConfig {
    iteration_config(config, config.iterate.max_iters, config.iterate.stop_tol)
}

/// Dump value/policy fields as `v_<n>.csv` / `a_<n>.csv`: every iterate when
/// `write_fields` is set, otherwise just the last one.
fn write_field_csvs(
    out: &mut OutputDir,
    trace: &IterationTrace,
    write_all: bool,
) -> Result<(), CliError> {
    let values = trace
        .values
        .as_ref()
        .ok_or_else(|| CliError::Runtime("trace has no recorded fields".into()))?;
    let policies = trace.policies.as_ref().unwrap();
    let first = if write_all { 0 } else { values.len() - 1 };
    for n in first..values.len() {
        out.write_with(&format!("v_{n}.csv"), |w| values[n].write_csv(w))
            .map_err(rt)?;
        out.write_with(&format!("a_{n}.csv"), |w| policies[n].write_csv(w))
            .map_err(rt)?;
    }
    Ok(())
}

fn write_sweep_csv(
    out: &mut OutputDir,
    name: &str,
    pairs: &[(f64, f64)],
) -> Result<(), CliError> {
    out.write_with(name, |w| {
        writeln!(w, "epsilon,plateau_gap")?;
        for (eps, gap) in pairs {
            writeln!(w, "{eps:.16e},{gap:.16e}")?;
        }
        Ok(())
    })
    .map_err(rt)
}

/// `pia` and `gia`: run one driver against the reference, write `trace.csv`,
/// the field dumps, and `report.txt`.
fn iteration_experiment(
    config: &Config,
    out: &mut OutputDir,
    quiet: bool,
    policy_improvement: bool,
) -> Result<(), CliError> {
    let lab = build_lab(config)?;
    let reference = solve_reference(config, &lab)?;
    let it_config = configured_iteration(config);
    let trace = if policy_improvement {
        run_pia(&lab.problem, &lab.grid, &bc(), &it_config, &reference.value)
    } else {
        run_gia(&lab.problem, &lab.grid, &bc(), &it_config, &reference.value)
    }
    .map_err(rt)?;
    out.write_with("trace.csv", |w| trace.write_trace_csv(w))
        .map_err(rt)?;
    write_field_csvs(out, &trace, config.iterate.write_fields)?;
    let monotone_tol = policy_improvement.then_some(MONOTONE_TOL_DEFAULT);
    let report = build_report(&trace, FLOOR_RATIO_DEFAULT, monotone_tol, vec![], &[]).map_err(rt)?;
    out.write_text("report.txt", &report.render()).map_err(rt)?;
    say(
        quiet,
        format!(
            "{} iterates, final error {:.3e}",
            trace.iterations(),
            trace.errors.last().copied().unwrap_or(f64::NAN)
        ),
    );
    Ok(())
}

/// `reference_only`: solve the terminal-value problem once and dump the
/// value and maximizing policy fields.
fn reference_only(config: &Config, out: &mut OutputDir, quiet: bool) -> Result<(), CliError> {
    let lab = build_lab(config)?;
    let solution = solve_reference(config, &lab)?;
    out.write_with("v_star.csv", |w| solution.value.write_csv(w))
        .map_err(rt)?;
    out.write_with("a_star.csv", |w| solution.policy.write_csv(w))
        .map_err(rt)?;
    let g = &lab.grid;
    let mut report = String::new();
    writeln!(report, "experiment = reference_only").unwrap();
    writeln!(
        report,
        "grid = x_min={} x_max={} nx={} horizon={} nt={}",
        g.x_min, g.x_max, g.nx, g.horizon, g.nt
    )
    .unwrap();
    writeln!(report, "inner_tol = {:e}", config.solver.inner_tol).unwrap();
    writeln!(report, "inner_max = {}", config.solver.inner_max).unwrap();
    writeln!(
        report,
        "value_at_t0_x0 = {:.16e}",
        solution.value.interpolate(0.0, 0.0)
    )
    .unwrap();
    writeln!(
        report,
        "policy_at_t0_x0 = {:.16e}",
        solution.policy.interpolate(0.0, 0.0)
    )
    .unwrap();
    out.write_text("report.txt", &report).map_err(rt)?;
    say(
        quiet,
        format!(
            "reference solved, v(0,0) = {:.6}",
            solution.value.interpolate(0.0, 0.0)
        ),
    );
    Ok(())
}

/// `stability_pde`: clean policy-improvement run plus reruns with additive
/// noise injected into every policy-evaluation solve, one per configured
/// amplitude.
fn stability_pde(
    config: &Config,
    seed: u64,
    out: &mut OutputDir,
    quiet: bool,
) -> Result<(), CliError> {
    let lab = build_lab(config)?;
    let reference = solve_reference(config, &lab)?;
    let it_config = configured_iteration(config);
    let clean = run_pia(&lab.problem, &lab.grid, &bc(), &it_config, &reference.value).map_err(rt)?;
    out.write_with("trace.csv", |w| clean.write_trace_csv(w))
        .map_err(rt)?;

    let mut pairs = Vec::new();
    for (k, &eta) in config.stability.pde_noise.iter().enumerate() {
        let spec = PerturbationSpec {
            pde: PdePerturbation::AdditiveNoise { eta },
            argmax: ArgmaxPerturbation::None,
            seed,
        };
        let perturbed = run_pia_perturbed(
            &lab.problem,
            &lab.grid,
            &bc(),
            &it_config,
            &spec,
            &clean,
            &reference.value,
        )
        .map_err(rt)?;
        out.write_with(&format!("noise_pia_{k}.csv"), |w| perturbed.write_csv(w))
            .map_err(rt)?;
        say(
            quiet,
            format!("eta = {eta:.3e}: plateau gap {:.3e}", perturbed.plateau_gap),
        );
        pairs.push((eta, perturbed.plateau_gap));
    }
    write_sweep_csv(out, "sweep_pia_noise.csv", &pairs)?;
    let sweep = StabilitySweep {
        label: "pia_noise".into(),
        grid: lab.grid,
        pairs,
    };
    let report = build_report(
        &clean,
        FLOOR_RATIO_DEFAULT,
        Some(MONOTONE_TOL_DEFAULT),
        vec![],
        &[sweep],
    )
    .map_err(rt)?;
    out.write_text("report.txt", &report.render()).map_err(rt)?;
    Ok(())
}

/// `stability_argmax`: clean runs of both drivers plus reruns whose
/// maximizer is offset by each configured constant, with ln-ln slope fits
/// of plateau gap against offset in the report.
fn stability_argmax(
    config: &Config,
    seed: u64,
    out: &mut OutputDir,
    quiet: bool,
) -> Result<(), CliError> {
    let lab = build_lab(config)?;
    let reference = solve_reference(config, &lab)?;
    let it_config = configured_iteration(config);
    let clean_pia =
        run_pia(&lab.problem, &lab.grid, &bc(), &it_config, &reference.value).map_err(rt)?;
    let clean_gia =
        run_gia(&lab.problem, &lab.grid, &bc(), &it_config, &reference.value).map_err(rt)?;
    out.write_with("trace.csv", |w| clean_pia.write_trace_csv(w))
        .map_err(rt)?;
    out.write_with("trace_gia.csv", |w| clean_gia.write_trace_csv(w))
        .map_err(rt)?;

    let mut sweeps = Vec::new();
    for (alg, clean) in [("pia", &clean_pia), ("gia", &clean_gia)] {
        let mut pairs = Vec::new();
        for (k, &eps0) in config.stability.argmax_offsets.iter().enumerate() {
            let spec = PerturbationSpec {
                pde: PdePerturbation::None,
                argmax: ArgmaxPerturbation::ConstantOffset { eps0 },
                seed,
            };
            let perturbed = if alg == "pia" {
                run_pia_perturbed(
                    &lab.problem,
                    &lab.grid,
                    &bc(),
                    &it_config,
                    &spec,
                    clean,
                    &reference.value,
                )
            } else {
                run_gia_perturbed(
                    &lab.problem,
                    &lab.grid,
                    &bc(),
                    &it_config,
                    &spec,
                    clean,
                    &reference.value,
                )
            }
            .map_err(rt)?;
            out.write_with(&format!("offset_{alg}_{k}.csv"), |w| perturbed.write_csv(w))
                .map_err(rt)?;
            say(
                quiet,
                format!(
                    "{alg} offset {eps0:.3e}: plateau gap {:.3e}",
                    perturbed.plateau_gap
                ),
            );
            pairs.push((eps0, perturbed.plateau_gap));
        }
        write_sweep_csv(out, &format!("sweep_{alg}_offset.csv"), &pairs)?;
        sweeps.push(StabilitySweep {
            label: format!("{alg}_offset"),
            grid: lab.grid,
            pairs,
        });
    }
    let report = build_report(
        &clean_pia,
        FLOOR_RATIO_DEFAULT,
        Some(MONOTONE_TOL_DEFAULT),
        vec![],
        &sweeps,
    )
    .map_err(rt)?;
    out.write_text("report.txt", &report.render()).map_err(rt)?;
    Ok(())
}

/// `mc_crosscheck`: force the policy-improvement driver through exactly
/// `policy_iter + 1` iterates, then compare that iterate's PDE value with a
/// Monte Carlo simulation of its policy at the configured points.
fn mc_crosscheck(
    config: &Config,
    seed: u64,
    out: &mut OutputDir,
    quiet: bool,
) -> Result<(), CliError> {
    let lab = build_lab(config)?;
    let reference = solve_reference(config, &lab)?;
    let n_iter = config.montecarlo.policy_iter;
    // A stop tolerance this small never triggers, so the driver is forced to
    // reach the requested iterate index.
    let it_config = iteration_config(config, n_iter + 1, 1e-30);
    let trace = run_pia(&lab.problem, &lab.grid, &bc(), &it_config, &reference.value).map_err(rt)?;
    if trace.iterations() <= n_iter {
        return Err(CliError::Runtime(format!(
            "driver stopped after {} iterates, before reaching iterate {n_iter}",
            trace.iterations()
        )));
    }
    out.write_with("trace.csv", |w| trace.write_trace_csv(w))
        .map_err(rt)?;
    let value = &trace.values.as_ref().unwrap()[n_iter];
    let policy = &trace.policies.as_ref().unwrap()[n_iter];

    let mc = McConfig {
        n_paths: config.montecarlo.n_paths,
        n_steps: config.montecarlo.n_steps,
        seed,
        antithetic: config.montecarlo.antithetic,
    };
    let mut checks = Vec::new();
    for &[t, x] in &config.montecarlo.points {
        let estimate = simulate_policy_value(&lab.problem, policy, t, x, &mc).map_err(rt)?;
        if estimate.escape_warning {
            eprintln!(
                "warning: {} of {} paths left the sanity box from (t={t}, x={x})",
                estimate.escaped_paths, estimate.n_paths
            );
        }
        let pde_value = value.interpolate(t, x);
        say(
            quiet,
            format!(
                "(t={t}, x={x}): mc {:.6} +- {:.1e}, pde {:.6}",
                estimate.mean, estimate.std_error, pde_value
            ),
        );
        checks.push(McCrossCheck {
            t,
            x,
            policy_iter: n_iter,
            mc_mean: estimate.mean,
            mc_stderr: estimate.std_error,
            pde_value,
        });
    }
    out.write_with("mc.csv", |w| {
        writeln!(w, "t,x,policy_iter,mc_mean,mc_stderr,pde_value,abs_gap")?;
        for c in &checks {
            writeln!(
                w,
                "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                c.t,
                c.x,
                c.policy_iter,
                c.mc_mean,
                c.mc_stderr,
                c.pde_value,
                (c.mc_mean - c.pde_value).abs()
            )?;
        }
        Ok(())
    })
    .map_err(rt)?;
    let report = build_report(
        &trace,
        FLOOR_RATIO_DEFAULT,
        Some(MONOTONE_TOL_DEFAULT),
        checks,
        &[],
    )
    .map_err(rt)?;
    out.write_text("report.txt", &report.render()).map_err(rt)?;
    Ok(())
}

/// `figures`: the plotting datasets. Writes exactly four CSVs plus the
/// report: per-iterate log10 errors for both drivers, the t = 0 policies of
/// iterates 0/1/5 next to the reference policy, and the reference value and
/// policy surfaces.
fn figures(config: &Config, out: &mut OutputDir, quiet: bool) -> Result<(), CliError> {
    let lab = build_lab(config)?;
    let reference = solve_reference(config, &lab)?;
    // Ten forced iterates so the error curve shows the full superlinear drop
    // and the floor, and iterate 5 exists for the policy figure.
    let pia_config = iteration_config(config, 10, 1e-30);
    let pia = run_pia(&lab.problem, &lab.grid, &bc(), &pia_config, &reference.value).map_err(rt)?;
    let gia_config = configured_iteration(config);
    let gia = run_gia(&lab.problem, &lab.grid, &bc(), &gia_config, &reference.value).map_err(rt)?;

    for (name, trace) in [
        ("fig1_pia_log_error.csv", &pia),
        ("fig1_gia_log_error.csv", &gia),
    ] {
        out.write_with(name, |w| {
            writeln!(w, "iter,log10_error")?;
            for (n, e) in trace.errors.iter().enumerate() {
                writeln!(w, "{n},{:.16e}", e.log10())?;
            }
            Ok(())
        })
        .map_err(rt)?;
    }

    let policies = pia.policies.as_ref().unwrap();
    if policies.len() <= 5 {
        return Err(CliError::Runtime(format!(
            "policy figure needs iterate 5, driver stopped after {} iterates",
            policies.len()
        )));
    }
    let g = &lab.grid;
    out.write_with("fig2_policies.csv", |w| {
        writeln!(w, "x,a_init,a_step1,a_step5,a_reference")?;
        for j in 0..g.n_cols() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                g.x(j),
                policies[0].at(0, j),
                policies[1].at(0, j),
                policies[5].at(0, j),
                reference.policy.at(0, j)
            )?;
        }
        Ok(())
    })
    .map_err(rt)?;

    out.write_with("fig3_value_policy.csv", |w| {
        writeln!(w, "t,x,v_star,a_star")?;
        for i in 0..g.n_rows() {
            for j in 0..g.n_cols() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    g.t(i),
                    g.x(j),
                    reference.value.at(i, j),
                    reference.policy.at(i, j)
                )?;
            }
        }
        Ok(())
    })
    .map_err(rt)?;

    let pia_report =
        build_report(&pia, FLOOR_RATIO_DEFAULT, Some(MONOTONE_TOL_DEFAULT), vec![], &[])
            .map_err(rt)?;
    let gia_report = build_report(&gia, FLOOR_RATIO_DEFAULT, None, vec![], &[]).map_err(rt)?;
    let mut report = pia_report.render();
    report.push_str("---\n");
    report.push_str(&gia_report.render());
    out.write_text("report.txt", &report).map_err(rt)?;
    say(
        quiet,
        format!(
            "figure data written: {} and {} iterates traced",
            pia.iterations(),
            gia.iterations()
        ),
    );
    Ok(())
}
