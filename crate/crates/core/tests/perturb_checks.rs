//! Stability of both schemes under controlled damage: systematic and noisy
//! argmax perturbations, additive PDE noise, and coarse re-solves.

mod common;

use common::{bc, benchmark_grid, benchmark_problem, reference};
use hjb_lab::diagnostics::{detect_floor, fit_stability_slope, FLOOR_RATIO_DEFAULT};
use hjb_lab::iterate::{run_gia, run_pia, IterationConfig, IterationTrace};
use hjb_lab::perturb::{
    run_gia_perturbed, run_pia_perturbed, ArgmaxPerturbation, PdePerturbation, PerturbationSpec,
};

const SEED: u64 = 42;

fn recorded_config() -> IterationConfig {
    IterationConfig {
        record_fields: true,
        ..IterationConfig::default()
    }
}

fn clean_pia() -> IterationTrace {
    run_pia(
        &benchmark_problem(),
        &benchmark_grid(),
        &bc(),
        &recorded_config(),
        &reference().value,
    )
    .unwrap()
}

fn clean_gia() -> IterationTrace {
    run_gia(
        &benchmark_problem(),
        &benchmark_grid(),
        &bc(),
        &recorded_config(),
        &reference().value,
    )
    .unwrap()
}

fn offset_spec(eps0: f64) -> PerturbationSpec {
    PerturbationSpec {
        pde: PdePerturbation::None,
        argmax: ArgmaxPerturbation::ConstantOffset { eps0 },
        seed: SEED,
    }
}

#[test]
fn zero_offset_reproduces_the_clean_runs_bitwise() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_pia();
    let perturbed = run_pia_perturbed(
        &problem,
        &grid,
        &bc(),
        &recorded_config(),
        &offset_spec(0.0),
        &clean,
        &reference().value,
    )
    .unwrap();
    assert!(perturbed.gaps.iter().all(|g| *g == 0.0), "{:?}", perturbed.gaps);
    for (a, b) in perturbed.errors_vs_reference.iter().zip(&clean.errors) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    let clean = clean_gia();
    let perturbed = run_gia_perturbed(
        &problem,
        &grid,
        &bc(),
        &recorded_config(),
        &offset_spec(0.0),
        &clean,
        &reference().value,
    )
    .unwrap();
    assert!(perturbed.gaps.iter().all(|g| *g == 0.0), "{:?}", perturbed.gaps);
    for (a, b) in perturbed.errors_vs_reference.iter().zip(&clean.errors) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn pia_offset_sweep_is_monotone_and_quadratic() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_pia();
    let mut pairs = Vec::new();
    for eps0 in [0.2, 0.1, 0.05] {
        let p = run_pia_perturbed(
            &problem,
            &grid,
            &bc(),
            &recorded_config(),
            &offset_spec(eps0),
            &clean,
            &reference().value,
        )
        .unwrap();
        pairs.push((eps0, p.plateau_gap));
    }
    eprintln!("pia offset sweep: {pairs:?}");
    assert!(pairs[0].1 > pairs[1].1 && pairs[1].1 > pairs[2].1, "{pairs:?}");
    let frozen = [2.29e-2, 5.73e-3, 1.43e-3];
    for ((_, gap), want) in pairs.iter().zip(frozen) {
        assert!(
            *gap >= want / 2.0 && *gap <= want * 2.0,
            "gap {gap} drifted from frozen {want}"
        );
    }
    let slope = fit_stability_slope(&pairs).unwrap();
    eprintln!("pia offset slope = {slope}");
    // Interior maximizers degrade quadratically in a constant offset; pin
    // the measured exponent.
    assert!((slope - 2.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn gia_offset_sweep_is_monotone_and_quadratic() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_gia();
    let mut pairs = Vec::new();
    for eps0 in [0.2, 0.1, 0.05] {
        let p = run_gia_perturbed(
            &problem,
            &grid,
            &bc(),
            &recorded_config(),
            &offset_spec(eps0),
            &clean,
            &reference().value,
        )
        .unwrap();
        pairs.push((eps0, p.plateau_gap));
    }
    eprintln!("gia offset sweep: {pairs:?}");
    assert!(pairs[0].1 > pairs[1].1 && pairs[1].1 > pairs[2].1, "{pairs:?}");
    let slope = fit_stability_slope(&pairs).unwrap();
    eprintln!("gia offset slope = {slope}");
    assert!((slope - 2.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn huge_offset_keeps_iterates_bounded() {
    // Offset pi pushes every control to a set boundary: the worst admissible
    // policy still has |drift| <= 1, |reward| <= 1, so values stay within
    // max |g| + horizon of zero.
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_pia();
    let p = run_pia_perturbed(
        &problem,
        &grid,
        &bc(),
        &recorded_config(),
        &offset_spec(std::f64::consts::PI),
        &clean,
        &reference().value,
    )
    .unwrap();
    // max |g| + horizon * max |f|, plus O(dx) slack for the extrapolated
    // boundary columns.
    let bound = 6.0f64.atan() + grid.horizon + 0.01;
    for s in &p.sup_values {
        assert!(s.is_finite() && *s <= bound, "sup value {s} vs bound {bound}");
    }
    assert!(p.gaps.iter().all(|g| g.is_finite()));
}

#[test]
fn pia_additive_noise_floor_tracks_amplitude() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_pia();
    let clean_floor = detect_floor(&clean.errors, FLOOR_RATIO_DEFAULT)
        .unwrap()
        .level;
    let mut finals = Vec::new();
    for eta in [1e-2, 1e-3] {
        let spec = PerturbationSpec {
            pde: PdePerturbation::AdditiveNoise { eta },
            argmax: ArgmaxPerturbation::None,
            seed: SEED,
        };
        let p = run_pia_perturbed(
            &problem,
            &grid,
            &bc(),
            &recorded_config(),
            &spec,
            &clean,
            &reference().value,
        )
        .unwrap();
        let last = *p.errors_vs_reference.last().unwrap();
        eprintln!("pia additive noise eta={eta}: final error {last}, plateau gap {}", p.plateau_gap);
        assert!(
            last <= clean_floor + 10.0 * eta,
            "eta {eta}: error {last} above floor {clean_floor} + 10 eta"
        );
        finals.push(p.plateau_gap);
    }
    assert!(finals[1] < finals[0], "gaps not ordered: {finals:?}");
}

#[test]
fn gia_additive_noise_floor_tracks_amplitude() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_gia();
    let clean_floor = detect_floor(&clean.errors, FLOOR_RATIO_DEFAULT)
        .unwrap()
        .level;
    let mut finals = Vec::new();
    for eta in [1e-2, 1e-3] {
        let spec = PerturbationSpec {
            pde: PdePerturbation::AdditiveNoise { eta },
            argmax: ArgmaxPerturbation::None,
            seed: SEED,
        };
        let p = run_gia_perturbed(
            &problem,
            &grid,
            &bc(),
            &recorded_config(),
            &spec,
            &clean,
            &reference().value,
        )
        .unwrap();
        let last = *p.errors_vs_reference.last().unwrap();
        eprintln!("gia additive noise eta={eta}: final error {last}, plateau gap {}", p.plateau_gap);
        assert!(
            last <= clean_floor + 10.0 * eta,
            "eta {eta}: error {last} above floor {clean_floor} + 10 eta"
        );
        finals.push(p.plateau_gap);
    }
    assert!(finals[1] < finals[0], "gaps not ordered: {finals:?}");
}

#[test]
fn noisy_offsets_hurt_no_more_than_systematic_ones() {
    // Mean-zero noise of amplitude eps0 partially cancels across nodes, so
    // its plateau gap should not exceed the constant offset's by more than
    // a small slack.
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_pia();
    let run = |argmax: ArgmaxPerturbation| {
        run_pia_perturbed(
            &problem,
            &grid,
            &bc(),
            &recorded_config(),
            &PerturbationSpec {
                pde: PdePerturbation::None,
                argmax,
                seed: SEED,
            },
            &clean,
            &reference().value,
        )
        .unwrap()
        .plateau_gap
    };
    let systematic = run(ArgmaxPerturbation::ConstantOffset { eps0: 0.1 });
    let noisy = run(ArgmaxPerturbation::StateNoise { eps0: 0.1 });
    eprintln!("plateau gaps: systematic {systematic}, noisy {noisy}");
    assert!(noisy <= systematic * 1.05, "noisy {noisy} vs systematic {systematic}");
}

#[test]
fn coarse_resolve_gap_reflects_resolution_loss() {
    let problem = benchmark_problem();
    let grid = benchmark_grid();
    let clean = clean_pia();
    let spec = PerturbationSpec {
        pde: PdePerturbation::CoarseSolve { factor: 2 },
        argmax: ArgmaxPerturbation::None,
        seed: SEED,
    };
    let p = run_pia_perturbed(
        &problem,
        &grid,
        &bc(),
        &recorded_config(),
        &spec,
        &clean,
        &reference().value,
    )
    .unwrap();
    eprintln!("coarse-solve plateau gap = {}", p.plateau_gap);
    assert!(p.plateau_gap > 1e-6 && p.plateau_gap < 5e-2, "gap {}", p.plateau_gap);
    assert!(p.errors_vs_reference.iter().all(|e| e.is_finite()));
}
