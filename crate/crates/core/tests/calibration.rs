use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use dualrail::calibration::*;
use dualrail::device::{DeviceParams, FluxMap};
use dualrail::error::Error;
use dualrail::protocols::{DualRailSystem, GateParams};

fn device() -> DeviceParams {
    DeviceParams::paper_device()
}

/// Steps 1–4 in exact-measurement mode, shared by the tests below.
fn exact_run() -> &'static CalibrationRun {
    static RUN: OnceLock<CalibrationRun> = OnceLock::new();
    RUN.get_or_init(|| calibrate(&device(), &CalibrationOptions::default(), true).unwrap())
}

fn calibrated_system(run: &CalibrationRun) -> DualRailSystem {
    let p = device();
    DualRailSystem::new(&p, run.state.operating_point(&p).unwrap(), 3, None).unwrap()
}

fn true_resonance_flux(p: &DeviceParams) -> f64 {
    transmon2_flux_map(p)
        .flux_for(p.transmons[0].omega_idle)
        .unwrap()
}

#[test]
fn resonance_recovered_within_a_tenth_of_a_step() {
    let p = device();
    let truth = true_resonance_flux(&p);
    for step in [1e-3, 2.5e-3] {
        for shift in [0.0, 0.3, -0.45] {
            let grid: Vec<f64> = (-5..=5)
                .map(|k| truth + step * (k as f64 + shift))
                .collect();
            let r = find_resonance(&p, &grid).unwrap();
            assert!(
                (r.flux - truth).abs() < step / 10.0,
                "step {step} shift {shift}: {} vs {truth}",
                r.flux
            );
        }
    }
}

#[test]
fn resonance_gap_is_twice_the_coupling() {
    let p = device();
    let truth = true_resonance_flux(&p);
    let grid: Vec<f64> = (-10..=10).map(|k| truth + 1e-3 * k as f64).collect();
    let r = find_resonance(&p, &grid).unwrap();
    assert!((r.gap / (2.0 * p.g12) - 1.0).abs() < 1e-3);
    let map = transmon2_flux_map(&p);
    assert!((map.frequency(r.flux) - r.omega2).abs() < 1e-6 * r.omega2);
}

#[test]
fn resonance_outside_grid_is_an_error() {
    let p = device();
    let truth = true_resonance_flux(&p);
    let grid: Vec<f64> = (1..=20).map(|k| truth + 1e-3 * k as f64).collect();
    assert!(matches!(
        find_resonance(&p, &grid),
        Err(Error::BoundaryOptimum(_))
    ));
    assert!(find_resonance(&p, &[0.1, 0.2]).is_err());
}

#[test]
fn init_pulse_reaches_one_l() {
    let run = exact_run();
    assert!(run.init.fidelity >= 0.99, "P1L = {}", run.init.fidelity);
    assert!(run.state.init_fidelity.unwrap() >= 0.99);
}

#[test]
fn doubling_init_duration_halves_amplitude() {
    let run = exact_run();
    let sys = calibrated_system(run);
    let mut long = GateParams::nominal(sys.gap());
    long.init_duration *= 2.0;
    long.init_sigma *= 2.0;
    let c = calibrate_init_amplitude(
        &sys,
        &long,
        &default_init_scan(&long),
        &CalibrationOptions::default(),
    )
    .unwrap();
    let ratio = c.amplitude / run.init.amplitude;
    assert!((ratio - 0.5).abs() < 0.025, "ratio {ratio}");
    assert!(c.fidelity >= 0.99);
}

#[test]
fn degenerate_init_scan_is_an_error() {
    let run = exact_run();
    let sys = calibrated_system(run);
    let g = GateParams::nominal(sys.gap());
    let a = g.init_amplitude;
    let opts = CalibrationOptions::default();
    assert!(calibrate_init_amplitude(&sys, &g, &[a, a, a, a], &opts).is_err());
    // Scan stopping short of the π pulse peaks at its edge.
    let short: Vec<f64> = (1..=10).map(|k| 0.05 * a * k as f64).collect();
    assert!(matches!(
        calibrate_init_amplitude(&sys, &g, &short, &opts),
        Err(Error::BoundaryOptimum(_))
    ));
}

#[test]
fn x90_calibration_quality() {
    let run = exact_run();
    assert!(
        run.x90.x90x4_fidelity >= 0.9999,
        "X90^4 {}",
        run.x90.x90x4_fidelity
    );
    assert!(
        run.x90.x90_fidelity >= 0.9999,
        "X90 {}",
        run.x90.x90_fidelity
    );
    assert!(
        run.x90.z_correction.abs() > 1e-3,
        "z {}",
        run.x90.z_correction
    );
    assert!(run.x90.iterations <= 20);
}

#[test]
fn injected_amplitude_error_is_corrected() {
    let run = exact_run();
    let sys = calibrated_system(run);
    let mut g = run.state.gate_params(sys.gap()).unwrap();
    g.x90_amplitude *= 1.05;
    let before = x90_rotation_angle(&sys, &g).unwrap();
    assert!((before / FRAC_PI_2 - 1.0).abs() > 0.04);
    let (amp, _) = refine_x90_amplitude(&sys, &g, &CalibrationOptions::default(), 0).unwrap();
    g.x90_amplitude = amp;
    let after = x90_rotation_angle(&sys, &g).unwrap();
    assert!((after / FRAC_PI_2 - 1.0).abs() < 1e-3, "angle {after}");
}

/// X90⁴ is blind to a tilt of the rotation axis once the angle is π/2, so
/// the ablation is also measured on alternating-axis X90 trains.
#[test]
fn dropping_z_correction_costs_fidelity() {
    let run = exact_run();
    let sys = calibrated_system(run);
    let mut g = run.state.gate_params(sys.gap()).unwrap();
    let train: Vec<f64> = (0..8)
        .map(|k| if k % 2 == 0 { 0.0 } else { FRAC_PI_2 })
        .collect();
    let x4 = x90x4_identity_fidelity(&sys, &g).unwrap();
    let alt = x90_sequence_fidelity(&sys, &g, &train).unwrap();
    g.z_correction = 0.0;
    let x4_ablated = x90x4_identity_fidelity(&sys, &g).unwrap();
    let alt_ablated = x90_sequence_fidelity(&sys, &g, &train).unwrap();
    println!("X90^4 {x4} -> {x4_ablated}, alternating {alt} -> {alt_ablated}");
    assert!(x4 >= x4_ablated - 1e-9);
    assert!(alt >= 0.999);
    assert!(alt - alt_ablated > 3e-5, "{alt} vs {alt_ablated}");
}

#[test]
fn z_correction_stable_across_seeds() {
    let run = exact_run();
    let sys = calibrated_system(run);
    let g = run.state.gate_params(sys.gap()).unwrap();
    for seed in 0..5 {
        let opts = CalibrationOptions {
            shots: Some(1_000_000),
            seed,
            transmon_dim: 3,
        };
        let c = calibrate_x90(&sys, &g, &opts).unwrap();
        assert!(
            (c.z_correction - run.x90.z_correction).abs() < 1e-3,
            "seed {seed}: {}",
            c.z_correction
        );
    }
}

#[test]
fn flux_refinement_matches_analytic_optimum() {
    let p = device();
    let f = exact_run().flux.as_ref().unwrap();
    assert!(
        (f.offset / f.predicted - 1.0).abs() < 0.05,
        "{} vs {}",
        f.offset,
        f.predicted
    );
    // Quadratic term (δ1 − δ2)²/(4g0) has second derivative 1/(2g0).
    let expected = 1.0 / (2.0 * p.g12);
    assert!(
        (f.curvature / expected - 1.0).abs() < 0.1,
        "curvature {}",
        f.curvature
    );
    assert!(f.predicted / dualrail::units::mhz(3.2) - 1.0 < 0.02);
}

#[test]
fn flux_curve_is_symmetric() {
    let f = exact_run().flux.as_ref().unwrap();
    let e: Vec<f64> = f.curve.iter().map(|c| c.1).collect();
    let mid = e.len() / 2;
    let span = e.iter().copied().fold(f64::MIN, f64::max) - e[mid];
    for j in 1..=mid {
        let asym = (e[mid + j] - e[mid - j]).abs();
        assert!(
            asym < 0.01 * span,
            "offset ±{j}: asymmetry {asym} of span {span}"
        );
    }
}

#[test]
fn flux_grid_missing_minimum_is_an_error() {
    let run = exact_run();
    let p = device();
    let sys = calibrated_system(run);
    let g = run.state.gate_params(sys.gap()).unwrap();
    let pred = run.flux.as_ref().unwrap().predicted;
    let grid: Vec<f64> = (0..4).map(|k| pred * (1.5 + 0.25 * k as f64)).collect();
    let r = refine_flux_offset(
        &p,
        sys.point.omega2,
        &g,
        &grid,
        &CalibrationOptions::default(),
    );
    assert!(matches!(r, Err(Error::BoundaryOptimum(_))));
}

#[test]
fn steps_require_their_predecessors() {
    let p = device();
    let mut st = CalibrationState::default();
    let sys = DualRailSystem::new(&p, dualrail::device::OperatingPoint::idle(&p), 3, None).unwrap();
    assert!(matches!(
        st.run_step2(&sys, &CalibrationOptions::default()),
        Err(Error::Uncalibrated(_))
    ));
    assert!(matches!(
        st.run_step3(&sys, &CalibrationOptions::default()),
        Err(Error::Uncalibrated(_))
    ));
    assert!(st.gate_params(1.0).is_err());
    let steps: Vec<u8> = exact_run()
        .state
        .provenance
        .iter()
        .map(|e| e.step)
        .collect();
    assert_eq!(steps, vec![1, 2, 3, 4]);
    let seq: Vec<u32> = exact_run()
        .state
        .provenance
        .iter()
        .map(|e| e.sequence)
        .collect();
    assert_eq!(seq, vec![0, 1, 2, 3]);
}

#[test]
fn recalibration_is_idempotent() {
    let run = exact_run();
    let sys = calibrated_system(run);
    let mut st = run.state.clone();
    st.run_step2(&sys, &CalibrationOptions::default()).unwrap();
    st.run_step3(&sys, &CalibrationOptions::default()).unwrap();
    for (a, b, name) in [
        (st.init_amplitude, run.state.init_amplitude, "init"),
        (st.x90_amplitude, run.state.x90_amplitude, "x90"),
    ] {
        let (a, b) = (a.unwrap(), b.unwrap());
        assert!((a / b - 1.0).abs() < 1e-3, "{name}: {a} vs {b}");
    }
    assert!((st.z_correction.unwrap() - run.state.z_correction.unwrap()).abs() < 1e-3);
}

#[test]
fn shot_noise_suite_meets_gate_targets() {
    let p = device();
    for seed in 0..10 {
        let opts = CalibrationOptions {
            shots: Some(10_000),
            seed,
            transmon_dim: 3,
        };
        let r = calibrate(&p, &opts, false).unwrap();
        assert!(
            r.init.fidelity >= 0.99,
            "seed {seed}: init {}",
            r.init.fidelity
        );
        assert!(
            r.x90.x90x4_fidelity >= 0.9999,
            "seed {seed}: X90^4 {}",
            r.x90.x90x4_fidelity
        );
    }
}
