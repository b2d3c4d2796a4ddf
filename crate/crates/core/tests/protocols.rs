use std::f64::consts::PI;

use dualrail::analysis::{curve, rb_analyze, PostselectionPolicy};
use dualrail::device::{dual_rail_gap_scaled, DeviceParams, OperatingPoint};
use dualrail::hilbert::DualRailLevel;
use dualrail::protocols::builders::{even_instants, expected_bits};
use dualrail::protocols::{
    build_cpmg, build_echo_with_checks, build_ramsey, compile_rb, rb_generate, run_rb_experiment,
    run_sweep, ChannelExecutor, CircuitExecutor, CompileMode, DualRailSystem, ErasureCheckModel,
    ErasureNoise, GapModel, GapTelegraph, GateParams, NoiseConfig, RbExperiment, ReadoutModel,
    ScheduleBuilder, SweepPoint, TrajectoryExecutor,
};
use dualrail::units::{mhz, us};

fn device() -> (DeviceParams, OperatingPoint) {
    let p = DeviceParams::paper_device();
    let w = p.transmons[1].omega_idle;
    let point = OperatingPoint::new(p.transmons[0].omega_idle, w, w, p.g12);
    (p, point)
}

fn channel(noise: NoiseConfig, check: ErasureCheckModel) -> (ChannelExecutor, GateParams) {
    let (p, point) = device();
    let gates = GateParams::nominal(dual_rail_gap_scaled(
        p.g12,
        point.omega0,
        point.delta1,
        point.delta2,
    ));
    let exec = ChannelExecutor::new(gates.clone(), noise, check, ReadoutModel::perfect())
        .unwrap()
        .with_gap_model(GapModel::new(&p, &point));
    (exec, gates)
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

#[test]
fn ideal_echo_ends_in_zero_l_and_phase_pi_flips_it() {
    let (exec, gates) = channel(NoiseConfig::noiseless(), ErasureCheckModel::perfect());
    let chk = ErasureCheckModel::perfect();
    for (phase, bits) in [(0.0, [0, 1]), (PI, [1, 0])] {
        let s = build_cpmg(&gates, 1, us(10.0), 2, phase, &chk).unwrap();
        let recs = exec.run_circuit(&s, &seeds(50)).unwrap();
        assert!(recs.iter().all(|r| r.final_bits == bits), "phase {phase}");
    }
}

#[test]
fn cpmg_structure() {
    let (_, gates) = channel(NoiseConfig::noiseless(), ErasureCheckModel::perfect());
    let chk = ErasureCheckModel::default();
    let n = 8;
    let tau = us(2.0);
    let s = build_cpmg(&gates, n, tau, 3, 0.0, &chk).unwrap();
    // init, two π/2 and two X90 per refocusing pulse
    assert_eq!(s.segments.len(), 1 + 2 + 2 * n);
    let pulses = gates.init_duration + (2 + 2 * n) as f64 * gates.x90_duration;
    assert!((s.total_duration - (pulses + n as f64 * tau)).abs() < 1e-15);
    assert_eq!(s.check_times.len(), 3);
    for &t in &s.check_times {
        let window_start = t - chk.duration();
        assert!(s
            .segments
            .iter()
            .all(|seg| seg.t_end() <= window_start + 1e-15 || seg.t_start >= t - 1e-15));
    }
    assert!(build_cpmg(&gates, 0, tau, 0, 0.0, &chk).is_err());
}

#[test]
fn place_checks_moves_checks_off_pulses() {
    let (_, gates) = channel(NoiseConfig::noiseless(), ErasureCheckModel::perfect());
    let mut b = ScheduleBuilder::new(&gates);
    b.init(DualRailLevel::One).unwrap().x90(0.0);
    let end_x90 = b.time();
    b.idle(us(5.0)).unwrap();
    let w = us(0.88);
    let placed = b.place_checks(&[0.0, end_x90, us(3.0)], w);
    // windows overlapping the init and X90 all land one window after the X90
    assert!((placed[0] - (end_x90 + w)).abs() < 1e-15);
    assert!((placed[1] - (end_x90 + w)).abs() < 1e-15);
    assert_eq!(placed[2], us(3.0));
    let s = b.build().unwrap();
    assert_eq!(s.check_times.len(), 3);
    assert_eq!(even_instants(0.0, 1.0, 1), vec![0.5]);
}

#[test]
fn virtual_z_and_explicit_phase_compile_to_the_same_physics() {
    let (p, point) = device();
    let sys = DualRailSystem::new(&p, point, 2, None).unwrap();
    let gates = GateParams::nominal(sys.gap());
    let chk = ErasureCheckModel::perfect();
    let vac = sys.vector(DualRailLevel::Vacuum).unwrap();
    for (depth, seed) in [(3, 1), (6, 2)] {
        let seq = rb_generate(depth, seed, DualRailLevel::Zero).unwrap();
        let a = compile_rb(&gates, &seq, 0, 0.0, &chk, CompileMode::VirtualZ).unwrap();
        let b = compile_rb(&gates, &seq, 0, 0.0, &chk, CompileMode::ExplicitPhase).unwrap();
        let (pa, pb) = (sys.evolve(&a, &vac).unwrap(), sys.evolve(&b, &vac).unwrap());
        let target = sys.vector(DualRailLevel::Zero).unwrap();
        let fa = target.dotc(&pa).norm_sqr();
        let fb = target.dotc(&pb).norm_sqr();
        assert!((fa - fb).abs() < 1e-8, "{fa} vs {fb}");
        assert!(fa > 0.99, "{fa}");
    }
}

#[test]
fn noiseless_rb_survives_under_every_policy() {
    let (exec, gates) = channel(NoiseConfig::noiseless(), ErasureCheckModel::perfect());
    let exp = RbExperiment {
        depths: vec![1, 10, 50],
        n_circuits: 4,
        n_shots: 20,
        n_checks: 2,
        idle: 0.0,
        compile: CompileMode::VirtualZ,
    };
    let recs = run_rb_experiment(&exec, &gates, &exp, 5).unwrap();
    assert_eq!(recs.len(), 3 * 4 * 20);
    for policy in PostselectionPolicy::ALL {
        for pt in curve(&recs, policy).unwrap() {
            assert_eq!(pt.kept.value, 1.0);
            assert_eq!(pt.success.unwrap().value, 1.0);
        }
    }
    let a = rb_analyze(&recs, PostselectionPolicy::Both).unwrap();
    assert!(a.erasure_per_clifford.value.abs() < 1e-9);
}

#[test]
fn more_refocusing_pulses_protect_against_telegraph_noise() {
    let noise = NoiseConfig {
        telegraph: Some(GapTelegraph {
            amplitude: mhz(0.05),
            switch_rate: 2e4,
        }),
        ..NoiseConfig::default()
    };
    let (exec, gates) = channel(noise, ErasureCheckModel::perfect());
    let chk = ErasureCheckModel::perfect();
    let total = us(40.0);
    let success = |n: usize| {
        let s = build_cpmg(&gates, n, total / n as f64, 0, 0.0, &chk).unwrap();
        let pts = [SweepPoint {
            x: n as f64,
            schedule: s,
            expected: Some(expected_bits(DualRailLevel::Zero)),
        }];
        let recs = run_sweep(&exec, &pts, 2000, 9).unwrap();
        curve(&recs, PostselectionPolicy::Both).unwrap()[0]
            .success
            .unwrap()
            .value
    };
    let (s1, s16) = (success(1), success(16));
    assert!(s16 > s1 + 0.1, "N=1 {s1}, N=16 {s16}");
    assert!(s16 > 0.9);
}

#[test]
fn ramsey_fringe_follows_software_detuning() {
    let (exec, gates) = channel(NoiseConfig::noiseless(), ErasureCheckModel::perfect());
    let det = mhz(0.5);
    for t in [0.0, 0.25e-6, 0.5e-6, 1.0e-6] {
        let s = build_ramsey(&gates, t, det).unwrap();
        let pts = [SweepPoint {
            x: t,
            schedule: s,
            expected: None,
        }];
        let recs = run_sweep(&exec, &pts, 4000, 3).unwrap();
        let p1 = curve(&recs, PostselectionPolicy::Both).unwrap()[0]
            .p_one
            .value;
        // two X90s from |1L⟩: |0L⟩ at zero delay, rotating with det·t
        let want = 0.5 * (1.0 - (det * t).cos());
        assert!((p1 - want).abs() < 0.03, "t = {t}: {p1} vs {want}");
    }
}

#[test]
fn channel_and_trajectory_erasure_agree() {
    let (p, point) = device();
    let erasure = NoiseConfig {
        erasure: Some(ErasureNoise {
            t1: [20e-6, 40e-6],
            p_equil: 0.0,
        }),
        ..NoiseConfig::default()
    };
    let sys = DualRailSystem::new(&p, point, 2, None).unwrap();
    let gates = GateParams::nominal(sys.gap());
    let traj = TrajectoryExecutor::new(
        sys,
        erasure.clone(),
        ErasureCheckModel::perfect(),
        ReadoutModel::perfect(),
    )
    .unwrap();
    let chan = ChannelExecutor::new(
        gates.clone(),
        erasure,
        ErasureCheckModel::perfect(),
        ReadoutModel::perfect(),
    )
    .unwrap();
    let s =
        build_echo_with_checks(&gates, &ErasureCheckModel::perfect(), 2, 2, us(15.0), 0.0).unwrap();
    let pts = [SweepPoint {
        x: 0.0,
        schedule: s,
        expected: Some([0, 1]),
    }];
    let kept = |e: &dyn CircuitExecutor, n: usize| {
        let recs = run_sweep(e, &pts, n, 21).unwrap();
        curve(&recs, PostselectionPolicy::Both).unwrap()[0].kept
    };
    let (a, b) = (kept(&traj, 600), kept(&chan, 6000));
    let sigma = (a.value * (1.0 - a.value) / 600.0 + b.value * (1.0 - b.value) / 6000.0).sqrt();
    assert!(
        (a.value - b.value).abs() < 3.0 * sigma,
        "{} vs {}",
        a.value,
        b.value
    );
}
