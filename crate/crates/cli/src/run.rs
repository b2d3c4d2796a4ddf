//! Experiment execution: builds the executor, compiles schedules, collects
//! records.

use std::f64::consts::TAU;

use dualrail::analysis::{coherence_budget, BudgetInputs};
use dualrail::calibration::{calibrate, refine_flux_offset, CalibrationOptions, CalibrationRun};
use dualrail::device::{
    avoided_crossing_sweep, dual_rail_gap_expansion, dual_rail_gap_scaled, DeviceParams,
    OperatingPoint,
};
use dualrail::dynamics::schedule::Schedule;
use dualrail::hilbert::DualRailLevel;
use dualrail::protocols::builders::{even_instants, expected_bits};
use dualrail::protocols::{
    build_cpmg, build_echo_with_checks, build_ramsey, rb_circuits, run_rb_experiment, run_sweep,
    ChannelExecutor, CircuitExecutor, DualRailSystem, GapModel, GateParams, RbExperiment,
    ScheduleBuilder, SweepPoint, TrajectoryExecutor,
};
use dualrail::units::{ghz, mhz, ns, us};
use serde_json::json;

use crate::config::*;
use crate::error::CliError;
use crate::records::{schedule_hash, Header, Payload, RecordFile, SCHEMA_VERSION};

pub const MAX_DEPTH: usize = 1000;
pub const MAX_CHANNEL_SHOTS: usize = 5_000_000;
pub const MAX_TRAJECTORY_SHOTS: usize = 20_000;
pub const MAX_RAMSEY_OFFSETS: usize = 64;

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub allow_large: bool,
}

pub struct RunOutput {
    pub records: RecordFile,
    pub calibration: Option<CalibrationRun>,
}

/// Device, operating point and gates shared by all experiment kinds.
struct Setup {
    params: DeviceParams,
    point: OperatingPoint,
    gates: GateParams,
    calibration: Option<CalibrationRun>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let params = cfg.device.resolve()?;
    let ex = &cfg.execution;
    if ex.transmon_dim < 2 {
        return Err(CliError::Config(
            "execution.transmon_dim must be at least 2".into(),
        ));
    }
    if !ex.delta_offset_mhz.is_finite() {
        return Err(CliError::Config(
            "execution.delta_offset_mhz must be finite".into(),
        ));
    }
    let calibration = match ex.gates {
        GateSource::Nominal => None,
        GateSource::Calibrated => {
            if ex.mode != Mode::Trajectory {
                return Err(CliError::Config(
                    "execution.gates = \"calibrated\" requires execution.mode = \"trajectory\""
                        .into(),
                ));
            }
            let opts = CalibrationOptions {
                shots: None,
                seed: cfg.seed,
                transmon_dim: 3,
            };
            Some(calibrate(&params, &opts, false)?)
        }
    };
    let w1 = params.transmons[0].omega_idle;
    let w2 = match &calibration {
        Some(c) => c.state.operating_point(&params)?.omega2,
        None => params.transmons[1].omega_idle,
    } + mhz(ex.delta_offset_mhz);
    let point = OperatingPoint::new(w1, w2, w2, params.g12);
    let gap = match ex.mode {
        Mode::Channel => dual_rail_gap_scaled(params.g12, point.omega0, point.delta1, point.delta2),
        Mode::Trajectory => DualRailSystem::new(&params, point, ex.transmon_dim, None)?.gap(),
    };
    let gates = match &calibration {
        Some(c) => c.state.gate_params(gap)?,
        None => GateParams::nominal(gap),
    };
    Ok(Setup {
        params,
        point,
        gates,
        calibration,
    })
}

fn executor(cfg: &ExperimentConfig, s: &Setup) -> Result<Box<dyn CircuitExecutor>, CliError> {
    Ok(match cfg.execution.mode {
        Mode::Channel => Box::new(
            ChannelExecutor::new(
                s.gates.clone(),
                cfg.noise.clone(),
                cfg.check.clone(),
                cfg.readout.clone(),
            )?
            .with_gap_model(GapModel::new(&s.params, &s.point)),
        ),
        Mode::Trajectory => {
            let sys = DualRailSystem::new(&s.params, s.point, cfg.execution.transmon_dim, None)?;
            Box::new(TrajectoryExecutor::new(
                sys,
                cfg.noise.clone(),
                cfg.check.clone(),
                cfg.readout.clone(),
            )?)
        }
    })
}

fn check_shots(cfg: &ExperimentConfig, total: usize, opts: RunOptions) -> Result<(), CliError> {
    if total == 0 {
        return Err(CliError::Config("experiment requests zero shots".into()));
    }
    let cap = match cfg.execution.mode {
        Mode::Channel => MAX_CHANNEL_SHOTS,
        Mode::Trajectory => MAX_TRAJECTORY_SHOTS,
    };
    if total > cap && !opts.allow_large {
        return Err(CliError::ResourceBound(format!(
            "{total} shots exceed the desk-scale cap of {cap}"
        )));
    }
    Ok(())
}

fn points_from(schedules: Vec<(f64, Schedule, Option<[u8; 2]>)>) -> Vec<SweepPoint> {
    schedules
        .into_iter()
        .map(|(x, schedule, expected)| SweepPoint {
            x,
            schedule,
            expected,
        })
        .collect()
}

/// Final phases evenly covering [0, 2π).
pub fn fringe_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Arm length of the check-dephasing echo.
pub fn dephasing_arm(e: &CheckDephasingSweep, check_duration: f64) -> f64 {
    e.arm_us
        .map(us)
        .unwrap_or_else(|| e.m_values.iter().copied().max().unwrap_or(0) as f64 * check_duration)
}

fn sweep_schedules(
    cfg: &ExperimentConfig,
    s: &Setup,
) -> Result<(Vec<SweepPoint>, usize), CliError> {
    let g = &s.gates;
    let chk = &cfg.check;
    let mut pts = Vec::new();
    let shots = match &cfg.experiment {
        Experiment::Ramsey(e) => {
            for t in e.delays_us.values() {
                pts.push((us(t), build_ramsey(g, us(t), mhz(e.detuning_mhz))?, None));
            }
            e.shots
        }
        Experiment::Echo(e) => {
            for t in e.delays_us.values() {
                pts.push((
                    us(t),
                    build_cpmg(g, 1, us(t), e.n_checks, 0.0, chk)?,
                    Some(expected_bits(DualRailLevel::Zero)),
                ));
            }
            e.shots
        }
        Experiment::Cpmg(e) => {
            if e.n_pulses == 0 {
                return Err(CliError::Config(
                    "experiment.n_pulses must be at least 1".into(),
                ));
            }
            for t in e.delays_us.values() {
                let tau = us(t) / e.n_pulses as f64;
                pts.push((
                    us(t),
                    build_cpmg(g, e.n_pulses, tau, e.n_checks, 0.0, chk)?,
                    Some(expected_bits(DualRailLevel::Zero)),
                ));
            }
            e.shots
        }
        Experiment::T1Logical(e) => {
            for t in e.delays_us.values() {
                let mut b = ScheduleBuilder::new(g);
                b.init(DualRailLevel::One)?;
                let t0 = b.time();
                b.idle(us(t))?;
                b.place_checks(&even_instants(t0, t0 + us(t), e.n_checks), chk.duration());
                pts.push((us(t), b.build()?, Some(expected_bits(DualRailLevel::One))));
            }
            e.shots
        }
        Experiment::ErasureMetrics(e) => {
            if !(e.t_eras_us > 0.0) {
                return Err(CliError::Config(
                    "experiment.t_eras_us must be positive".into(),
                ));
            }
            let mut vacuum = ScheduleBuilder::new(g);
            vacuum.check(chk);
            pts.push((
                0.0,
                vacuum.build()?,
                Some(expected_bits(DualRailLevel::Vacuum)),
            ));
            for (x, level) in [(1.0, DualRailLevel::Zero), (2.0, DualRailLevel::One)] {
                let mut b = ScheduleBuilder::new(g);
                b.init(level)?.check(chk);
                pts.push((x, b.build()?, Some(expected_bits(level))));
            }
            let mut eq = ScheduleBuilder::new(g);
            eq.init(DualRailLevel::One)?.x90(0.0).check(chk);
            pts.push((3.0, eq.build()?, None));
            e.shots
        }
        Experiment::CheckDephasingSweep(e) => {
            if e.m_values.is_empty() || e.phases < 4 {
                return Err(CliError::Config(
                    "experiment needs m_values and at least 4 phases".into(),
                ));
            }
            let arm = dephasing_arm(e, chk.duration());
            for &m in &e.m_values {
                let m2 = if e.balanced { m } else { 0 };
                for phi in fringe_phases(e.phases) {
                    pts.push((phi, build_echo_with_checks(g, chk, m, m2, arm, phi)?, None));
                }
            }
            e.shots
        }
        _ => unreachable!("not a sweep experiment"),
    };
    Ok((points_from(pts), shots))
}

fn rb_experiment(e: &Rb) -> RbExperiment {
    RbExperiment {
        depths: e.depths.clone(),
        n_circuits: e.circuits,
        n_shots: e.shots,
        n_checks: e.n_checks,
        idle: ns(e.idle_ns),
        compile: e.compile,
    }
}

fn analytic_rows(
    cfg: &ExperimentConfig,
    s: &Setup,
    opts: RunOptions,
) -> Result<Vec<serde_json::Value>, CliError> {
    let p = &s.params;
    Ok(match &cfg.experiment {
        Experiment::Spectroscopy(e) => {
            let w: Vec<f64> = e.omega2_ghz.values().into_iter().map(ghz).collect();
            if w.len() < 3 {
                return Err(CliError::Config(
                    "experiment.omega2_ghz needs at least 3 points".into(),
                ));
            }
            avoided_crossing_sweep(p, &w)?
                .into_iter()
                .map(|r| json!({"omega2": r.omega2, "lower": r.lower, "upper": r.upper}))
                .collect()
        }
        Experiment::OperatingPointSweep(e) => {
            let grid: Vec<f64> = e.offsets_mhz.values().into_iter().map(mhz).collect();
            if grid.len() < 3 {
                return Err(CliError::Config(
                    "experiment.offsets_mhz needs at least 3 points".into(),
                ));
            }
            let w2 = s.point.omega2;
            let h = 1e-6 * p.g12;
            let mut rows: Vec<serde_json::Value> = grid
                .iter()
                .map(|&x| {
                    let gap = |d1: f64, d2: f64| dual_rail_gap_scaled(p.g12, w2, -x + d1, d2);
                    json!({
                        "kind": "point",
                        "offset": x,
                        "gap": gap(0.0, 0.0),
                        "gap_expansion": dual_rail_gap_expansion(p.g12, w2, -x, 0.0).value,
                        "sensitivity_q1": (gap(h, 0.0) - gap(-h, 0.0)) / (2.0 * h),
                        "sensitivity_q2": (gap(0.0, h) - gap(0.0, -h)) / (2.0 * h),
                    })
                })
                .collect();
            if e.ramsey {
                if grid.len() > MAX_RAMSEY_OFFSETS && !opts.allow_large {
                    return Err(CliError::ResourceBound(format!(
                        "{} Ramsey offsets exceed the cap of {MAX_RAMSEY_OFFSETS}",
                        grid.len()
                    )));
                }
                let copts = CalibrationOptions {
                    shots: None,
                    seed: cfg.seed,
                    transmon_dim: cfg.execution.transmon_dim,
                };
                let f = refine_flux_offset(p, w2, &s.gates, &grid, &copts)?;
                for (x, e) in &f.curve {
                    rows.push(json!({"kind": "ramsey", "offset": x, "frequency": e}));
                }
                rows.push(json!({
                    "kind": "refinement",
                    "offset": f.offset,
                    "predicted": f.predicted,
                    "curvature": f.curvature,
                }));
            }
            rows
        }
        Experiment::BudgetReport(e) => {
            let inputs = BudgetInputs {
                t_phi_echo: us(e.t_phi_echo_us),
                n_bar: e.n_bar,
            };
            let b = coherence_budget(p, &inputs)?;
            vec![serde_json::to_value(b).map_err(|e| CliError::Internal(e.to_string()))?]
        }
        _ => unreachable!("not an analytic experiment"),
    })
}

/// Executes the configured experiment and returns its records.
pub fn execute(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let (payload, hash) = if cfg.experiment.is_analytic() {
        (
            Payload::Rows(analytic_rows(cfg, &s, opts)?),
            schedule_hash(&[]),
        )
    } else if let Experiment::Rb(e) = &cfg.experiment {
        if let Some(&d) = e.depths.iter().find(|&&d| d > MAX_DEPTH) {
            if !opts.allow_large {
                return Err(CliError::ResourceBound(format!(
                    "RB depth {d} exceeds the cap of {MAX_DEPTH}"
                )));
            }
        }
        check_shots(cfg, e.depths.len() * e.circuits * e.shots, opts)?;
        let exp = rb_experiment(e);
        let circuits = rb_circuits(&s.gates, &exp, &cfg.check, cfg.seed)?;
        let hash = schedule_hash(&circuits.iter().map(|c| &c.schedule).collect::<Vec<_>>());
        let exec = executor(cfg, &s)?;
        (
            Payload::Shots(run_rb_experiment(exec.as_ref(), &s.gates, &exp, cfg.seed)?),
            hash,
        )
    } else {
        let (points, shots) = sweep_schedules(cfg, &s)?;
        check_shots(cfg, points.len() * shots, opts)?;
        let hash = schedule_hash(&points.iter().map(|p| &p.schedule).collect::<Vec<_>>());
        let exec = executor(cfg, &s)?;
        (
            Payload::Shots(run_sweep(exec.as_ref(), &points, shots, cfg.seed)?),
            hash,
        )
    };
    let header = Header {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        schedule_hash: hash,
        gates: Some(s.gates),
        config: cfg.clone(),
    };
    Ok(RunOutput {
        records: RecordFile { header, payload },
        calibration: s.calibration,
    })
}
