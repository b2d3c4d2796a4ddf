//! Schedule construction: initialization, X90 gates with virtual-Z frame
//! tracking, erasure-check placement and the standard sequences.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::dynamics::schedule::{Channel, Envelope, PulseSegment, Schedule};
use crate::error::{Error, Result};
use crate::hilbert::DualRailLevel;
use crate::protocols::check::ErasureCheckModel;
use crate::protocols::clifford::{CliffordOp, RbSequence};

/// Pulse parameters consumed by the builders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// Peak XY drive strength of the Gaussian initialization pulse on transmon 1.
    pub init_amplitude: f64,
    pub init_duration: f64,
    pub init_sigma: f64,
    /// Magnitude of the initialization carrier (half the gap); the sign
    /// selects the target state.
    pub init_carrier: f64,
    /// Peak flux-modulation frequency deviation of the X90 pulse.
    pub x90_amplitude: f64,
    pub x90_duration: f64,
    pub x90_sigma: f64,
    /// Modulation carrier (the dual-rail gap).
    pub x90_carrier: f64,
    /// Virtual Z applied after every X90.
    pub z_correction: f64,
}

pub const INIT_DURATION: f64 = 40e-9;
pub const INIT_SIGMA: f64 = 10e-9;
pub const X90_DURATION: f64 = 48e-9;
pub const X90_SIGMA: f64 = 12e-9;

impl GateParams {
    /// Rotating-wave estimates for a pair with gap `gap`: a π pulse with Rabi
    /// rate A·env/√2 and a modulation pulse rotating at A·env/2.
    pub fn nominal(gap: f64) -> Self {
        let mut p = GateParams {
            init_amplitude: 0.0,
            init_duration: INIT_DURATION,
            init_sigma: INIT_SIGMA,
            init_carrier: 0.5 * gap,
            x90_amplitude: 0.0,
            x90_duration: X90_DURATION,
            x90_sigma: X90_SIGMA,
            x90_carrier: gap,
            z_correction: 0.0,
        };
        p.x90_amplitude = PI / p.x90_segment(0.0, 0.0).envelope_area();
        p.init_amplitude = PI * SQRT_2 / p.init_envelope_area();
        p
    }

    pub fn init_envelope_area(&self) -> f64 {
        PulseSegment {
            channel: Channel::Xy1,
            envelope: Envelope::Gaussian {
                sigma: self.init_sigma,
            },
            t_start: 0.0,
            duration: self.init_duration,
            amplitude: 1.0,
            carrier: 0.0,
            phase: 0.0,
        }
        .envelope_area()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("init_amplitude", self.init_amplitude),
            ("init_duration", self.init_duration),
            ("init_sigma", self.init_sigma),
            ("x90_amplitude", self.x90_amplitude),
            ("x90_duration", self.x90_duration),
            ("x90_sigma", self.x90_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Uncalibrated(format!(
                    "{name} must be positive and finite"
                )));
            }
        }
        if !(self.init_carrier.is_finite()
            && self.x90_carrier.is_finite()
            && self.z_correction.is_finite())
        {
            return Err(Error::Uncalibrated(
                "carriers and z_correction must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn init_segment(&self, t: f64, target: DualRailLevel) -> Result<PulseSegment> {
        let sign = match target {
            DualRailLevel::One => 1.0,
            DualRailLevel::Zero => -1.0,
            DualRailLevel::Vacuum => {
                return Err(Error::InvalidArgument(
                    "initialization target must be logical".into(),
                ))
            }
        };
        Ok(PulseSegment {
            channel: Channel::Xy1,
            envelope: Envelope::Gaussian {
                sigma: self.init_sigma,
            },
            t_start: t,
            duration: self.init_duration,
            amplitude: self.init_amplitude,
            carrier: sign * self.init_carrier.abs(),
            phase: 0.0,
        })
    }

    /// Flux segment with the given physical carrier phase.
    pub fn x90_segment(&self, t: f64, physical_phase: f64) -> PulseSegment {
        PulseSegment {
            channel: Channel::Flux2,
            envelope: Envelope::Gaussian {
                sigma: self.x90_sigma,
            },
            t_start: t,
            duration: self.x90_duration,
            amplitude: self.x90_amplitude,
            carrier: self.x90_carrier,
            phase: physical_phase,
        }
    }
}

/// Rotation angle of a flux segment in the rotating-wave picture.
pub fn flux_rotation_angle(seg: &PulseSegment) -> f64 {
    0.5 * seg.amplitude * seg.envelope_area()
}

/// Logical rotation axis of a flux segment: a modulation cos(ωt + φ) on
/// transmon 2 rotates about the equatorial axis at angle −φ.
pub fn flux_rotation_axis(seg: &PulseSegment) -> f64 {
    -seg.phase
}

fn wrap(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p > PI {
        p - TAU
    } else {
        p
    }
}

/// Appends segments sequentially and tracks the virtual-Z frame.
#[derive(Clone, Debug)]
pub struct ScheduleBuilder<'a> {
    gates: &'a GateParams,
    t: f64,
    frame: f64,
    segments: Vec<PulseSegment>,
    checks: Vec<f64>,
}

impl<'a> ScheduleBuilder<'a> {
    pub fn new(gates: &'a GateParams) -> Self {
        ScheduleBuilder {
            gates,
            t: 0.0,
            frame: 0.0,
            segments: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Accumulated virtual-Z frame, wrapped to (−π, π].
    pub fn frame_phase(&self) -> f64 {
        self.frame
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn init(&mut self, target: DualRailLevel) -> Result<&mut Self> {
        let seg = self.gates.init_segment(self.t, target)?;
        self.t = seg.t_end();
        self.segments.push(seg);
        Ok(self)
    }

    /// X90 about the logical axis at angle `phase` in the current frame,
    /// followed by the calibrated virtual-Z correction.
    pub fn x90(&mut self, phase: f64) -> &mut Self {
        let seg = self.gates.x90_segment(self.t, wrap(-(phase + self.frame)));
        self.push_x90(seg)
    }

    /// X90 with an explicitly given physical phase. The frame is left
    /// untouched, so the caller owns all phase bookkeeping.
    pub fn x90_physical(&mut self, physical_phase: f64) -> &mut Self {
        let seg = self.gates.x90_segment(self.t, physical_phase);
        self.t = seg.t_end();
        self.segments.push(seg);
        self
    }

    fn push_x90(&mut self, seg: PulseSegment) -> &mut Self {
        self.t = seg.t_end();
        self.segments.push(seg);
        let zc = self.gates.z_correction;
        self.virtual_z(zc)
    }

    /// π rotation as two X90s.
    pub fn x180(&mut self, phase: f64) -> &mut Self {
        self.x90(phase).x90(phase)
    }

    /// Frame update equivalent to a Z(phase) rotation; emits nothing.
    pub fn virtual_z(&mut self, phase: f64) -> &mut Self {
        self.frame = wrap(self.frame - phase);
        self
    }

    pub fn idle(&mut self, duration: f64) -> Result<&mut Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidArgument(
                "idle duration must be non-negative".into(),
            ));
        }
        self.t += duration;
        Ok(self)
    }

    /// Inline check: occupies its window and fires at the window end.
    pub fn check(&mut self, model: &ErasureCheckModel) -> &mut Self {
        self.t += model.duration();
        self.checks.push(self.t);
        self
    }

    pub fn ops(&mut self, ops: &[CliffordOp]) -> &mut Self {
        for op in ops {
            match op {
                CliffordOp::X90 => self.x90(0.0),
                CliffordOp::VirtualZ { phase } => self.virtual_z(*phase),
            };
        }
        self
    }

    /// Adds checks at nominal instants, running in parallel with the
    /// sequence. A check whose window overlaps a pulse is moved later until
    /// its window is idle. Returns the placed times.
    pub fn place_checks(&mut self, nominal: &[f64], window: f64) -> Vec<f64> {
        let mut placed = Vec::with_capacity(nominal.len());
        for &t0 in nominal {
            let mut t = t0.max(window);
            while let Some(seg) = self
                .segments
                .iter()
                .find(|s| s.t_start < t - 1e-15 && s.t_end() > t - window + 1e-15)
            {
                t = seg.t_end() + window;
            }
            placed.push(t);
        }
        self.checks.extend(&placed);
        placed
    }

    pub fn build(&self) -> Result<Schedule> {
        let end = self.checks.iter().copied().fold(self.t, f64::max);
        Schedule::new(self.segments.clone(), self.checks.clone(), end)
    }
}

/// n evenly spaced instants from a to b inclusive (the midpoint when n = 1).
pub fn even_instants(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn build_initialization(gates: &GateParams, target: DualRailLevel) -> Result<Schedule> {
    gates.validate()?;
    ScheduleBuilder::new(gates).init(target)?.build()
}

/// Initialization to |1L⟩ followed by `n` X90 gates at logical phase `phase`.
pub fn build_x90_train(gates: &GateParams, n: usize, phase: f64) -> Result<Schedule> {
    gates.validate()?;
    let mut b = ScheduleBuilder::new(gates);
    b.init(DualRailLevel::One)?;
    for _ in 0..n {
        b.x90(phase);
    }
    b.build()
}

/// π/2, [τ/2, π_y, τ/2]×N, π/2(final_phase), starting from |1L⟩, with
/// `n_checks` checks evenly spaced over the free evolution. With
/// final_phase = 0 the ideal outcome is |0L⟩.
pub fn build_cpmg(
    gates: &GateParams,
    n_pulses: usize,
    tau: f64,
    n_checks: usize,
    final_phase: f64,
    check: &ErasureCheckModel,
) -> Result<Schedule> {
    gates.validate()?;
    if n_pulses == 0 || !(tau > 0.0) {
        return Err(Error::InvalidArgument(
            "CPMG needs n_pulses >= 1 and tau > 0".into(),
        ));
    }
    let mut b = ScheduleBuilder::new(gates);
    b.init(DualRailLevel::One)?.x90(0.0);
    let t_a = b.time();
    for _ in 0..n_pulses {
        b.idle(0.5 * tau)?.x180(FRAC_PI_2).idle(0.5 * tau)?;
    }
    let t_b = b.time();
    b.x90(final_phase);
    b.place_checks(&even_instants(t_a, t_b, n_checks), check.duration());
    b.build()
}

/// π/2, delay, π/2 from |1L⟩ with a software detuning applied as a
/// virtual Z of detuning·delay before the second pulse.
pub fn build_ramsey(gates: &GateParams, delay: f64, detuning: f64) -> Result<Schedule> {
    gates.validate()?;
    let mut b = ScheduleBuilder::new(gates);
    b.init(DualRailLevel::One)?.x90(0.0).idle(delay)?;
    b.virtual_z(detuning * delay).x90(0.0);
    b.build()
}

/// Spin echo with `m_first` and `m_second` back-to-back checks in the two
/// arms, each arm padded to `arm_duration`.
pub fn build_echo_with_checks(
    gates: &GateParams,
    check: &ErasureCheckModel,
    m_first: usize,
    m_second: usize,
    arm_duration: f64,
    final_phase: f64,
) -> Result<Schedule> {
    gates.validate()?;
    let need = m_first.max(m_second) as f64 * check.duration();
    if arm_duration < need {
        return Err(Error::InvalidArgument(format!(
            "arm of {arm_duration:e} s cannot hold the checks ({need:e} s)"
        )));
    }
    let arm = |b: &mut ScheduleBuilder, m: usize| -> Result<()> {
        for _ in 0..m {
            b.check(check);
        }
        b.idle(arm_duration - m as f64 * check.duration())?;
        Ok(())
    };
    let mut b = ScheduleBuilder::new(gates);
    b.init(DualRailLevel::One)?.x90(0.0);
    arm(&mut b, m_first)?;
    b.x180(FRAC_PI_2);
    arm(&mut b, m_second)?;
    b.x90(final_phase);
    b.build()
}

/// How RB circuits realize frame changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum CompileMode {
    VirtualZ,
    /// Every X90 carries its absolute phase computed from the op list.
    ExplicitPhase,
}

/// Initialization, the Clifford sequence with `idle` after each Clifford and
/// `n_checks` inline checks spread evenly over the circuit, the last one
/// after the recovery element.
pub fn compile_rb(
    gates: &GateParams,
    sequence: &RbSequence,
    n_checks: usize,
    idle: f64,
    check: &ErasureCheckModel,
    mode: CompileMode,
) -> Result<Schedule> {
    gates.validate()?;
    let table = crate::protocols::clifford::clifford_table();
    let elements: Vec<usize> = sequence.all_elements().collect();
    let n = elements.len();
    let mut after = vec![0usize; n + 1];
    for j in 1..=n_checks {
        let pos = ((j * n) as f64 / n_checks as f64).round() as usize;
        after[pos.clamp(1, n)] += 1;
    }
    let mut b = ScheduleBuilder::new(gates);
    b.init(DualRailLevel::One)?;
    let mut z_history: Vec<f64> = Vec::new();
    for (k, &e) in elements.iter().enumerate() {
        let ops = &table.element(e).decomposition;
        match mode {
            CompileMode::VirtualZ => {
                b.ops(ops);
            }
            CompileMode::ExplicitPhase => {
                for op in ops {
                    match op {
                        CliffordOp::VirtualZ { phase } => z_history.push(*phase),
                        CliffordOp::X90 => {
                            let total: f64 = z_history.iter().sum();
                            b.x90_physical(wrap(total));
                            z_history.push(gates.z_correction);
                        }
                    }
                }
            }
        }
        b.idle(idle)?;
        for _ in 0..after[k + 1] {
            b.check(check);
        }
    }
    b.build()
}

/// Pair bits expected from an error-free run ending in `level`.
pub fn expected_bits(level: DualRailLevel) -> [u8; 2] {
    match level {
        DualRailLevel::One => [1, 0],
        DualRailLevel::Zero => [0, 1],
        DualRailLevel::Vacuum => [0, 0],
    }
}
