//! Shot execution. Two interchangeable back ends run a compiled Schedule:
//! the logical channel model (erasure chain plus phase noise on a logical
//! two-level state, gates applied as ideal rotations at segment midpoints)
//! and full Hamiltonian trajectories.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{dual_rail_gap_scaled, DeviceParams, OperatingPoint};
use crate::dynamics::record::{ChannelLabel, CheckOutcome, FinalLabel, ShotRecord};
use crate::dynamics::schedule::{Channel, Schedule};
use crate::dynamics::{OdeOptions, ShotObserver, TrajectoryEngine};
use crate::error::{Error, Result};
use crate::hilbert::{CVector, DualRailLevel};
use crate::noise::{
    sample_colored_noise, sample_telegraph, NoiseSpectrum, NoiseTrace, DEFAULT_OMEGA_MIN,
};
use crate::protocols::builders::{flux_rotation_angle, flux_rotation_axis, GateParams};
use crate::protocols::check::{
    check_pair_state, check_state_vector, CheckOperators, ErasureCheckModel, PairState,
};
use crate::protocols::logical;
use crate::protocols::readout::{final_readout, final_readout_pair, ReadoutModel};
use crate::protocols::system::{gate_ode_options, DualRailSystem, ErasureNoise};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// Frequency noise on one transmon of the pair (index 0 or 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct FrequencyNoise {
    pub transmon: usize,
    pub spectrum: NoiseSpectrum,
}

/// Telegraph switching of the gap between ±amplitude/2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct GapTelegraph {
    pub amplitude: f64,
    pub switch_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct NoiseConfig {
    pub erasure: Option<ErasureNoise>,
    pub frequency_noise: Vec<FrequencyNoise>,
    pub telegraph: Option<GapTelegraph>,
    /// Constant offset of the gap from the drive carrier.
    pub static_detuning: f64,
    /// Markovian dephasing rate of the logical coherence.
    pub dephasing_rate: f64,
    /// Depolarizing probability per X90 (channel mode only).
    pub gate_error: f64,
    /// Sampling step of noise traces; defaults to 20 ns.
    pub trace_dt: Option<f64>,
    pub omega_min: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            erasure: None,
            frequency_noise: Vec::new(),
            telegraph: None,
            static_detuning: 0.0,
            dephasing_rate: 0.0,
            gate_error: 0.0,
            trace_dt: None,
            omega_min: DEFAULT_OMEGA_MIN,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.erasure {
            e.validate()?;
        }
        for f in &self.frequency_noise {
            if f.transmon > 1 {
                return Err(Error::InvalidArgument(
                    "frequency noise transmon must be 0 or 1".into(),
                ));
            }
        }
        if let Some(t) = &self.telegraph {
            if !(t.amplitude.is_finite() && t.switch_rate >= 0.0) {
                return Err(Error::InvalidArgument(
                    "telegraph needs finite amplitude and non-negative rate".into(),
                ));
            }
        }
        if !(self.dephasing_rate >= 0.0 && (0.0..=1.0).contains(&self.gate_error)) {
            return Err(Error::InvalidArgument(
                "dephasing rate and gate error must be non-negative".into(),
            ));
        }
        if let Some(dt) = self.trace_dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("trace_dt must be positive".into()));
            }
        }
        if !self.static_detuning.is_finite() || !(self.omega_min > 0.0) {
            return Err(Error::InvalidArgument(
                "static detuning must be finite and omega_min positive".into(),
            ));
        }
        Ok(())
    }

    pub fn has_traces(&self) -> bool {
        !self.frequency_noise.is_empty() || self.telegraph.is_some()
    }

    fn dt(&self) -> f64 {
        self.trace_dt.unwrap_or(20e-9)
    }

    /// Depolarizing probability per X90 that yields residual error r per
    /// two-X90 Clifford, with r = (1 − p)/2 and p the Clifford decay.
    pub fn gate_error_for_clifford_residual(r: f64) -> f64 {
        0.75 * (1.0 - (1.0 - 2.0 * r).sqrt())
    }

    fn transmon_traces(&self, duration: f64, seed: u64) -> Result<Vec<(usize, NoiseTrace)>> {
        self.frequency_noise
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let s = derive_seed(seed, &[0x7a, k as u64]);
                Ok((
                    f.transmon,
                    sample_colored_noise(&f.spectrum, duration, self.dt(), self.omega_min, s)?,
                ))
            })
            .collect()
    }

    fn telegraph_trace(&self, duration: f64, seed: u64) -> Result<Option<NoiseTrace>> {
        self.telegraph
            .as_ref()
            .map(|t| {
                sample_telegraph(
                    t.amplitude,
                    t.switch_rate,
                    duration,
                    self.dt(),
                    derive_seed(seed, &[0x7b]),
                )
            })
            .transpose()
    }
}

/// Runs one compiled circuit for a set of shot seeds.
pub trait CircuitExecutor: Sync {
    fn run_circuit(&self, schedule: &Schedule, seeds: &[u64]) -> Result<Vec<ShotRecord>>;
    fn check_model(&self) -> &ErasureCheckModel;
}

/// Exact gap as a function of transmon frequency offsets, used to map
/// transmon frequency noise onto the logical phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub g0: f64,
    pub omega0: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl GapModel {
    pub fn new(params: &DeviceParams, point: &OperatingPoint) -> Self {
        GapModel {
            g0: params.g12,
            omega0: point.omega0,
            delta1: point.delta1,
            delta2: point.delta2,
        }
    }

    pub fn gap(&self, x1: f64, x2: f64) -> f64 {
        dual_rail_gap_scaled(self.g0, self.omega0, self.delta1 + x1, self.delta2 + x2)
    }
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Segment(usize),
    Check,
}

fn timeline(schedule: &Schedule) -> Vec<(f64, Event)> {
    let mut events: Vec<(f64, Event)> = schedule
        .segments
        .iter()
        .enumerate()
        .map(|(k, s)| (s.t_start + 0.5 * s.duration, Event::Segment(k)))
        .chain(schedule.check_times.iter().map(|&t| (t, Event::Check)))
        .collect();
    events.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| matches!(a.1, Event::Check).cmp(&matches!(b.1, Event::Check)))
    });
    events
}

/// Logical channel model.
#[derive(Clone, Debug)]
pub struct ChannelExecutor {
    pub gates: GateParams,
    pub noise: NoiseConfig,
    pub check: ErasureCheckModel,
    pub readout: ReadoutModel,
    /// Needed only when transmon frequency noise is configured.
    pub gap_model: Option<GapModel>,
}

struct ShotState {
    pair: PairState,
    reheated: bool,
}

impl ChannelExecutor {
    pub fn new(
        gates: GateParams,
        noise: NoiseConfig,
        check: ErasureCheckModel,
        readout: ReadoutModel,
    ) -> Result<Self> {
        gates.validate()?;
        noise.validate()?;
        check.validate()?;
        readout.validate()?;
        Ok(ChannelExecutor {
            gates,
            noise,
            check,
            readout,
            gap_model: None,
        })
    }

    pub fn with_gap_model(mut self, model: GapModel) -> Self {
        self.gap_model = Some(model);
        self
    }

    /// Combined gap-offset trace for one shot, or None without trace noise.
    fn gap_trace(&self, duration: f64, seed: u64) -> Result<Option<NoiseTrace>> {
        if !self.noise.has_traces() {
            return Ok(None);
        }
        let transmon = self.noise.transmon_traces(duration, seed)?;
        let tele = self.noise.telegraph_trace(duration, seed)?;
        let n = transmon
            .iter()
            .map(|(_, t)| t.values.len())
            .chain(tele.iter().map(|t| t.values.len()))
            .min()
            .unwrap_or(0);
        let mut values = vec![0.0; n];
        if !transmon.is_empty() {
            let gm = self.gap_model.ok_or_else(|| {
                Error::InvalidArgument(
                    "transmon frequency noise needs a gap model in channel mode".into(),
                )
            })?;
            let e0 = gm.gap(0.0, 0.0);
            for (k, v) in values.iter_mut().enumerate() {
                let mut x = [0.0; 2];
                for (m, tr) in &transmon {
                    x[*m] += tr.values[k];
                }
                *v += gm.gap(x[0], x[1]) - e0;
            }
        }
        if let Some(t) = tele {
            for (v, s) in values.iter_mut().zip(&t.values) {
                *v += s;
            }
        }
        Ok(Some(NoiseTrace::new(values, self.noise.dt(), seed)?))
    }

    fn resample(&self, st: &mut ShotState, rng: &mut SimRng) {
        let p = self.noise.erasure.as_ref().map_or(0.0, |e| e.p_equil);
        if rng.random::<f64>() < 2.0 * p {
            st.pair = PairState::Subspace(if rng.random::<bool>() {
                logical::pair_01()
            } else {
                logical::pair_10()
            });
            st.reheated = true;
        } else {
            st.pair = PairState::Vacuum;
        }
    }

    fn advance(
        &self,
        st: &mut ShotState,
        a: f64,
        b: f64,
        trace: Option<&NoiseTrace>,
        rng: &mut SimRng,
    ) {
        let dt = b - a;
        if dt <= 0.0 {
            return;
        }
        if let Some(e) = &self.noise.erasure {
            if rng.random::<f64>() < -(-dt / e.t_eras()).exp_m1() {
                self.resample(st, rng);
            }
        }
        if let PairState::Subspace(v) = &mut st.pair {
            let mut phi = self.noise.static_detuning * dt;
            if let Some(tr) = trace {
                phi += tr.integral(a, b);
            }
            if phi != 0.0 {
                *v = logical::rz(-phi) * *v;
            }
            if self.noise.dephasing_rate > 0.0 {
                let p_flip = -0.5 * (-self.noise.dephasing_rate * dt).exp_m1();
                if rng.random::<f64>() < p_flip {
                    *v = logical::pauli_z() * *v;
                }
            }
        }
    }

    fn apply_segment(
        &self,
        st: &mut ShotState,
        schedule: &Schedule,
        k: usize,
        rng: &mut SimRng,
    ) -> Result<()> {
        let seg = &schedule.segments[k];
        match seg.channel {
            Channel::Flux2 => {
                if let PairState::Subspace(v) = &mut st.pair {
                    let u = logical::rz(-self.gates.z_correction)
                        * logical::rotation(flux_rotation_axis(seg), flux_rotation_angle(seg));
                    *v = u * *v;
                    let q = self.noise.gate_error;
                    if q > 0.0 && rng.random::<f64>() < q {
                        let pauli = match rng.random_range(0..3) {
                            0 => logical::pauli_x(),
                            1 => logical::pauli_y(),
                            _ => logical::pauli_z(),
                        };
                        *v = pauli * *v;
                    }
                }
            }
            Channel::Xy1 | Channel::Xy2 => {
                if st.pair == PairState::Vacuum {
                    let theta = seg.amplitude * seg.envelope_area() / std::f64::consts::SQRT_2;
                    if rng.random::<f64>() < (0.5 * theta).sin().powi(2) {
                        let v = if seg.carrier >= 0.0 {
                            logical::one_l()
                        } else {
                            logical::zero_l()
                        };
                        st.pair = PairState::Subspace(v);
                        st.reheated = false;
                    }
                }
            }
            Channel::Xy3 => {
                return Err(Error::Unsupported(
                    "channel mode has no ancilla drive".into(),
                ))
            }
        }
        Ok(())
    }

    fn run_shot(
        &self,
        schedule: &Schedule,
        events: &[(f64, Event)],
        seed: u64,
    ) -> Result<ShotRecord> {
        let mut rng = rng_from_seed(seed);
        let trace = self.gap_trace(schedule.total_duration, derive_seed(seed, &[0x70]))?;
        let mut st = ShotState {
            pair: PairState::Vacuum,
            reheated: false,
        };
        let mut record = ShotRecord::new(seed);
        let mut t = 0.0;
        for &(te, ev) in events {
            self.advance(&mut st, t, te, trace.as_ref(), &mut rng);
            t = te;
            match ev {
                Event::Segment(k) => self.apply_segment(&mut st, schedule, k, &mut rng)?,
                Event::Check => {
                    let was_vacuum = st.pair == PairState::Vacuum;
                    let flag = check_pair_state(&mut st.pair, &self.check, &mut rng);
                    if was_vacuum && st.pair != PairState::Vacuum {
                        st.reheated = true;
                    }
                    record.check_outcomes.push(CheckOutcome { time: te, flag });
                }
            }
        }
        self.advance(
            &mut st,
            t,
            schedule.total_duration,
            trace.as_ref(),
            &mut rng,
        );
        let (bits, label) = final_readout_pair(&st.pair, &self.readout, &mut rng);
        record.final_bits = bits;
        record.true_final_label = label;
        record.coherence_lost = st.reheated && label == FinalLabel::InSubspace;
        Ok(record)
    }
}

impl CircuitExecutor for ChannelExecutor {
    fn run_circuit(&self, schedule: &Schedule, seeds: &[u64]) -> Result<Vec<ShotRecord>> {
        schedule.validate()?;
        let events = timeline(schedule);
        seeds
            .par_iter()
            .map(|&s| self.run_shot(schedule, &events, s))
            .collect()
    }

    fn check_model(&self) -> &ErasureCheckModel {
        &self.check
    }
}

/// Checks and final readout applied to trajectory states.
pub struct DualRailObserver {
    pub ops: CheckOperators,
    pub check: ErasureCheckModel,
    pub readout: ReadoutModel,
}

impl ShotObserver for DualRailObserver {
    fn on_check(&self, _t: f64, psi: &mut CVector, rng: &mut SimRng) -> crate::dynamics::CheckFlag {
        check_state_vector(psi, &self.ops, &self.check, rng)
    }

    fn on_end(&self, psi: &CVector, rng: &mut SimRng) -> ([u8; 2], FinalLabel) {
        final_readout(psi, &self.ops.projectors, &self.readout, rng)
    }
}

/// Full Hamiltonian trajectories. Gate errors are whatever the pulses
/// produce; `gate_error` in the noise config is ignored here.
pub struct TrajectoryExecutor {
    pub system: DualRailSystem,
    pub noise: NoiseConfig,
    pub observer: DualRailObserver,
    pub opts: OdeOptions,
}

impl TrajectoryExecutor {
    pub fn new(
        system: DualRailSystem,
        noise: NoiseConfig,
        check: ErasureCheckModel,
        readout: ReadoutModel,
    ) -> Result<Self> {
        noise.validate()?;
        check.validate()?;
        readout.validate()?;
        let ops = system.check_operators()?;
        Ok(TrajectoryExecutor {
            system,
            noise,
            observer: DualRailObserver {
                ops,
                check,
                readout,
            },
            opts: gate_ode_options(),
        })
    }

    fn engine(&self, schedule: &Schedule, seed: Option<u64>) -> Result<TrajectoryEngine> {
        let channels = self
            .system
            .channels(self.noise.erasure.as_ref(), self.noise.dephasing_rate)?;
        let (transmon, gap) = match seed {
            Some(s) => {
                let transmon: Vec<(usize, Arc<NoiseTrace>)> = self
                    .noise
                    .transmon_traces(schedule.total_duration, s)?
                    .into_iter()
                    .map(|(m, t)| (m, Arc::new(t)))
                    .collect();
                let gap: Vec<Arc<NoiseTrace>> = self
                    .noise
                    .telegraph_trace(schedule.total_duration, s)?
                    .into_iter()
                    .map(Arc::new)
                    .collect();
                (transmon, gap)
            }
            None => (Vec::new(), Vec::new()),
        };
        let h = self
            .system
            .hamiltonian(schedule, &transmon, &gap, self.noise.static_detuning)?;
        TrajectoryEngine::new(
            h,
            &channels,
            schedule,
            &[],
            seed.is_none(),
            self.opts.clone(),
        )
    }

    fn finish(result: crate::dynamics::TrajectoryResult) -> ShotRecord {
        let mut rec = result.record;
        let erased = result.jumps.iter().any(|j| {
            matches!(
                j.label,
                ChannelLabel::DecayQ1
                    | ChannelLabel::DecayQ2
                    | ChannelLabel::HeatQ1
                    | ChannelLabel::HeatQ2
            )
        });
        rec.coherence_lost = erased && rec.true_final_label == FinalLabel::InSubspace;
        rec
    }
}

impl CircuitExecutor for TrajectoryExecutor {
    fn run_circuit(&self, schedule: &Schedule, seeds: &[u64]) -> Result<Vec<ShotRecord>> {
        let psi0 = self.system.vector(DualRailLevel::Vacuum)?;
        if self.noise.has_traces() {
            seeds
                .par_iter()
                .map(|&s| {
                    let engine = self.engine(schedule, Some(derive_seed(s, &[0x70])))?;
                    Ok(Self::finish(engine.run_shot(&psi0, &self.observer, s)?))
                })
                .collect()
        } else {
            let engine = self.engine(schedule, None)?;
            Ok(engine
                .run_batch(&psi0, &self.observer, seeds)?
                .into_iter()
                .map(Self::finish)
                .collect())
        }
    }

    fn check_model(&self) -> &ErasureCheckModel {
        &self.observer.check
    }
}
