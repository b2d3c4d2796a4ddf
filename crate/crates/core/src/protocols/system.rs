//! Hamiltonian-level model of the dual-rail pair for trajectory execution and
//! calibration. The frame rotates at the mean parked frequency of the pair,
//! so the logical states sit at ∓E/2 with E the dual-rail gap.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::device::{
    coupling_at, dual_rail_gap_exact, transmon_hamiltonian, DeviceParams, ModeTerm, OperatingPoint,
};
use crate::dynamics::record::{ChannelLabel, CollapseChannel};
use crate::dynamics::schedule::{Channel, Schedule};
use crate::dynamics::trajectory::NullObserver;
use crate::dynamics::{OdeOptions, TimeDependentHamiltonian, TrajectoryEngine};
use crate::error::{Error, Result};
use crate::hilbert::{
    dual_rail_vector, logical_projectors, lowering_matrix, CMatrix, CVector, DualRailLevel,
    LinearOperator, LogicalProjectors, ModeLabel, ModeSpace, C64,
};
use crate::noise::NoiseTrace;
use crate::protocols::check::CheckOperators;
use crate::protocols::logical::Amp2;
use crate::tls::TlsParams;

/// Decay and thermal excitation of the two dual-rail transmons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct ErasureNoise {
    pub t1: [f64; 2],
    pub p_equil: f64,
}

impl ErasureNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1[0] > 0.0 && self.t1[1] > 0.0) {
            return Err(Error::InvalidArgument(
                "erasure T1 values must be positive".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.p_equil) {
            return Err(Error::InvalidArgument(
                "p_equil must lie in [0, 0.5)".into(),
            ));
        }
        Ok(())
    }

    /// Erasure lifetime 2/(1/T1a + 1/T1b).
    pub fn t_eras(&self) -> f64 {
        2.0 / (1.0 / self.t1[0] + 1.0 / self.t1[1])
    }
}

/// Options for tight unitary propagation of gate segments.
pub fn gate_ode_options() -> OdeOptions {
    OdeOptions {
        rtol: 1e-11,
        atol: 1e-11,
        ..OdeOptions::default()
    }
}

#[derive(Clone, Debug)]
pub struct DualRailSystem {
    pub params: DeviceParams,
    pub point: OperatingPoint,
    /// Coupling at the operating point.
    pub g: f64,
    /// Frame frequency (mean of the two parked frequencies).
    pub frame: f64,
    pub tls: Option<TlsParams>,
    space: Arc<ModeSpace>,
    projectors: LogicalProjectors,
    h0: CMatrix,
}

impl DualRailSystem {
    /// Transmons truncated to `transmon_dim` levels (2 is enough for
    /// erasure dynamics, 3 captures the leakage-level shifts during gates).
    pub fn new(
        params: &DeviceParams,
        point: OperatingPoint,
        transmon_dim: usize,
        tls: Option<TlsParams>,
    ) -> Result<Self> {
        params.validate()?;
        if transmon_dim < 2 {
            return Err(Error::InvalidArgument(
                "transmon_dim must be at least 2".into(),
            ));
        }
        let mut modes = vec![
            (ModeLabel::Transmon1, transmon_dim),
            (ModeLabel::Transmon2, transmon_dim),
        ];
        if tls.is_some() {
            modes.push((ModeLabel::Tls, 2));
        }
        let space = ModeSpace::new(&modes)?;
        let g = coupling_at(params.g12, point.omega0, point.omega1, point.omega2);
        let frame = 0.5 * (point.omega1 + point.omega2);
        let t = &params.transmons;
        let mut h0 = transmon_hamiltonian(
            &space,
            &[
                ModeTerm {
                    mode: 0,
                    omega: point.omega1 - frame,
                    eta: t[0].eta,
                },
                ModeTerm {
                    mode: 1,
                    omega: point.omega2 - frame,
                    eta: t[1].eta,
                },
            ],
            &[(0, 1, g)],
        )?;
        if let Some(p) = &tls {
            p.validate()?;
            h0 += crate::tls::tls_terms(&space, 0, 2, p)?;
        }
        let projectors = logical_projectors(&space, 0, 1)?;
        Ok(DualRailSystem {
            params: params.clone(),
            point,
            g,
            frame,
            tls,
            space,
            projectors,
            h0,
        })
    }

    pub fn space(&self) -> &Arc<ModeSpace> {
        &self.space
    }

    pub fn projectors(&self) -> &LogicalProjectors {
        &self.projectors
    }

    /// Bare dual-rail gap √(4g² + δ²).
    pub fn gap(&self) -> f64 {
        dual_rail_gap_exact(self.g, self.point.delta)
    }

    pub fn static_hamiltonian(&self) -> &CMatrix {
        &self.h0
    }

    fn op(&self, mode: usize, raise: bool) -> Result<CMatrix> {
        let a = lowering_matrix(self.space.dims()[mode]);
        self.space.embed(mode, &if raise { a.adjoint() } else { a })
    }

    fn number(&self, mode: usize) -> Result<CMatrix> {
        let a = lowering_matrix(self.space.dims()[mode]);
        self.space.embed(mode, &(a.adjoint() * &a))
    }

    /// ½(P1L − P0L): shifts the gap by the coefficient it multiplies.
    pub fn gap_operator(&self) -> CMatrix {
        (self.projectors.p1l.matrix() - self.projectors.p0l.matrix()) * C64::from(0.5)
    }

    pub fn vector(&self, level: DualRailLevel) -> Result<CVector> {
        dual_rail_vector(&self.space, 0, 1, level, &vec![0; self.space.n_modes()])
    }

    /// Hamiltonian for a schedule plus optional frequency-noise traces on
    /// each transmon, traces on the dual-rail gap and a static gap offset.
    pub fn hamiltonian(
        &self,
        schedule: &Schedule,
        transmon_traces: &[(usize, Arc<NoiseTrace>)],
        gap_traces: &[Arc<NoiseTrace>],
        static_gap_offset: f64,
    ) -> Result<TimeDependentHamiltonian> {
        let mut h0 = self.h0.clone();
        if static_gap_offset != 0.0 {
            h0 += self.gap_operator() * C64::from(static_gap_offset);
        }
        let mut h = TimeDependentHamiltonian::new(self.space.clone(), h0)?;
        for seg in &schedule.segments {
            match seg.channel {
                Channel::Xy1 => h.add_drive(self.op(0, true)?, *seg)?,
                Channel::Xy2 => h.add_drive(self.op(1, true)?, *seg)?,
                Channel::Flux2 => h.add_modulation(self.number(1)?, *seg)?,
                Channel::Xy3 => {
                    return Err(Error::Unsupported(
                        "the pair model has no ancilla drive line".into(),
                    ));
                }
            }
        }
        for (mode, trace) in transmon_traces {
            if *mode > 1 {
                return Err(Error::InvalidArgument(format!(
                    "transmon index {mode} outside the pair"
                )));
            }
            h.add_trace(self.number(*mode)?, trace.clone())?;
        }
        for trace in gap_traces {
            h.add_trace(self.gap_operator(), trace.clone())?;
        }
        Ok(h)
    }

    /// Collapse channels: decay and heating of both transmons, optional
    /// Markovian dephasing of the gap at rate `dephasing_rate` (coherence
    /// decays as e^{−Γt}), and TLS decay when a TLS is present.
    pub fn channels(
        &self,
        erasure: Option<&ErasureNoise>,
        dephasing_rate: f64,
    ) -> Result<Vec<CollapseChannel>> {
        let mut out = Vec::new();
        let sp = self.space.clone();
        if let Some(e) = erasure {
            e.validate()?;
            let labels = [
                (ChannelLabel::DecayQ1, ChannelLabel::HeatQ1),
                (ChannelLabel::DecayQ2, ChannelLabel::HeatQ2),
            ];
            for (k, (down, up)) in labels.into_iter().enumerate() {
                let gamma = 1.0 / e.t1[k];
                out.push(CollapseChannel::new(
                    LinearOperator::new(sp.clone(), self.op(k, false)?)?,
                    gamma,
                    down,
                )?);
                if e.p_equil > 0.0 {
                    let up_rate = gamma * e.p_equil / (1.0 - e.p_equil);
                    out.push(CollapseChannel::new(
                        LinearOperator::new(sp.clone(), self.op(k, true)?)?,
                        up_rate,
                        up,
                    )?);
                }
            }
        }
        if dephasing_rate > 0.0 {
            let z = self.projectors.p1l.matrix() - self.projectors.p0l.matrix();
            out.push(CollapseChannel::new(
                LinearOperator::new(sp.clone(), z)?,
                0.5 * dephasing_rate,
                ChannelLabel::Other("gap_dephasing".into()),
            )?);
        }
        if let Some(p) = &self.tls {
            out.extend(crate::tls::tls_channels(&self.space, 2, p)?);
        }
        Ok(out)
    }

    pub fn check_operators(&self) -> Result<CheckOperators> {
        Ok(CheckOperators {
            projectors: self.projectors.clone(),
            raise: [self.op(0, true)?, self.op(1, true)?],
        })
    }

    /// Noiseless evolution of a pure state through a schedule.
    pub fn evolve(&self, schedule: &Schedule, psi0: &CVector) -> Result<CVector> {
        let h = self.hamiltonian(schedule, &[], &[], 0.0)?;
        let engine = TrajectoryEngine::new(h, &[], schedule, &[], false, gate_ode_options())?;
        Ok(engine.run_shot(psi0, &NullObserver, 0)?.final_state)
    }

    /// Logical amplitudes of `psi` at time t, expressed in the frame that
    /// co-rotates with the bare gap (where ideal gates are time independent).
    pub fn logical_amplitudes(&self, psi: &CVector, t: f64) -> Result<Amp2> {
        let z = self.vector(DualRailLevel::Zero)?;
        let o = self.vector(DualRailLevel::One)?;
        let e = self.gap();
        let c0 = z.dotc(psi) * C64::from_polar(1.0, -0.5 * e * t);
        let c1 = o.dotc(psi) * C64::from_polar(1.0, 0.5 * e * t);
        Ok(Amp2::new(c0, c1))
    }
}
