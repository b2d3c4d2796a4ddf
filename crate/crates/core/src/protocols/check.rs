//! Mid-circuit erasure checks, modeled as classified instantaneous events at
//! the end of their window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::record::CheckFlag;
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, LogicalProjectors, C64};
use crate::protocols::logical::{self, Amp2};
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct ErasureCheckModel {
    pub pulse_duration: f64,
    pub readout_duration: f64,
    /// False-positive probability for logical poles (|0L⟩, |1L⟩).
    pub p_false_positive_pole: f64,
    /// Effective false-positive probability for equator states.
    pub p_false_positive_equator: f64,
    pub p_false_negative: f64,
    pub deterministic_phase: f64,
    pub p_dephase: f64,
    pub p_mist_reexcite: f64,
}

impl Default for ErasureCheckModel {
    fn default() -> Self {
        ErasureCheckModel {
            pulse_duration: 540e-9,
            readout_duration: 340e-9,
            p_false_positive_pole: 0.0058,
            p_false_positive_equator: 0.008,
            p_false_negative: 0.0154,
            deterministic_phase: 0.0142,
            p_dephase: 0.0,
            p_mist_reexcite: 2.93e-4,
        }
    }
}

impl ErasureCheckModel {
    /// Projective leak detector: no assignment errors, no dephasing, no
    /// re-excitation. The deterministic phase is kept.
    pub fn perfect() -> Self {
        ErasureCheckModel {
            p_false_positive_pole: 0.0,
            p_false_positive_equator: 0.0,
            p_false_negative: 0.0,
            p_dephase: 0.0,
            p_mist_reexcite: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_false_positive_pole", self.p_false_positive_pole),
            ("p_false_positive_equator", self.p_false_positive_equator),
            ("p_false_negative", self.p_false_negative),
            ("p_dephase", self.p_dephase),
            ("p_mist_reexcite", self.p_mist_reexcite),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.pulse_duration > 0.0 && self.readout_duration > 0.0) {
            return Err(Error::InvalidArgument(
                "check durations must be positive".into(),
            ));
        }
        if !self.deterministic_phase.is_finite() {
            return Err(Error::InvalidArgument(
                "deterministic_phase must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Schedule time occupied by one check.
    pub fn duration(&self) -> f64 {
        self.pulse_duration + self.readout_duration
    }

    /// False-positive probability for a subspace state with ⟨Z_L⟩ = z,
    /// interpolated as p_pole·z² + p_equator·(1 − z²).
    pub fn p_false_positive(&self, z: f64) -> f64 {
        let z2 = (z * z).min(1.0);
        self.p_false_positive_pole * z2 + self.p_false_positive_equator * (1.0 - z2)
    }

    fn flag(rng: &mut SimRng, p: f64) -> CheckFlag {
        if rng.random::<f64>() < p {
            CheckFlag::Erasure
        } else {
            CheckFlag::NoErasure
        }
    }

    fn dephase_flip(&self, rng: &mut SimRng) -> bool {
        self.p_dephase > 0.0 && rng.random::<f64>() < self.p_dephase
    }
}

/// Pair state at the logical level, used by the channel executor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairState {
    Vacuum,
    /// Normalized logical amplitudes.
    Subspace(Amp2),
}

/// Check on a logical-level state. Returns the flag and applies the
/// backaction in place.
pub fn check_pair_state(
    state: &mut PairState,
    model: &ErasureCheckModel,
    rng: &mut SimRng,
) -> CheckFlag {
    match state {
        PairState::Vacuum => {
            let flag = ErasureCheckModel::flag(rng, 1.0 - model.p_false_negative);
            if flag == CheckFlag::Erasure
                && model.p_mist_reexcite > 0.0
                && rng.random::<f64>() < model.p_mist_reexcite
            {
                let v = if rng.random::<bool>() {
                    logical::pair_01()
                } else {
                    logical::pair_10()
                };
                *state = PairState::Subspace(v);
            }
            flag
        }
        PairState::Subspace(v) => {
            let flag =
                ErasureCheckModel::flag(rng, model.p_false_positive(logical::z_expectation(v)));
            *v = logical::rz(model.deterministic_phase) * *v;
            if model.dephase_flip(rng) {
                *v = logical::pauli_z() * *v;
            }
            flag
        }
    }
}

/// Operators needed to apply a check to a full state vector.
#[derive(Clone, Debug)]
pub struct CheckOperators {
    pub projectors: LogicalProjectors,
    /// Raising operators of the two dual-rail transmons, for re-excitation.
    pub raise: [CMatrix; 2],
}

/// Check on a trajectory state vector. Measures whether the pair is in |00⟩,
/// then classifies and applies backaction. `psi` stays normalized.
pub fn check_state_vector(
    psi: &mut CVector,
    ops: &CheckOperators,
    model: &ErasureCheckModel,
    rng: &mut SimRng,
) -> CheckFlag {
    let p00 = ops.projectors.p00.matrix();
    let vac = p00 * &*psi;
    let p_vac = vac.norm_squared();
    if rng.random::<f64>() < p_vac {
        *psi = vac.unscale(p_vac.sqrt());
        let flag = ErasureCheckModel::flag(rng, 1.0 - model.p_false_negative);
        if flag == CheckFlag::Erasure
            && model.p_mist_reexcite > 0.0
            && rng.random::<f64>() < model.p_mist_reexcite
        {
            let k = usize::from(rng.random::<bool>());
            let up = &ops.raise[k] * &*psi;
            let n = up.norm();
            if n > 0.0 {
                *psi = up.unscale(n);
            }
        }
        return flag;
    }
    let mut rest = &*psi - vac;
    let n = rest.norm();
    rest.unscale_mut(n);
    let p0 = ops.projectors.p0l.matrix();
    let p1 = ops.projectors.p1l.matrix();
    let a0 = p0 * &rest;
    let a1 = p1 * &rest;
    let (w0, w1) = (a0.norm_squared(), a1.norm_squared());
    let z = if w0 + w1 > 0.0 {
        (w0 - w1) / (w0 + w1)
    } else {
        1.0
    };
    let flag = ErasureCheckModel::flag(rng, model.p_false_positive(z));
    // Z(θ) on the logical block: |0L⟩ → e^{−iθ/2}, |1L⟩ → e^{+iθ/2}.
    let half = 0.5 * model.deterministic_phase;
    let mut f0 = C64::from_polar(1.0, -half);
    let mut f1 = C64::from_polar(1.0, half);
    if model.dephase_flip(rng) {
        f1 = -f1;
    }
    f0 -= C64::from(1.0);
    f1 -= C64::from(1.0);
    rest += a0 * f0 + a1 * f1;
    *psi = rest;
    flag
}
