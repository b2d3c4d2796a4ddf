//! Classical decay/reheating chain for a dual-rail pair.
//!
//! Thermalization events arrive at rate 1/T_eff with T_eff = 2/(1/T1a + 1/T1b).
//! Each event resamples the pair from its equilibrium distribution: one
//! excitation (incoherent, inside the subspace) with probability 2p, vacuum
//! otherwise. This gives P(coherent) = e^{−t/T_eff} and
//! P(subspace) = (1 − 2p)e^{−t/T_eff} + 2p exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::record::{CheckFlag, CheckOutcome, FinalLabel, ShotRecord};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainState {
    Coherent,
    Incoherent,
    Vacuum,
}

impl ChainState {
    pub fn in_subspace(self) -> bool {
        !matches!(self, ChainState::Vacuum)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureChain {
    pub t_eff: f64,
    pub p_equil: f64,
}

impl ErasureChain {
    pub fn new(t1_q1: f64, t1_q2: f64, p_equil: f64) -> Result<Self> {
        if !(t1_q1 > 0.0 && t1_q2 > 0.0) {
            return Err(Error::InvalidArgument("T1 values must be positive".into()));
        }
        if !(0.0..0.5).contains(&p_equil) {
            return Err(Error::InvalidArgument(
                "p_equil must lie in [0, 0.5)".into(),
            ));
        }
        Ok(ErasureChain {
            t_eff: 2.0 / (1.0 / t1_q1 + 1.0 / t1_q2),
            p_equil,
        })
    }

    pub fn from_lifetime(t_eff: f64, p_equil: f64) -> Result<Self> {
        Self::new(t_eff, t_eff, p_equil)
    }

    /// Probability that at least one thermalization event occurs in dt.
    pub fn event_probability(&self, dt: f64) -> f64 {
        -(-dt / self.t_eff).exp_m1()
    }

    pub fn advance(&self, state: ChainState, dt: f64, rng: &mut SimRng) -> ChainState {
        if dt <= 0.0 || rng.random::<f64>() >= self.event_probability(dt) {
            return state;
        }
        if rng.random::<f64>() < 2.0 * self.p_equil {
            ChainState::Incoherent
        } else {
            ChainState::Vacuum
        }
    }

    /// Analytic P(in subspace) at t starting coherent.
    pub fn subspace_population(&self, t: f64) -> f64 {
        let e = (-t / self.t_eff).exp();
        (1.0 - 2.0 * self.p_equil) * e + 2.0 * self.p_equil
    }
}

/// One shot of the chain over `duration` with `n_checks` perfect checks at
/// k·duration/n_checks (k = 1..n_checks). Readout is perfect: subspace states
/// report (1, 0), vacuum (0, 0).
pub fn classical_erasure_chain(
    t1_q1: f64,
    t1_q2: f64,
    p_equil: f64,
    duration: f64,
    n_checks: usize,
    seed: u64,
) -> Result<ShotRecord> {
    let chain = ErasureChain::new(t1_q1, t1_q2, p_equil)?;
    if !(duration >= 0.0) {
        return Err(Error::InvalidArgument(
            "duration must be non-negative".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    Ok(run_chain(&chain, duration, n_checks, seed, &mut rng))
}

pub fn run_chain(
    chain: &ErasureChain,
    duration: f64,
    n_checks: usize,
    seed: u64,
    rng: &mut SimRng,
) -> ShotRecord {
    let mut record = ShotRecord::new(seed);
    let mut state = ChainState::Coherent;
    if n_checks == 0 {
        state = chain.advance(state, duration, rng);
    } else {
        let step = duration / n_checks as f64;
        for k in 1..=n_checks {
            state = chain.advance(state, step, rng);
            let flag = if state == ChainState::Vacuum {
                CheckFlag::Erasure
            } else {
                CheckFlag::NoErasure
            };
            record.check_outcomes.push(CheckOutcome {
                time: k as f64 * step,
                flag,
            });
        }
    }
    record.true_final_label = if state.in_subspace() {
        FinalLabel::InSubspace
    } else {
        FinalLabel::Leaked00
    };
    record.coherence_lost = state == ChainState::Incoherent;
    record.final_bits = if state.in_subspace() { [1, 0] } else { [0, 0] };
    record.x = duration;
    record
}
