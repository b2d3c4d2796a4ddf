//! Scalar figures of merit derived from fits and model parameters.

use crate::device::Flagged;
use crate::error::{Error, Result};

/// Coherence remaining after time t for a dual-rail qubit whose transmons
/// decay with T1 and reheat towards equilibrium population p, with
/// `n_checks` perfect checks evenly spaced over t: C(t/N)^N.
pub fn coherence_function(t: f64, t1: f64, p_equil: f64, n_checks: u32) -> Result<f64> {
    if !(t >= 0.0 && t1 > 0.0 && (0.0..=0.5).contains(&p_equil)) {
        return Err(Error::Domain(
            "need t >= 0, T1 > 0 and p_equil in [0, 1/2]".into(),
        ));
    }
    let single = |t: f64| {
        let e = (-t / t1).exp();
        e / ((1.0 - 2.0 * p_equil) * e + 2.0 * p_equil)
    };
    if n_checks <= 1 {
        return Ok(single(t));
    }
    let n = n_checks as f64;
    Ok(single(t / n).powf(n))
}

/// Time at which the check-free coherence function falls to 1/e:
/// T1·ln((e − 1 + 2p)/(2p)).
pub fn dephasing_time(t1: f64, p_equil: f64) -> Result<f64> {
    if !(t1 > 0.0 && p_equil > 0.0 && p_equil <= 0.5) {
        return Err(Error::Domain("need T1 > 0 and p_equil in (0, 1/2]".into()));
    }
    let e = std::f64::consts::E;
    Ok(t1 * ((e - 1.0 + 2.0 * p_equil) / (2.0 * p_equil)).ln())
}

/// Upper bound on the dephasing error per check, [−ln C − τ/T2]/N, where
/// τ/T2 is the loss attributed to idling (`t2` = None means no idling loss).
/// Clamped at zero, with the flag cleared, when idling explains everything.
pub fn dephasing_bound_per_check(
    coherence_remaining: f64,
    n_checks: u32,
    tau: f64,
    t2: Option<f64>,
) -> Result<Flagged<f64>> {
    if !(coherence_remaining > 0.0 && coherence_remaining <= 1.0) {
        return Err(Error::Domain("coherence must be in (0, 1]".into()));
    }
    if n_checks == 0 || !(tau >= 0.0) {
        return Err(Error::Domain("need at least one check and tau >= 0".into()));
    }
    let idle = match t2 {
        Some(t2) if t2 > 0.0 => tau / t2,
        Some(_) => return Err(Error::Domain("T2 must be positive".into())),
        None => 0.0,
    };
    let v = (-coherence_remaining.ln() - idle) / n_checks as f64;
    Ok(if v < 0.0 {
        Flagged {
            value: 0.0,
            valid: false,
        }
    } else {
        Flagged {
            value: v,
            valid: true,
        }
    })
}

/// T2 / T_eras.
pub fn erasure_bias(t2: f64, t_eras: f64) -> Result<f64> {
    if !(t2 > 0.0 && t_eras > 0.0) {
        return Err(Error::Domain("times must be positive".into()));
    }
    Ok(t2 / t_eras)
}

/// Erasure error over residual error.
pub fn gate_bias(p_erasure: f64, p_residual: f64) -> Result<f64> {
    if !(p_erasure > 0.0 && p_residual > 0.0) {
        return Err(Error::Domain("error rates must be positive".into()));
    }
    Ok(p_erasure / p_residual)
}

/// Fraction of a check window over the erasure lifetime.
pub fn check_fraction(t_check: f64, t_eras: f64) -> Result<f64> {
    if !(t_check > 0.0 && t_eras > 0.0) {
        return Err(Error::Domain("times must be positive".into()));
    }
    Ok(t_check / t_eras)
}

/// Probability that an erasure during a check goes unflagged.
pub fn missed_erasure_probability(t_check: f64, t_eras: f64, p_false_negative: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_false_negative) {
        return Err(Error::Domain(
            "false-negative rate must be a probability".into(),
        ));
    }
    Ok(check_fraction(t_check, t_eras)? * p_false_negative)
}
