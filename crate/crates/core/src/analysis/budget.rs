//! Closed-form coherence budget of the dual-rail pair at its operating point.

use serde::{Deserialize, Serialize};

use crate::device::{
    dual_rail_gap_scaled, optimal_operating_offset, slope_per_weber, DeviceParams,
};
use crate::error::{Error, Result};
use crate::noise::{
    one_over_f_amplitude_from_echo, photon_dephasing_rate, t1_limit_from_spectrum, NoiseSpectrum,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct BudgetInputs {
    /// Spin-echo dephasing time of transmon 2 attributed to 1/f flux noise.
    pub t_phi_echo: f64,
    /// Thermal photon number in the readout resonators.
    pub n_bar: f64,
}

impl Default for BudgetInputs {
    fn default() -> Self {
        BudgetInputs {
            t_phi_echo: 3e-6,
            n_bar: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceBudget {
    pub gap: f64,
    /// T1_DR from Johnson noise on the transmon 2 flux line.
    pub johnson_t1: f64,
    /// T1_DR from 1/f flux noise on transmon 2.
    pub one_over_f_t1: f64,
    /// T1_DR from thermal photons in the transmon 1 resonator.
    pub photon_t1: f64,
    /// Pure dephasing of each transmon from thermal photons in its resonator.
    pub photon_t_phi: [f64; 3],
    /// ∂E/∂δ1 with both transmons at ω0.
    pub sensitivity_resonant: f64,
    /// ∂E/∂δ2 at the optimal offset.
    pub sensitivity_q2: f64,
    pub optimal_offset: f64,
}

/// Budget for transmon 1 and 2 resonant at transmon 2's idle frequency with
/// gap 2·g12.
pub fn coherence_budget(params: &DeviceParams, inputs: &BudgetInputs) -> Result<CoherenceBudget> {
    params.validate()?;
    if !(inputs.t_phi_echo > 0.0 && inputs.n_bar >= 0.0) {
        return Err(Error::InvalidArgument(
            "budget needs t_phi_echo > 0 and n_bar >= 0".into(),
        ));
    }
    let g0 = params.g12;
    let omega0 = params.transmons[1].omega_idle;
    let gap = 2.0 * g0;
    let johnson = NoiseSpectrum::Johnson {
        slope: slope_per_weber(params.flux_slope(1)),
        mutual: params.flux_mutual,
        temperature: params.line_temperature,
        impedance: params.line_impedance,
    };
    let one_over_f = NoiseSpectrum::OneOverF {
        amplitude: one_over_f_amplitude_from_echo(inputs.t_phi_echo)?,
    };
    let r = &params.readout[0];
    let photon = NoiseSpectrum::LorentzianPhoton {
        chi: r.chi_ro,
        kappa: r.kappa_ro,
        n_bar: inputs.n_bar,
    };
    let mut photon_t_phi = [0.0; 3];
    for (t, r) in photon_t_phi.iter_mut().zip(&params.readout) {
        let rate = photon_dephasing_rate(r.chi_ro, r.kappa_ro, inputs.n_bar)?;
        *t = if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        };
    }
    let h = 1e-6 * g0;
    let sensitivity_resonant = (dual_rail_gap_scaled(g0, omega0, h, 0.0)
        - dual_rail_gap_scaled(g0, omega0, -h, 0.0))
        / (2.0 * h);
    let opt = optimal_operating_offset(g0, omega0)?;
    Ok(CoherenceBudget {
        gap,
        johnson_t1: t1_limit_from_spectrum(&johnson, gap)?,
        one_over_f_t1: t1_limit_from_spectrum(&one_over_f, gap)?,
        photon_t1: t1_limit_from_spectrum(&photon, gap)?,
        photon_t_phi,
        sensitivity_resonant,
        sensitivity_q2: opt.sensitivity_q2,
        optimal_offset: opt.delta_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;

    #[test]
    fn device_budget() {
        let b = coherence_budget(&DeviceParams::paper_device(), &BudgetInputs::default()).unwrap();
        assert!((b.johnson_t1 / 1e-3 - 1.0).abs() < 0.3, "{}", b.johnson_t1);
        assert!(
            (b.photon_t_phi[0] / 44e-6 - 1.0).abs() < 0.02,
            "{}",
            b.photon_t_phi[0]
        );
        assert!(
            (b.one_over_f_t1 / 2.2e-3 - 1.0).abs() < 0.05,
            "{}",
            b.one_over_f_t1
        );
        assert!((b.sensitivity_resonant * 57.0 - 1.0).abs() < 0.02);
        assert!((b.sensitivity_q2 * 28.0 - 1.0).abs() < 0.02);
        assert!((b.optimal_offset / mhz(3.2) - 1.0).abs() < 0.02);
        assert!((b.photon_t1 / 10e-3 - 1.0).abs() < 0.15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = DeviceParams::paper_device();
        assert!(coherence_budget(
            &p,
            &BudgetInputs {
                t_phi_echo: 0.0,
                n_bar: 1e-3
            }
        )
        .is_err());
        let b = coherence_budget(
            &p,
            &BudgetInputs {
                t_phi_echo: 3e-6,
                n_bar: 0.0,
            },
        )
        .unwrap();
        assert!(b.photon_t1.is_infinite() && b.photon_t_phi[0].is_infinite());
    }
}
