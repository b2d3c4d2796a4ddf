//! Device parameterization, Hamiltonian construction and dual-rail analytics.

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{lowering_matrix, CMatrix, CVector, ModeLabel, ModeSpace, C64};
use crate::units::{ghz, mhz, us, FLUX_QUANTUM, TWO_PI};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct TransmonParams {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_idle: f64,
    pub eta: f64,
    pub t1: f64,
    pub t2_star: f64,
    pub p_equil: f64,
    /// Measured |dω/dΦ| at the idle point in rad/s per flux quantum. When
    /// absent the symmetric-transmon flux map is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct ReadoutResonator {
    pub omega_ro: f64,
    pub chi_ro: f64,
    pub kappa_ro: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub transmons: [TransmonParams; 3],
    pub g12: f64,
    pub g13: f64,
    pub g23: f64,
    pub readout: [ReadoutResonator; 3],
    /// Flux-line mutual inductance in henry.
    pub flux_mutual: f64,
    /// Flux-line impedance in ohm.
    pub line_impedance: f64,
    /// Effective flux-line temperature in kelvin.
    pub line_temperature: f64,
}

impl DeviceParams {
    /// Parameters of the three-transmon device (two dual-rail transmons plus
    /// ancilla) used throughout the examples and tests.
    pub fn paper_device() -> Self {
        let t = |wmin, wmax, widle, eta, t1, t2s, slope: Option<f64>| TransmonParams {
            omega_min: ghz(wmin),
            omega_max: ghz(wmax),
            omega_idle: ghz(widle),
            eta: mhz(eta),
            t1: us(t1),
            t2_star: us(t2s),
            p_equil: 0.002,
            flux_slope: slope,
        };
        let r = |w, chi, kappa| ReadoutResonator {
            omega_ro: ghz(w),
            chi_ro: mhz(chi),
            kappa_ro: mhz(kappa),
        };
        DeviceParams {
            transmons: [
                t(3.1, 5.1, 5.1, 193.0, 36.0, 31.0, Some(0.0)),
                t(3.3, 6.1, 5.1, 204.0, 14.0, 1.29, Some(ghz(7.8))),
                t(2.5, 3.95, 3.74, 196.0, 38.0, 4.4, None),
            ],
            g12: mhz(90.1),
            g13: mhz(8.4),
            g23: mhz(81.7),
            readout: [
                r(7.749, 3.73, 9.3),
                r(7.511, 0.32, 0.87),
                r(7.341, 2.53, 6.7),
            ],
            flux_mutual: 1.28e-12,
            line_impedance: 50.0,
            line_temperature: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.transmons.iter().enumerate() {
            let q = i + 1;
            if !(t.omega_min <= t.omega_idle && t.omega_idle <= t.omega_max) {
                return Err(Error::InvalidArgument(format!(
                    "transmon {q}: omega_idle outside [omega_min, omega_max]"
                )));
            }
            for (name, v) in [
                ("omega_min", t.omega_min),
                ("eta", t.eta),
                ("t1", t.t1),
                ("t2_star", t.t2_star),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "transmon {q}: {name} must be positive"
                    )));
                }
            }
            if !(0.0..0.5).contains(&t.p_equil) {
                return Err(Error::InvalidArgument(format!(
                    "transmon {q}: p_equil must lie in [0, 0.5)"
                )));
            }
            if let Some(s) = t.flux_slope {
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "transmon {q}: flux_slope must be non-negative"
                    )));
                }
            }
        }
        for (name, v) in [("g12", self.g12), ("g13", self.g13), ("g23", self.g23)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative"
                )));
            }
        }
        for (i, r) in self.readout.iter().enumerate() {
            if !(r.omega_ro > 0.0 && r.chi_ro > 0.0 && r.kappa_ro > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "readout resonator {}: rates must be positive",
                    i + 1
                )));
            }
        }
        for (name, v) in [
            ("flux_mutual", self.flux_mutual),
            ("line_impedance", self.line_impedance),
            ("line_temperature", self.line_temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// |dω/dΦ| of transmon `index` (0-based) at its idle point, in rad/s per
    /// flux quantum.
    pub fn flux_slope(&self, index: usize) -> f64 {
        let t = &self.transmons[index];
        t.flux_slope.unwrap_or_else(|| {
            let map = SymmetricTransmonFlux {
                omega_max: t.omega_max,
                eta: t.eta,
            };
            map.flux_for(t.omega_idle)
                .map(|phi| map.slope(phi).abs())
                .unwrap_or(0.0)
        })
    }
}

/// Transmon frequency as a function of external flux (in units of Φ0).
pub trait FluxMap {
    fn frequency(&self, phi: f64) -> f64;

    fn slope(&self, phi: f64) -> f64 {
        let h = 1e-6;
        (self.frequency(phi + h) - self.frequency(phi - h)) / (2.0 * h)
    }
}

/// ω(Φ) = (ω_max + η)·√|cos(πΦ/Φ0)| − η.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricTransmonFlux {
    pub omega_max: f64,
    pub eta: f64,
}

impl FluxMap for SymmetricTransmonFlux {
    fn frequency(&self, phi: f64) -> f64 {
        (self.omega_max + self.eta) * (std::f64::consts::PI * phi).cos().abs().sqrt() - self.eta
    }

    fn slope(&self, phi: f64) -> f64 {
        let x = std::f64::consts::PI * phi;
        let c = x.cos();
        if c.abs() < 1e-300 {
            return f64::INFINITY;
        }
        -(self.omega_max + self.eta) * std::f64::consts::PI * x.sin() * c.signum()
            / (2.0 * c.abs().sqrt())
    }
}

impl SymmetricTransmonFlux {
    /// Flux in [0, 0.5) giving frequency `omega`.
    pub fn flux_for(&self, omega: f64) -> Option<f64> {
        let r = (omega + self.eta) / (self.omega_max + self.eta);
        if !(0.0..=1.0).contains(&r) {
            return None;
        }
        Some((r * r).acos() / std::f64::consts::PI)
    }
}

/// Frequency noise sensitivity converted from flux slope: S_ω = slope² S_Φ.
/// Slope per flux quantum divided by Φ0 gives rad/s per weber.
pub fn slope_per_weber(slope_per_phi0: f64) -> f64 {
    slope_per_phi0 / FLUX_QUANTUM
}

/// Parked transmon frequencies and their offsets from the reference frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub omega1: f64,
    pub omega2: f64,
    pub omega0: f64,
    pub delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
}

impl OperatingPoint {
    /// `g0` is the coupling at `omega0`, needed for the ε offsets from the
    /// first-order-insensitive point.
    pub fn new(omega1: f64, omega2: f64, omega0: f64, g0: f64) -> Self {
        let delta1 = omega1 - omega0;
        let delta2 = omega2 - omega0;
        let offset = 2.0 * g0 * g0 / omega0;
        OperatingPoint {
            omega1,
            omega2,
            omega0,
            delta: omega1 - omega2,
            delta1,
            delta2,
            epsilon1: delta1 + offset,
            epsilon2: delta2,
        }
    }

    /// Both dual-rail transmons at their idle frequencies, referenced to transmon 2.
    pub fn idle(params: &DeviceParams) -> Self {
        let w2 = params.transmons[1].omega_idle;
        Self::new(params.transmons[0].omega_idle, w2, w2, params.g12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualRailFrame {
    pub g0: f64,
    pub omega0: f64,
    pub e_dr: f64,
}

impl DualRailFrame {
    pub fn new(g0: f64, omega0: f64, delta: f64) -> Result<Self> {
        if !(g0 > 0.0 && omega0 > 0.0) {
            return Err(Error::InvalidArgument(
                "g0 and omega0 must be positive".into(),
            ));
        }
        Ok(DualRailFrame {
            g0,
            omega0,
            e_dr: dual_rail_gap_exact(g0, delta),
        })
    }
}

/// Value of a perturbative formula together with whether its small-parameter
/// assumptions hold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flagged<T> {
    pub value: T,
    pub valid: bool,
}

pub fn dual_rail_gap_exact(g: f64, delta: f64) -> f64 {
    (4.0 * g * g + delta * delta).sqrt()
}

/// Coupling at transmon frequencies (ω1, ω2) for a fixed capacitance,
/// g = g0·√(ω1ω2)/ω0.
pub fn coupling_at(g0: f64, omega0: f64, omega1: f64, omega2: f64) -> f64 {
    g0 * (omega1 * omega2).sqrt() / omega0
}

/// Exact gap including the frequency dependence of the coupling.
pub fn dual_rail_gap_scaled(g0: f64, omega0: f64, delta1: f64, delta2: f64) -> f64 {
    let g = coupling_at(g0, omega0, omega0 + delta1, omega0 + delta2);
    dual_rail_gap_exact(g, delta1 - delta2)
}

/// Second-order expansion of the gap in the detunings δ1, δ2 from ω0.
pub fn dual_rail_gap_expansion(g0: f64, omega0: f64, delta1: f64, delta2: f64) -> Flagged<f64> {
    let value = 2.0 * g0 + g0 / omega0 * (delta1 + delta2) + (delta1 - delta2).powi(2) / (4.0 * g0);
    let valid = (delta1 - delta2).abs() <= g0 / 3.0 && g0 <= omega0 / 10.0;
    Flagged { value, valid }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalOffset {
    /// Amount by which transmon 1 is parked below transmon 2.
    pub delta_offset: f64,
    pub gap_at_optimum: f64,
    /// ∂E/∂δ2 at the optimum (∂E/∂δ1 vanishes there).
    pub sensitivity_q2: f64,
}

pub fn optimal_operating_offset(g0: f64, omega0: f64) -> Result<OptimalOffset> {
    if !(g0 > 0.0 && g0 < omega0) {
        return Err(Error::InvalidArgument("need 0 < g0 < omega0".into()));
    }
    Ok(OptimalOffset {
        delta_offset: 2.0 * g0 * g0 / omega0,
        gap_at_optimum: 2.0 * g0 - g0.powi(3) / (omega0 * omega0),
        sensitivity_q2: 2.0 * g0 / omega0,
    })
}

/// Gap near the optimum in terms of ε offsets.
pub fn dual_rail_gap_optimal(g0: f64, omega0: f64, epsilon1: f64, epsilon2: f64) -> f64 {
    2.0 * g0 - g0.powi(3) / (omega0 * omega0)
        + 2.0 * g0 * epsilon2 / omega0
        + (epsilon1 - epsilon2).powi(2) / (4.0 * g0)
}

/// Single transmon mode entry for Hamiltonian assembly.
#[derive(Clone, Copy, Debug)]
pub struct ModeTerm {
    pub mode: usize,
    pub omega: f64,
    pub eta: f64,
}

/// Σ ω n − (η/2) a†a†aa + Σ g (a_i† a_j + h.c.) on `space`.
pub fn transmon_hamiltonian(
    space: &ModeSpace,
    modes: &[ModeTerm],
    couplings: &[(usize, usize, f64)],
) -> Result<CMatrix> {
    let n = space.total_dim();
    let mut h = CMatrix::zeros(n, n);
    for m in modes {
        let d = *space
            .dims()
            .get(m.mode)
            .ok_or_else(|| Error::DimensionMismatch(format!("mode {} missing", m.mode)))?;
        let local = CMatrix::from_diagonal(&CVector::from_fn(d, |k, _| {
            let k = k as f64;
            C64::from(m.omega * k - 0.5 * m.eta * k * (k - 1.0))
        }));
        h += space.embed(m.mode, &local)?;
    }
    for &(i, j, g) in couplings {
        if g == 0.0 {
            continue;
        }
        let ai = space.embed(i, &lowering_matrix(space.dims()[i]))?;
        let aj = space.embed(j, &lowering_matrix(space.dims()[j]))?;
        let hop = ai.adjoint() * &aj;
        h += (&hop + hop.adjoint()) * C64::from(g);
    }
    Ok(h)
}

fn three_transmon_modes(space: &ModeSpace) -> Result<[usize; 3]> {
    let find = |l| {
        space
            .find(l)
            .ok_or_else(|| Error::DimensionMismatch(format!("space has no {l} mode")))
    };
    let idx = [
        find(ModeLabel::Transmon1)?,
        find(ModeLabel::Transmon2)?,
        find(ModeLabel::Ancilla)?,
    ];
    for &i in &idx {
        if space.dims()[i] < 3 {
            return Err(Error::DimensionMismatch(
                "transmon modes need dimension >= 3".into(),
            ));
        }
    }
    Ok(idx)
}

/// Full three-transmon Hamiltonian in the lab frame. Transmons 1 and 2 sit at
/// the operating point, the ancilla at its idle frequency.
pub fn build_full_hamiltonian(
    params: &DeviceParams,
    point: &OperatingPoint,
    space: &ModeSpace,
) -> Result<CMatrix> {
    let [m1, m2, m3] = three_transmon_modes(space)?;
    let t = &params.transmons;
    transmon_hamiltonian(
        space,
        &[
            ModeTerm {
                mode: m1,
                omega: point.omega1,
                eta: t[0].eta,
            },
            ModeTerm {
                mode: m2,
                omega: point.omega2,
                eta: t[1].eta,
            },
            ModeTerm {
                mode: m3,
                omega: t[2].omega_idle,
                eta: t[2].eta,
            },
        ],
        &[
            (m1, m2, params.g12),
            (m1, m3, params.g13),
            (m2, m3, params.g23),
        ],
    )
}

pub fn three_transmon_space(dim: usize) -> Result<Arc<ModeSpace>> {
    ModeSpace::new(&[
        (ModeLabel::Transmon1, dim),
        (ModeLabel::Transmon2, dim),
        (ModeLabel::Ancilla, dim),
    ])
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(h.nrows(), h.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersiveShifts {
    pub chi0: f64,
    pub chi1: f64,
    pub chi_bar: f64,
    pub delta_chi: f64,
    /// False when |Δ| is not large compared to g23.
    pub valid: bool,
}

impl DispersiveShifts {
    fn new(chi0: f64, chi1: f64, valid: bool) -> Self {
        DispersiveShifts {
            chi0,
            chi1,
            chi_bar: 0.5 * (chi0 + chi1),
            delta_chi: chi1 - chi0,
            valid,
        }
    }
}

/// Overlap threshold (squared magnitude) for eigenstate tracking.
pub const TRACKING_THRESHOLD: f64 = 0.7;

/// Assigns each reference vector to a distinct eigenvector by descending
/// overlap. Returns eigenvector column indices.
pub fn track_eigenstates(
    references: &[(String, CVector)],
    eigenvectors: &CMatrix,
) -> Result<Vec<usize>> {
    let n = eigenvectors.ncols();
    let mut pairs = Vec::with_capacity(references.len() * n);
    for (r, (_, v)) in references.iter().enumerate() {
        for c in 0..n {
            pairs.push((eigenvectors.column(c).dotc(v).norm_sqr(), r, c));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut assigned: Vec<Option<(usize, f64)>> = vec![None; references.len()];
    let mut taken = vec![false; n];
    for (ov, r, c) in pairs {
        if assigned[r].is_none() && !taken[c] {
            assigned[r] = Some((c, ov));
            taken[c] = true;
        }
    }
    assigned
        .into_iter()
        .zip(references)
        .map(|(a, (label, _))| match a {
            Some((c, ov)) if ov >= TRACKING_THRESHOLD => Ok(c),
            Some((_, ov)) => Err(Error::LevelCollision {
                label: label.clone(),
                overlap: ov,
            }),
            None => Err(Error::LevelCollision {
                label: label.clone(),
                overlap: 0.0,
            }),
        })
        .collect()
}

/// Ancilla dispersive shifts for the dual-rail pair in |0L⟩ and |1L⟩ from
/// exact diagonalization of the three-transmon Hamiltonian (dimension 3 each).
///
/// Reference states are products of the dressed two-transmon eigenstates with
/// ancilla Fock states, so the dual-rail hybridization itself does not count
/// against the tracking threshold.
pub fn dispersive_shifts_numeric(
    params: &DeviceParams,
    point: &OperatingPoint,
) -> Result<DispersiveShifts> {
    let space = three_transmon_space(3)?;
    let h = build_full_hamiltonian(params, point, &space)?;

    let pair_space = ModeSpace::new(&[(ModeLabel::Transmon1, 3), (ModeLabel::Transmon2, 3)])?;
    let t = &params.transmons;
    let h_pair = transmon_hamiltonian(
        &pair_space,
        &[
            ModeTerm {
                mode: 0,
                omega: point.omega1,
                eta: t[0].eta,
            },
            ModeTerm {
                mode: 1,
                omega: point.omega2,
                eta: t[1].eta,
            },
        ],
        &[(0, 1, params.g12)],
    )?;
    let (_, pair_vecs) = eigh(&h_pair);
    // Single-excitation manifold sits at columns 1 (lower, |0L⟩-like) and 2 (upper).
    let pair_states = [
        pair_vecs.column(0).into_owned(),
        pair_vecs.column(1).into_owned(),
        pair_vecs.column(2).into_owned(),
    ];
    let names = ["00", "0L", "1L"];
    let [m1, m2, m3] = three_transmon_modes(&space)?;
    let mut refs = Vec::new();
    for (state, name) in pair_states.iter().zip(names) {
        for anc in 0..2 {
            let mut v = CVector::zeros(space.total_dim());
            for idx in 0..space.total_dim() {
                let l = space.levels(idx);
                if l[m3] != anc {
                    continue;
                }
                let others_zero = l
                    .iter()
                    .enumerate()
                    .all(|(k, &n)| k == m1 || k == m2 || k == m3 || n == 0);
                if others_zero {
                    v[idx] = state[l[m1] * 3 + l[m2]];
                }
            }
            refs.push((format!("{name}⊗{anc}"), v));
        }
    }
    let (values, vectors) = eigh(&h);
    let cols = track_eigenstates(&refs, &vectors)?;
    let e = |k: usize| values[cols[k]];
    let base = e(1) - e(0);
    let chi0 = e(3) - e(2) - base;
    let chi1 = e(5) - e(4) - base;
    let big_delta = params.transmons[2].omega_idle - point.omega2;
    let valid = big_delta.abs() > 5.0 * params.g23.max(params.g13);
    Ok(DispersiveShifts::new(chi0, chi1, valid))
}

/// First-order δχ/χ̄ with an explicit ancilla detuning Δ.
pub fn delta_chi_ratio(g12: f64, g13: f64, g23: f64, big_delta: f64, delta: f64) -> Result<f64> {
    if g12 == 0.0 || g23 == 0.0 || big_delta == 0.0 {
        return Err(Error::Domain(
            "g12, g23 and the ancilla detuning must be nonzero".into(),
        ));
    }
    Ok(2.0 * g12 / big_delta + 2.0 * g13 / g23 - delta / g12)
}

/// First-order δχ/χ̄ for the device, with Δ = ω3 − ω2 taken with its sign
/// from the idle frequencies.
pub fn delta_chi_perturbative(params: &DeviceParams, delta: f64) -> Result<Flagged<f64>> {
    let big_delta = params.transmons[2].omega_idle - params.transmons[1].omega_idle;
    let value = delta_chi_ratio(params.g12, params.g13, params.g23, big_delta, delta)?;
    let small = [
        params.transmons[2].eta / big_delta,
        params.g12 / big_delta,
        params.g23 / big_delta,
        params.g13 / params.g23,
        delta / params.g12,
    ];
    Ok(Flagged {
        value,
        valid: small.iter().all(|x| x.abs() < 0.3),
    })
}

/// Perturbative ancilla dispersive shift magnitude 2η g23²/Δ².
pub fn chi_perturbative(params: &DeviceParams) -> f64 {
    let big_delta = params.transmons[2].omega_idle - params.transmons[1].omega_idle;
    2.0 * params.transmons[2].eta * params.g23 * params.g23 / (big_delta * big_delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingRow {
    pub omega2: f64,
    pub lower: f64,
    pub upper: f64,
}

impl CrossingRow {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Single-excitation eigenfrequencies of the transmon 1-2 block as transmon 2
/// is swept with transmon 1 at its idle frequency.
pub fn avoided_crossing_sweep(
    params: &DeviceParams,
    omega2_values: &[f64],
) -> Result<Vec<CrossingRow>> {
    if omega2_values.is_empty() {
        return Err(Error::EmptyInput("omega2 sweep is empty".into()));
    }
    let w1 = params.transmons[0].omega_idle;
    let g = params.g12;
    Ok(omega2_values
        .iter()
        .map(|&w2| {
            let mean = 0.5 * (w1 + w2);
            let half = 0.5 * dual_rail_gap_exact(g, w1 - w2);
            CrossingRow {
                omega2: w2,
                lower: mean - half,
                upper: mean + half,
            }
        })
        .collect())
}

/// Minimum gap over a sweep table and where it occurs.
pub fn minimum_gap(rows: &[CrossingRow]) -> Option<(f64, f64)> {
    rows.iter()
        .map(|r| (r.omega2, r.gap()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Dual-rail splitting in cyclic Hz, for display.
pub fn gap_hz(e: f64) -> f64 {
    e / TWO_PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::ModeLabel;
    use approx::assert_relative_eq;

    #[test]
    fn preset_validates() {
        DeviceParams::paper_device().validate().unwrap();
        let mut p = DeviceParams::paper_device();
        p.transmons[0].omega_idle = ghz(6.0);
        assert!(p.validate().is_err());
        let mut p = DeviceParams::paper_device();
        p.transmons[1].p_equil = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn decoupled_single_excitation_is_bare_frequency() {
        let mut p = DeviceParams::paper_device();
        p.g12 = 0.0;
        p.g13 = 0.0;
        p.g23 = 0.0;
        let space = three_transmon_space(3).unwrap();
        let pt = OperatingPoint::new(ghz(5.0), ghz(5.2), ghz(5.1), mhz(90.0));
        let h = build_full_hamiltonian(&p, &pt, &space).unwrap();
        let idx = space.basis_index(&[1, 0, 0]).unwrap();
        assert_eq!(h[(idx, idx)].re, ghz(5.0));
        assert!(crate::hilbert::hermiticity_error(&h) < 1e-12);
    }

    #[test]
    fn resonant_gap_is_twice_coupling() {
        let p = DeviceParams::paper_device();
        let space =
            ModeSpace::new(&[(ModeLabel::Transmon1, 3), (ModeLabel::Transmon2, 3)]).unwrap();
        let h = transmon_hamiltonian(
            &space,
            &[
                ModeTerm {
                    mode: 0,
                    omega: ghz(5.1),
                    eta: p.transmons[0].eta,
                },
                ModeTerm {
                    mode: 1,
                    omega: ghz(5.1),
                    eta: p.transmons[1].eta,
                },
            ],
            &[(0, 1, p.g12)],
        )
        .unwrap();
        let (vals, _) = eigh(&h);
        assert_relative_eq!(vals[2] - vals[1], mhz(180.2), max_relative = 1e-9);
    }

    #[test]
    fn detuned_gap_matches_full_eigensolve() {
        let g = mhz(90.1);
        let d = mhz(50.0);
        let p = DeviceParams::paper_device();
        let space =
            ModeSpace::new(&[(ModeLabel::Transmon1, 3), (ModeLabel::Transmon2, 3)]).unwrap();
        let h = transmon_hamiltonian(
            &space,
            &[
                ModeTerm {
                    mode: 0,
                    omega: ghz(5.1) + d,
                    eta: p.transmons[0].eta,
                },
                ModeTerm {
                    mode: 1,
                    omega: ghz(5.1),
                    eta: p.transmons[1].eta,
                },
            ],
            &[(0, 1, g)],
        )
        .unwrap();
        let (vals, _) = eigh(&h);
        assert_relative_eq!(
            vals[2] - vals[1],
            dual_rail_gap_exact(g, d),
            max_relative = 1e-9
        );
    }

    #[test]
    fn gap_examples() {
        assert_relative_eq!(
            dual_rail_gap_exact(mhz(90.0), 0.0),
            mhz(180.0),
            max_relative = 1e-15
        );
        // Independent 2x2 eigen solve of [[d/2, g],[g, -d/2]].
        let (g, d) = (mhz(90.0), mhz(18.0));
        let m = nalgebra::Matrix2::new(d / 2.0, g, g, -d / 2.0);
        let ev = m.symmetric_eigenvalues();
        let oracle = (ev[0] - ev[1]).abs();
        assert_relative_eq!(dual_rail_gap_exact(g, d), oracle, max_relative = 1e-12);
        assert_relative_eq!(dual_rail_gap_exact(g, d), mhz(180.898), max_relative = 1e-5);
        assert_eq!(dual_rail_gap_exact(g, d), dual_rail_gap_exact(g, -d));
    }

    #[test]
    fn expansion_examples() {
        let (g0, w0) = (mhz(90.0), ghz(5.1));
        assert_eq!(dual_rail_gap_expansion(g0, w0, 0.0, 0.0).value, 2.0 * g0);
        let h = mhz(0.01);
        let slope = (dual_rail_gap_expansion(g0, w0, h, h).value
            - dual_rail_gap_expansion(g0, w0, -h, -h).value)
            / (4.0 * h);
        assert_relative_eq!(slope, 1.0 / 56.667, max_relative = 1e-3);
        for &(d1, d2) in &[
            (mhz(5.0), 0.0),
            (0.0, mhz(-5.0)),
            (mhz(3.0), mhz(-2.0)),
            (mhz(-5.0), mhz(5.0)),
        ] {
            let exact = dual_rail_gap_scaled(g0, w0, d1, d2);
            let approx = dual_rail_gap_expansion(g0, w0, d1, d2);
            assert!(approx.valid);
            assert!(((approx.value - exact) / exact).abs() < 1e-4);
        }
        assert!(!dual_rail_gap_expansion(g0, w0, mhz(40.0), 0.0).valid);
    }

    #[test]
    fn expansion_residual_shrinks_with_detuning() {
        // Constant coupling isolates the quadratic term: residual ~ δ⁴/g³.
        let g = mhz(90.0);
        let resid = |d: f64| (dual_rail_gap_exact(g, d) - (2.0 * g + d * d / (4.0 * g))).abs();
        let mut d = mhz(30.0);
        while d > mhz(1.0) {
            assert!(resid(d) / resid(d / 2.0) >= 8.0);
            d /= 2.0;
        }
    }

    /// Bisection on the sign of a wide central difference; for a smooth
    /// function near its minimum this avoids the flat-bottom resolution limit
    /// of comparing function values directly.
    fn bisect_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, h: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m + h) - f(m - h) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn optimal_offset_examples() {
        let (g0, w0) = (mhz(90.0), ghz(5.1));
        let opt = optimal_operating_offset(g0, w0).unwrap();
        assert_relative_eq!(opt.delta_offset, mhz(3.176), max_relative = 1e-3);
        assert_relative_eq!(opt.sensitivity_q2, 1.0 / 28.33, max_relative = 1e-3);
        assert_relative_eq!(
            opt.gap_at_optimum,
            dual_rail_gap_optimal(g0, w0, 0.0, 0.0),
            max_relative = 1e-15
        );
        let x = bisect_min(
            |d1| dual_rail_gap_expansion(g0, w0, d1, 0.0).value,
            mhz(-20.0),
            mhz(10.0),
            mhz(0.1),
        );
        assert_relative_eq!(-x, opt.delta_offset, max_relative = 1e-6);
        // ∂E/∂ε1 vanishes at the optimum.
        let h = mhz(1e-3);
        let der = (dual_rail_gap_expansion(g0, w0, -opt.delta_offset + h, 0.0).value
            - dual_rail_gap_expansion(g0, w0, -opt.delta_offset - h, 0.0).value)
            / (2.0 * h);
        assert!(der.abs() < 1e-9 * g0);
        assert_relative_eq!(
            dual_rail_gap_expansion(g0, w0, -opt.delta_offset, 0.0).value,
            opt.gap_at_optimum,
            max_relative = 1e-14
        );
    }

    #[test]
    fn operating_point_identity() {
        let pt = OperatingPoint::new(ghz(5.097), ghz(5.1), ghz(5.1), mhz(90.0));
        assert_relative_eq!(
            pt.delta1 - pt.delta2,
            pt.omega1 - pt.omega2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn delta_chi_examples() {
        let p = DeviceParams::paper_device();
        assert_relative_eq!(
            delta_chi_ratio(p.g12, 0.0, p.g23, mhz(1360.0), 0.0).unwrap(),
            2.0 * p.g12 / mhz(1360.0),
            max_relative = 1e-15
        );
        let r = delta_chi_ratio(mhz(90.1), mhz(8.4), mhz(81.7), mhz(1360.0), 0.0).unwrap();
        assert_relative_eq!(
            r,
            2.0 * 90.1 / 1360.0 + 2.0 * 8.4 / 81.7,
            max_relative = 1e-12
        );
        assert!((r - 0.338).abs() < 1e-3);
        let a = delta_chi_ratio(p.g12, p.g13, p.g23, mhz(1360.0), mhz(1.0)).unwrap();
        let b = delta_chi_ratio(p.g12, p.g13, p.g23, mhz(1360.0), mhz(3.0)).unwrap();
        assert_relative_eq!((b - a) / mhz(2.0), -1.0 / p.g12, max_relative = 1e-9);
        assert!(delta_chi_ratio(p.g12, p.g13, 0.0, mhz(1360.0), 0.0).is_err());
        // Device call uses the signed ancilla detuning (ancilla below transmon 2).
        let dev = delta_chi_perturbative(&p, 0.0).unwrap();
        assert_relative_eq!(
            dev.value,
            2.0 * 90.1 / (3740.0 - 5100.0) + 2.0 * 8.4 / 81.7,
            max_relative = 1e-9
        );
    }

    #[test]
    fn perturbative_chi_scale() {
        let p = DeviceParams::paper_device();
        assert_relative_eq!(chi_perturbative(&p), mhz(1.44), max_relative = 0.02);
    }

    #[test]
    fn decoupled_ancilla_has_no_shift() {
        let mut p = DeviceParams::paper_device();
        p.g13 = 0.0;
        p.g23 = 0.0;
        let s = dispersive_shifts_numeric(&p, &OperatingPoint::idle(&p)).unwrap();
        assert!(s.chi0.abs() < 1e-6 * p.transmons[2].eta);
        assert!(s.chi1.abs() < 1e-6 * p.transmons[2].eta);
    }

    #[test]
    fn dispersive_shifts_near_measured() {
        let p = DeviceParams::paper_device();
        let s = dispersive_shifts_numeric(&p, &OperatingPoint::idle(&p)).unwrap();
        assert!(s.valid);
        assert!(s.delta_chi.abs() < s.chi_bar.abs());
        assert!(
            (s.chi0.abs() - mhz(1.514)).abs() < 0.15 * mhz(1.514),
            "chi0 = {}",
            s.chi0 / mhz(1.0)
        );
        assert!(
            (s.chi1.abs() - mhz(1.610)).abs() < 0.15 * mhz(1.610),
            "chi1 = {}",
            s.chi1 / mhz(1.0)
        );
    }

    #[test]
    fn dispersive_shifts_invariant_under_global_shift() {
        let mut p = DeviceParams::paper_device();
        let pt = OperatingPoint::idle(&p);
        let a = dispersive_shifts_numeric(&p, &pt).unwrap();
        let c = ghz(1.0);
        for t in p.transmons.iter_mut() {
            t.omega_idle += c;
            t.omega_max += c;
        }
        let pt2 = OperatingPoint::new(pt.omega1 + c, pt.omega2 + c, pt.omega0 + c, p.g12);
        let b = dispersive_shifts_numeric(&p, &pt2).unwrap();
        assert_relative_eq!(a.chi0, b.chi0, max_relative = 1e-9);
        assert_relative_eq!(a.chi1, b.chi1, max_relative = 1e-9);
    }

    #[test]
    fn tracking_is_a_permutation() {
        let p = DeviceParams::paper_device();
        let space = three_transmon_space(3).unwrap();
        let h = build_full_hamiltonian(&p, &OperatingPoint::idle(&p), &space).unwrap();
        let (_, vecs) = eigh(&h);
        let refs: Vec<_> = (0..space.total_dim())
            .map(|k| {
                let mut v = CVector::zeros(space.total_dim());
                v[k] = C64::from(1.0);
                (format!("{k}"), v)
            })
            .collect();
        // Bare labels are strongly hybridized for the dual-rail pair, so tracking
        // with them fails loudly rather than mislabeling.
        assert!(matches!(
            track_eigenstates(&refs, &vecs),
            Err(Error::LevelCollision { .. })
        ));
        let refs: Vec<_> = (0..space.total_dim())
            .map(|k| (format!("{k}"), vecs.column(k).into_owned()))
            .collect();
        let cols = track_eigenstates(&refs, &vecs).unwrap();
        let mut sorted = cols.clone();
        sorted.sort();
        assert_eq!(sorted, (0..space.total_dim()).collect::<Vec<_>>());
    }

    #[test]
    fn crossing_sweep_examples() {
        let p = DeviceParams::paper_device();
        let w1 = p.transmons[0].omega_idle;
        let grid: Vec<f64> = (-100..=100).map(|k| w1 + mhz(k as f64)).collect();
        let rows = avoided_crossing_sweep(&p, &grid).unwrap();
        let (at, gap) = minimum_gap(&rows).unwrap();
        assert_relative_eq!(at, w1, max_relative = 1e-12);
        assert_relative_eq!(gap, mhz(180.2), max_relative = 1e-9);

        let mut q = p.clone();
        q.g12 = 0.0;
        let rows = avoided_crossing_sweep(&q, &grid).unwrap();
        assert_eq!(minimum_gap(&rows).unwrap().1, 0.0);

        let far = avoided_crossing_sweep(&p, &[w1 + ghz(1.0)]).unwrap();
        assert!((far[0].lower - w1).abs() < mhz(10.0));
        assert!((far[0].upper - (w1 + ghz(1.0))).abs() < mhz(10.0));
        // Perturbative shift g²/Δ.
        assert_relative_eq!(
            w1 - far[0].lower,
            p.g12 * p.g12 / ghz(1.0),
            max_relative = 0.02
        );
        assert!(avoided_crossing_sweep(&p, &[]).is_err());
    }

    #[test]
    fn flux_map_roundtrip() {
        let t = &DeviceParams::paper_device().transmons[1];
        let map = SymmetricTransmonFlux {
            omega_max: t.omega_max,
            eta: t.eta,
        };
        assert_relative_eq!(map.frequency(0.0), t.omega_max, max_relative = 1e-15);
        let phi = map.flux_for(t.omega_idle).unwrap();
        assert_relative_eq!(map.frequency(phi), t.omega_idle, max_relative = 1e-12);
        let h = 1e-7;
        let fd = (map.frequency(phi + h) - map.frequency(phi - h)) / (2.0 * h);
        assert_relative_eq!(map.slope(phi), fd, max_relative = 1e-5);
    }
}
