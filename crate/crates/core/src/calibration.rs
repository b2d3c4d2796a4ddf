//! Calibration loop run against the noiseless simulator: resonance search,
//! initialization pulse, X90 amplitude and phase correction, and the
//! flux offset that minimizes the dual-rail frequency.
//!
//! Measurements are exact populations unless `CalibrationOptions::shots` is
//! set, in which case each population is replaced by a binomial estimate.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Matrix2;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::fit::{fit_damped_oscillation, fit_fringe};
use crate::device::{
    avoided_crossing_sweep, dual_rail_gap_exact, optimal_operating_offset, DeviceParams, FluxMap,
    OperatingPoint, SymmetricTransmonFlux,
};
use crate::dynamics::schedule::Schedule;
use crate::error::{Error, Result};
use crate::hilbert::{CVector, DualRailLevel, C64};
use crate::protocols::builders::{GateParams, ScheduleBuilder};
use crate::protocols::logical::{self, U2};
use crate::protocols::system::DualRailSystem;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Shots per measured population; None measures exact populations.
    pub shots: Option<u64>,
    pub seed: u64,
    pub transmon_dim: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            shots: None,
            seed: 0,
            transmon_dim: 3,
        }
    }
}

impl CalibrationOptions {
    /// Population as the experiment would report it.
    fn measure(&self, p: f64, path: &[u64]) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.shots {
            None => p,
            Some(n) => {
                let mut rng = rng_from_seed(derive_seed(self.seed, path));
                Binomial::new(n, p)
                    .map(|b| b.sample(&mut rng) as f64 / n as f64)
                    .unwrap_or(p)
            }
        }
    }
}

fn logical_state(sys: &DualRailSystem, level: DualRailLevel) -> Result<CVector> {
    sys.vector(level)
}

/// Population of |0L⟩ within the logical subspace at the end of `s`.
fn p0_normalized(sys: &DualRailSystem, s: &Schedule, psi0: &CVector) -> Result<f64> {
    let psi = sys.evolve(s, psi0)?;
    let a = sys.logical_amplitudes(&psi, s.total_duration)?;
    let n = a.norm_squared();
    if n <= 0.0 {
        return Err(Error::InvalidState(
            "no population left in the logical subspace".into(),
        ));
    }
    Ok(a[0].norm_sqr() / n)
}

fn argmax(y: &[f64]) -> usize {
    y.iter()
        .enumerate()
        .fold(0, |b, (k, &v)| if v > y[b] { k } else { b })
}

fn argmin(y: &[f64]) -> usize {
    y.iter()
        .enumerate()
        .fold(0, |b, (k, &v)| if v < y[b] { k } else { b })
}

/// Vertex of the least-squares parabola through the points.
fn parabola_vertex(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let x0 = x.iter().sum::<f64>() / x.len() as f64;
    let s = x
        .iter()
        .map(|v| (v - x0).abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - x0) / s;
        let r = nalgebra::Vector3::new(1.0, u, u * u);
        ata += r * r.transpose();
        aty += r * yi;
    }
    let c = ata
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("parabola fit needs three distinct points".into()))?
        * aty;
    if c[2] == 0.0 {
        return Err(Error::Degenerate("flat scan".into()));
    }
    let u = -c[1] / (2.0 * c[2]);
    // Second derivative in the original units.
    Ok((x0 + u * s, 2.0 * c[2] / (s * s)))
}

/// Parabola through the `width` points nearest index `k`.
fn local_vertex(x: &[f64], y: &[f64], k: usize, width: usize) -> Result<(f64, f64)> {
    let half = width / 2;
    let lo = k.saturating_sub(half).min(x.len().saturating_sub(width));
    let hi = (lo + width).min(x.len());
    parabola_vertex(&x[lo..hi], &y[lo..hi])
}

fn check_scan(x: &[f64], what: &str) -> Result<()> {
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{what} scan needs at least three points"
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "{what} scan must be strictly increasing"
        )));
    }
    Ok(())
}

// --- step 1 -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// Flux on transmon 2 (units of Φ0) at the minimum gap.
    pub flux: f64,
    pub omega2: f64,
    pub gap: f64,
}

pub fn transmon2_flux_map(params: &DeviceParams) -> SymmetricTransmonFlux {
    let t = &params.transmons[1];
    SymmetricTransmonFlux {
        omega_max: t.omega_max,
        eta: t.eta,
    }
}

/// Flux of transmon 2 minimizing the single-excitation gap with transmon 1
/// at its idle frequency, refined by a parabola through the grid minimum.
pub fn find_resonance(params: &DeviceParams, flux_grid: &[f64]) -> Result<Resonance> {
    check_scan(flux_grid, "flux")?;
    let map = transmon2_flux_map(params);
    let w2: Vec<f64> = flux_grid.iter().map(|&f| map.frequency(f)).collect();
    let gaps: Vec<f64> = avoided_crossing_sweep(params, &w2)?
        .iter()
        .map(|r| r.gap())
        .collect();
    let k = argmin(&gaps);
    if k == 0 || k == gaps.len() - 1 {
        return Err(Error::BoundaryOptimum(
            "the flux grid does not contain the avoided crossing".into(),
        ));
    }
    let (flux, _) = parabola_vertex(&flux_grid[k - 1..=k + 1], &gaps[k - 1..=k + 1])?;
    let omega2 = map.frequency(flux);
    let gap = dual_rail_gap_exact(params.g12, params.transmons[0].omega_idle - omega2);
    Ok(Resonance { flux, omega2, gap })
}

// --- step 2 -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitCalibration {
    pub amplitude: f64,
    pub carrier: f64,
    /// Exact target population reached with the calibrated pulse.
    pub fidelity: f64,
    /// (amplitude, measured population) of the coarse scan.
    pub scan: Vec<(f64, f64)>,
}

/// Exact population of `target` after the initialization pulse from |00⟩.
pub fn init_population(
    sys: &DualRailSystem,
    gates: &GateParams,
    target: DualRailLevel,
) -> Result<f64> {
    let s = ScheduleBuilder::new(gates).init(target)?.build()?;
    let psi = sys.evolve(&s, &logical_state(sys, DualRailLevel::Vacuum)?)?;
    let a = sys.logical_amplitudes(&psi, s.total_duration)?;
    Ok(match target {
        DualRailLevel::Zero => a[0].norm_sqr(),
        _ => a[1].norm_sqr(),
    })
}

fn scan_init(
    sys: &DualRailSystem,
    gates: &GateParams,
    x: &[f64],
    carrier: bool,
    opts: &CalibrationOptions,
    tag: u64,
) -> Result<Vec<f64>> {
    x.par_iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut g = gates.clone();
            if carrier {
                g.init_carrier = v;
            } else {
                g.init_amplitude = v;
            }
            Ok(opts.measure(
                init_population(sys, &g, DualRailLevel::One)?,
                &[2, tag, k as u64],
            ))
        })
        .collect()
}

/// π-pulse calibration of the |00⟩ → |1L⟩ drive. The coarse amplitude scan
/// is fitted with a Rabi fringe; the carrier (shifted by the drive's own
/// Stark shift) and amplitude are then refined with local parabola fits.
pub fn calibrate_init_amplitude(
    sys: &DualRailSystem,
    gates: &GateParams,
    amplitudes: &[f64],
    opts: &CalibrationOptions,
) -> Result<InitCalibration> {
    check_scan(amplitudes, "amplitude")?;
    if !(amplitudes[0] >= 0.0) {
        return Err(Error::InvalidArgument(
            "amplitudes must be non-negative".into(),
        ));
    }
    let p = scan_init(sys, gates, amplitudes, false, opts, 0)?;
    let k = argmax(&p);
    if k == 0 || k == p.len() - 1 {
        return Err(Error::BoundaryOptimum(
            "initialization scan peaks at its edge".into(),
        ));
    }
    let fringe_peak = if amplitudes.len() >= 6 {
        fit_damped_oscillation(amplitudes, &p).ok().map(|f| {
            let w = f.value("frequency");
            let phi = f.value("phase");
            let m = ((w * amplitudes[k] + phi) / TAU).round();
            (TAU * m - phi) / w
        })
    } else {
        None
    };
    let step = amplitudes[k + 1] - amplitudes[k - 1];
    let mut amp = match fringe_peak {
        Some(a) if (a - amplitudes[k]).abs() <= step => a,
        _ => local_vertex(amplitudes, &p, k, 3)?.0,
    };
    let mut g = gates.clone();
    g.init_amplitude = amp;
    let scale = sys.g;
    for round in 0..2u64 {
        let half_c = 0.06 * scale / (1 + round) as f64;
        let cs: Vec<f64> = (0..15)
            .map(|j| g.init_carrier.abs() + half_c * (j as f64 / 7.0 - 1.0))
            .collect();
        let pc = scan_init(sys, &g, &cs, true, opts, 10 + 2 * round)?;
        let kc = argmax(&pc);
        if kc == 0 || kc == cs.len() - 1 {
            return Err(Error::BoundaryOptimum(
                "initialization carrier scan peaks at its edge".into(),
            ));
        }
        g.init_carrier = local_vertex(&cs, &pc, kc, 5)?.0;
        let half_a = 0.08 * amp / (1 + round) as f64;
        let xs: Vec<f64> = (0..15)
            .map(|j| amp + half_a * (j as f64 / 7.0 - 1.0))
            .collect();
        let pa = scan_init(sys, &g, &xs, false, opts, 11 + 2 * round)?;
        let ka = argmax(&pa);
        if ka == 0 || ka == xs.len() - 1 {
            return Err(Error::BoundaryOptimum(
                "initialization amplitude refinement peaks at its edge".into(),
            ));
        }
        amp = local_vertex(&xs, &pa, ka, 5)?.0;
        g.init_amplitude = amp;
    }
    let fidelity = init_population(sys, &g, DualRailLevel::One)?;
    Ok(InitCalibration {
        amplitude: amp,
        carrier: g.init_carrier,
        fidelity,
        scan: amplitudes.iter().copied().zip(p).collect(),
    })
}

/// Amplitude scan spanning one Rabi period around the nominal π pulse.
pub fn default_init_scan(gates: &GateParams) -> Vec<f64> {
    let nominal = PI * std::f64::consts::SQRT_2 / gates.init_envelope_area();
    (0..=24)
        .map(|k| nominal * (0.2 + 1.6 * k as f64 / 24.0))
        .collect()
}

// --- step 3 -------------------------------------------------------------

/// Logical map of a schedule that starts and ends in the subspace, with the
/// builder's virtual-Z frame folded in. Columns are images of |0L⟩, |1L⟩.
fn logical_map(sys: &DualRailSystem, b: &ScheduleBuilder) -> Result<U2> {
    let s = b.build()?;
    let mut m = U2::zeros();
    for (col, level) in [DualRailLevel::Zero, DualRailLevel::One]
        .into_iter()
        .enumerate()
    {
        let psi = sys.evolve(&s, &logical_state(sys, level)?)?;
        let a = sys.logical_amplitudes(&psi, s.total_duration)?;
        m[(0, col)] = a[0];
        m[(1, col)] = a[1];
    }
    Ok(logical::rz(-b.frame_phase()) * m)
}

/// Average gate fidelity of a (possibly non-unitary) 2×2 map against `u`.
pub fn average_gate_fidelity(u: &U2, v: &U2) -> f64 {
    let tr = (u.adjoint() * v).trace().norm_sqr();
    let norm = (v.adjoint() * v).trace().re;
    (tr + norm) / 6.0
}

/// Average fidelity of four X90s against the identity.
pub fn x90x4_identity_fidelity(sys: &DualRailSystem, gates: &GateParams) -> Result<f64> {
    let mut b = ScheduleBuilder::new(gates);
    for _ in 0..4 {
        b.x90(0.0);
    }
    Ok(average_gate_fidelity(
        &U2::identity(),
        &logical_map(sys, &b)?,
    ))
}

/// Average fidelity of one X90 against the ideal π/2 rotation.
pub fn x90_fidelity(sys: &DualRailSystem, gates: &GateParams) -> Result<f64> {
    let mut b = ScheduleBuilder::new(gates);
    b.x90(0.0);
    Ok(average_gate_fidelity(
        &logical::rotation(0.0, FRAC_PI_2),
        &logical_map(sys, &b)?,
    ))
}

/// Average fidelity of X90s at the given logical phases against the ideal
/// product of rotations.
pub fn x90_sequence_fidelity(
    sys: &DualRailSystem,
    gates: &GateParams,
    phases: &[f64],
) -> Result<f64> {
    let mut b = ScheduleBuilder::new(gates);
    let mut ideal = U2::identity();
    for &phi in phases {
        b.x90(phi);
        ideal = logical::rotation(phi, FRAC_PI_2) * ideal;
    }
    Ok(average_gate_fidelity(&ideal, &logical_map(sys, &b)?))
}

/// Rotation angle of a single X90 pulse, from the trace of its logical map.
pub fn x90_rotation_angle(sys: &DualRailSystem, gates: &GateParams) -> Result<f64> {
    let mut b = ScheduleBuilder::new(gates);
    b.x90(0.0);
    let m: Matrix2<C64> = logical_map(sys, &b)?;
    let det = m.determinant();
    let su = m / det.sqrt();
    Ok(2.0 * (0.5 * su.trace().re).abs().clamp(0.0, 1.0).acos())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct X90Calibration {
    pub amplitude: f64,
    pub z_correction: f64,
    pub x90x4_fidelity: f64,
    pub x90_fidelity: f64,
    pub iterations: usize,
    /// Coarse sandwich scan: (amplitude, P(00) after π–flux–π).
    pub sandwich: Vec<(f64, f64)>,
}

const LADDER: [usize; 6] = [0, 1, 2, 4, 8, 16];
const MAX_ITER: usize = 20;

/// Error-amplifying refinement: after 4k+1 X90s from |1L⟩ the |0L⟩
/// population is (1 + sin((4k+1)δ))/2 for a per-gate angle error δ.
pub fn refine_x90_amplitude(
    sys: &DualRailSystem,
    gates: &GateParams,
    opts: &CalibrationOptions,
    tag: u64,
) -> Result<(f64, f64)> {
    let psi1 = logical_state(sys, DualRailLevel::One)?;
    let mut g = gates.clone();
    let mut last = 0.0;
    for &k in &LADDER {
        let n = 4 * k + 1;
        let mut b = ScheduleBuilder::new(&g);
        for _ in 0..n {
            b.x90(0.0);
        }
        let p0 = opts.measure(p0_normalized(sys, &b.build()?, &psi1)?, &[3, tag, k as u64]);
        let delta = (2.0 * p0 - 1.0).clamp(-1.0, 1.0).asin() / n as f64;
        g.x90_amplitude *= FRAC_PI_2 / (FRAC_PI_2 + delta);
        last = delta;
    }
    Ok((g.x90_amplitude, last))
}

/// Phase of the fringe P0L(φ) after X90(0)·X90(φ) from |1L⟩; zero when the
/// frame correction is right.
pub fn x90_pair_fringe_phase(
    sys: &DualRailSystem,
    gates: &GateParams,
    opts: &CalibrationOptions,
    tag: u64,
) -> Result<f64> {
    let psi1 = logical_state(sys, DualRailLevel::One)?;
    let phases: Vec<f64> = (0..24).map(|k| TAU * k as f64 / 24.0).collect();
    let y = phases
        .par_iter()
        .enumerate()
        .map(|(k, &phi)| {
            let mut b = ScheduleBuilder::new(gates);
            b.x90(0.0).x90(phi);
            Ok(opts.measure(p0_normalized(sys, &b.build()?, &psi1)?, &[4, tag, k as u64]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(fit_fringe(&phases, &y)?.value("phase"))
}

/// Coarse amplitude from π–flux–π: the flux pulse amplitude at which half
/// of |1L⟩ is transferred, read out as P(00) = 1/2 after mapping back.
pub fn sandwich_amplitude(
    sys: &DualRailSystem,
    gates: &GateParams,
    opts: &CalibrationOptions,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let vac = logical_state(sys, DualRailLevel::Vacuum)?;
    let amps: Vec<f64> = (0..=20)
        .map(|k| gates.x90_amplitude * (0.5 + k as f64 / 20.0))
        .collect();
    let p00 = amps
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut g = gates.clone();
            g.x90_amplitude = a;
            let mut b = ScheduleBuilder::new(&g);
            b.init(DualRailLevel::One)?
                .x90(0.0)
                .init(DualRailLevel::One)?;
            let s = b.build()?;
            let psi = sys.evolve(&s, &vac)?;
            let p = sys.projectors().p00.matrix() * &psi;
            Ok(opts.measure(p.norm_squared(), &[5, k as u64]))
        })
        .collect::<Result<Vec<f64>>>()?;
    let scan: Vec<(f64, f64)> = amps.iter().copied().zip(p00.iter().copied()).collect();
    // First downward crossing of 1/2 nearest the nominal amplitude.
    let mut best: Option<f64> = None;
    for w in scan.windows(2) {
        let ((a0, y0), (a1, y1)) = (w[0], w[1]);
        if (y0 - 0.5) * (y1 - 0.5) <= 0.0 && y0 != y1 {
            let a = a0 + (0.5 - y0) * (a1 - a0) / (y1 - y0);
            if best
                .is_none_or(|b| (a - gates.x90_amplitude).abs() < (b - gates.x90_amplitude).abs())
            {
                best = Some(a);
            }
        }
    }
    let a = best.ok_or_else(|| {
        Error::BoundaryOptimum("sandwich scan never crosses half transfer".into())
    })?;
    Ok((a, scan))
}

/// Coarse sandwich amplitude, then alternating fringe-phase correction and
/// error-amplified amplitude refinement until both settle.
pub fn calibrate_x90(
    sys: &DualRailSystem,
    gates: &GateParams,
    opts: &CalibrationOptions,
) -> Result<X90Calibration> {
    gates.validate()?;
    let mut g = gates.clone();
    let (a, sandwich) = sandwich_amplitude(sys, &g, opts)?;
    g.x90_amplitude = a;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let it = iterations as u64;
        iterations += 1;
        let phase = x90_pair_fringe_phase(sys, &g, opts, it)?;
        g.z_correction -= phase;
        let before = g.x90_amplitude;
        let (amp, _) = refine_x90_amplitude(sys, &g, opts, it)?;
        g.x90_amplitude = amp;
        let tol = if opts.shots.is_some() { 1e-3 } else { 1e-5 };
        if phase.abs() < 10.0 * tol && ((amp - before) / before).abs() < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged(format!(
            "X90 calibration did not settle in {MAX_ITER} iterations"
        )));
    }
    Ok(X90Calibration {
        amplitude: g.x90_amplitude,
        z_correction: g.z_correction,
        x90x4_fidelity: x90x4_identity_fidelity(sys, &g)?,
        x90_fidelity: x90_fidelity(sys, &g)?,
        iterations,
        sandwich,
    })
}

// --- step 4 -------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxRefinement {
    /// Amount by which transmon 1 is parked below transmon 2 at the minimum.
    pub offset: f64,
    /// Analytic optimum 2g0²/ω0.
    pub predicted: f64,
    /// d²E/dx² at the minimum from the parabola fit.
    pub curvature: f64,
    /// (offset, measured dual-rail frequency).
    pub curve: Vec<(f64, f64)>,
}

/// Ramsey delays and software detuning used to measure the dual-rail
/// frequency at one operating point.
const RAMSEY_POINTS: usize = 48;
const RAMSEY_SPACING: f64 = 250e-9;

/// Dual-rail frequency from a Ramsey fringe: the gates stay at the carrier
/// of `gates`, the fringe frequency is detuning − (E − carrier).
pub fn ramsey_frequency(
    sys: &DualRailSystem,
    gates: &GateParams,
    detuning: f64,
    opts: &CalibrationOptions,
    tag: u64,
) -> Result<f64> {
    let psi1 = logical_state(sys, DualRailLevel::One)?;
    let delays: Vec<f64> = (0..RAMSEY_POINTS)
        .map(|k| k as f64 * RAMSEY_SPACING)
        .collect();
    let y = delays
        .par_iter()
        .enumerate()
        .map(|(k, &d)| {
            let s = ramsey_without_init(gates, d, detuning)?;
            Ok(opts.measure(p0_normalized(sys, &s, &psi1)?, &[6, tag, k as u64]))
        })
        .collect::<Result<Vec<f64>>>()?;
    let f = fit_damped_oscillation(&delays, &y)?;
    Ok(gates.x90_carrier + detuning - f.value("frequency"))
}

/// π/2, delay, π/2 from a prepared |1L⟩, detuning applied as a virtual Z.
fn ramsey_without_init(gates: &GateParams, delay: f64, detuning: f64) -> Result<Schedule> {
    let mut b = ScheduleBuilder::new(gates);
    b.x90(0.0).idle(delay)?;
    b.virtual_z(detuning * delay).x90(0.0);
    b.build()
}

/// Parks transmon 1 below transmon 2 by each grid offset and measures the
/// dual-rail frequency by Ramsey; returns the offset of minimum frequency.
pub fn refine_flux_offset(
    params: &DeviceParams,
    omega2: f64,
    gates: &GateParams,
    offset_grid: &[f64],
    opts: &CalibrationOptions,
) -> Result<FluxRefinement> {
    check_scan(offset_grid, "offset")?;
    let detuning = TAU * 0.5e6;
    let curve = offset_grid
        .par_iter()
        .enumerate()
        .map(|(k, &x)| {
            let point = OperatingPoint::new(omega2 - x, omega2, omega2, params.g12);
            let sys = DualRailSystem::new(params, point, opts.transmon_dim, None)?;
            Ok((x, ramsey_frequency(&sys, gates, detuning, opts, k as u64)?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let e: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let k = argmin(&e);
    if k == 0 || k == e.len() - 1 {
        return Err(Error::BoundaryOptimum(
            "dual-rail frequency minimum at the edge of the offset grid".into(),
        ));
    }
    let (offset, curvature) = parabola_vertex(offset_grid, &e)?;
    let predicted = optimal_operating_offset(params.g12, omega2)?.delta_offset;
    Ok(FluxRefinement {
        offset,
        predicted,
        curvature,
        curve,
    })
}

// --- pipeline -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub step: u8,
    /// Position in the calibration log (logical clock, so persisted states
    /// stay reproducible).
    pub sequence: u32,
    pub summary: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub resonance_flux: Option<f64>,
    pub resonance_omega2: Option<f64>,
    pub init_amplitude: Option<f64>,
    pub init_carrier: Option<f64>,
    pub init_fidelity: Option<f64>,
    pub x90_amplitude: Option<f64>,
    pub z_correction: Option<f64>,
    pub x90x4_fidelity: Option<f64>,
    pub refined_delta_offset: Option<f64>,
    pub provenance: Vec<ProvenanceEntry>,
}

impl CalibrationState {
    fn log(&mut self, step: u8, summary: String) {
        let sequence = self.provenance.len() as u32;
        self.provenance.push(ProvenanceEntry {
            step,
            sequence,
            summary,
        });
    }

    fn require(&self, step: u8) -> Result<()> {
        let done = match step {
            1 => self.resonance_omega2.is_some(),
            2 => self.init_amplitude.is_some() && self.init_carrier.is_some(),
            3 => self.x90_amplitude.is_some() && self.z_correction.is_some(),
            _ => true,
        };
        if done {
            Ok(())
        } else {
            Err(Error::Uncalibrated(format!(
                "calibration step {step} has not been run"
            )))
        }
    }

    /// Operating point found in step 1.
    pub fn operating_point(&self, params: &DeviceParams) -> Result<OperatingPoint> {
        self.require(1)?;
        let w2 = self.resonance_omega2.unwrap_or_default();
        Ok(OperatingPoint::new(
            params.transmons[0].omega_idle,
            w2,
            w2,
            params.g12,
        ))
    }

    /// Gate parameters for a pair with gap `gap`, using steps 2 and 3.
    pub fn gate_params(&self, gap: f64) -> Result<GateParams> {
        self.require(2)?;
        self.require(3)?;
        let mut g = GateParams::nominal(gap);
        g.init_amplitude = self.init_amplitude.unwrap_or_default();
        g.init_carrier = self.init_carrier.unwrap_or_default();
        g.x90_amplitude = self.x90_amplitude.unwrap_or_default();
        g.z_correction = self.z_correction.unwrap_or_default();
        Ok(g)
    }

    pub fn run_step1(&mut self, params: &DeviceParams) -> Result<Resonance> {
        let coarse: Vec<f64> = (0..=180).map(|k| 0.45 * k as f64 / 180.0).collect();
        let map = transmon2_flux_map(params);
        let w2: Vec<f64> = coarse.iter().map(|&f| map.frequency(f)).collect();
        let gaps: Vec<f64> = avoided_crossing_sweep(params, &w2)?
            .iter()
            .map(|r| r.gap())
            .collect();
        let k = argmin(&gaps);
        let step = coarse[1] - coarse[0];
        let fine: Vec<f64> = (0..=40)
            .map(|j| coarse[k] + step * (j as f64 / 20.0 - 1.0))
            .collect();
        let r = find_resonance(params, &fine)?;
        self.resonance_flux = Some(r.flux);
        self.resonance_omega2 = Some(r.omega2);
        self.log(1, format!("flux {:.6} Φ0, gap {:.6e} rad/s", r.flux, r.gap));
        Ok(r)
    }

    pub fn run_step2(
        &mut self,
        sys: &DualRailSystem,
        opts: &CalibrationOptions,
    ) -> Result<InitCalibration> {
        self.require(1)?;
        let gates = GateParams::nominal(sys.gap());
        let c = calibrate_init_amplitude(sys, &gates, &default_init_scan(&gates), opts)?;
        self.init_amplitude = Some(c.amplitude);
        self.init_carrier = Some(c.carrier);
        self.init_fidelity = Some(c.fidelity);
        self.log(
            2,
            format!(
                "amplitude {:.6e} rad/s, carrier {:.6e} rad/s, P1L {:.6}",
                c.amplitude, c.carrier, c.fidelity
            ),
        );
        Ok(c)
    }

    pub fn run_step3(
        &mut self,
        sys: &DualRailSystem,
        opts: &CalibrationOptions,
    ) -> Result<X90Calibration> {
        self.require(2)?;
        let mut gates = GateParams::nominal(sys.gap());
        gates.init_amplitude = self.init_amplitude.unwrap_or_default();
        gates.init_carrier = self.init_carrier.unwrap_or_default();
        if let (Some(a), Some(z)) = (self.x90_amplitude, self.z_correction) {
            gates.x90_amplitude = a;
            gates.z_correction = z;
        }
        let c = calibrate_x90(sys, &gates, opts)?;
        self.x90_amplitude = Some(c.amplitude);
        self.z_correction = Some(c.z_correction);
        self.x90x4_fidelity = Some(c.x90x4_fidelity);
        self.log(
            3,
            format!(
                "amplitude {:.6e} rad/s, z {:.5} rad, X90^4 {:.7}, {} iterations",
                c.amplitude, c.z_correction, c.x90x4_fidelity, c.iterations
            ),
        );
        Ok(c)
    }

    pub fn run_step4(
        &mut self,
        params: &DeviceParams,
        sys: &DualRailSystem,
        opts: &CalibrationOptions,
    ) -> Result<FluxRefinement> {
        self.require(3)?;
        let gates = self.gate_params(sys.gap())?;
        let w2 = sys.point.omega2;
        let predicted = optimal_operating_offset(params.g12, w2)?.delta_offset;
        let grid: Vec<f64> = (0..=12).map(|k| predicted * (k as f64 / 6.0)).collect();
        let r = refine_flux_offset(params, w2, &gates, &grid, opts)?;
        self.refined_delta_offset = Some(r.offset);
        self.log(
            4,
            format!(
                "offset {:.6e} rad/s (analytic {:.6e})",
                r.offset, r.predicted
            ),
        );
        Ok(r)
    }
}

/// Complete calibration report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub state: CalibrationState,
    pub resonance: Resonance,
    pub init: InitCalibration,
    pub x90: X90Calibration,
    pub flux: Option<FluxRefinement>,
}

/// Steps 1–4 in order. Step 4 is skipped when `refine_flux` is false.
pub fn calibrate(
    params: &DeviceParams,
    opts: &CalibrationOptions,
    refine_flux: bool,
) -> Result<CalibrationRun> {
    let mut state = CalibrationState::default();
    let resonance = state.run_step1(params)?;
    let sys = DualRailSystem::new(
        params,
        state.operating_point(params)?,
        opts.transmon_dim,
        None,
    )?;
    let init = state.run_step2(&sys, opts)?;
    let x90 = state.run_step3(&sys, opts)?;
    let flux = if refine_flux {
        Some(state.run_step4(params, &sys, opts)?)
    } else {
        None
    };
    Ok(CalibrationRun {
        state,
        resonance,
        init,
        x90,
        flux,
    })
}
