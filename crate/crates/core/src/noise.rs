//! Frequency-noise spectra (two-sided PSDs), closed-form coherence limits and
//! time-domain noise sampling.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::units::{BOLTZMANN, HBAR};

/// Two-sided frequency-noise power spectral densities in (rad/s)²·s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpectrum {
    OneOverF {
        amplitude: f64,
    },
    Johnson {
        slope: f64,
        mutual: f64,
        temperature: f64,
        impedance: f64,
    },
    LorentzianPhoton {
        chi: f64,
        kappa: f64,
        n_bar: f64,
    },
    Telegraph {
        amplitude: f64,
        switch_rate: f64,
    },
}

impl NoiseSpectrum {
    pub fn evaluate(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::Domain("frequency must be finite".into()));
        }
        match *self {
            NoiseSpectrum::OneOverF { amplitude } => {
                if omega == 0.0 {
                    return Err(Error::Domain(
                        "1/f spectrum diverges at zero frequency".into(),
                    ));
                }
                Ok(2.0 * PI * amplitude * amplitude / omega.abs())
            }
            NoiseSpectrum::Johnson {
                slope,
                mutual,
                temperature,
                impedance,
            } => {
                if impedance <= 0.0 || temperature < 0.0 {
                    return Err(Error::Domain(
                        "Johnson noise needs positive impedance and non-negative temperature"
                            .into(),
                    ));
                }
                Ok(2.0 * slope * slope * mutual * mutual * BOLTZMANN * temperature / impedance)
            }
            NoiseSpectrum::LorentzianPhoton { chi, kappa, n_bar } => {
                if kappa <= 0.0 || n_bar < 0.0 {
                    return Err(Error::Domain(
                        "photon noise needs kappa > 0 and n_bar >= 0".into(),
                    ));
                }
                Ok(8.0 * chi * chi * kappa * n_bar / (omega * omega + kappa * kappa))
            }
            NoiseSpectrum::Telegraph {
                amplitude,
                switch_rate,
            } => {
                if switch_rate < 0.0 {
                    return Err(Error::Domain("switch rate must be non-negative".into()));
                }
                if switch_rate == 0.0 {
                    return Ok(0.0);
                }
                // Levels ±amplitude/2 flipping at switch_rate.
                Ok(amplitude * amplitude * switch_rate
                    / (omega * omega + 4.0 * switch_rate * switch_rate))
            }
        }
    }

    /// False where the closed form is outside its stated validity (Johnson
    /// noise requires ħ|ω| ≪ k_B T; the flag trips above 0.1 k_B T).
    pub fn in_domain(&self, omega: f64) -> bool {
        match *self {
            NoiseSpectrum::OneOverF { .. } => omega != 0.0,
            NoiseSpectrum::Johnson { temperature, .. } => {
                HBAR * omega.abs() < 0.1 * BOLTZMANN * temperature
            }
            _ => true,
        }
    }
}

pub fn one_over_f_amplitude_from_echo(t_phi_echo: f64) -> Result<f64> {
    if !(t_phi_echo > 0.0) {
        return Err(Error::Domain("echo dephasing time must be positive".into()));
    }
    Ok(1.0 / (t_phi_echo * LN_2.sqrt()))
}

pub fn echo_time_from_one_over_f_amplitude(amplitude: f64) -> Result<f64> {
    if !(amplitude > 0.0) {
        return Err(Error::Domain("1/f amplitude must be positive".into()));
    }
    Ok(1.0 / (amplitude * LN_2.sqrt()))
}

/// T1 of the dual-rail qubit from transverse noise at its gap: 2/S(gap).
/// Returns infinity when the spectrum vanishes there.
pub fn t1_limit_from_spectrum(spectrum: &NoiseSpectrum, gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Domain("gap must be positive".into()));
    }
    let s = spectrum.evaluate(gap)?;
    Ok(if s == 0.0 { f64::INFINITY } else { 2.0 / s })
}

/// Γφ = (4χ²n̄/κ)·κ²/(κ²+4χ²).
pub fn photon_dephasing_rate(chi: f64, kappa: f64, n_bar: f64) -> Result<f64> {
    if !(kappa > 0.0) || n_bar < 0.0 || !chi.is_finite() {
        return Err(Error::Domain(
            "photon dephasing needs kappa > 0, n_bar >= 0".into(),
        ));
    }
    let eta = kappa * kappa / (kappa * kappa + 4.0 * chi * chi);
    Ok(4.0 * chi * chi * n_bar / kappa * eta)
}

/// Piecewise-constant frequency-offset trace starting at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    pub values: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    /// Set when the sampling step is too coarse for the process timescale.
    #[serde(default)]
    pub undersampled: bool,
}

impl NoiseTrace {
    pub fn new(values: Vec<f64>, dt: f64, seed: u64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(
                "noise trace needs at least two samples".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(
                "noise trace dt must be positive".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "noise trace contains non-finite values".into(),
            ));
        }
        Ok(NoiseTrace {
            values,
            dt,
            seed,
            undersampled: false,
        })
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    /// Value held on [k·dt, (k+1)·dt); the last sample extends past the end.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = (t / self.dt).floor();
        let k = if k < 0.0 {
            0
        } else {
            (k as usize).min(self.values.len() - 1)
        };
        self.values[k]
    }

    /// ∫_{t0}^{t1} δω dt for the piecewise-constant trace.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let last = self.values.len() - 1;
        let bin = |t: f64| ((t / self.dt).floor().max(0.0) as usize).min(last);
        let (k0, k1) = (bin(t0), bin(t1));
        if k0 == k1 {
            return self.values[k0] * (t1 - t0);
        }
        let inner: f64 = self.values[k0 + 1..k1].iter().sum();
        self.values[k0] * ((k0 + 1) as f64 * self.dt - t0)
            + inner * self.dt
            + self.values[k1] * (t1 - k1 as f64 * self.dt)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.values.len() as f64
    }

    /// Two-column (t, δω) text.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# t_s\tdelta_omega_rad_per_s\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{:.12e}\t{:.12e}\n", k as f64 * self.dt, v));
        }
        out
    }
}

fn sample_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration > 0.0 && dt > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(
            "duration and dt must be positive".into(),
        ));
    }
    if duration <= dt {
        return Err(Error::InvalidArgument("duration must exceed dt".into()));
    }
    Ok(((duration / dt).ceil() as usize + 1).max(2))
}

/// Symmetric random telegraph process with levels ±amplitude/2 and exponential
/// holding times of mean 1/switch_rate.
pub fn sample_telegraph(
    amplitude: f64,
    switch_rate: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<NoiseTrace> {
    let n = sample_count(duration, dt)?;
    if switch_rate < 0.0 || !amplitude.is_finite() {
        return Err(Error::InvalidArgument(
            "telegraph needs finite amplitude and non-negative rate".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut level = if rng.random::<bool>() {
        0.5 * amplitude
    } else {
        -0.5 * amplitude
    };
    let mut values = Vec::with_capacity(n);
    if switch_rate == 0.0 {
        values.resize(n, level);
    } else {
        let wait = Exp::new(switch_rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut next_switch = wait.sample(&mut rng);
        for k in 0..n {
            let t = k as f64 * dt;
            while next_switch <= t {
                level = -level;
                next_switch += wait.sample(&mut rng);
            }
            values.push(level);
        }
    }
    let mut trace = NoiseTrace::new(values, dt, seed)?;
    trace.undersampled = switch_rate > 0.0 && dt >= 1.0 / (10.0 * switch_rate);
    Ok(trace)
}

/// Default infrared cutoff for 1/f sampling.
pub const DEFAULT_OMEGA_MIN: f64 = 2.0 * PI * 0.1;

/// Power of the spectrum in the band ω_min ≤ |ω| < half_bin, i.e.
/// ∫ S dω/2π over both signs. Closed form for 1/f, midpoint rule otherwise.
fn low_band_variance(spectrum: &NoiseSpectrum, omega_min: f64, half_bin: f64) -> Result<f64> {
    if half_bin <= omega_min {
        return Ok(0.0);
    }
    match *spectrum {
        NoiseSpectrum::OneOverF { amplitude } => {
            if omega_min <= 0.0 {
                return Err(Error::Domain("1/f sampling needs omega_min > 0".into()));
            }
            Ok(2.0 * amplitude * amplitude * (half_bin / omega_min).ln())
        }
        _ => {
            let mid = 0.5 * (half_bin + omega_min);
            Ok(spectrum.evaluate(mid)? * 2.0 * (half_bin - omega_min) / (2.0 * PI))
        }
    }
}

/// Stationary Gaussian noise by spectral synthesis: random phases with per-bin
/// amplitude √(2 S(ω_k) Δω/π) so that the variance equals ∫S dω/2π taken over
/// positive and negative frequencies. Power below the first bin is added as a
/// random constant offset.
pub fn sample_colored_noise(
    spectrum: &NoiseSpectrum,
    duration: f64,
    dt: f64,
    omega_min: f64,
    seed: u64,
) -> Result<NoiseTrace> {
    if matches!(spectrum, NoiseSpectrum::Telegraph { .. }) {
        return Err(Error::Unsupported(
            "telegraph noise is sampled with sample_telegraph".into(),
        ));
    }
    if omega_min < 0.0 {
        return Err(Error::InvalidArgument(
            "omega_min must be non-negative".into(),
        ));
    }
    if matches!(spectrum, NoiseSpectrum::OneOverF { .. }) && omega_min <= 0.0 {
        return Err(Error::Domain("1/f sampling needs omega_min > 0".into()));
    }
    let n = sample_count(duration, dt)?;
    let d_omega = 2.0 * PI / (n as f64 * dt);
    let mut rng = rng_from_seed(seed);
    let mut bins = vec![Complex::new(0.0, 0.0); n];
    for k in 1..n.div_ceil(2) {
        let omega = k as f64 * d_omega;
        let phase: f64 = rng.random::<f64>() * 2.0 * PI;
        if omega < omega_min {
            continue;
        }
        let s = spectrum.evaluate(omega)?;
        let a = (2.0 * s * d_omega / PI).sqrt();
        let c = Complex::from_polar(0.5 * a, phase);
        bins[k] = c;
        bins[n - k] = c.conj();
    }
    let offset_sigma = low_band_variance(spectrum, omega_min, 0.5 * d_omega)?.sqrt();
    let z: f64 = StandardNormal.sample(&mut rng);
    let offset = offset_sigma * z;
    FftPlanner::<f64>::new()
        .plan_fft_inverse(n)
        .process(&mut bins);
    let values = bins.iter().map(|c| c.re + offset).collect();
    NoiseTrace::new(values, dt, seed)
}

/// Variance the synthesized trace should have: ∫ S dω/2π over
/// ω_min ≤ |ω| ≤ ω_nyquist (numerical, log-spaced midpoint rule).
pub fn band_variance(spectrum: &NoiseSpectrum, omega_lo: f64, omega_hi: f64) -> Result<f64> {
    if !(omega_hi > omega_lo && omega_lo > 0.0) {
        return Err(Error::InvalidArgument(
            "need 0 < omega_lo < omega_hi".into(),
        ));
    }
    let steps = 20_000;
    let r = (omega_hi / omega_lo).ln() / steps as f64;
    let mut acc = 0.0;
    for k in 0..steps {
        let a = omega_lo * (r * k as f64).exp();
        let b = omega_lo * (r * (k + 1) as f64).exp();
        acc += spectrum.evaluate((a * b).sqrt())? * (b - a);
    }
    Ok(2.0 * acc / (2.0 * PI))
}

/// One-sided periodogram estimate of the two-sided PSD at the positive FFT
/// frequencies: returns (ω_k, S_k) with S_k = |X_k|² dt / N.
pub fn periodogram(trace: &NoiseTrace) -> Vec<(f64, f64)> {
    let n = trace.values.len();
    let mean = trace.mean();
    let mut buf: Vec<Complex<f64>> = trace
        .values
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .collect();
    FftPlanner::<f64>::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    let d_omega = 2.0 * PI / (n as f64 * trace.dt);
    (1..n.div_ceil(2))
        .map(|k| (k as f64 * d_omega, buf[k].norm_sqr() * trace.dt / n as f64))
        .collect()
}
