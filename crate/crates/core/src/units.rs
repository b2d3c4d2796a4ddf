//! Physical constants and unit helpers. Internally everything is SI with
//! angular frequencies in rad/s.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;
/// Magnetic flux quantum h/2e in webers.
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;
/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Cyclic frequency in GHz to rad/s.
pub fn ghz(f: f64) -> f64 {
    TWO_PI * f * 1e9
}

pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

pub fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e3
}

pub fn us(t: f64) -> f64 {
    t * 1e-6
}

pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

/// rad/s to cyclic MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / TWO_PI / 1e6
}
