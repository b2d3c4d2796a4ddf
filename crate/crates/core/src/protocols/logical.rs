//! Two-level algebra on the logical subspace, basis (|0L⟩, |1L⟩) with
//! Z|0L⟩ = +|0L⟩.

use nalgebra::{Matrix2, Vector2};

use crate::hilbert::{C64, I, ONE, ZERO};

pub type U2 = Matrix2<C64>;
pub type Amp2 = Vector2<C64>;

pub fn identity() -> U2 {
    U2::identity()
}

pub fn pauli_x() -> U2 {
    U2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> U2 {
    U2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> U2 {
    U2::new(ONE, ZERO, ZERO, -ONE)
}

/// exp(−iθ/2 (cos φ X + sin φ Y)).
pub fn rotation(phi: f64, theta: f64) -> U2 {
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let off = C64::from_polar(s, -phi) * (-I);
    U2::new(C64::from(c), off, -off.conj(), C64::from(c))
}

/// exp(−iθ/2 Z).
pub fn rz(theta: f64) -> U2 {
    U2::new(
        C64::from_polar(1.0, -0.5 * theta),
        ZERO,
        ZERO,
        C64::from_polar(1.0, 0.5 * theta),
    )
}

/// 1 − |tr(A†B)|/2, zero iff A = e^{iα}B.
pub fn phase_insensitive_distance(a: &U2, b: &U2) -> f64 {
    1.0 - (a.adjoint() * b).trace().norm() / 2.0
}

pub fn zero_l() -> Amp2 {
    Amp2::new(ONE, ZERO)
}

pub fn one_l() -> Amp2 {
    Amp2::new(ZERO, ONE)
}

/// Pair states |01⟩ and |10⟩ in the logical basis.
pub fn pair_01() -> Amp2 {
    let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    Amp2::new(s, s)
}

pub fn pair_10() -> Amp2 {
    let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    Amp2::new(-s, s)
}

/// ⟨Z_L⟩ of a normalized logical vector.
pub fn z_expectation(v: &Amp2) -> f64 {
    v[0].norm_sqr() - v[1].norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn rotation_generators() {
        let x = rotation(0.0, PI);
        assert!(phase_insensitive_distance(&x, &pauli_x()) < 1e-15);
        let y = rotation(FRAC_PI_2, PI);
        assert!(phase_insensitive_distance(&y, &pauli_y()) < 1e-15);
        assert!(phase_insensitive_distance(&rz(PI), &pauli_z()) < 1e-15);
        // Z(θ) R_φ Z(θ)† = R_{φ+θ}
        let lhs = rz(0.3) * rotation(0.2, 1.1) * rz(0.3).adjoint();
        assert!(phase_insensitive_distance(&lhs, &rotation(0.5, 1.1)) < 1e-14);
    }

    #[test]
    fn pair_states_are_orthonormal() {
        assert!((pair_01().dotc(&pair_10())).norm() < 1e-15);
        assert!((pair_01().norm() - 1.0).abs() < 1e-15);
        assert!(z_expectation(&pair_01()).abs() < 1e-15);
    }
}
