//! Two-qubit algebra on the spin ⊗ energy space of a single neutron.
//!
//! Basis ordering is spin-major: `(↑E₊, ↑E₋, ↓E₊, ↓E₋)`. Each qubit uses the
//! equatorial observables `σ(θ) = cos θ σx + sin θ σy` and the matching
//! projectors onto `(|0⟩ + e^{iθ}|1⟩)/√2`.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, TAU};

use crate::error::{Error, Result};

/// Tolerance on `‖ψ‖² − 1` for states fed to expectation values.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Largest imaginary part tolerated on an expectation value of a Hermitian operator.
pub const IMAGINARY_TOLERANCE: f64 = 1e-12;

pub const TSIRELSON_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;
pub const CLASSICAL_BOUND: f64 = 2.0;

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    Spin,
    Energy,
}

/// Azimuthal angle of an equatorial observable on one of the two qubits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableAngle {
    pub angle: f64,
    pub subsystem: Subsystem,
}

impl ObservableAngle {
    pub fn new(angle: f64, subsystem: Subsystem) -> Result<Self> {
        if !angle.is_finite() {
            return Err(Error::invalid(format!("observable angle must be finite, got {angle}")));
        }
        Ok(Self { angle, subsystem })
    }

    pub fn spin(angle: f64) -> Result<Self> {
        Self::new(angle, Subsystem::Spin)
    }

    pub fn energy(angle: f64) -> Result<Self> {
        Self::new(angle, Subsystem::Energy)
    }

    /// The same angle reduced to `[0, 2π)`.
    pub fn canonical(self) -> Self {
        Self {
            angle: wrap_two_pi(self.angle),
            ..self
        }
    }
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduces an angle to `(−π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let r = wrap_two_pi(angle);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// The four analyzer angles entering the CHSH combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessSettings {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl WitnessSettings {
    pub fn new(alpha1: f64, alpha2: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        let s = Self {
            alpha1,
            alpha2,
            gamma1,
            gamma2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas().iter().chain(self.gammas().iter()).all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("witness settings must be finite"))
        }
    }

    pub fn alphas(&self) -> [f64; 2] {
        [self.alpha1, self.alpha2]
    }

    pub fn gammas(&self) -> [f64; 2] {
        [self.gamma1, self.gamma2]
    }

    /// Shifts both spin angles by `offset`, e.g. to absorb a measured phase origin.
    pub fn shift_alpha(&self, offset: f64) -> Self {
        Self {
            alpha1: self.alpha1 + offset,
            alpha2: self.alpha2 + offset,
            ..*self
        }
    }

    /// Shifts all four angles by a common `offset`.
    pub fn shift_all(&self, offset: f64) -> Self {
        Self {
            alpha1: self.alpha1 + offset,
            alpha2: self.alpha2 + offset,
            gamma1: self.gamma1 + offset,
            gamma2: self.gamma2 + offset,
        }
    }
}

impl Default for WitnessSettings {
    fn default() -> Self {
        optimal_settings()
    }
}

/// Settings that saturate the Tsirelson bound for `(|↑E₊⟩ + |↓E₋⟩)/√2`:
/// `α₁ + γ₁ = −π/4`, `α₂ − α₁ = γ₂ − γ₁ = π/2`, with `α₁ = 0`.
pub fn optimal_settings() -> WitnessSettings {
    WitnessSettings {
        alpha1: 0.0,
        alpha2: FRAC_PI_2,
        gamma1: -FRAC_PI_4,
        gamma2: FRAC_PI_4,
    }
}

/// `cos θ σx + sin θ σy`.
pub fn observable(angle: ObservableAngle) -> Result<Matrix2<C64>> {
    let a = ObservableAngle::new(angle.angle, angle.subsystem)?;
    Ok(equatorial_observable(a.angle))
}

fn equatorial_observable(theta: f64) -> Matrix2<C64> {
    let e = C64::from_polar(1.0, theta);
    Matrix2::new(C64::new(0.0, 0.0), e.conj(), e, C64::new(0.0, 0.0))
}

/// `|θ⟩⟨θ|` with `|θ⟩ = (|0⟩ + e^{iθ}|1⟩)/√2`.
pub fn projector(angle: ObservableAngle) -> Result<Matrix2<C64>> {
    let a = ObservableAngle::new(angle.angle, angle.subsystem)?;
    let e = C64::from_polar(0.5, a.angle);
    let half = C64::new(0.5, 0.0);
    Ok(Matrix2::new(half, e.conj(), e, half))
}

/// Lifts a single-qubit operator onto the 4-dimensional product space.
pub fn embed(op: &Matrix2<C64>, subsystem: Subsystem) -> Matrix4<C64> {
    let id = Matrix2::<C64>::identity();
    match subsystem {
        Subsystem::Spin => op.kronecker(&id),
        Subsystem::Energy => id.kronecker(op),
    }
}

/// Pure state on the spin ⊗ energy space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinEnergyState {
    /// Amplitudes ordered `(↑E₊, ↑E₋, ↓E₊, ↓E₋)`.
    pub amps: [C64; 4],
}

impl SpinEnergyState {
    pub const UP_PLUS: usize = 0;
    pub const UP_MINUS: usize = 1;
    pub const DOWN_PLUS: usize = 2;
    pub const DOWN_MINUS: usize = 3;

    pub fn new(amps: [C64; 4]) -> Result<Self> {
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("state amplitudes must be finite"));
        }
        Ok(Self { amps })
    }

    /// Basis state `|s, e⟩` with `spin_up` selecting ↑ and `energy_plus` selecting E₊.
    pub fn basis(spin_up: bool, energy_plus: bool) -> Self {
        let idx = 2 * usize::from(!spin_up) + usize::from(!energy_plus);
        let mut amps = [C64::new(0.0, 0.0); 4];
        amps[idx] = C64::new(1.0, 0.0);
        Self { amps }
    }

    /// `(|↑E₊⟩ + e^{iφ}|↓E₋⟩)/√2`.
    pub fn bell(phase: f64) -> Self {
        let mut amps = [C64::new(0.0, 0.0); 4];
        amps[Self::UP_PLUS] = C64::new(FRAC_1_SQRT_2, 0.0);
        amps[Self::DOWN_MINUS] = C64::from_polar(FRAC_1_SQRT_2, phase);
        Self { amps }
    }

    /// `|spin⟩ ⊗ |energy⟩` from two single-qubit amplitude pairs.
    pub fn product(spin: [C64; 2], energy: [C64; 2]) -> Self {
        Self {
            amps: [
                spin[0] * energy[0],
                spin[0] * energy[1],
                spin[1] * energy[0],
                spin[1] * energy[1],
            ],
        }
    }

    pub fn as_vector(&self) -> Vector4<C64> {
        Vector4::from_column_slice(&self.amps)
    }

    pub fn from_vector(v: &Vector4<C64>) -> Self {
        Self {
            amps: [v[0], v[1], v[2], v[3]],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::DegenerateData("cannot normalize a null state".into()));
        }
        let s = n.sqrt().recip();
        Ok(Self {
            amps: self.amps.map(|a| a * s),
        })
    }

    pub fn apply(&self, op: &Matrix4<C64>) -> Self {
        Self::from_vector(&(op * self.as_vector()))
    }

    /// Applies `P(θ)` on one subsystem; the result is left unnormalized.
    pub fn project(&self, angle: ObservableAngle) -> Result<Self> {
        let p = projector(angle)?;
        Ok(self.apply(&embed(&p, angle.subsystem)))
    }

    pub fn expectation(&self, op: &Matrix4<C64>) -> C64 {
        let v = self.as_vector();
        v.dotc(&(op * v))
    }

    /// Spin-reduced density matrix `Tr_e |ψ⟩⟨ψ|`.
    pub fn reduced_spin(&self) -> Matrix2<C64> {
        let a = &self.amps;
        let r = |i: usize, j: usize| a[2 * i] * a[2 * j].conj() + a[2 * i + 1] * a[2 * j + 1].conj();
        Matrix2::new(r(0, 0), r(0, 1), r(1, 0), r(1, 1))
    }

    /// `Tr ρ_s²` of the normalized state: ½ for maximal entanglement, 1 for a product state.
    pub fn spin_purity(&self) -> Result<f64> {
        let rho = self.normalized()?.reduced_spin();
        Ok((rho * rho).trace().re)
    }

    /// Equality modulo a global phase.
    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        let overlap = self.as_vector().dotc(&other.as_vector());
        let (na, nb) = (self.norm_sqr(), other.norm_sqr());
        (na - nb).abs() <= tol && (overlap.norm() - (na * nb).sqrt()).abs() <= tol
    }
}

fn require_normalized(state: &SpinEnergyState) -> Result<()> {
    if state.is_normalized() {
        Ok(())
    } else {
        Err(Error::NotNormalized(state.norm_sqr()))
    }
}

/// `⟨ψ| σˢ(α) ⊗ σᵉ(γ) |ψ⟩`.
pub fn joint_expectation(state: &SpinEnergyState, alpha: f64, gamma: f64) -> Result<f64> {
    require_normalized(state)?;
    let s = observable(ObservableAngle::spin(alpha)?)?;
    let e = observable(ObservableAngle::energy(gamma)?)?;
    let value = state.expectation(&s.kronecker(&e));
    if value.im.abs() > IMAGINARY_TOLERANCE {
        return Err(Error::invalid(format!(
            "expectation has imaginary residue {:e}",
            value.im
        )));
    }
    Ok(value.re.clamp(-1.0, 1.0))
}

/// `S = E(α₁,γ₁) + E(α₁,γ₂) + E(α₂,γ₁) − E(α₂,γ₂)`.
pub fn chsh_value(state: &SpinEnergyState, settings: &WitnessSettings) -> Result<f64> {
    settings.validate()?;
    let e = |a: f64, g: f64| joint_expectation(state, a, g);
    let (a1, a2, g1, g2) = (settings.alpha1, settings.alpha2, settings.gamma1, settings.gamma2);
    Ok(chsh_combination([[e(a1, g1)?, e(a1, g2)?], [e(a2, g1)?, e(a2, g2)?]]))
}

/// Signed CHSH sum of a 2×2 grid `e[i][j] = E(αᵢ, γⱼ)`.
pub fn chsh_combination(e: [[f64; 2]; 2]) -> f64 {
    e[0][0] + e[0][1] + e[1][0] - e[1][1]
}

/// Counts `N(α + kπ, γ + lπ)` indexed `[k][l]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCounts(pub [[f64; 2]; 2]);

/// `Σ (−1)^{k+l} N_kl / Σ N_kl`.
pub fn expectation_from_counts(counts: &PhaseCounts) -> Result<f64> {
    let n = &counts.0;
    if n.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("counts must be finite and non-negative"));
    }
    let total: f64 = n.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateData("all four counts are zero".into()));
    }
    let signed = n[0][0] - n[1][0] - n[0][1] + n[1][1];
    Ok((signed / total).clamp(-1.0, 1.0))
}
