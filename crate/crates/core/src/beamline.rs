//! Beamline calibration: currents, detector offsets and flipper frequencies
//! mapped onto the spin phase α, the energy phase γ and the detector signal.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::quantum::SpinEnergyState;

/// Instrument settings in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamlineConfig {
    /// Mean neutron wavelength λ, m.
    pub wavelength: f64,
    /// Fractional wavelength spread Δλ/λ (FWHM).
    pub bandwidth: f64,
    /// First rf flipper frequency, Hz.
    pub f1: f64,
    /// Second rf flipper frequency, Hz.
    pub f2: f64,
    /// RF1 → RF2 distance L₁, m.
    pub flipper_separation: f64,
    /// RF2 → detector distance L₂, m.
    pub detector_distance: f64,
    /// Spin-phase coil field integral per unit current, T·m/A.
    pub coil_calibration: f64,
    /// Constant residual field integral from the guide fields, T·m.
    pub guide_field_integral: f64,
    pub polarizer_efficiency: f64,
    /// Instrumental contrast before the polarizer loss is applied.
    pub contrast: f64,
    /// Mean level A of the idealized signal.
    pub mean_level: f64,
}

impl BeamlineConfig {
    pub fn constants(&self) -> PhysicalConstants {
        PhysicalConstants::CODATA_2018
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.wavelength, "wavelength")?;
        positive(self.f1, "rf1 frequency")?;
        positive(self.flipper_separation, "flipper separation L1")?;
        positive(self.detector_distance, "detector distance L2")?;
        positive(self.mean_level, "mean level")?;
        if !(self.bandwidth > 0.0 && self.bandwidth < 1.0) {
            return Err(Error::invalid(format!("bandwidth must lie in (0, 1), got {}", self.bandwidth)));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid(format!("contrast must lie in [0, 1], got {}", self.contrast)));
        }
        if !(self.polarizer_efficiency > 0.0 && self.polarizer_efficiency <= 1.0) {
            return Err(Error::invalid(format!(
                "polarizer efficiency must lie in (0, 1], got {}",
                self.polarizer_efficiency
            )));
        }
        if !self.coil_calibration.is_finite() || !self.guide_field_integral.is_finite() {
            return Err(Error::invalid("field integrals must be finite"));
        }
        if !self.f2.is_finite() || self.f2 <= self.f1 {
            return Err(Error::Infeasible(format!(
                "MIEZE needs f2 > f1 (got f1 = {} Hz, f2 = {} Hz)",
                self.f1, self.f2
            )));
        }
        Ok(())
    }

    pub fn omega1(&self) -> f64 {
        TAU * self.f1
    }

    pub fn omega2(&self) -> f64 {
        TAU * self.f2
    }

    /// End-to-end contrast: instrumental contrast times polarizer efficiency.
    pub fn effective_contrast(&self) -> f64 {
        self.contrast * self.polarizer_efficiency
    }

    pub fn velocity(&self) -> f64 {
        self.constants().velocity(self.wavelength)
    }

    /// Central wavenumber k₀ = 2π/λ.
    pub fn k0(&self) -> f64 {
        TAU / self.wavelength
    }

    /// Detector distance replaced by the focusing solution for `field_integral`.
    pub fn focused(mut self, field_integral: f64) -> Result<Self> {
        self.detector_distance = focusing_distance(&self, field_integral)?;
        Ok(self)
    }

    /// CG-4B run at 45/50 kHz, 0.55 nm, 0.2 % bandwidth.
    pub fn cg4b_10khz() -> Self {
        Self {
            wavelength: 0.55e-9,
            bandwidth: 0.002,
            f1: 45e3,
            f2: 50e3,
            flipper_separation: 0.085,
            detector_distance: 0.765,
            coil_calibration: 250e-3 * 1e-3,
            guide_field_integral: 0.0,
            polarizer_efficiency: 0.96,
            // 0.85 end to end once the polarizer loss is applied
            contrast: 0.85 / 0.96,
            mean_level: 0.5,
        }
    }

    /// CG-4B run at 150/200 kHz (Timepix3 detector), 82 % end-to-end contrast.
    pub fn cg4b_100khz() -> Self {
        Self {
            f1: 150e3,
            f2: 200e3,
            // ω₁L₁/(ω₂−ω₁) with L₁ = 85 mm
            detector_distance: 0.255,
            contrast: 0.82 / 0.96,
            ..Self::cg4b_10khz()
        }
    }

    /// Velocity-selector beam: 0.6 nm, 11.6 % triangular bandwidth.
    pub fn reseda() -> Self {
        Self {
            wavelength: 0.6e-9,
            bandwidth: 0.116,
            ..Self::cg4b_10khz()
        }
    }
}

/// Detector displacement δ = z − z_focus along the beam, m.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DetectorOffset(pub f64);

impl DetectorOffset {
    pub fn from_mm(mm: f64) -> Self {
        Self(mm * 1e-3)
    }

    pub fn mm(self) -> f64 {
        self.0 * 1e3
    }
}

/// ω_m = 2(ω₂ − ω₁).
pub fn mieze_frequency(cfg: &BeamlineConfig) -> Result<f64> {
    if !(cfg.f1 > 0.0 && cfg.f2 > cfg.f1) {
        return Err(Error::Infeasible(format!(
            "MIEZE frequency undefined for f1 = {} Hz, f2 = {} Hz",
            cfg.f1, cfg.f2
        )));
    }
    Ok(2.0 * (cfg.omega2() - cfg.omega1()))
}

/// Larmor phase accumulated across a field integral `bl` (T·m): γ_n m λ BL / h.
pub fn larmor_phase(cfg: &BeamlineConfig, bl: f64) -> f64 {
    let c = cfg.constants();
    c.gyromagnetic * c.neutron_mass * cfg.wavelength / c.planck * bl
}

/// Spin phase α for a coil current (A), including the constant guide-field term.
pub fn spin_phase(cfg: &BeamlineConfig, current: f64) -> f64 {
    larmor_phase(cfg, cfg.coil_calibration * current + cfg.guide_field_integral)
}

/// Coil current change producing a 2π spin-phase turn, A.
pub fn current_per_turn(cfg: &BeamlineConfig) -> f64 {
    TAU / larmor_phase(cfg, cfg.coil_calibration)
}

/// Energy phase γ = −(m λ ω_m / h) δ for a detector displaced from the focus.
pub fn energy_phase(cfg: &BeamlineConfig, offset: DetectorOffset) -> Result<f64> {
    let c = cfg.constants();
    let wm = mieze_frequency(cfg)?;
    Ok(-(c.neutron_mass * cfg.wavelength * wm / c.planck) * offset.0)
}

/// Detector travel producing a 2π energy-phase turn, m.
pub fn offset_per_turn(cfg: &BeamlineConfig) -> Result<f64> {
    Ok(-TAU / energy_phase(cfg, DetectorOffset(1.0))?)
}

/// Energy phase at the focus when the MIEZE frequency is detuned by `detuning`
/// (rad/s), read at time `t`: γ = −2 δω t.
pub fn energy_phase_detuning(detuning: f64, t: f64) -> f64 {
    -2.0 * detuning * t
}

/// Solves the focusing condition `L₁/L₂ = (ω₂−ω₁)/ω₁ + γ_n BL/(2ω₁L₂)` for L₂.
pub fn focusing_distance(cfg: &BeamlineConfig, field_integral: f64) -> Result<f64> {
    let (w1, w2) = (cfg.omega1(), cfg.omega2());
    if !(w1 > 0.0 && w2 > w1) {
        return Err(Error::Infeasible(format!(
            "no focus for f1 = {} Hz, f2 = {} Hz (need f2 > f1 > 0)",
            cfg.f1, cfg.f2
        )));
    }
    if !(cfg.flipper_separation > 0.0) {
        return Err(Error::invalid("flipper separation L1 must be positive"));
    }
    let g = cfg.constants().gyromagnetic;
    let l2 = (w1 * cfg.flipper_separation - g * field_integral / 2.0) / (w2 - w1);
    if !(l2 > 0.0 && l2.is_finite()) {
        return Err(Error::Infeasible(format!(
            "focusing condition gives non-positive L2 = {l2} m"
        )));
    }
    Ok(l2)
}

/// First derivatives of the focusing distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusSensitivity {
    /// ∂L₂/∂L₁ (dimensionless).
    pub d_l1: f64,
    /// ∂L₂/∂f₁, m/Hz.
    pub d_f1: f64,
    /// ∂L₂/∂f₂, m/Hz.
    pub d_f2: f64,
    /// ∂L₂/∂(BL), m/(T·m).
    pub d_field_integral: f64,
    /// ∂L₂/∂λ; identically zero.
    pub d_wavelength: f64,
}

pub fn focus_sensitivity(cfg: &BeamlineConfig, field_integral: f64) -> Result<FocusSensitivity> {
    let l2 = focusing_distance(cfg, field_integral)?;
    let (w1, w2) = (cfg.omega1(), cfg.omega2());
    let dw = w2 - w1;
    let g = cfg.constants().gyromagnetic;
    Ok(FocusSensitivity {
        d_l1: w1 / dw,
        d_f1: TAU * (cfg.flipper_separation + l2) / dw,
        d_f2: -TAU * l2 / dw,
        d_field_integral: -g / (2.0 * dw),
        d_wavelength: 0.0,
    })
}

/// Element boundaries of the two-qubit pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// After the first π/2 flipper; the E₊ slot holds the undivided E₀.
    Prepared,
    /// After the spin-phase coil.
    SpinPhased,
    /// After RF1.
    Bell,
    /// After RF2 and the second π/2 flipper.
    Recombined,
    /// After the analyzer; unnormalized, carries the transmission.
    Analyzed,
}

impl Stage {
    /// Whether the energy qubit is meaningful; before RF1 the energy is undivided.
    pub fn energy_split(self) -> bool {
        !matches!(self, Stage::Prepared | Stage::SpinPhased)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub stage: Stage,
    pub state: SpinEnergyState,
}

/// States ψ₀, ψ₁, ψ_Bell, ψ₂, ψ₃ for spin phase `alpha` at time `t`.
///
/// The Bell stage carries the intermediate phase `2ω₁t − α`; from RF2 on the
/// phase is `α + ω_m t`.
pub fn evolve_pipeline(cfg: &BeamlineConfig, alpha: f64, t: f64) -> Result<Vec<PipelineState>> {
    if !alpha.is_finite() {
        return Err(Error::invalid("spin phase must be finite"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time must be finite and non-negative, got {t}")));
    }
    let wm = mieze_frequency(cfg)?;
    let zero = Complex64::new(0.0, 0.0);
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);

    let psi0 = SpinEnergyState {
        amps: [h, zero, h, zero],
    };
    let psi1 = SpinEnergyState {
        amps: [h, zero, Complex64::from_polar(FRAC_1_SQRT_2, alpha), zero],
    };
    let bell = SpinEnergyState::bell(2.0 * cfg.omega1() * t - alpha);
    let psi2 = SpinEnergyState::bell(alpha + wm * t);
    let psi3 = analyze(&psi2);

    Ok(vec![
        PipelineState { stage: Stage::Prepared, state: psi0 },
        PipelineState { stage: Stage::SpinPhased, state: psi1 },
        PipelineState { stage: Stage::Bell, state: bell },
        PipelineState { stage: Stage::Recombined, state: psi2 },
        PipelineState { stage: Stage::Analyzed, state: psi3 },
    ])
}

/// Second π/2 flipper followed by the analyzer: projects the spin onto
/// `(|↑⟩ + |↓⟩)/√2` and rotates the survivor to `|↑⟩`.
pub fn analyze(state: &SpinEnergyState) -> SpinEnergyState {
    let a = &state.amps;
    let zero = Complex64::new(0.0, 0.0);
    SpinEnergyState {
        amps: [
            (a[0] + a[2]) * FRAC_1_SQRT_2,
            (a[1] + a[3]) * FRAC_1_SQRT_2,
            zero,
            zero,
        ],
    }
}

/// `A (1 + C cos(α + γ + ω_m t))` with C the end-to-end contrast.
pub fn ideal_intensity(cfg: &BeamlineConfig, alpha: f64, gamma: f64, t: f64) -> Result<f64> {
    let c = cfg.effective_contrast();
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::invalid(format!("contrast must lie in [0, 1], got {c}")));
    }
    let wm = mieze_frequency(cfg)?;
    Ok(cfg.mean_level * (1.0 + c * (alpha + gamma + wm * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{chsh_value, expectation_from_counts, optimal_settings, PhaseCounts};
    use std::f64::consts::{PI, SQRT_2};

    fn unit_contrast() -> BeamlineConfig {
        BeamlineConfig {
            contrast: 1.0,
            polarizer_efficiency: 1.0,
            mean_level: 0.5,
            ..BeamlineConfig::cg4b_10khz()
        }
    }

    #[test]
    fn mieze_frequencies_of_both_runs() {
        let w = mieze_frequency(&BeamlineConfig::cg4b_10khz()).unwrap();
        assert!((w / TAU - 10e3).abs() < 1e-9);
        let w = mieze_frequency(&BeamlineConfig::cg4b_100khz()).unwrap();
        assert!((w / TAU - 100e3).abs() < 1e-8);
    }

    #[test]
    fn equal_frequencies_are_infeasible() {
        let cfg = BeamlineConfig {
            f2: 45e3,
            ..BeamlineConfig::cg4b_10khz()
        };
        assert!(matches!(mieze_frequency(&cfg), Err(Error::Infeasible(_))));
        assert!(matches!(focusing_distance(&cfg, 0.0), Err(Error::Infeasible(_))));
        assert!(matches!(cfg.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn nearly_equal_frequencies_push_focus_out() {
        let mut cfg = BeamlineConfig::cg4b_10khz();
        let mut last = 0.0;
        for eps in [1e3, 1e1, 1e-1, 1e-3] {
            cfg.f2 = cfg.f1 + eps;
            let l2 = focusing_distance(&cfg, 0.0).unwrap();
            assert!(l2 > last);
            last = l2;
        }
        assert!(last > 1e6);
    }

    #[test]
    fn spin_phase_calibration() {
        let cfg = BeamlineConfig::cg4b_10khz();
        assert_eq!(spin_phase(&cfg, 0.0), 0.0);
        // oracle: α = γ_n ∫B dl / v with v = h/(mλ)
        let v = cfg.velocity();
        assert!((v - 719.3).abs() < 0.1);
        let per_turn = TAU * v / (crate::constants::NEUTRON_GYROMAGNETIC * cfg.coil_calibration);
        assert!((current_per_turn(&cfg) - per_turn).abs() < 1e-12);
        assert!((per_turn - 0.0987).abs() < 5e-4);
        // 25 mT·mm is about one turn
        let a = larmor_phase(&cfg, 25e-3 * 1e-3);
        assert!((a / TAU - 1.0).abs() < 0.02, "{}", a / TAU);
    }

    #[test]
    fn spin_phase_is_affine_in_current() {
        let cfg = BeamlineConfig {
            guide_field_integral: 3e-6,
            ..BeamlineConfig::cg4b_10khz()
        };
        let a0 = spin_phase(&cfg, 0.0);
        let (i, j) = (-0.93, 0.41);
        let lin = |x: f64| spin_phase(&cfg, x) - a0;
        assert!((lin(i + j) - lin(i) - lin(j)).abs() < 1e-12);
        assert!((lin(3.0 * i) - 3.0 * lin(i)).abs() < 1e-12);
    }

    #[test]
    fn energy_phase_calibration() {
        let cfg = BeamlineConfig::cg4b_10khz();
        assert_eq!(energy_phase(&cfg, DetectorOffset(0.0)).unwrap(), 0.0);
        let g = energy_phase(&cfg, DetectorOffset::from_mm(70.0)).unwrap();
        let oracle = mieze_frequency(&cfg).unwrap() * 0.070 / cfg.velocity();
        assert!((g.abs() - oracle).abs() < 1e-12);
        assert!((g.abs() - 6.115).abs() < 1e-3);
        assert!((offset_per_turn(&cfg).unwrap() * 1e3 - 71.9).abs() < 0.05);

        let fast = BeamlineConfig::cg4b_100khz();
        let g = energy_phase(&fast, DetectorOffset::from_mm(10.0)).unwrap();
        assert!((g.abs() / TAU - 1.39).abs() < 0.01);
    }

    #[test]
    fn energy_phase_is_linear_in_offset() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let g = |d: f64| energy_phase(&cfg, DetectorOffset(d)).unwrap();
        assert!((g(0.012 + 0.031) - g(0.012) - g(0.031)).abs() < 1e-12);
        assert!((g(-2.5 * 0.017) + 2.5 * g(0.017)).abs() < 1e-12);
    }

    #[test]
    fn detuning_phase() {
        assert_eq!(energy_phase_detuning(0.0, 0.3), 0.0);
        let g = energy_phase_detuning(TAU * 100.0, 1.25e-3);
        assert!((g + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn detuning_sweep_matches_detector_sweep() {
        // the same γ from either route yields the same detector signal
        let cfg = BeamlineConfig::cg4b_10khz();
        let t = 1.25e-3;
        for d_mm in [-30.0, -5.0, 12.0, 35.0] {
            let g_pos = energy_phase(&cfg, DetectorOffset::from_mm(d_mm)).unwrap();
            let dw = -g_pos / (2.0 * t);
            let g_det = energy_phase_detuning(dw, t);
            let a = ideal_intensity(&cfg, 0.3, g_pos, 2e-5).unwrap();
            let b = ideal_intensity(&cfg, 0.3, g_det, 2e-5).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn focus_for_cg4b() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let l2 = focusing_distance(&cfg, 0.0).unwrap();
        assert!((l2 - 0.765).abs() < 1e-12);
        let wm = mieze_frequency(&cfg).unwrap();
        assert!((l2 - 2.0 * cfg.omega1() * cfg.flipper_separation / wm).abs() < 1e-12);
    }

    #[test]
    fn focus_ignores_wavelength() {
        let base = BeamlineConfig::cg4b_10khz();
        let l2 = focusing_distance(&base, 1e-5).unwrap();
        for i in 0..=16 {
            let cfg = BeamlineConfig {
                wavelength: (0.2 + 0.05 * i as f64) * 1e-9,
                ..base
            };
            assert_eq!(focusing_distance(&cfg, 1e-5).unwrap(), l2);
        }
        assert_eq!(focus_sensitivity(&base, 0.0).unwrap().d_wavelength, 0.0);
    }

    #[test]
    fn coil_field_integral_shifts_focus() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let bl = 25e-6;
        let shift = focusing_distance(&cfg, bl).unwrap() - focusing_distance(&cfg, 0.0).unwrap();
        let closed = -crate::constants::NEUTRON_GYROMAGNETIC * bl / (2.0 * (cfg.omega2() - cfg.omega1()));
        assert!((shift - closed).abs() < 1e-12);
        assert!((shift * 1e3 + 72.9).abs() < 0.1, "{}", shift * 1e3);
        let s = focus_sensitivity(&cfg, 0.0).unwrap();
        assert!((s.d_field_integral * bl - shift).abs() < 1e-12);
        assert!((s.d_l1 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn focus_sensitivities_match_finite_differences() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let s = focus_sensitivity(&cfg, 2e-6).unwrap();
        let fd = |f: &dyn Fn(&mut BeamlineConfig, f64), h: f64| {
            let mut a = cfg;
            let mut b = cfg;
            f(&mut a, h);
            f(&mut b, -h);
            (focusing_distance(&a, 2e-6).unwrap() - focusing_distance(&b, 2e-6).unwrap()) / (2.0 * h)
        };
        let d_f1 = fd(&|c, h| c.f1 += h, 1.0);
        let d_f2 = fd(&|c, h| c.f2 += h, 1.0);
        let d_l1 = fd(&|c, h| c.flipper_separation += h, 1e-4);
        assert!((d_f1 - s.d_f1).abs() < 1e-6 * s.d_f1.abs());
        assert!((d_f2 - s.d_f2).abs() < 1e-6 * s.d_f2.abs());
        assert!((d_l1 - s.d_l1).abs() < 1e-6);
    }

    #[test]
    fn infeasible_geometry_with_large_field() {
        let cfg = BeamlineConfig::cg4b_10khz();
        assert!(matches!(focusing_distance(&cfg, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn pipeline_norms_and_entanglement() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let states = evolve_pipeline(&cfg, 0.7, 3.1e-5).unwrap();
        assert_eq!(states.len(), 5);
        for s in &states[..4] {
            assert!((s.state.norm_sqr() - 1.0).abs() < 1e-15);
        }
        // analyzer transmits half of the beam
        assert!((states[4].state.norm_sqr() - 0.5).abs() < 1e-15);
        assert!((states[3].state.spin_purity().unwrap() - 0.5).abs() < 1e-14);
        assert!((states[4].state.spin_purity().unwrap() - 1.0).abs() < 1e-14);
        assert!(!states[1].stage.energy_split() && states[2].stage.energy_split());
    }

    #[test]
    fn recombined_state_is_maximally_entangled() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let states = evolve_pipeline(&cfg, 0.0, 0.0).unwrap();
        let s = chsh_value(&states[3].state, &optimal_settings()).unwrap();
        assert!((s - 2.0 * SQRT_2).abs() < 1e-12);
        let analyzed = states[4].state.normalized().unwrap();
        assert!(chsh_value(&analyzed, &optimal_settings()).unwrap().abs() < 1e-9);
    }

    #[test]
    fn analyzer_state_matches_closed_form() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let (alpha, t) = (1.1, 2.0e-5);
        let phase = alpha + mieze_frequency(&cfg).unwrap() * t;
        let psi3 = evolve_pipeline(&cfg, alpha, t).unwrap()[4].state;
        let expected = SpinEnergyState {
            amps: [
                Complex64::new(0.5, 0.0),
                Complex64::from_polar(0.5, phase),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        };
        assert!(psi3.approx_eq_up_to_phase(&expected, 1e-12));
    }

    #[test]
    fn ideal_intensity_extremes_and_average() {
        let cfg = unit_contrast();
        assert!((ideal_intensity(&cfg, 0.0, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(ideal_intensity(&cfg, PI, 0.0, 0.0).unwrap().abs() < 1e-15);
        let wm = mieze_frequency(&cfg).unwrap();
        let period = TAU / wm;
        for c in [0.0, 0.4, 1.0] {
            let cfg = BeamlineConfig { contrast: c, ..cfg };
            let n = 64;
            let mean: f64 = (0..n)
                .map(|i| ideal_intensity(&cfg, 0.9, -2.2, period * i as f64 / n as f64).unwrap())
                .sum::<f64>()
                / n as f64;
            assert!((mean - cfg.mean_level).abs() < 1e-14);
        }
    }

    #[test]
    fn four_phase_settings_recover_contrast_scaled_correlation() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let wm = mieze_frequency(&cfg).unwrap();
        for (a, g, t) in [(0.2, -0.9, 1e-5), (2.0, 1.0, 7e-5), (-1.3, 0.4, 0.0)] {
            let n = |k: usize, l: usize| {
                ideal_intensity(&cfg, a + k as f64 * PI, g + l as f64 * PI, t).unwrap()
            };
            let e = expectation_from_counts(&PhaseCounts([[n(0, 0), n(0, 1)], [n(1, 0), n(1, 1)]])).unwrap();
            let expected = cfg.effective_contrast() * (a + g + wm * t).cos();
            assert!((e - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn signal_depends_only_on_phase_sum() {
        let cfg = BeamlineConfig::cg4b_10khz();
        let a = spin_phase(&cfg, -0.95);
        let g = energy_phase(&cfg, DetectorOffset::from_mm(-20.0)).unwrap();
        let shift = 0.8;
        let x = ideal_intensity(&cfg, a + shift, g - shift, 1e-5).unwrap();
        let y = ideal_intensity(&cfg, a, g, 1e-5).unwrap();
        assert!((x - y).abs() < 1e-14);
    }

    #[test]
    fn presets_validate() {
        for cfg in [BeamlineConfig::cg4b_10khz(), BeamlineConfig::cg4b_100khz(), BeamlineConfig::reseda()] {
            cfg.validate().unwrap();
            let l2 = focusing_distance(&cfg, cfg.guide_field_integral).unwrap();
            assert!((l2 - cfg.detector_distance).abs() < 1e-12);
        }
        assert!((BeamlineConfig::cg4b_10khz().effective_contrast() - 0.85).abs() < 1e-15);
        assert!((BeamlineConfig::cg4b_100khz().effective_contrast() - 0.82).abs() < 1e-15);
    }
}
