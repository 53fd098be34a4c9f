//! Longitudinal wave-packet model of the MIEZE beamline.
//!
//! A packet is a superposition `∫dk g(k−k₀) e^{i[kz − ω(k)t]}` with
//! `ω(k) = ħk²/2m`, carried separately for the two spin components. The
//! spin-phase coil multiplies the components by `e^{∓iα(k)/2}` with
//! `α(k) ∝ 1/k`; an rf flipper at `z_f` swaps them, shifts their energy by
//! `±ħω` (wavenumber `k → k ± mω/ħk`) and keeps the wave continuous at `z_f`.
//! Every accumulated phase is therefore of the form `P/k`, which gives closed
//! forms for the stationary-phase peak positions and for the refocusing point.
//!
//! Two intensities are available:
//!
//! * [`position_intensity`]: `|⟨z|P|ψ(t)⟩|²` of a single packet by direct
//!   oscillatory quadrature over the k grid;
//! * [`time_signal`]: the detection rate of a stationary beam of mutually
//!   incoherent packets at lab time `t`. Averaging over arrival times collapses
//!   the double k integral to a single one, leaving the MIEZE oscillation
//!   `e^{iω_m t}` times the branch overlap.
//!
//! Positions are measured from RF1 along the beam.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI, TAU};
use std::sync::Arc;

use crate::beamline::{mieze_frequency, BeamlineConfig};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// Largest integrand phase change tolerated between neighbouring k samples.
pub const MAX_PHASE_STEP: f64 = FRAC_PI_4;
pub const DEFAULT_SAMPLES: usize = 4096;
/// Default grid span in units of the RMS wavenumber width (±8σ).
pub const DEFAULT_SPAN_WIDTHS: f64 = 16.0;
pub const MIN_SAMPLES: usize = 64;
pub const MIN_SPAN_WIDTHS: f64 = 8.0;
/// Order-of-magnitude margin required by [`coherence_check`].
pub const COHERENCE_MARGIN: f64 = 10.0;

/// Spin component index: 0 = ↑, 1 = ↓.
pub const UP: usize = 0;
pub const DOWN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PacketShape {
    #[default]
    Gaussian,
    Triangular,
    Rectangular,
}

/// Shape and sampling of `g(k − k₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub shape: PacketShape,
    /// Mean wavelength, m.
    pub wavelength: f64,
    /// FWHM of the wavelength distribution over λ; equals Δk/k₀ to first order.
    pub bandwidth: f64,
    /// Intrinsic coherence length over the beam coherence length, ≥ 1.
    pub kappa: f64,
    pub samples: usize,
    /// Grid span in units of the RMS wavenumber width.
    pub span_widths: f64,
}

impl WavePacketSpec {
    pub fn new(shape: PacketShape, wavelength: f64, bandwidth: f64) -> Self {
        Self {
            shape,
            wavelength,
            bandwidth,
            kappa: 1.0,
            samples: DEFAULT_SAMPLES,
            span_widths: DEFAULT_SPAN_WIDTHS,
        }
    }

    pub fn from_beamline(cfg: &BeamlineConfig, shape: PacketShape) -> Self {
        Self::new(shape, cfg.wavelength, cfg.bandwidth)
    }

    pub fn with_samples(self, samples: usize) -> Self {
        Self { samples, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::invalid(format!("wavelength must be positive, got {}", self.wavelength)));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth < 1.0) {
            return Err(Error::invalid(format!("bandwidth must lie in (0, 1), got {}", self.bandwidth)));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be at least 1, got {}", self.kappa)));
        }
        if self.samples < MIN_SAMPLES {
            return Err(Error::invalid(format!(
                "k grid needs at least {MIN_SAMPLES} samples, got {}",
                self.samples
            )));
        }
        if !(self.span_widths >= MIN_SPAN_WIDTHS && self.span_widths.is_finite()) {
            return Err(Error::invalid(format!(
                "k grid must span at least {MIN_SPAN_WIDTHS} widths, got {}",
                self.span_widths
            )));
        }
        if self.span_widths * self.rms_width() >= 2.0 * self.k0() {
            return Err(Error::invalid("k grid would reach k ≤ 0"));
        }
        Ok(())
    }

    pub fn k0(&self) -> f64 {
        TAU / self.wavelength
    }

    /// FWHM of the wavenumber distribution.
    pub fn fwhm_k(&self) -> f64 {
        self.bandwidth * self.k0()
    }

    /// RMS width σ_k of `|g|` as a distribution over k.
    ///
    /// Gaussian: FWHM = 2√(2 ln 2) σ. Triangular: FWHM is half the base.
    /// Rectangular: FWHM is the full width.
    pub fn rms_width(&self) -> f64 {
        let w = self.fwhm_k();
        match self.shape {
            PacketShape::Gaussian => w / (8.0 * 2f64.ln()).sqrt(),
            PacketShape::Triangular => w / 6f64.sqrt(),
            PacketShape::Rectangular => w / 12f64.sqrt(),
        }
    }

    /// Beam coherence length β = λ²/Δλ.
    pub fn coherence_length(&self) -> f64 {
        self.wavelength / self.bandwidth
    }

    pub fn span(&self) -> f64 {
        self.span_widths * self.rms_width()
    }

    pub fn grid(&self) -> Result<KGrid> {
        self.validate()?;
        Ok(KGrid::uniform(self.k0(), self.span(), self.samples))
    }

    /// Number of samples keeping a packet resolved at flight times up to `t_max`
    /// within `±z_margin` of its centre.
    pub fn samples_for_flight(&self, t_max: f64, z_margin: f64) -> usize {
        let c = PhysicalConstants::CODATA_2018;
        let half = self.span() / 2.0;
        let slope = c.hbar * half * t_max.abs() / c.neutron_mass + z_margin.abs();
        let n = (slope * self.span() / MAX_PHASE_STEP).ceil() as usize + 2;
        n.max(self.samples)
    }
}

/// Uniform wavenumber grid with trapezoidal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub k0: f64,
    pub k: Vec<f64>,
    pub weights: Vec<f64>,
    pub dk: f64,
}

impl KGrid {
    fn uniform(k0: f64, span: f64, n: usize) -> Self {
        let dk = span / (n - 1) as f64;
        let start = k0 - span / 2.0;
        let k: Vec<f64> = (0..n).map(|j| start + j as f64 * dk).collect();
        let mut weights = vec![dk; n];
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        Self { k0, k, weights, dk }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

/// Samples of `g(k − k₀)` on the spec grid, normalized so `Σ w |g|² = 1`.
pub fn k_distribution(spec: &WavePacketSpec) -> Result<Vec<f64>> {
    let grid = spec.grid()?;
    Ok(sample_shape(spec, &grid))
}

fn sample_shape(spec: &WavePacketSpec, grid: &KGrid) -> Vec<f64> {
    let fwhm = spec.fwhm_k();
    let sigma = spec.rms_width();
    let mut g: Vec<f64> = grid
        .k
        .iter()
        .map(|&k| {
            let q = k - grid.k0;
            match spec.shape {
                PacketShape::Gaussian => (-0.25 * (q / sigma).powi(2)).exp(),
                PacketShape::Triangular => (1.0 - q.abs() / fwhm).max(0.0).sqrt(),
                PacketShape::Rectangular => {
                    if q.abs() <= fwhm / 2.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    // |g|² carries the shape, so g itself is the square root of the density
    let norm: f64 = g.iter().zip(&grid.weights).map(|(a, w)| w * a * a).sum();
    let s = norm.sqrt().recip();
    g.iter_mut().for_each(|a| *a *= s);
    g
}

/// Optical element applied to a packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Element {
    SpinPhaseCoil { field_integral: f64 },
    RfFlipper { omega: f64, position: f64 },
}

/// One spin component: `ψ(z,t) = ∫dk w a(k) e^{i[K(k) z − (ω(k) + Ω) t]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub amplitude: Vec<Complex64>,
    /// Energy shift Ω relative to the incident packet, rad/s.
    pub energy_shift: f64,
    /// Coefficient P of the accumulated phase `P/k`, rad·m⁻¹.
    pub inverse_k_phase: f64,
}

impl Branch {
    fn wavenumber(&self, k: f64, c: &PhysicalConstants) -> f64 {
        k + c.neutron_mass * self.energy_shift / (c.hbar * k)
    }
}

/// Spin-resolved wave packet together with the elements it has traversed.
#[derive(Debug, Clone)]
pub struct PacketState {
    pub spec: WavePacketSpec,
    grid: Arc<KGrid>,
    pub branches: [Branch; 2],
    pub history: Vec<Element>,
    /// The representation holds downstream of this position only.
    pub valid_from: f64,
}

impl PacketState {
    /// Incident packet after the first π/2 flipper: `(|↑⟩ + |↓⟩)/√2 ⊗ g`.
    pub fn new(spec: &WavePacketSpec) -> Result<Self> {
        let grid = spec.grid()?;
        let g = sample_shape(spec, &grid);
        let amplitude: Vec<Complex64> = g.iter().map(|&a| Complex64::new(a * FRAC_1_SQRT_2, 0.0)).collect();
        let branch = Branch {
            amplitude,
            energy_shift: 0.0,
            inverse_k_phase: 0.0,
        };
        Ok(Self {
            spec: *spec,
            grid: Arc::new(grid),
            branches: [branch.clone(), branch],
            history: Vec::new(),
            valid_from: f64::NEG_INFINITY,
        })
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    /// `Σ w (|a↑|² + |a↓|²)`.
    pub fn norm_sqr(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| {
                b.amplitude
                    .iter()
                    .zip(&self.grid.weights)
                    .map(|(a, w)| w * a.norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    }

    fn constants(&self) -> PhysicalConstants {
        PhysicalConstants::CODATA_2018
    }

    fn map_phase(&self, branch: &Branch, delta_p: f64) -> Vec<Complex64> {
        branch
            .amplitude
            .iter()
            .zip(&self.grid.k)
            .map(|(a, &k)| a * Complex64::from_polar(1.0, delta_p / k))
            .collect()
    }

    /// Group velocity ħk₀/m of the incident packet.
    pub fn group_velocity(&self) -> f64 {
        let c = self.constants();
        c.hbar * self.grid.k0 / c.neutron_mass
    }
}

/// Spin-phase coil with field integral `field_integral` (T·m):
/// components pick up `e^{∓iα(k)/2}` with `α(k) = 2πmγ_n BL/(hk)`.
pub fn apply_spin_phase_k(state: &PacketState, field_integral: f64) -> Result<PacketState> {
    if !field_integral.is_finite() {
        return Err(Error::invalid("field integral must be finite"));
    }
    let c = state.constants();
    let a = TAU * c.neutron_mass * c.gyromagnetic * field_integral / c.planck;
    let mut next = state.clone();
    for (spin, sign) in [(UP, -0.5), (DOWN, 0.5)] {
        let b = &state.branches[spin];
        next.branches[spin] = Branch {
            amplitude: state.map_phase(b, sign * a),
            energy_shift: b.energy_shift,
            inverse_k_phase: b.inverse_k_phase + sign * a,
        };
    }
    next.history.push(Element::SpinPhaseCoil { field_integral });
    Ok(next)
}

/// Spin phase `α(k)` at wavenumber `k` for a coil field integral, rad.
pub fn spin_phase_at(field_integral: f64, k: f64) -> f64 {
    let c = PhysicalConstants::CODATA_2018;
    TAU * c.neutron_mass * c.gyromagnetic * field_integral / (c.planck * k)
}

/// Resonant flipper at `position` driven at angular frequency `omega`.
///
/// ↓ becomes ↑ gaining ħω, ↑ becomes ↓ losing ħω. Continuity at the flipper
/// adds `m(Ω_old − Ω_new) z_f/(ħk)` to each component.
pub fn apply_rf_flipper(state: &PacketState, omega: f64, position: f64) -> Result<PacketState> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::invalid(format!("flipper frequency must be positive, got {omega}")));
    }
    if !position.is_finite() || position < state.valid_from {
        return Err(Error::invalid(format!(
            "flipper at {position} m lies upstream of the previous element at {} m",
            state.valid_from
        )));
    }
    let c = state.constants();
    let flip = |from: &Branch, gain: f64| {
        let new_shift = from.energy_shift + gain;
        let delta_p = c.neutron_mass * (from.energy_shift - new_shift) * position / c.hbar;
        Branch {
            amplitude: state.map_phase(from, delta_p),
            energy_shift: new_shift,
            inverse_k_phase: from.inverse_k_phase + delta_p,
        }
    };
    let mut next = state.clone();
    next.branches = [flip(&state.branches[DOWN], omega), flip(&state.branches[UP], -omega)];
    next.history.push(Element::RfFlipper { omega, position });
    next.valid_from = position;
    Ok(next)
}

/// Packet after the spin-phase coil and both flippers of `cfg`
/// (RF1 at z = 0, RF2 at z = L₁).
pub fn mieze_packet(cfg: &BeamlineConfig, spec: &WavePacketSpec, field_integral: f64) -> Result<PacketState> {
    let s = PacketState::new(spec)?;
    let s = apply_spin_phase_k(&s, field_integral)?;
    let s = apply_rf_flipper(&s, cfg.omega1(), 0.0)?;
    apply_rf_flipper(&s, cfg.omega2(), cfg.flipper_separation)
}

fn check_point(state: &PacketState, z: f64, t: f64) -> Result<()> {
    if !z.is_finite() || !t.is_finite() {
        return Err(Error::invalid("position and time must be finite"));
    }
    if z < state.valid_from {
        return Err(Error::invalid(format!(
            "z = {z} m lies upstream of the last element at {} m",
            state.valid_from
        )));
    }
    Ok(())
}

fn resolution_error(max_step: f64, grid: &KGrid) -> Error {
    Error::Resolution {
        max_step,
        limit: MAX_PHASE_STEP,
        required_samples: ((grid.len() - 1) as f64 * max_step / MAX_PHASE_STEP).ceil() as usize + 2,
    }
}

/// `ψ_b(z,t) e^{−i(k₀z − ω₀t)}`, normalized so that `∫|ψ|²dz = Σ w |a|²`.
fn branch_amplitude(state: &PacketState, spin: usize, z: f64, t: f64) -> Result<Complex64> {
    let c = state.constants();
    let grid = state.grid();
    let b = &state.branches[spin];
    let v0 = c.hbar * grid.k0 / c.neutron_mass;
    let spread = c.hbar * t / c.neutron_mass;
    let rel = z - v0 * t;
    let mz = c.neutron_mass * z / c.hbar;

    // d(phase)/dk = −P/k² + (z − v₀t) − (ħt/m) q − Ω m z/(ħk²)
    let mut max_step: f64 = 0.0;
    for &k in &grid.k {
        let q = k - grid.k0;
        let slope = -(b.inverse_k_phase + b.energy_shift * mz) / (k * k) + rel - spread * q;
        max_step = max_step.max(slope.abs() * grid.dk);
    }
    if max_step > MAX_PHASE_STEP {
        return Err(resolution_error(max_step, grid));
    }

    let mut acc = Complex64::new(0.0, 0.0);
    for ((a, &k), &w) in b.amplitude.iter().zip(&grid.k).zip(&grid.weights) {
        let q = k - grid.k0;
        let phase = q * rel - 0.5 * spread * q * q + b.energy_shift * (mz / k - t);
        acc += a * Complex64::from_polar(w, phase);
    }
    Ok(acc / (TAU).sqrt())
}

/// `|⟨z|ψ_b(t)⟩|²` for one spin component.
pub fn branch_intensity(state: &PacketState, spin: usize, z: f64, t: f64) -> Result<f64> {
    check_point(state, z, t)?;
    Ok(branch_amplitude(state, spin, z, t)?.norm_sqr())
}

/// `|⟨z|P|ψ(t)⟩|²` for a single packet. With `projection = Some(θ)` the spin is
/// projected onto `(|↑⟩ + e^{iθ}|↓⟩)/√2`; with `None` both components are summed.
pub fn position_intensity(state: &PacketState, z: f64, t: f64, projection: Option<f64>) -> Result<f64> {
    check_point(state, z, t)?;
    let up = branch_amplitude(state, UP, z, t)?;
    let down = branch_amplitude(state, DOWN, z, t)?;
    Ok(match projection {
        None => up.norm_sqr() + down.norm_sqr(),
        Some(theta) => (up + Complex64::from_polar(1.0, -theta) * down).norm_sqr() / 2.0,
    })
}

/// [`position_intensity`] over many points, evaluated in parallel.
pub fn position_profile(state: &PacketState, zs: &[f64], t: f64, projection: Option<f64>) -> Result<Vec<f64>> {
    zs.par_iter()
        .map(|&z| position_intensity(state, z, t, projection))
        .collect()
}

/// Overlap `Σ w a↑* a↓ e^{i(K↓ − K↑) z}` of the two components at `z`.
fn branch_overlap(state: &PacketState, z: f64) -> Result<Complex64> {
    let c = state.constants();
    let grid = state.grid();
    let [up, down] = &state.branches;
    let numerator = (down.inverse_k_phase - up.inverse_k_phase)
        + c.neutron_mass * (down.energy_shift - up.energy_shift) * z / c.hbar;
    let kmin = grid.k[0];
    let max_step = numerator.abs() / (kmin * kmin) * grid.dk;
    if max_step > MAX_PHASE_STEP {
        return Err(resolution_error(max_step, grid));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..grid.len() {
        let k = grid.k[j];
        let dk_phase = up.wavenumber(k, &c) - down.wavenumber(k, &c);
        acc += up.amplitude[j].conj()
            * down.amplitude[j]
            * Complex64::from_polar(grid.weights[j], -dk_phase * z);
    }
    Ok(acc)
}

/// Detection rate at `z` and lab time `t` for a stationary beam of mutually
/// incoherent packets, normalized to unit incident flux.
///
/// With the analyzer (`projection = Some(θ)`) this is
/// `½ + Re(e^{−iθ} e^{i(Ω↑−Ω↓)t} Σ w a↑* a↓ e^{i(K↓−K↑)z})`; with a perfectly
/// coherent packet at the focus it reduces to `½(1 + cos(α + γ + ω_m t))`.
pub fn time_signal(state: &PacketState, z: f64, t: f64, projection: Option<f64>) -> Result<f64> {
    check_point(state, z, t)?;
    let total = state.norm_sqr();
    match projection {
        None => Ok(total),
        Some(theta) => {
            let overlap = branch_overlap(state, z)?;
            let [up, down] = &state.branches;
            let beat = (up.energy_shift - down.energy_shift) * t - theta;
            Ok(0.5 * total + (Complex64::from_polar(1.0, beat) * overlap).re)
        }
    }
}

/// Modulation of the beam signal at `z`: `(contrast, phase)` with the signal
/// proportional to `1 + contrast·cos(ω t + phase)` for the analyzer at θ = 0.
pub fn signal_modulation(state: &PacketState, z: f64) -> Result<(f64, f64)> {
    check_point(state, z, 0.0)?;
    let overlap = branch_overlap(state, z)?;
    let mean = 0.5 * state.norm_sqr();
    Ok((overlap.norm() / mean, overlap.arg()))
}

/// Stationary-phase position of the `spin` component's peak at time `t`:
/// the root of `∂/∂k [P/k + K(k) z − ω(k) t] = 0` at k₀.
pub fn stationary_peak(state: &PacketState, spin: usize, t: f64) -> f64 {
    let c = state.constants();
    let k0 = state.grid().k0;
    let b = &state.branches[spin];
    let v0 = c.hbar * k0 / c.neutron_mass;
    (v0 * t + b.inverse_k_phase / (k0 * k0)) / (1.0 - c.neutron_mass * b.energy_shift / (c.hbar * k0 * k0))
}

/// Position where the two components' stationary points coincide, which is
/// also where their relative phase stops depending on k. `None` while the
/// components share the same energy.
pub fn refocus_position(state: &PacketState) -> Option<f64> {
    let c = state.constants();
    let [up, down] = &state.branches;
    let d_omega = down.energy_shift - up.energy_shift;
    if d_omega == 0.0 {
        return None;
    }
    Some(c.hbar * (up.inverse_k_phase - down.inverse_k_phase) / (c.neutron_mass * d_omega))
}

/// Time at which the stationary peaks of the two components meet.
pub fn refocus_time(state: &PacketState) -> Option<f64> {
    let z = refocus_position(state)?;
    let c = state.constants();
    let k0 = state.grid().k0;
    let b = &state.branches[UP];
    let v0 = c.hbar * k0 / c.neutron_mass;
    Some((z * (1.0 - c.neutron_mass * b.energy_shift / (c.hbar * k0 * k0)) - b.inverse_k_phase / (k0 * k0)) / v0)
}

/// Uniform lattice of positions `center + i·cell`, `|i| ≤ half_cells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionGrid {
    pub center: f64,
    pub cell: f64,
    pub half_cells: usize,
}

impl PositionGrid {
    pub fn node(&self, i: isize) -> f64 {
        self.center + i as f64 * self.cell
    }
}

/// Grid node holding the maximum of one component's intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSearch {
    pub position: f64,
    pub intensity: f64,
    /// Node index relative to the grid's original centre.
    pub index: isize,
}

/// Grid argmax of `|ψ_spin(z,t)|²`. The window follows the maximum if it
/// lands on an edge.
pub fn locate_peak(state: &PacketState, spin: usize, t: f64, grid: PositionGrid) -> Result<PeakSearch> {
    if !(grid.cell > 0.0) || grid.half_cells == 0 {
        return Err(Error::invalid("position grid needs a positive cell and at least one node per side"));
    }
    let h = grid.half_cells as isize;
    let mut offset: isize = 0;
    for _ in 0..64 {
        let idx: Vec<isize> = (-h..=h).map(|i| i + offset).collect();
        let values: Vec<f64> = idx
            .par_iter()
            .map(|&i| branch_intensity(state, spin, grid.node(i), t))
            .collect::<Result<_>>()?;
        let (best, &val) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid has nodes");
        let i = idx[best];
        if best == 0 || best == values.len() - 1 {
            offset = i;
            continue;
        }
        return Ok(PeakSearch {
            position: grid.node(i),
            intensity: val,
            index: i,
        });
    }
    Err(Error::invalid("peak search window failed to settle"))
}

/// Least-squares `A + B cos(x + φ)` through `n ≥ 3` samples at `x_i = 2πi/n`.
pub(crate) fn uniform_cosine_fit(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let (mut s0, mut sc, mut ss) = (0.0, 0.0, 0.0);
    for (i, y) in samples.iter().enumerate() {
        let x = TAU * i as f64 / n;
        s0 += y;
        sc += y * x.cos();
        ss += y * x.sin();
    }
    let a = s0 / n;
    let (c, s) = (2.0 * sc / n, 2.0 * ss / n);
    (a, c.hypot(s), (-s).atan2(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    /// Detector displacement from the configured focus, m.
    pub delta: f64,
    pub contrast: f64,
    /// Phase of the fitted time cosine, rad.
    pub phase: f64,
}

/// Number of time samples per period in [`contrast_envelope`].
pub const ENVELOPE_CHANNELS: usize = 16;

/// Contrast of the time-domain MIEZE signal at each detector offset.
///
/// The detector sits at `z = L₁ + L₂ + δ`; the coil carries the guide-field
/// integral. Each point is a cosine fit to [`ENVELOPE_CHANNELS`] samples over
/// one MIEZE period.
pub fn contrast_envelope(cfg: &BeamlineConfig, spec: &WavePacketSpec, deltas: &[f64]) -> Result<Vec<EnvelopePoint>> {
    cfg.validate()?;
    let wm = mieze_frequency(cfg)?;
    let state = mieze_packet(cfg, spec, cfg.guide_field_integral)?;
    let focus = cfg.flipper_separation + cfg.detector_distance;
    deltas
        .par_iter()
        .map(|&delta| {
            let z = focus + delta;
            let samples: Vec<f64> = (0..ENVELOPE_CHANNELS)
                .map(|i| {
                    let t = TAU * i as f64 / (ENVELOPE_CHANNELS as f64 * wm);
                    time_signal(&state, z, t, Some(0.0))
                })
                .collect::<Result<_>>()?;
            let (a, b, phase) = uniform_cosine_fit(&samples);
            Ok(EnvelopePoint {
                delta,
                contrast: b / a,
                phase,
            })
        })
        .collect()
}

/// Half width at half maximum of an envelope sampled on increasing `delta`,
/// interpolated linearly on the `delta ≥ 0` side. `None` if it never drops
/// below half of its maximum.
pub fn envelope_half_width(points: &[EnvelopePoint]) -> Option<f64> {
    let peak = points.iter().map(|p| p.contrast).fold(0.0, f64::max);
    let half = peak / 2.0;
    let side: Vec<&EnvelopePoint> = points.iter().filter(|p| p.delta >= 0.0).collect();
    side.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.contrast >= half && b.contrast < half)
            .then(|| a.delta + (a.contrast - half) * (b.delta - a.delta) / (a.contrast - b.contrast))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCheck {
    /// Number of turns N = |phase|/2π.
    pub turns: f64,
    /// Largest N allowed: κ λ/Δλ reduced by the order-of-magnitude margin.
    pub limit: f64,
    /// limit / N; infinite for N = 0.
    pub margin: f64,
    pub satisfied: bool,
}

/// Whether a spin or energy phase can be treated as a plain relative phase
/// between the spinor components: `|phase|/2π ≪ κ λ/Δλ`.
pub fn coherence_check(phase: f64, spec: &WavePacketSpec) -> CoherenceCheck {
    let turns = phase.abs() / TAU;
    let limit = spec.kappa / (spec.bandwidth * COHERENCE_MARGIN);
    let margin = if turns == 0.0 { f64::INFINITY } else { limit / turns };
    CoherenceCheck {
        turns,
        limit,
        margin,
        satisfied: margin >= 1.0,
    }
}

/// Peak separation `|α|/k₀` produced by the coil at the packet centre.
pub fn coil_peak_separation(field_integral: f64, k0: f64) -> f64 {
    spin_phase_at(field_integral, k0).abs() / k0
}

/// Branch-overlap phase offset relative to the carrier, folded to (−π, π].
pub fn wrap(phase: f64) -> f64 {
    let r = (phase + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}
