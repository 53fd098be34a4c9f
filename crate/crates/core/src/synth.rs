//! Synthetic detector counts for two-dimensional (coil current × detector
//! offset) MIEZE scans.
//!
//! Each scan point is a period-folded time histogram with
//! `mean_i = background + (N₀/2)(1 + C cos(α + γ + 2πi/n + φ_g))`, drawn from a
//! Poisson distribution. Point `p` uses ChaCha20 seeded from the plan seed with
//! stream `p`, so points can be generated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::beamline::{energy_phase, energy_phase_detuning, spin_phase, BeamlineConfig, DetectorOffset};
use crate::error::{Error, Result};
use crate::wavepacket::{mieze_packet, signal_modulation, WavePacketSpec};

pub const DEFAULT_CHANNELS: usize = 16;
pub const MIN_CHANNELS: usize = 4;

/// Second scan axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    /// Detector displacements from the focus, m.
    Offsets(Vec<f64>),
    /// MIEZE frequency detunings at the focus, rad/s, read at `readout_time` (s).
    Detunings { values: Vec<f64>, readout_time: f64 },
}

impl ScanAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            ScanAxis::Offsets(v) => v,
            ScanAxis::Detunings { values, .. } => values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    /// Coil currents, A.
    pub currents: Vec<f64>,
    pub axis: ScanAxis,
    pub channels: usize,
    /// N₀: expected sum of the maximum and minimum channel counts at a point.
    pub counts_scale: f64,
    /// Expected background counts per channel.
    pub background: f64,
    pub seed: u64,
    /// Constant phase from the arbitrary choice of time origin, rad.
    pub global_phase: f64,
}

impl ScanPlan {
    pub fn new(currents: Vec<f64>, offsets: Vec<f64>, counts_scale: f64, seed: u64) -> Self {
        Self {
            currents,
            axis: ScanAxis::Offsets(offsets),
            channels: DEFAULT_CHANNELS,
            counts_scale,
            background: 0.0,
            seed,
            global_phase: 0.0,
        }
    }

    /// Currents −1.00…−0.88 A in 0.01 A steps, offsets −35…+35 mm in 5 mm steps.
    pub fn cg4b_10khz(seed: u64) -> Self {
        Self::new(steps(-1.00, 0.01, 13), steps(-35e-3, 5e-3, 15), 8600.0, seed)
    }

    /// Currents 1.32…1.44 A in 0.01 A steps, offsets −5…+5 mm in 1 mm steps.
    pub fn cg4b_100khz(seed: u64) -> Self {
        Self::new(steps(1.32, 0.01, 13), steps(-5e-3, 1e-3, 11), 8600.0, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.currents.is_empty() || self.axis.values().is_empty() {
            return Err(Error::invalid("scan needs at least one current and one offset"));
        }
        if self.currents.iter().chain(self.axis.values()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("scan coordinates must be finite"));
        }
        if let ScanAxis::Detunings { readout_time, .. } = self.axis {
            if !readout_time.is_finite() {
                return Err(Error::invalid("readout time must be finite"));
            }
        }
        if self.channels < MIN_CHANNELS {
            return Err(Error::invalid(format!(
                "need at least {MIN_CHANNELS} time channels per period, got {}",
                self.channels
            )));
        }
        if !(self.counts_scale > 0.0 && self.counts_scale.is_finite()) {
            return Err(Error::invalid(format!("counts scale must be positive, got {}", self.counts_scale)));
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return Err(Error::invalid(format!("background must be non-negative, got {}", self.background)));
        }
        if !self.global_phase.is_finite() {
            return Err(Error::invalid("global phase must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.currents.len() * self.axis.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(current, second-axis value)` of point `index`, currents varying slowest.
    pub fn point(&self, index: usize) -> (f64, f64) {
        let n = self.axis.values().len();
        (self.currents[index / n], self.axis.values()[index % n])
    }

    /// Phase `2πi/n` of time channel `i`.
    pub fn channel_phase(&self, channel: usize) -> f64 {
        TAU * channel as f64 / self.channels as f64
    }
}

fn steps(start: f64, step: f64, n: usize) -> Vec<f64> {
    // integer multiples keep the grid free of accumulated rounding
    (0..n).map(|i| ((start / step).round() + i as f64) * step).collect()
}

/// One scan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    /// Coil current, A.
    pub current: f64,
    /// Detector offset, m (detuning in rad/s for detuning scans).
    pub offset: f64,
    pub counts: Vec<u64>,
}

impl CountsRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "packet")]
pub enum IntensityModel {
    #[default]
    Ideal,
    /// Contrast and phase from the wave-packet overlap at each detector position.
    WavePacket(WavePacketSpec),
}

/// Energy phase γ for the second-axis value of a point.
pub fn axis_phase(cfg: &BeamlineConfig, axis: &ScanAxis, value: f64) -> Result<f64> {
    match axis {
        ScanAxis::Offsets(_) => energy_phase(cfg, DetectorOffset(value)),
        ScanAxis::Detunings { readout_time, .. } => Ok(energy_phase_detuning(value, *readout_time)),
    }
}

/// Idealized phase α + γ of a scan point.
pub fn point_phase(cfg: &BeamlineConfig, plan: &ScanPlan, current: f64, value: f64) -> Result<f64> {
    Ok(spin_phase(cfg, current) + axis_phase(cfg, &plan.axis, value)?)
}

/// Expected counts in every time channel of one point.
pub fn expected_counts(
    cfg: &BeamlineConfig,
    plan: &ScanPlan,
    model: &IntensityModel,
    current: f64,
    value: f64,
) -> Result<Vec<f64>> {
    let (envelope, phase) = match model {
        IntensityModel::Ideal => (1.0, point_phase(cfg, plan, current, value)?),
        IntensityModel::WavePacket(spec) => {
            let ScanAxis::Offsets(_) = plan.axis else {
                return Err(Error::invalid("the wave-packet model supports detector-offset scans only"));
            };
            let bl = cfg.coil_calibration * current + cfg.guide_field_integral;
            let state = mieze_packet(cfg, spec, bl)?;
            signal_modulation(&state, cfg.flipper_separation + cfg.detector_distance + value)?
        }
    };
    let contrast = cfg.effective_contrast() * envelope;
    if !(0.0..=1.0 + 1e-12).contains(&contrast) {
        return Err(Error::invalid(format!("signal contrast must lie in [0, 1], got {contrast}")));
    }
    let half = plan.counts_scale / 2.0;
    Ok((0..plan.channels)
        .map(|i| plan.background + half * (1.0 + contrast * (phase + plan.channel_phase(i) + plan.global_phase).cos()))
        .collect())
}

fn draw(rng: &mut ChaCha20Rng, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::invalid(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Poisson draw for every mean, on the stream reserved for `index`.
pub(crate) fn poisson_counts(seed: u64, index: u64, means: impl IntoIterator<Item = f64>) -> Result<Vec<u64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    means.into_iter().map(|m| draw(&mut rng, m)).collect()
}

/// Counts for every point of `plan`, currents varying slowest.
pub fn simulate_scan(cfg: &BeamlineConfig, plan: &ScanPlan, model: &IntensityModel) -> Result<Vec<CountsRecord>> {
    cfg.validate()?;
    plan.validate()?;
    if let IntensityModel::WavePacket(spec) = model {
        spec.validate()?;
    }
    (0..plan.len())
        .into_par_iter()
        .map(|p| {
            let (current, offset) = plan.point(p);
            let means = expected_counts(cfg, plan, model, current, offset)?;
            Ok(CountsRecord {
                current,
                offset,
                counts: poisson_counts(plan.seed, p as u64, means)?,
            })
        })
        .collect()
}

/// Per-channel relative intensities `counts / N₀`.
pub fn normalize(record: &CountsRecord, counts_scale: f64) -> Result<Vec<f64>> {
    if !(counts_scale > 0.0 && counts_scale.is_finite()) {
        return Err(Error::invalid(format!("N0 must be positive, got {counts_scale}")));
    }
    Ok(record.counts.iter().map(|&c| c as f64 / counts_scale).collect())
}
