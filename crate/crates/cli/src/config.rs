//! Run configuration file: TOML, SI-derived units spelled out in every key.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mieze_core::analysis::{AnalysisOptions, IntensityPath};
use mieze_core::beamline::BeamlineConfig;
use mieze_core::quantum::WitnessSettings;
use mieze_core::synth::{IntensityModel, ScanAxis, ScanPlan, DEFAULT_CHANNELS};
use mieze_core::wavepacket::{PacketShape, WavePacketSpec, DEFAULT_SAMPLES, DEFAULT_SPAN_WIDTHS};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Ideal,
    Wavepacket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelKind,
    pub beamline: BeamlineSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet: Option<PacketSection>,
    pub scan: ScanSection,
    #[serde(default)]
    pub witness: WitnessSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamlineSection {
    pub wavelength_nm: f64,
    /// FWHM of Δλ/λ as a fraction.
    pub bandwidth_fraction: f64,
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub flipper_separation_mm: f64,
    /// Omitted: solved from the focusing condition at the guide-field integral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_distance_mm: Option<f64>,
    pub coil_calibration_mt_mm_per_a: f64,
    #[serde(default)]
    pub guide_field_integral_mt_mm: f64,
    pub polarizer_efficiency: f64,
    /// Instrumental contrast before the polarizer loss.
    pub contrast: f64,
    #[serde(default = "half")]
    pub mean_level: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub shape: PacketShape,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_span")]
    pub span_widths: f64,
}

fn one() -> f64 {
    1.0
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_span() -> f64 {
    DEFAULT_SPAN_WIDTHS
}

/// Explicit list or arithmetic progression `start + i·step`, `i < count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) => {
                // integer multiples of the step keep grid points exact
                let base = (r.start / r.step).round();
                if ((base * r.step - r.start) / r.step).abs() < 1e-9 {
                    (0..r.count).map(|i| (base + i as f64) * r.step).collect()
                } else {
                    (0..r.count).map(|i| r.start + i as f64 * r.step).collect()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub currents_a: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets_mm: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detunings_rad_per_s: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout_time_ms: Option<f64>,
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub counts_scale: f64,
    #[serde(default)]
    pub background_per_channel: f64,
    #[serde(default)]
    pub global_phase_rad: f64,
}

fn default_channels() -> usize {
    DEFAULT_CHANNELS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSection {
    #[serde(default)]
    pub alpha1_rad: f64,
    #[serde(default = "quarter_turn")]
    pub alpha2_rad: f64,
    #[serde(default = "minus_eighth_turn")]
    pub gamma1_rad: f64,
    #[serde(default = "eighth_turn")]
    pub gamma2_rad: f64,
    #[serde(default = "reference_channel")]
    pub reference_channel: usize,
    #[serde(default)]
    pub path: IntensityPath,
    /// 0 disables the bootstrap.
    #[serde(default)]
    pub bootstrap_resamples: usize,
}

fn quarter_turn() -> f64 {
    FRAC_PI_2
}

fn eighth_turn() -> f64 {
    FRAC_PI_2 / 2.0
}

fn minus_eighth_turn() -> f64 {
    -FRAC_PI_2 / 2.0
}

fn reference_channel() -> usize {
    mieze_core::analysis::DEFAULT_REFERENCE_CHANNEL
}

impl Default for WitnessSection {
    fn default() -> Self {
        Self {
            alpha1_rad: 0.0,
            alpha2_rad: quarter_turn(),
            gamma1_rad: minus_eighth_turn(),
            gamma2_rad: eighth_turn(),
            reference_channel: reference_channel(),
            path: IntensityPath::default(),
            bootstrap_resamples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    pub offsets_mm: Grid,
}

fn wrap(e: mieze_core::Error, section: &str) -> anyhow::Error {
    anyhow::Error::new(Failure::from(e)).context(format!("[{section}]"))
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.scan.offsets_mm, &self.scan.detunings_rad_per_s) {
            (Some(_), None) => {}
            (None, Some(_)) => {
                if self.scan.readout_time_ms.is_none() {
                    bail!("scan.readout_time_ms is required with scan.detunings_rad_per_s");
                }
            }
            _ => bail!("scan needs exactly one of offsets_mm and detunings_rad_per_s"),
        }
        if let Grid::Range(r) = &self.scan.currents_a {
            if r.count == 0 || !(r.step != 0.0) {
                bail!("scan.currents_a needs a non-zero step and count");
            }
        }
        self.beamline()?.validate().map_err(|e| wrap(e, "beamline"))?;
        self.plan().validate().map_err(|e| wrap(e, "scan"))?;
        if let Some(p) = self.packet_spec()? {
            p.validate().map_err(|e| wrap(e, "packet"))?;
        }
        self.settings().map_err(|e| wrap(e, "witness"))?;
        if self.witness.reference_channel >= self.scan.channels {
            bail!(
                "witness.reference_channel = {} must be below scan.channels = {}",
                self.witness.reference_channel,
                self.scan.channels
            );
        }
        if self.model == ModelKind::Wavepacket && self.packet.is_none() {
            bail!("model = \"wavepacket\" needs a [packet] section");
        }
        Ok(())
    }

    /// Beamline in SI units; a missing detector distance is solved from the
    /// focusing condition.
    pub fn beamline(&self) -> anyhow::Result<BeamlineConfig> {
        let b = &self.beamline;
        let mut cfg = BeamlineConfig {
            wavelength: b.wavelength_nm * 1e-9,
            bandwidth: b.bandwidth_fraction,
            f1: b.f1_hz,
            f2: b.f2_hz,
            flipper_separation: b.flipper_separation_mm * 1e-3,
            detector_distance: b.detector_distance_mm.unwrap_or(f64::NAN) * 1e-3,
            // mT·mm = 1e-6 T·m
            coil_calibration: b.coil_calibration_mt_mm_per_a * 1e-6,
            guide_field_integral: b.guide_field_integral_mt_mm * 1e-6,
            polarizer_efficiency: b.polarizer_efficiency,
            contrast: b.contrast,
            mean_level: b.mean_level,
        };
        if b.detector_distance_mm.is_none() {
            cfg = cfg.focused(cfg.guide_field_integral).map_err(|e| wrap(e, "beamline"))?;
        }
        Ok(cfg)
    }

    pub fn plan(&self) -> ScanPlan {
        let s = &self.scan;
        let axis = match (&s.offsets_mm, &s.detunings_rad_per_s) {
            (Some(g), _) => ScanAxis::Offsets(g.values().into_iter().map(|v| v * 1e-3).collect()),
            (None, Some(g)) => ScanAxis::Detunings {
                values: g.values(),
                readout_time: s.readout_time_ms.unwrap_or(f64::NAN) * 1e-3,
            },
            (None, None) => ScanAxis::Offsets(Vec::new()),
        };
        ScanPlan {
            currents: s.currents_a.values(),
            axis,
            channels: s.channels,
            counts_scale: s.counts_scale,
            background: s.background_per_channel,
            seed: self.seed,
            global_phase: s.global_phase_rad,
        }
    }

    pub fn packet_spec(&self) -> anyhow::Result<Option<WavePacketSpec>> {
        let Some(p) = &self.packet else { return Ok(None) };
        Ok(Some(WavePacketSpec {
            shape: p.shape,
            wavelength: self.beamline.wavelength_nm * 1e-9,
            bandwidth: self.beamline.bandwidth_fraction,
            kappa: p.kappa,
            samples: p.samples,
            span_widths: p.span_widths,
        }))
    }

    pub fn model(&self) -> anyhow::Result<IntensityModel> {
        Ok(match self.model {
            ModelKind::Ideal => IntensityModel::Ideal,
            ModelKind::Wavepacket => {
                IntensityModel::WavePacket(self.packet_spec()?.context("model = \"wavepacket\" needs a [packet] section")?)
            }
        })
    }

    pub fn settings(&self) -> mieze_core::Result<WitnessSettings> {
        let w = &self.witness;
        WitnessSettings::new(w.alpha1_rad, w.alpha2_rad, w.gamma1_rad, w.gamma2_rad)
    }

    pub fn analysis_options(&self) -> mieze_core::Result<AnalysisOptions> {
        Ok(AnalysisOptions {
            settings: self.settings()?,
            reference_channel: self.witness.reference_channel,
            path: self.witness.path,
        })
    }

    /// Envelope offsets in m; −100…+100 mm in 5 mm steps unless configured.
    pub fn envelope_offsets(&self) -> Vec<f64> {
        let grid = self.envelope.as_ref().map(|e| e.offsets_mm.clone()).unwrap_or(Grid::Range(RangeSpec {
            start: -100.0,
            step: 5.0,
            count: 41,
        }));
        grid.values().into_iter().map(|v| v * 1e-3).collect()
    }
}
