//! `mieze`: simulate MIEZE scans, evaluate the spin-energy witness, and report
//! envelopes and focusing geometry.

mod config;
mod io;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mieze_core::analysis::{analyze_scan, bootstrap_uncertainty, BootstrapResult, Classification};
use mieze_core::beamline::{focus_sensitivity, focusing_distance, FocusSensitivity};
use mieze_core::quantum::WitnessSettings;
use mieze_core::synth::{simulate_scan, ScanAxis};
use mieze_core::wavepacket::contrast_envelope;

use config::{ModelKind, RunConfig};
use io::Format;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Infeasible(String),
    Fit(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Fit(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

impl From<mieze_core::Error> for Failure {
    fn from(e: mieze_core::Error) -> Self {
        match e {
            mieze_core::Error::Infeasible(_) => Failure::Infeasible(e.to_string()),
            mieze_core::Error::Fit(_) => Failure::Fit(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Input(_) => 2,
                Failure::Infeasible(_) => 3,
                Failure::Fit(_) => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<mieze_core::Error>() {
            return exit_code(&anyhow::Error::new(Failure::from(e.clone())));
        }
    }
    2
}

fn core<T>(r: mieze_core::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| anyhow::Error::new(Failure::from(e)))
}

#[derive(Parser)]
#[command(name = "mieze", version, about = "Spin-energy entanglement witness for MIEZE beamlines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured intensity model.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Poisson counts for the configured scan.
    Simulate(Common),
    /// Fit a counts file and evaluate the witness.
    Witness {
        #[command(flatten)]
        common: Common,
        /// Counts CSV; its `.meta.json` sidecar stands in for --config.
        #[arg(long)]
        input: PathBuf,
    },
    /// Wave-packet contrast against detector offset.
    Envelope(Common),
    /// Focusing distance and its sensitivities.
    Focus(Common),
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let path = self.config.as_ref().context("--config is required")?;
        let cfg = RunConfig::load(path)?;
        self.apply(cfg)
    }

    fn apply(&self, mut cfg: RunConfig) -> anyhow::Result<RunConfig> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(model) = self.model {
            cfg.model = model;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn simulate(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let beamline = cfg.beamline()?;
    let plan = cfg.plan();
    let records = core(simulate_scan(&beamline, &plan, &cfg.model()?))?;
    let out = common.out_dir()?;
    let path = out.join(format!("counts.{}", common.format.extension()));
    io::write_counts(&path, &plan.axis, &records, common.format)?;
    let meta = io::CountsMeta {
        version: VERSION.into(),
        seed: cfg.seed,
        model: cfg.model,
        channels: plan.channels,
        points: records.len(),
        config: cfg.clone(),
    };
    io::write_json(&io::meta_path(&path), &meta)?;
    println!("wrote {} points × {} channels to {}", records.len(), plan.channels, path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitDiagnostics {
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    phase_rad: f64,
    covariance: [[f64; 3]; 3],
    chi2: f64,
    dof: usize,
    iterations: usize,
    intensity_path: mieze_core::analysis::IntensityPath,
    reference_channel: usize,
    aligned_settings: WitnessSettings,
}

#[derive(Serialize)]
struct CountBased {
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "sigma_S")]
    sigma_s: f64,
    classification: Classification,
    #[serde(rename = "E_matrix")]
    e_matrix: [[f64; 2]; 2],
    max_phase_miss_rad: f64,
}

#[derive(Serialize)]
struct WitnessReport {
    version: String,
    seed: u64,
    #[serde(rename = "S")]
    s: f64,
    #[serde(rename = "sigma_S")]
    sigma_s: f64,
    classification: Classification,
    #[serde(rename = "E_matrix")]
    e_matrix: [[f64; 2]; 2],
    #[serde(rename = "E_sigma")]
    e_sigma: [[f64; 2]; 2],
    contrast: f64,
    contrast_sigma: f64,
    fit_diagnostics: FitDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    count_based: Option<CountBased>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapResult>,
    config: RunConfig,
}

fn witness(common: &Common, input: &Path) -> anyhow::Result<()> {
    let cfg = match &common.config {
        Some(_) => common.load()?,
        None => {
            let meta = io::meta_path(input);
            if !meta.exists() {
                bail!("no --config given and no sidecar {} found", meta.display());
            }
            common.apply(io::read_meta(&meta)?.config)?
        }
    };
    let (detuning, records) = io::read_counts(input).map_err(|e| anyhow::Error::new(Failure::Input(format!("{e:#}"))))?;
    let plan = cfg.plan();
    if detuning != matches!(plan.axis, ScanAxis::Detunings { .. }) {
        bail!("counts file axis does not match the configured scan axis");
    }
    let beamline = cfg.beamline()?;
    let options = core(cfg.analysis_options())?;
    let analysis = core(analyze_scan(&beamline, &plan, &records, &options))?;
    let bootstrap = match cfg.witness.bootstrap_resamples {
        0 => None,
        n => Some(core(bootstrap_uncertainty(&beamline, &plan, &records, &options, n, cfg.seed))?),
    };
    let w = &analysis.witness;
    let f = &analysis.fit;
    let report = WitnessReport {
        version: VERSION.into(),
        seed: cfg.seed,
        s: w.s,
        sigma_s: w.sigma_s,
        classification: w.classification,
        e_matrix: w.e_matrix,
        e_sigma: w.e_sigma,
        contrast: f.contrast,
        contrast_sigma: f.contrast_sigma,
        fit_diagnostics: FitDiagnostics {
            a: f.a,
            b: f.b,
            phase_rad: f.phase,
            covariance: f.covariance,
            chi2: f.chi2,
            dof: f.dof,
            iterations: f.iterations,
            intensity_path: options.path,
            reference_channel: options.reference_channel,
            aligned_settings: analysis.aligned_settings,
        },
        count_based: analysis.count_witness.as_ref().map(|c| CountBased {
            s: c.witness.s,
            sigma_s: c.witness.sigma_s,
            classification: c.witness.classification,
            e_matrix: c.witness.e_matrix,
            max_phase_miss_rad: c.picks.iter().flatten().flatten().flatten().map(|p| p.miss).fold(0.0, f64::max),
        }),
        bootstrap,
        config: cfg,
    };
    let out = common.out_dir()?;
    io::write_json(&out.join("witness.json"), &report)?;
    let rows: Vec<Vec<f64>> = analysis
        .points
        .iter()
        .map(|p| vec![p.phase, p.value, p.sigma, f.model(p.phase)])
        .collect();
    io::write_table(
        &out.join(format!("witness_points.{}", common.format.extension())),
        &["phase_rad", "intensity", "intensity_err", "model"],
        &rows,
        common.format,
    )?;
    println!(
        "S = {:.4} ± {:.4} ({:?}), contrast {:.4}",
        report.s, report.sigma_s, report.classification, report.contrast
    );
    Ok(())
}

fn envelope(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let spec = cfg
        .packet_spec()?
        .ok_or_else(|| Failure::Input("envelope needs a [packet] section".into()))?;
    let beamline = cfg.beamline()?;
    let points = core(contrast_envelope(&beamline, &spec, &cfg.envelope_offsets()))?;
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.delta * 1e3, p.contrast, p.phase]).collect();
    let path = common.out_dir()?.join(format!("envelope.{}", common.format.extension()));
    io::write_table(&path, &["delta_mm", "contrast", "phase_rad"], &rows, common.format)?;
    println!("wrote {} envelope points to {}", rows.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct FocusReport {
    l2_mm: f64,
    l2_without_field_mm: f64,
    field_shift_mm: f64,
    field_integral_mt_mm: f64,
    configured_detector_distance_mm: f64,
    sensitivity: FocusSensitivity,
}

fn focus(common: &Common) -> anyhow::Result<()> {
    let cfg = common.load()?;
    let beamline = cfg.beamline()?;
    let bl = beamline.guide_field_integral;
    let l2 = core(focusing_distance(&beamline, bl))?;
    let l2_zero = core(focusing_distance(&beamline, 0.0))?;
    let report = FocusReport {
        l2_mm: l2 * 1e3,
        l2_without_field_mm: l2_zero * 1e3,
        field_shift_mm: (l2 - l2_zero) * 1e3,
        field_integral_mt_mm: bl * 1e6,
        configured_detector_distance_mm: beamline.detector_distance * 1e3,
        sensitivity: core(focus_sensitivity(&beamline, bl))?,
    };
    match common.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => {
            let s = &report.sensitivity;
            println!("quantity,value");
            for (k, v) in [
                ("l2_mm", report.l2_mm),
                ("l2_without_field_mm", report.l2_without_field_mm),
                ("field_shift_mm", report.field_shift_mm),
                ("field_integral_mt_mm", report.field_integral_mt_mm),
                ("configured_detector_distance_mm", report.configured_detector_distance_mm),
                ("dl2_dl1", s.d_l1),
                ("dl2_df1_m_per_hz", s.d_f1),
                ("dl2_df2_m_per_hz", s.d_f2),
                ("dl2_dbl_m_per_t_m", s.d_field_integral),
                ("dl2_dlambda", s.d_wavelength),
            ] {
                println!("{k},{}", io::float(v));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Witness { common, input } => witness(common, input),
        Command::Envelope(c) => envelope(c),
        Command::Focus(c) => focus(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
