//! Counts, points and envelope files.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mieze_core::synth::{CountsRecord, ScanAxis};

use crate::config::{ModelKind, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub const OFFSET_COLUMN: &str = "delta_mm";
pub const DETUNING_COLUMN: &str = "detuning_rad_per_s";

fn axis_column(axis: &ScanAxis) -> &'static str {
    match axis {
        ScanAxis::Offsets(_) => OFFSET_COLUMN,
        ScanAxis::Detunings { .. } => DETUNING_COLUMN,
    }
}

/// Second-axis value as written: mm for offsets, rad/s for detunings.
fn axis_out(axis: &ScanAxis, v: f64) -> f64 {
    match axis {
        ScanAxis::Offsets(_) => v * 1e3,
        ScanAxis::Detunings { .. } => v,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRow {
    current_a: f64,
    axis: f64,
    channel: usize,
    counts: u64,
}

pub fn write_counts(path: &Path, axis: &ScanAxis, records: &[CountsRecord], format: Format) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(["current_A", axis_column(axis), "channel", "counts"])?;
            for r in records {
                for (i, c) in r.counts.iter().enumerate() {
                    w.write_record([float(r.current), float(axis_out(axis, r.offset)), i.to_string(), c.to_string()])?;
                }
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<JsonRow> = records
                .iter()
                .flat_map(|r| {
                    r.counts.iter().enumerate().map(|(i, &c)| JsonRow {
                        current_a: r.current,
                        axis: axis_out(axis, r.offset),
                        channel: i,
                        counts: c,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(file, &serde_json::json!({ "axis": axis_column(axis), "rows": rows }))?;
        }
    }
    Ok(())
}

/// Reads a counts CSV, grouping rows into scan points in order of first appearance.
pub fn read_counts(path: &Path) -> anyhow::Result<(bool, Vec<CountsRecord>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let current = col("current_A").context("missing column current_A")?;
    let (axis, detuning) = match (col(OFFSET_COLUMN), col(DETUNING_COLUMN)) {
        (Some(i), None) => (i, false),
        (None, Some(i)) => (i, true),
        _ => bail!("need exactly one of the columns {OFFSET_COLUMN} and {DETUNING_COLUMN}"),
    };
    let channel = col("channel").context("missing column channel")?;
    let counts = col("counts").context("missing column counts")?;

    let mut order: Vec<(u64, u64)> = Vec::new();
    let mut points: HashMap<(u64, u64), (f64, f64, Vec<Option<u64>>)> = HashMap::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let at = || format!("{} line {}", path.display(), line + 2);
        let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
        let i: f64 = field(current).parse().with_context(|| format!("{}: bad current", at()))?;
        let d: f64 = field(axis).parse().with_context(|| format!("{}: bad axis value", at()))?;
        let ch: usize = field(channel).parse().with_context(|| format!("{}: bad channel", at()))?;
        let n: u64 = field(counts).parse().with_context(|| format!("{}: counts must be a non-negative integer", at()))?;
        if !i.is_finite() || !d.is_finite() {
            bail!("{}: non-finite coordinate", at());
        }
        let key = (i.to_bits(), d.to_bits());
        let entry = points.entry(key).or_insert_with(|| {
            order.push(key);
            (i, d, Vec::new())
        });
        if entry.2.len() <= ch {
            entry.2.resize(ch + 1, None);
        }
        if entry.2[ch].replace(n).is_some() {
            bail!("{}: duplicate channel {ch} for current {i}, {d}", at());
        }
    }
    if order.is_empty() {
        bail!("{} holds no data rows", path.display());
    }
    let records = order
        .iter()
        .map(|key| {
            let (i, d, chans) = &points[key];
            let counts: Option<Vec<u64>> = chans.iter().copied().collect();
            let counts = counts.with_context(|| format!("point ({i}, {d}) is missing channels"))?;
            Ok(CountsRecord {
                current: *i,
                offset: if detuning { *d } else { d * 1e-3 },
                counts,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok((detuning, records))
}

/// Sidecar written next to a counts file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountsMeta {
    pub version: String,
    pub seed: u64,
    pub model: ModelKind,
    pub channels: usize,
    pub points: usize,
    pub config: RunConfig,
}

pub fn meta_path(counts: &Path) -> PathBuf {
    let stem = counts.file_stem().and_then(|s| s.to_str()).unwrap_or("counts");
    counts.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> anyhow::Result<CountsMeta> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let meta: CountsMeta = serde_json::from_reader(file).with_context(|| format!("parsing {}", path.display()))?;
    meta.config.validate()?;
    Ok(meta)
}

/// Writes a table of floats with the given header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>], format: Format) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(file);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row.iter().map(|v| float(*v)))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|row| header.iter().map(|h| h.to_string()).zip(row.iter().map(|v| serde_json::json!(v))).collect())
                .collect();
            serde_json::to_writer_pretty(file, &objects)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trips() {
        for x in [-0.88, 0.1 + 0.2, 1e-300, 8600.0, -35.0] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn counts_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("mieze-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.csv");
        let recs = vec![
            CountsRecord {
                current: -0.93,
                offset: -0.035,
                counts: vec![1, 2, 3, 4],
            },
            CountsRecord {
                current: -0.92,
                offset: 0.0,
                counts: vec![5, 6, 7, 8],
            },
        ];
        let axis = ScanAxis::Offsets(vec![]);
        write_counts(&path, &axis, &recs, Format::Csv).unwrap();
        let (detuning, back) = read_counts(&path).unwrap();
        assert!(!detuning);
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].counts, recs[0].counts);
        assert!((back[0].offset - recs[0].offset).abs() < 1e-15);
        assert_eq!(meta_path(&path), dir.join("c.meta.json"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
