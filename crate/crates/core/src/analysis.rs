//! Cosine fits to count data, expectation values and the CHSH witness.
//!
//! Every fit uses the model `A + B cos(x + φ)`. The phase is first located
//! on a grid of [`PHASE_STARTS`] values, with `A` and `B` solved in closed form
//! at each, and then refined by Levenberg–Marquardt on `(A, B, φ)`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::beamline::BeamlineConfig;
use crate::error::{Error, Result};
use crate::quantum::{chsh_combination, expectation_from_counts, wrap_pi, PhaseCounts, WitnessSettings, CLASSICAL_BOUND, TSIRELSON_BOUND};
use crate::synth::{point_phase, poisson_counts, CountsRecord, ScanPlan};

pub const PHASE_STARTS: usize = 16;
pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;
/// Slack on the classical bound so that `S = 2` computed in floating point stays classical.
pub const CLASSICAL_SLACK: f64 = 1e-12;
pub const QUANTUM_SLACK: f64 = 1e-9;
pub const DEFAULT_REFERENCE_CHANNEL: usize = 5;
pub const MIN_RESAMPLES: usize = 100;
/// Largest fraction of failed bootstrap refits tolerated.
pub const MAX_FAILED_FRACTION: f64 = 0.05;

/// One observation `y ± σ` at phase `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phase: f64,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    /// φ₀ in (−π, π].
    pub phase: f64,
    /// C = B/A.
    pub contrast: f64,
    pub contrast_sigma: f64,
    /// Covariance of (A, B, φ₀).
    pub covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl FitResult {
    pub fn model(&self, x: f64) -> f64 {
        self.a + self.b * (x + self.phase).cos()
    }

    /// First-order standard error of the model at `x`.
    pub fn model_sigma(&self, x: f64) -> f64 {
        let g = [1.0, (x + self.phase).cos(), -self.b * (x + self.phase).sin()];
        quadratic_form(&self.covariance, &g).max(0.0).sqrt()
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }
}

fn quadratic_form(m: &[[f64; 3]; 3], g: &[f64; 3]) -> f64 {
    (0..3).map(|i| (0..3).map(|j| g[i] * m[i][j] * g[j]).sum::<f64>()).sum()
}

fn chi2(points: &[PhasePoint], p: &Vector3<f64>) -> f64 {
    points
        .iter()
        .map(|q| ((q.value - p[0] - p[1] * (q.phase + p[2]).cos()) / q.sigma).powi(2))
        .sum()
}

/// Weighted closed-form `(A, B)` for fixed φ.
fn profile(points: &[PhasePoint], phi: f64) -> Option<(f64, f64)> {
    let (mut s0, mut s1, mut s2, mut y0, mut y1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for q in points {
        let w = q.sigma.powi(-2);
        let c = (q.phase + phi).cos();
        s0 += w;
        s1 += w * c;
        s2 += w * c * c;
        y0 += w * q.value;
        y1 += w * q.value * c;
    }
    let det = s0 * s2 - s1 * s1;
    if det.abs() <= 1e-14 * s0 * s2.max(f64::MIN_POSITIVE) {
        return None;
    }
    Some(((s2 * y0 - s1 * y1) / det, (s0 * y1 - s1 * y0) / det))
}

/// `JᵀWJ` and `JᵀW r` at `p`.
fn normal_equations(points: &[PhasePoint], p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for q in points {
        let w = q.sigma.powi(-2);
        let (s, c) = (q.phase + p[2]).sin_cos();
        let j = Vector3::new(1.0, c, -p[1] * s);
        let r = q.value - p[0] - p[1] * c;
        jtj += w * j * j.transpose();
        jtr += w * r * j;
    }
    (jtj, jtr)
}

fn invert(m: &Matrix3<f64>) -> Matrix3<f64> {
    m.try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| m.pseudo_inverse(1e-12 * m.norm()).unwrap_or_else(|_| Matrix3::zeros()))
}

fn check_points(points: &[PhasePoint]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    for q in points {
        if !(q.phase.is_finite() && q.value.is_finite() && q.sigma > 0.0 && q.sigma.is_finite()) {
            return Err(Error::Fit(format!("invalid point {q:?}")));
        }
    }
    Ok(())
}

/// Weighted least-squares `A + B cos(x + φ)` through `points`.
pub fn fit_cosine(points: &[PhasePoint]) -> Result<FitResult> {
    check_points(points)?;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for i in 0..PHASE_STARTS {
        let phi = -PI + TAU * i as f64 / PHASE_STARTS as f64;
        if let Some((a, b)) = profile(points, phi) {
            let p = Vector3::new(a, b, phi);
            let c = chi2(points, &p);
            if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                best = Some((c, p));
            }
        }
    }
    let (mut cost, mut p) = best.ok_or_else(|| Error::Fit("phases do not constrain a cosine".into()))?;

    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(points, &p);
        let mut damped = jtj;
        for d in 0..3 {
            damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
        }
        let step = invert(&damped) * jtr;
        let trial = p + step;
        let trial_cost = chi2(points, &trial);
        if trial_cost <= cost {
            let scale = p.abs().max() .max(1e-300);
            let rel = step.abs().max() / scale;
            p = trial;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if rel < RELATIVE_TOLERANCE || step.iter().all(|s| *s == 0.0) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step left at machine precision
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {MAX_ITERATIONS} iterations (chi2 {cost:.6e}, params {:?})",
            p.as_slice()
        )));
    }

    if p[1] < 0.0 {
        p[1] = -p[1];
        p[2] += PI;
    }
    p[2] = wrap_pi(p[2]);
    let (jtj, _) = normal_equations(points, &p);
    let cov = invert(&jtj);
    let covariance = [
        [cov[(0, 0)], cov[(0, 1)], cov[(0, 2)]],
        [cov[(1, 0)], cov[(1, 1)], cov[(1, 2)]],
        [cov[(2, 0)], cov[(2, 1)], cov[(2, 2)]],
    ];
    let (a, b) = (p[0], p[1]);
    if !(a > 0.0) {
        return Err(Error::Fit(format!("fitted mean level {a} is not positive")));
    }
    let contrast = b / a;
    let g = [-b / (a * a), 1.0 / a, 0.0];
    Ok(FitResult {
        a,
        b,
        phase: p[2],
        contrast,
        contrast_sigma: quadratic_form(&covariance, &g).max(0.0).sqrt(),
        covariance,
        chi2: cost,
        dof: points.len() - 3,
        iterations,
    })
}

/// Fit of one period-folded time histogram: channel `i` sits at `ω_m t_i = 2πi/n`.
/// Weights are Poisson, `σ² = max(counts, 1)`.
pub fn fit_time_series(record: &CountsRecord, omega_m: f64) -> Result<FitResult> {
    if !(omega_m > 0.0 && omega_m.is_finite()) {
        return Err(Error::invalid(format!("MIEZE frequency must be positive, got {omega_m}")));
    }
    let n = record.counts.len();
    if n < 4 {
        return Err(Error::Fit(format!("need at least 4 time channels, got {n}")));
    }
    if record.total() == 0 {
        return Err(Error::Fit("all channels are empty".into()));
    }
    let period = TAU / omega_m;
    let points: Vec<PhasePoint> = record
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let t = period * i as f64 / n as f64;
            PhasePoint {
                phase: omega_m * t,
                value: c as f64,
                sigma: (c.max(1) as f64).sqrt(),
            }
        })
        .collect();
    fit_cosine(&points)
}

/// Widest arc covered by the phases on the circle.
pub fn phase_coverage(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    let mut w: Vec<f64> = phases.iter().map(|p| p.rem_euclid(TAU)).collect();
    w.sort_by(f64::total_cmp);
    let mut gap = w[0] + TAU - w[w.len() - 1];
    for pair in w.windows(2) {
        gap = gap.max(pair[1] - pair[0]);
    }
    TAU - gap
}

/// Global fit of `A + B cos(θ + φ₀)` over points spanning more than π of phase.
pub fn fit_global(points: &[PhasePoint]) -> Result<FitResult> {
    check_points(points)?;
    let phases: Vec<f64> = points.iter().map(|p| p.phase).collect();
    let cover = phase_coverage(&phases);
    if cover <= PI {
        return Err(Error::Fit(format!("phases cover only {cover:.3} rad, need more than π")));
    }
    fit_cosine(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Classical,
    Quantum,
    Unphysical,
}

pub fn classify(s: f64) -> Classification {
    let s = s.abs();
    if s <= CLASSICAL_BOUND + CLASSICAL_SLACK {
        Classification::Classical
    } else if s <= TSIRELSON_BOUND + QUANTUM_SLACK {
        Classification::Quantum
    } else {
        Classification::Unphysical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationGrid {
    /// `values[i][j] = E(αᵢ, γⱼ)`.
    pub values: [[f64; 2]; 2],
    pub sigmas: [[f64; 2]; 2],
    /// ∂E/∂(A, B, φ₀) for each entry.
    gradients: [[[f64; 3]; 2]; 2],
    covariance: [[f64; 3]; 3],
}

/// `E(αᵢ, γⱼ) = C cos(αᵢ + γⱼ + φ₀)` with first-order uncertainties.
pub fn expectation_grid(fit: &FitResult, settings: &WitnessSettings) -> Result<ExpectationGrid> {
    settings.validate()?;
    let (a, b) = (fit.a, fit.b);
    let mut values = [[0.0; 2]; 2];
    let mut sigmas = [[0.0; 2]; 2];
    let mut gradients = [[[0.0; 3]; 2]; 2];
    for (i, alpha) in settings.alphas().into_iter().enumerate() {
        for (j, gamma) in settings.gammas().into_iter().enumerate() {
            let (s, c) = (alpha + gamma + fit.phase).sin_cos();
            values[i][j] = b / a * c;
            let g = [-b / (a * a) * c, c / a, -b / a * s];
            sigmas[i][j] = quadratic_form(&fit.covariance, &g).max(0.0).sqrt();
            gradients[i][j] = g;
        }
    }
    Ok(ExpectationGrid {
        values,
        sigmas,
        gradients,
        covariance: fit.covariance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessResult {
    pub e_matrix: [[f64; 2]; 2],
    pub e_sigma: [[f64; 2]; 2],
    pub s: f64,
    pub sigma_s: f64,
    pub classification: Classification,
}

/// S from four expectation values; σ_S is the quadrature sum of the σ_E.
pub fn witness(e: [[f64; 2]; 2], sigma: [[f64; 2]; 2]) -> Result<WitnessResult> {
    if e.iter().chain(sigma.iter()).flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("expectation values and uncertainties must be finite"));
    }
    let s = chsh_combination(e);
    let sigma_s = sigma.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    Ok(WitnessResult {
        e_matrix: e,
        e_sigma: sigma,
        s,
        sigma_s,
        classification: classify(s),
    })
}

/// S from a fitted grid, propagating the full (A, B, φ₀) covariance.
pub fn witness_from_grid(grid: &ExpectationGrid) -> Result<WitnessResult> {
    let mut r = witness(grid.values, grid.sigmas)?;
    let sign = [[1.0, 1.0], [1.0, -1.0]];
    let mut g = [0.0; 3];
    for i in 0..2 {
        for j in 0..2 {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += sign[i][j] * grid.gradients[i][j][k];
            }
        }
    }
    r.sigma_s = quadratic_form(&grid.covariance, &g).max(0.0).sqrt();
    Ok(r)
}

pub fn witness_from_fit(fit: &FitResult, settings: &WitnessSettings) -> Result<WitnessResult> {
    witness_from_grid(&expectation_grid(fit, settings)?)
}

/// `2√2 C`, the witness of a maximally entangled state seen with contrast C.
pub fn witness_from_contrast(contrast: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&contrast) {
        return Err(Error::invalid(format!("contrast must lie in [0, 1], got {contrast}")));
    }
    Ok(TSIRELSON_BOUND * contrast)
}

/// How the phase-resolved intensity of each scan point is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntensityPath {
    /// Counts of one time channel.
    #[default]
    SingleChannel,
    /// Per-point cosine fit over all channels, evaluated at the reference channel.
    ChannelFits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub settings: WitnessSettings,
    pub reference_channel: usize,
    pub path: IntensityPath,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            settings: WitnessSettings::default(),
            reference_channel: DEFAULT_REFERENCE_CHANNEL,
            path: IntensityPath::SingleChannel,
        }
    }
}

/// Scan point chosen for one count-based expectation term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPick {
    pub current: f64,
    pub offset: f64,
    /// Distance of the point's phase from the target, rad.
    pub miss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountWitness {
    pub witness: WitnessResult,
    /// `picks[i][j][k][l]` holds the point used for `N(αᵢ + kπ, γⱼ + lπ)`.
    pub picks: [[[[CountPick; 2]; 2]; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanAnalysis {
    pub fit: FitResult,
    pub witness: WitnessResult,
    /// Settings after absorbing the fitted phase origin into the spin angles.
    pub aligned_settings: WitnessSettings,
    pub points: Vec<PhasePoint>,
    pub count_witness: Option<CountWitness>,
}

fn reference_intensity(
    record: &CountsRecord,
    plan: &ScanPlan,
    options: &AnalysisOptions,
    omega_m: f64,
) -> Result<(f64, f64)> {
    let n0 = plan.counts_scale;
    match options.path {
        IntensityPath::SingleChannel => {
            let c = record.counts[options.reference_channel] as f64;
            Ok((c / n0, c.max(1.0).sqrt() / n0))
        }
        IntensityPath::ChannelFits => {
            let fit = fit_time_series(record, omega_m)?;
            let x = plan.channel_phase(options.reference_channel);
            Ok((fit.model(x) / n0, fit.model_sigma(x) / n0))
        }
    }
}

fn check_records(records: &[CountsRecord], plan: &ScanPlan, options: &AnalysisOptions) -> Result<()> {
    plan.validate()?;
    if records.is_empty() {
        return Err(Error::DegenerateData("no scan points".into()));
    }
    if options.reference_channel >= plan.channels {
        return Err(Error::invalid(format!(
            "reference channel {} outside 0..{}",
            options.reference_channel, plan.channels
        )));
    }
    if let Some(r) = records.iter().find(|r| r.counts.len() != plan.channels) {
        return Err(Error::invalid(format!(
            "point ({}, {}) has {} channels, plan has {}",
            r.current,
            r.offset,
            r.counts.len(),
            plan.channels
        )));
    }
    Ok(())
}

/// Scan → phase-resolved intensities → global fit → witness.
///
/// Each point sits at the calibrated phase `α(I) + γ(δ)`. The fitted phase
/// origin φ₀ is absorbed into the spin angles, so `options.settings` are
/// read relative to the observed phase origin.
pub fn analyze_scan(
    cfg: &BeamlineConfig,
    plan: &ScanPlan,
    records: &[CountsRecord],
    options: &AnalysisOptions,
) -> Result<ScanAnalysis> {
    check_records(records, plan, options)?;
    let omega_m = crate::beamline::mieze_frequency(cfg)?;
    let points: Vec<PhasePoint> = records
        .par_iter()
        .map(|r| {
            let phase = point_phase(cfg, plan, r.current, r.offset)?;
            let (value, sigma) = reference_intensity(r, plan, options, omega_m)?;
            Ok(PhasePoint { phase, value, sigma })
        })
        .collect::<Result<_>>()?;
    let fit = fit_global(&points)?;
    let aligned_settings = options.settings.shift_alpha(-fit.phase);
    let witness = witness_from_fit(&fit, &aligned_settings)?;
    let count_witness = count_witness(&points, records, options, &fit).ok();
    Ok(ScanAnalysis {
        fit,
        witness,
        aligned_settings,
        points,
        count_witness,
    })
}

/// Count-based witness: every `E` from four raw counts at the scan points whose
/// phase lies nearest `αᵢ + γⱼ + (k + l)π − φ₀`.
fn count_witness(
    points: &[PhasePoint],
    records: &[CountsRecord],
    options: &AnalysisOptions,
    fit: &FitResult,
) -> Result<CountWitness> {
    let pick = |target: f64| -> (usize, CountPick) {
        let mut best = 0;
        let mut best_key = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for (p, q) in points.iter().enumerate() {
            let miss = wrap_pi(q.phase - target).abs();
            let key = (miss, records[p].current.abs(), records[p].offset.abs());
            let better = key.0 < best_key.0 - 1e-12
                || ((key.0 - best_key.0).abs() <= 1e-12 && (key.1, key.2) < (best_key.1, best_key.2));
            if better {
                best = p;
                best_key = key;
            }
        }
        (
            best,
            CountPick {
                current: records[best].current,
                offset: records[best].offset,
                miss: best_key.0,
            },
        )
    };
    let ch = options.reference_channel;
    let s = &options.settings;
    let placeholder = CountPick {
        current: 0.0,
        offset: 0.0,
        miss: 0.0,
    };
    let mut picks = [[[[placeholder; 2]; 2]; 2]; 2];
    let mut e = [[0.0; 2]; 2];
    let mut sigma = [[0.0; 2]; 2];
    for (i, alpha) in s.alphas().into_iter().enumerate() {
        for (j, gamma) in s.gammas().into_iter().enumerate() {
            let mut n = [[0.0; 2]; 2];
            for k in 0..2 {
                for l in 0..2 {
                    let target = alpha + gamma + (k + l) as f64 * PI - fit.phase;
                    let (p, info) = pick(target);
                    n[k][l] = records[p].counts[ch] as f64;
                    picks[i][j][k][l] = info;
                }
            }
            e[i][j] = expectation_from_counts(&PhaseCounts(n))?;
            let total: f64 = n.iter().flatten().sum();
            // Poisson: var E = Σ (∂E/∂N)² N with ∂E/∂N_kl = ((−1)^{k+l} − E)/total
            let var: f64 = (0..2)
                .flat_map(|k| (0..2).map(move |l| (k, l)))
                .map(|(k, l)| {
                    let sign = if (k + l) % 2 == 0 { 1.0 } else { -1.0 };
                    ((sign - e[i][j]) / total).powi(2) * n[k][l]
                })
                .sum();
            sigma[i][j] = var.sqrt();
        }
    }
    Ok(CountWitness {
        witness: witness(e, sigma)?,
        picks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub sigma_s: f64,
    pub mean_s: f64,
    pub resamples: usize,
    pub failures: usize,
}

/// σ_S from refits of Poisson-resampled counts. Resample `r` draws from the
/// stream `r` of a generator seeded with `seed`.
pub fn bootstrap_uncertainty(
    cfg: &BeamlineConfig,
    plan: &ScanPlan,
    records: &[CountsRecord],
    options: &AnalysisOptions,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if resamples < MIN_RESAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_RESAMPLES} resamples, got {resamples}")));
    }
    check_records(records, plan, options)?;
    let outcomes: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let means = records.iter().flat_map(|rec| rec.counts.iter().map(|&c| c as f64));
            let draws = poisson_counts(seed, r as u64, means).ok()?;
            let n = plan.channels;
            let resampled: Vec<CountsRecord> = records
                .iter()
                .zip(draws.chunks(n))
                .map(|(rec, c)| CountsRecord {
                    counts: c.to_vec(),
                    ..rec.clone()
                })
                .collect();
            analyze_scan(cfg, plan, &resampled, options).ok().map(|a| a.witness.s)
        })
        .collect();
    let values: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let failures = resamples - values.len();
    if failures as f64 > MAX_FAILED_FRACTION * resamples as f64 {
        return Err(Error::Fit(format!("{failures} of {resamples} bootstrap refits failed")));
    }
    let m = values.len() as f64;
    let mean_s = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|s| (s - mean_s).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(BootstrapResult {
        sigma_s: var.sqrt(),
        mean_s,
        resamples,
        failures,
    })
}
