use std::f64::consts::TAU;

use mieze_core::analysis::{
    analyze_scan, bootstrap_uncertainty, expectation_grid, fit_time_series, witness_from_contrast, AnalysisOptions,
    Classification, IntensityPath,
};
use mieze_core::beamline::{mieze_frequency, BeamlineConfig};
use mieze_core::quantum::wrap_pi;
use mieze_core::synth::{expected_counts, normalize, simulate_scan, CountsRecord, IntensityModel, ScanPlan};
use mieze_core::wavepacket::{contrast_envelope, envelope_half_width, PacketShape, WavePacketSpec};

fn cg4b() -> (BeamlineConfig, ScanPlan) {
    (BeamlineConfig::cg4b_10khz(), ScanPlan::cg4b_10khz(0))
}

#[test]
fn round_trip_coverage_channel_fits() {
    let (cfg, plan) = cg4b();
    let truth = witness_from_contrast(cfg.effective_contrast()).unwrap();
    let opts = AnalysisOptions {
        path: IntensityPath::ChannelFits,
        ..Default::default()
    };
    let trials = 100;
    let mut covered = 0;
    for seed in 0..trials {
        let plan = ScanPlan { seed, ..plan.clone() };
        let recs = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
        let w = analyze_scan(&cfg, &plan, &recs, &opts).unwrap().witness;
        if (w.s - truth).abs() <= 3.0 * w.sigma_s {
            covered += 1;
        }
    }
    assert!(covered as f64 >= 0.95 * trials as f64, "{covered}/{trials}");
}

#[test]
fn low_contrast_is_classical() {
    let cfg = BeamlineConfig {
        contrast: 0.5 / 0.96,
        ..BeamlineConfig::cg4b_10khz()
    };
    let plan = ScanPlan::cg4b_10khz(4);
    let recs = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
    let a = analyze_scan(&cfg, &plan, &recs, &AnalysisOptions::default()).unwrap();
    assert_eq!(a.witness.classification, Classification::Classical);
    assert!((a.witness.s - 1.414).abs() < 0.02);
}

#[test]
fn expectations_bounded_by_contrast() {
    let (cfg, plan) = cg4b();
    for seed in 0..20 {
        let plan = ScanPlan { seed, ..plan.clone() };
        let recs = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
        let a = analyze_scan(&cfg, &plan, &recs, &AnalysisOptions::default()).unwrap();
        let g = expectation_grid(&a.fit, &a.aligned_settings).unwrap();
        assert!(g.values.iter().flatten().all(|e| e.abs() <= a.fit.contrast + 1e-12));
        assert!(a.witness.s.abs() <= 2.0 * 2f64.sqrt() * a.fit.contrast + 3.0 * a.witness.sigma_s);
    }
}

#[test]
fn sigma_scales_with_inverse_root_counts() {
    let cfg = BeamlineConfig::cg4b_10khz();
    let opts = AnalysisOptions::default();
    let sigma = |n0: f64| {
        let plan = ScanPlan {
            counts_scale: n0,
            ..ScanPlan::cg4b_10khz(21)
        };
        let recs = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
        let analytic = analyze_scan(&cfg, &plan, &recs, &opts).unwrap().witness.sigma_s;
        let boot = bootstrap_uncertainty(&cfg, &plan, &recs, &opts, 200, 5).unwrap();
        assert!((boot.sigma_s / analytic - 1.0).abs() < 0.3, "N0 {n0}: {} vs {analytic}", boot.sigma_s);
        boot.sigma_s
    };
    let s = [sigma(1e3), sigma(1e4), sigma(1e5)];
    for w in s.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.3, "ratio {ratio}");
    }
}

#[test]
fn contrast_recovery_calibration() {
    let cfg = BeamlineConfig::cg4b_10khz();
    let wm = mieze_frequency(&cfg).unwrap();
    let plan = ScanPlan::new(vec![-0.95], vec![0.01], 8600.0, 0);
    let truth = cfg.effective_contrast();
    let trials = 1000;
    let mut covered = 0;
    for seed in 0..trials {
        let recs = simulate_scan(&cfg, &ScanPlan { seed, ..plan.clone() }, &IntensityModel::Ideal).unwrap();
        let f = fit_time_series(&recs[0], wm).unwrap();
        if (f.contrast - truth).abs() <= 3.0 * f.contrast_sigma {
            covered += 1;
        }
    }
    assert!(covered as f64 >= 0.99 * trials as f64, "{covered}/{trials}");
}

#[test]
fn zero_contrast_fit_is_flat() {
    let cfg = BeamlineConfig {
        contrast: 0.0,
        ..BeamlineConfig::cg4b_10khz()
    };
    let wm = mieze_frequency(&cfg).unwrap();
    let plan = ScanPlan::new(vec![-0.95], vec![0.0], 8600.0, 3);
    let recs = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
    let f = fit_time_series(&recs[0], wm).unwrap();
    assert!(f.b < 4.0 * f.sigma(1) + 1e-9, "B = {} ± {}", f.b, f.sigma(1));
}

#[test]
fn normalization_preserves_fitted_phase() {
    let (cfg, plan) = cg4b();
    let wm = mieze_frequency(&cfg).unwrap();
    let recs = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
    let raw = fit_time_series(&recs[40], wm).unwrap();
    let rel = normalize(&recs[40], plan.counts_scale).unwrap();
    let points: Vec<_> = rel
        .iter()
        .enumerate()
        .map(|(i, v)| mieze_core::analysis::PhasePoint {
            phase: TAU * i as f64 / rel.len() as f64,
            value: *v,
            sigma: (recs[40].counts[i].max(1) as f64).sqrt() / plan.counts_scale,
        })
        .collect();
    let scaled = mieze_core::analysis::fit_cosine(&points).unwrap();
    assert!(wrap_pi(raw.phase - scaled.phase).abs() < 1e-9);
    assert!((raw.contrast - scaled.contrast).abs() < 1e-9);
}

#[test]
fn wavepacket_model_reproduces_cg4b_witness() {
    let (cfg, plan) = cg4b();
    let model = IntensityModel::WavePacket(WavePacketSpec::from_beamline(&cfg, PacketShape::Gaussian));
    let recs = simulate_scan(&cfg, &plan, &model).unwrap();
    let a = analyze_scan(&cfg, &plan, &recs, &AnalysisOptions::default()).unwrap();
    assert!((a.witness.s - 2.404).abs() < 5.0 * a.witness.sigma_s, "{:?}", a.witness);
}

#[test]
fn broad_band_narrows_envelope() {
    let narrow = BeamlineConfig::cg4b_10khz();
    let broad = BeamlineConfig {
        bandwidth: 0.116,
        ..narrow
    };
    // branch separation reaches β after (β/λ) energy-phase turns: decimetres broad, tens of metres narrow
    let deltas: Vec<f64> = (0..=50).map(|i| i as f64 * 20e-3).collect();
    let env_b = contrast_envelope(&broad, &WavePacketSpec::from_beamline(&broad, PacketShape::Triangular), &deltas).unwrap();
    let env_n = contrast_envelope(&narrow, &WavePacketSpec::from_beamline(&narrow, PacketShape::Gaussian), &deltas).unwrap();
    assert!(env_n.iter().all(|p| p.contrast > 0.99));
    let hw = envelope_half_width(&env_b).expect("broad-band envelope drops below half");
    assert!(hw > 0.1 && hw < 1.0, "{hw}");
    assert!(envelope_half_width(&env_n).is_none());
}

#[test]
fn expected_counts_are_plan_consistent() {
    let (cfg, plan) = cg4b();
    let recs: Vec<CountsRecord> = simulate_scan(&cfg, &plan, &IntensityModel::Ideal).unwrap();
    assert_eq!(recs.len(), 195);
    for (p, r) in recs.iter().enumerate() {
        assert_eq!(r.counts.len(), plan.channels);
        let (i, d) = plan.point(p);
        assert_eq!((r.current, r.offset), (i, d));
    }
    let means = expected_counts(&cfg, &plan, &IntensityModel::Ideal, -0.93, 0.0).unwrap();
    assert_eq!(means.len(), 16);
}
