use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;

use mieze_core::analysis::{classify, fit_cosine, fit_global, Classification, PhasePoint};
use mieze_core::beamline::{focusing_distance, BeamlineConfig};
use mieze_core::quantum::{
    chsh_value, expectation_from_counts, joint_expectation, wrap_pi, PhaseCounts, SpinEnergyState, WitnessSettings,
    TSIRELSON_BOUND,
};
use mieze_core::wavepacket::{apply_rf_flipper, apply_spin_phase_k, PacketShape, PacketState, WavePacketSpec};

fn state() -> impl Strategy<Value = SpinEnergyState> {
    prop::array::uniform4((-1.0f64..1.0, -1.0f64..1.0))
        .prop_filter("non-zero", |a| a.iter().any(|(r, i)| r.abs() + i.abs() > 1e-3))
        .prop_map(|a| {
            SpinEnergyState {
                amps: a.map(|(r, i)| Complex64::new(r, i)),
            }
            .normalized()
            .unwrap()
        })
}

fn angle() -> impl Strategy<Value = f64> {
    -TAU..TAU
}

fn shape() -> impl Strategy<Value = PacketShape> {
    prop_oneof![
        Just(PacketShape::Gaussian),
        Just(PacketShape::Triangular),
        Just(PacketShape::Rectangular)
    ]
}

fn cosine_points(a: f64, b: f64, phi: f64, n: usize, offset: f64) -> Vec<PhasePoint> {
    (0..n)
        .map(|i| {
            let x = offset + TAU * i as f64 / n as f64;
            PhasePoint {
                phase: x,
                value: a + b * (x + phi).cos(),
                sigma: 0.1,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chsh_within_tsirelson(s in state(), a1 in angle(), a2 in angle(), g1 in angle(), g2 in angle()) {
        let set = WitnessSettings::new(a1, a2, g1, g2).unwrap();
        prop_assert!(chsh_value(&s, &set).unwrap().abs() <= TSIRELSON_BOUND + 1e-9);
    }

    #[test]
    fn correlations_bounded(s in state(), a in angle(), g in angle()) {
        prop_assert!(joint_expectation(&s, a, g).unwrap().abs() <= 1.0);
    }

    #[test]
    fn count_estimator_scale_invariant(n in prop::array::uniform4(0.0f64..1e5), k in 1e-3f64..1e3) {
        prop_assume!(n.iter().sum::<f64>() > 0.0);
        let c = PhaseCounts([[n[0], n[1]], [n[2], n[3]]]);
        let scaled = PhaseCounts(c.0.map(|r| r.map(|v| v * k)));
        let a = expectation_from_counts(&c).unwrap();
        prop_assert!((a - expectation_from_counts(&scaled).unwrap()).abs() < 1e-12);
        prop_assert!(a.abs() <= 1.0);
    }

    #[test]
    fn packet_norm_conserved(
        shape in shape(),
        lambda_nm in 0.3f64..1.0,
        bw in 0.001f64..0.15,
        bl in -5e-4f64..5e-4,
        f1 in 1e4f64..2e5,
        df in 1e3f64..5e4,
        l1 in 0.01f64..0.5,
    ) {
        let spec = WavePacketSpec::new(shape, lambda_nm * 1e-9, bw).with_samples(512);
        let s = PacketState::new(&spec).unwrap();
        let s = apply_spin_phase_k(&s, bl).unwrap();
        let s = apply_rf_flipper(&s, TAU * f1, 0.0).unwrap();
        let s = apply_rf_flipper(&s, TAU * (f1 + df), l1).unwrap();
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_fit_round_trip(a in 0.1f64..100.0, c in 0.01f64..1.0, phi in -3.1f64..3.1, n in 5usize..40) {
        let f = fit_cosine(&cosine_points(a, a * c, phi, n, 0.3)).unwrap();
        prop_assert!((f.a - a).abs() <= 1e-9 * a);
        prop_assert!((f.contrast - c).abs() <= 1e-9);
        prop_assert!(wrap_pi(f.phase - phi).abs() <= 1e-9);
        prop_assert!(f.b >= 0.0 && f.phase > -PI && f.phase <= PI);
    }

    #[test]
    fn global_fit_equivariant(a in 0.2f64..2.0, c in 0.05f64..1.0, phi in -3.0f64..3.0, d in -10.0f64..10.0) {
        let base = cosine_points(a, a * c, phi, 24, 0.0);
        let shifted: Vec<PhasePoint> = base.iter().map(|p| PhasePoint { phase: p.phase + d, ..*p }).collect();
        let f0 = fit_global(&base).unwrap();
        let f1 = fit_global(&shifted).unwrap();
        prop_assert!(wrap_pi(f1.phase - f0.phase + d).abs() < 1e-8);
        prop_assert!((f1.contrast - f0.contrast).abs() < 1e-10);
    }

    #[test]
    fn classification_consistent(s in -4.0f64..4.0) {
        let expected = if s.abs() <= 2.0 {
            Classification::Classical
        } else if s.abs() <= TSIRELSON_BOUND {
            Classification::Quantum
        } else {
            Classification::Unphysical
        };
        prop_assert_eq!(classify(s), expected);
    }

    #[test]
    fn focus_independent_of_wavelength(lambda_nm in 0.2f64..1.0, f1 in 1e4f64..2e5, df in 1e3f64..5e4) {
        let base = BeamlineConfig { f1, f2: f1 + df, ..BeamlineConfig::cg4b_10khz() };
        let a = focusing_distance(&base, 0.0).unwrap();
        let b = focusing_distance(&BeamlineConfig { wavelength: lambda_nm * 1e-9, ..base }, 0.0).unwrap();
        prop_assert_eq!(a, b);
    }
}
