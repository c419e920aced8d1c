use mpcorr_core::calibration::{apply_inverse, fit_inverse_map, is_monotone};
use mpcorr_core::metrics::{compute_spg, enob_from_hdr, gain_db, rms_error};
use mpcorr_core::studies::{calibration_order_study, sinusoid_static_outputs, spg_point, spg_scaling, SpgConfig};
use proptest::prelude::*;

#[test]
fn order_study_improves_then_plateaus_at_fifth_order() {
    let orders: Vec<usize> = (1..=7).collect();
    for noise in [0.0, 1e-3] {
        let study = calibration_order_study(1024, 5, 0.25, noise, &orders, 3).unwrap();
        for w in study.windows(2) {
            assert!(w[1].train_rms <= w[0].train_rms * (1.0 + 1e-9), "{:?}", study);
        }
        let (fifth, sixth) = (study[4].train_rms, study[5].train_rms);
        assert!(fifth - sixth < 0.1 * fifth, "order 6 improves {fifth} -> {sixth}");
        // Low orders cannot follow the compressive map.
        assert!(study[0].train_rms > 5.0 * fifth);
    }
}

#[test]
fn held_out_sinusoid_round_trip_reaches_minus_forty_db() {
    let study = calibration_order_study(1024, 5, 0.25, 0.0, &[5], 0).unwrap();
    assert!(study[0].test_rms <= 10f64.powf(-40.0 / 20.0), "{}", study[0].test_rms);
}

#[test]
fn fitted_map_on_monotone_sinusoid_outputs_is_monotone() {
    let phases: Vec<f64> = (0..=180).map(|d| d as f64).collect();
    let truth: Vec<f64> = phases.iter().map(|p| p.to_radians().cos()).collect();
    let mut checked = 0;
    for n in [64, 128, 256, 512, 1024, 2048] {
        for cycles in [1, 3, 5] {
            let raw = sinusoid_static_outputs(&phases, n, cycles, 0.25).unwrap();
            if !raw.windows(2).all(|w| w[1] <= w[0]) {
                continue;
            }
            let model = fit_inverse_map(&raw, &truth, 5).unwrap();
            assert!(model.monotone && is_monotone(&model), "n = {n}, cycles = {cycles}");
            checked += 1;
        }
    }
    assert!(checked >= 10, "only {checked} monotone datasets");
}

#[test]
fn spg_at_1024_is_near_the_length_error_limit() {
    let point = spg_point(1024, &SpgConfig::default(), 7).unwrap();
    let theory = 20.0 * (1024f64).sqrt().log10();
    assert!((point.spg_mp_db - theory).abs() <= 1.5, "{point:?}");
    assert!((point.test_rms_db - point.train_rms_db).abs() <= 1.0, "{point:?}");
}

#[test]
fn spg_gains_three_db_per_doubling() {
    let lengths = [64, 128, 256, 512, 1024, 2048, 4096];
    let points = spg_scaling(&lengths, &SpgConfig::default(), 7).unwrap();
    for w in points.windows(2) {
        let gain = w[1].spg_mp_db - w[0].spg_mp_db;
        assert!((gain - 3.0).abs() <= 0.75, "{} -> {}: {gain}", w[0].n, w[1].n);
    }
}

#[test]
fn identity_round_trip() {
    let r: Vec<f64> = (0..50).map(|k| -0.98 + 0.04 * k as f64).collect();
    let model = fit_inverse_map(&r, &r, 5).unwrap();
    for &v in &r {
        assert!((apply_inverse(&model, v).value - v).abs() < 1e-10);
    }
    let report = compute_spg(&r, &r).unwrap();
    assert_eq!(report.spg_db, 200.0);
}

proptest! {
    #[test]
    fn smooth_monotone_data_gives_monotone_fit(
        a in 0.5f64..2.0,
        b in 0.0f64..0.5,
        c in 0.0f64..1.0,
        d in 0.2f64..2.0,
        scale in 1e-4f64..1e3,
    ) {
        // Slopes stay within a small ratio, so the inverse map is smooth.
        let r: Vec<f64> = (0..400).map(|k| -1.0 + 2.0 * k as f64 / 399.0).collect();
        let raw: Vec<f64> = r.iter().map(|&v| scale * (a * v + a * b * v.powi(3) + a * c * (d * v).tanh())).collect();
        let model = fit_inverse_map(&raw, &r, 5).unwrap();
        prop_assert!(model.monotone);
    }

    #[test]
    fn enob_from_measured_hdr_is_reproducible(
        errors in prop::collection::vec(-0.1f64..0.1, 2..200),
    ) {
        let truth = vec![0.0; errors.len()];
        let enob = |e: &[f64]| enob_from_hdr(gain_db(rms_error(e, &truth).unwrap()));
        let first = enob(&errors);
        let again = enob(&errors.clone());
        prop_assert_eq!(first.to_bits(), again.to_bits());
    }
}
