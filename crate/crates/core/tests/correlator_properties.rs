mod common;

use common::mean_and_se;
use mpcorr_core::correlator::{
    gen_correlated, gen_sinusoid_pair, mac_correlate, mp_correlate, InputDistribution, InputPair,
};
use mpcorr_core::rng::derive_seed;
use mpcorr_core::studies::{monotonicity_study, MonotonicityConfig};
use mpcorr_core::Nonlinearity;
use proptest::prelude::*;

fn r_grid() -> Vec<f64> {
    (0..19).map(|k| -0.9 + 0.1 * k as f64).collect()
}

#[test]
fn mean_output_increases_with_correlation() {
    let n = 256;
    let gamma = 0.25 * n as f64;
    let grid = r_grid();
    let stats: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let outputs: Vec<f64> = (0..200)
                .map(|t| {
                    let pair = gen_correlated(r, n, InputDistribution::Gaussian, derive_seed(k as u64, t)).unwrap();
                    mp_correlate(&pair, gamma, gamma, &Nonlinearity::Relu)
                        .unwrap()
                        .raw_output
                })
                .collect();
            mean_and_se(&outputs)
        })
        .collect();
    for w in stats.windows(2) {
        let ((m0, s0), (m1, s1)) = (w[0], w[1]);
        let combined = (s0 * s0 + s1 * s1).sqrt();
        assert!(m1 - m0 > 2.0 * combined, "increase {} below 2 SE {}", m1 - m0, combined);
    }
}

#[test]
fn steady_and_transient_expectations_are_monotone() {
    let result = monotonicity_study(&MonotonicityConfig::default(), 11).unwrap();
    assert_eq!(result.r_grid.len(), 19);
    assert_eq!(result.curves.len(), 4);
    for curve in &result.curves {
        assert!(
            curve.is_monotone(),
            "{}: worst violation {}",
            curve.label,
            curve.worst_violation()
        );
    }
}

#[test]
fn mac_estimate_converges_at_one_million_samples() {
    let pair = gen_correlated(0.5, 1_000_000, InputDistribution::Gaussian, 5).unwrap();
    let r = mac_correlate(&pair).unwrap().r_hat.unwrap();
    assert!((r - 0.5).abs() <= 0.002, "{r}");
}

#[test]
fn generator_hits_target_correlation() {
    for (k, dist) in [InputDistribution::Gaussian, InputDistribution::Uniform]
        .into_iter()
        .enumerate()
    {
        let pair = gen_correlated(0.7, 4096, dist, 40 + k as u64).unwrap();
        let r = mac_correlate(&pair).unwrap().r_hat.unwrap();
        assert!((r - 0.7).abs() <= 3.0 / 64.0, "{dist:?}: {r}");
    }
}

#[test]
fn sixty_degree_sinusoids_correlate_at_one_half() {
    let pair = gen_sinusoid_pair(60.0, 1024, 5.0).unwrap();
    let r = mac_correlate(&pair).unwrap().r_hat.unwrap();
    assert!((r - 0.5).abs() <= 1e-10);
    assert!(gen_sinusoid_pair(60.0, 1024, 5.5).is_err());
}

fn nl_for(kind: usize) -> Nonlinearity {
    [
        Nonlinearity::Relu,
        Nonlinearity::Softplus { temperature: 0.2 },
        Nonlinearity::Power { eta: 1.5 },
    ][kind]
}

proptest! {
    #[test]
    fn swapping_inputs_leaves_output_unchanged(
        xy in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..64),
        gamma in 0.1f64..8.0,
        kind in 0usize..3,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let nl = nl_for(kind);
        let a = mp_correlate(&InputPair::new(x.clone(), y.clone()).unwrap(), gamma, gamma, &nl).unwrap();
        let b = mp_correlate(&InputPair::new(y, x).unwrap(), gamma, gamma, &nl).unwrap();
        prop_assert_eq!(a.raw_output, b.raw_output);
    }

    #[test]
    fn negating_one_input_negates_output(
        xy in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..64),
        gamma in 0.1f64..8.0,
        kind in 0usize..3,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let nl = nl_for(kind);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let a = mp_correlate(&InputPair::new(x.clone(), y).unwrap(), gamma, gamma, &nl).unwrap();
        let b = mp_correlate(&InputPair::new(x, neg).unwrap(), gamma, gamma, &nl).unwrap();
        prop_assert!((a.raw_output + b.raw_output).abs() <= 1e-9);
    }

    #[test]
    fn zero_input_gives_zero_output(
        x in prop::collection::vec(-2.0f64..2.0, 1..64),
        gamma in 0.1f64..8.0,
        kind in 0usize..3,
    ) {
        let zeros = vec![0.0; x.len()];
        let out = mp_correlate(&InputPair::new(x, zeros).unwrap(), gamma, gamma, &nl_for(kind)).unwrap();
        prop_assert!(out.raw_output.abs() <= 1e-9);
    }
}
