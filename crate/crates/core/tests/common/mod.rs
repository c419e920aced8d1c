#![allow(dead_code)]

use mpcorr_core::rng::rng_from_seed;
use mpcorr_core::Nonlinearity;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent `h` implementation used by the oracles.
pub fn h(nl: &Nonlinearity, x: f64) -> f64 {
    match *nl {
        Nonlinearity::Relu => x.max(0.0),
        Nonlinearity::Power { eta } => x.max(0.0).powf(1.0 / (eta - 1.0)),
        Nonlinearity::Softplus { temperature } => {
            let u = x / temperature;
            if u > 30.0 {
                x
            } else {
                temperature * u.exp().ln_1p()
            }
        }
    }
}

/// Fixed-step bisection on `sum h(o - z) = gamma`, run to a 1e-12 bracket.
pub fn bisection_oracle(ops: &[f64], gamma: f64, nl: &Nonlinearity) -> f64 {
    let f = |z: f64| ops.iter().map(|&o| h(nl, o - z)).sum::<f64>() - gamma;
    let top = ops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = top - gamma - 1.0;
    while f(lo) < 0.0 {
        lo -= 2.0 * (top - lo).abs() + 1.0;
    }
    let mut hi = top;
    while f(hi) > 0.0 {
        hi += 2.0 * (hi - lo).abs() + 1.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_from_seed(seed)
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
