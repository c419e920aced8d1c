//! Compressive spectrum recovery with CoSaMP.
//!
//! The spectrum lives in the orthonormal DCT-II basis over `bins` samples.
//! Each of the `K` templates is a randomly chosen basis row reduced to its sign
//! pattern and modulated by a random +/-1 chip sequence, so templates stay
//! binary and the sensing matrix behaves like a random sign matrix.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Backend;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const MAX_ITERATIONS: usize = 50;
const RESIDUAL_TOL: f64 = 1e-6;
const RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressiveConfig {
    pub k_templates: usize,
    pub sparsity: usize,
    pub bins: usize,
    pub seed: u64,
}

impl CompressiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity >= 1 && self.sparsity < self.k_templates && self.k_templates < self.bins) {
            return Err(Error::InputDomain(format!(
                "need 1 <= sparsity < k_templates < bins, got {} / {} / {}",
                self.sparsity, self.k_templates, self.bins
            )));
        }
        Ok(())
    }
}

/// Orthonormal DCT-II basis vector `k` of length `bins`.
pub fn dct_basis_vector(bins: usize, k: usize) -> Vec<f64> {
    let scale = if k == 0 {
        (1.0 / bins as f64).sqrt()
    } else {
        (2.0 / bins as f64).sqrt()
    };
    (0..bins)
        .map(|i| scale * (PI * (i as f64 + 0.5) * k as f64 / bins as f64).cos())
        .collect()
}

/// Time-domain record `sum_k a_k psi_k`.
pub fn synthesize(coefficients: &[f64]) -> Vec<f64> {
    let bins = coefficients.len();
    let mut out = vec![0.0; bins];
    for (k, &a) in coefficients.iter().enumerate() {
        if a != 0.0 {
            for (o, b) in out.iter_mut().zip(dct_basis_vector(bins, k)) {
                *o += a * b;
            }
        }
    }
    out
}

/// The `K` binary measurement templates generated from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingTemplates {
    pub rows: Vec<usize>,
    pub templates: Vec<Vec<f64>>,
}

pub fn make_templates(k_templates: usize, bins: usize, seed: u64) -> Result<SensingTemplates> {
    if k_templates == 0 || k_templates > bins {
        return Err(Error::InputDomain(format!(
            "cannot draw {k_templates} template rows from {bins} bins"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut rows = sample(&mut rng, bins, k_templates).into_vec();
    rows.sort_unstable();
    let templates = rows
        .iter()
        .map(|&row| {
            dct_basis_vector(bins, row)
                .into_iter()
                .map(|v| {
                    let chip = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    chip * if v < 0.0 { -1.0 } else { 1.0 }
                })
                .collect()
        })
        .collect();
    Ok(SensingTemplates { rows, templates })
}

/// Correlates the record against every template.
pub fn measure(signal: &[f64], templates: &SensingTemplates, backend: &Backend) -> Result<Vec<f64>> {
    templates
        .templates
        .par_iter()
        .map(|t| backend.correlate(signal, t))
        .collect()
}

/// Matrix mapping DCT coefficients to ideal measurements `<psi_k, t_j> / <t_j, t_j>`.
pub fn sensing_matrix(templates: &SensingTemplates, bins: usize) -> DMatrix<f64> {
    let basis: Vec<Vec<f64>> = (0..bins).map(|k| dct_basis_vector(bins, k)).collect();
    DMatrix::from_fn(templates.templates.len(), bins, |j, k| {
        let t = &templates.templates[j];
        let energy: f64 = t.iter().map(|v| v * v).sum();
        t.iter().zip(&basis[k]).map(|(a, b)| a * b).sum::<f64>() / energy
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosampResult {
    pub estimate: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final residual norm relative to the measurement norm.
    pub relative_residual: f64,
}

fn largest(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

fn least_squares_on(a: &DMatrix<f64>, support: &[usize], m: &DVector<f64>) -> Vec<f64> {
    let sub = a.select_columns(support);
    let mut gram = sub.transpose() * &sub;
    let ridge = RIDGE * gram.trace() / support.len() as f64;
    for i in 0..support.len() {
        gram[(i, i)] += ridge;
    }
    let rhs = sub.transpose() * m;
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs).iter().copied().collect(),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|_| vec![0.0; support.len()]),
    }
}

/// CoSaMP on the sensing matrix built from `template_matrix_seed`.
///
/// Stops when the residual falls below `1e-6` relative to the measurements or
/// after 50 iterations; the best iterate is returned either way.
pub fn cosamp_recover(
    measurements: &[f64],
    template_matrix_seed: u64,
    config: &CompressiveConfig,
) -> Result<CosampResult> {
    config.validate()?;
    if measurements.len() != config.k_templates {
        return Err(Error::LengthMismatch {
            expected: config.k_templates,
            actual: measurements.len(),
        });
    }
    let templates = make_templates(config.k_templates, config.bins, template_matrix_seed)?;
    let a = sensing_matrix(&templates, config.bins);
    cosamp_with_matrix(measurements, &a, config.sparsity)
}

pub fn cosamp_with_matrix(measurements: &[f64], a: &DMatrix<f64>, sparsity: usize) -> Result<CosampResult> {
    let bins = a.ncols();
    let m = DVector::from_column_slice(measurements);
    let m_norm = m.norm();
    if m_norm == 0.0 {
        return Ok(CosampResult {
            estimate: vec![0.0; bins],
            converged: true,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut estimate = DVector::zeros(bins);
    let mut residual = m.clone();
    let mut best = (1.0, estimate.clone());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let proxy: Vec<f64> = (a.transpose() * &residual).iter().copied().collect();
        let mut support = largest(&proxy, 2 * sparsity);
        support.extend((0..bins).filter(|&k| estimate[k] != 0.0));
        support.sort_unstable();
        support.dedup();
        let b = least_squares_on(a, &support, &m);
        let keep = largest(&b, sparsity);
        let mut next = DVector::zeros(bins);
        for &j in &keep {
            next[support[j]] = b[j];
        }
        // Refit on the pruned support so the final coefficients are exact.
        let pruned: Vec<usize> = keep.iter().map(|&j| support[j]).collect();
        let refit = least_squares_on(a, &pruned, &m);
        for (&k, v) in pruned.iter().zip(refit) {
            next[k] = v;
        }
        estimate = next;
        residual = &m - a * &estimate;
        let rel = residual.norm() / m_norm;
        if rel < best.0 {
            best = (rel, estimate.clone());
        }
        if rel < RESIDUAL_TOL {
            converged = true;
            break;
        }
    }
    Ok(CosampResult {
        estimate: best.1.iter().copied().collect(),
        converged,
        iterations,
        relative_residual: best.0,
    })
}

/// `10 log10(|truth|^2 / |truth - estimate|^2)`, capped at 200 dB.
pub fn reconstruction_snr_db(truth: &[f64], estimate: &[f64]) -> f64 {
    let signal: f64 = truth.iter().map(|v| v * v).sum();
    let error: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b).powi(2)).sum();
    if error == 0.0 {
        200.0
    } else {
        (10.0 * (signal / error).log10()).min(200.0)
    }
}

/// Random `sparsity`-sparse coefficient vector with magnitudes in `[0.5, 1.5]`.
pub fn planted_spectrum(bins: usize, sparsity: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut coefficients = vec![0.0; bins];
    for k in sample(&mut rng, bins, sparsity) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        coefficients[k] = sign * rng.random_range(0.5..1.5);
    }
    coefficients
}
