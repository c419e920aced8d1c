//! Polynomial inverse map from raw correlator output to correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

const MONOTONE_GRID: usize = 1000;

/// Least-squares polynomial `G^-1` fitted on standardized raw outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    /// Ascending-degree coefficients in the raw output variable.
    pub coefficients: Vec<f64>,
    pub order: usize,
    pub input_range: (f64, f64),
    pub trained_on: usize,
    /// Ascending coefficients in `u = (raw - center) / half_width`, used for evaluation.
    pub scaled_coefficients: Vec<f64>,
    pub monotone: bool,
}

/// Result of applying an inverse map to one raw output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseValue {
    pub value: f64,
    /// The polynomial left `[-1, 1]` and was clamped.
    pub clamped: bool,
    /// The raw input lay outside the training range.
    pub extrapolated: bool,
}

impl CalibrationModel {
    fn to_scaled(&self, raw: f64) -> f64 {
        let (lo, hi) = self.input_range;
        let half = 0.5 * (hi - lo);
        (raw - 0.5 * (hi + lo)) / half
    }

    /// Unclamped polynomial value.
    pub fn evaluate(&self, raw: f64) -> f64 {
        let u = self.to_scaled(raw);
        self.scaled_coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// Clamped correlation estimate.
    pub fn predict(&self, raw: f64) -> f64 {
        apply_inverse(self, raw).value
    }
}

/// Fits `true_r ~ poly(raw)` of the given order by least squares.
pub fn fit_inverse_map(raw_outputs: &[f64], true_r: &[f64], order: usize) -> Result<CalibrationModel> {
    if raw_outputs.len() != true_r.len() {
        return Err(Error::LengthMismatch {
            expected: raw_outputs.len(),
            actual: true_r.len(),
        });
    }
    if order == 0 {
        return Err(Error::InputDomain("calibration order must be at least 1".into()));
    }
    check_finite(raw_outputs, "raw output")?;
    check_finite(true_r, "true correlation")?;
    let mut distinct = raw_outputs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < order + 1 {
        return Err(Error::Fit(format!(
            "{} distinct raw outputs cannot determine an order-{order} fit",
            distinct.len()
        )));
    }
    let lo = distinct[0];
    let hi = distinct[distinct.len() - 1];
    let center = 0.5 * (hi + lo);
    let half = 0.5 * (hi - lo);

    let m = raw_outputs.len();
    let design = DMatrix::from_fn(m, order + 1, |i, j| ((raw_outputs[i] - center) / half).powi(j as i32));
    let rhs = DVector::from_column_slice(true_r);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Fit(format!(
            "design matrix is rank deficient (condition {:e})",
            smax / smin
        )));
    }
    let solution = svd.solve(&rhs, 1e-14 * smax).map_err(|e| Error::Fit(e.to_string()))?;
    let scaled: Vec<f64> = solution.iter().copied().collect();

    // Expand sum_k s_k ((raw - center)/half)^k into powers of raw.
    let mut coefficients = vec![0.0; order + 1];
    let mut power = vec![1.0]; // coefficients of ((raw - center)/half)^k
    for (k, s) in scaled.iter().enumerate() {
        if k > 0 {
            let mut next = vec![0.0; power.len() + 1];
            for (j, p) in power.iter().enumerate() {
                next[j + 1] += p / half;
                next[j] -= p * center / half;
            }
            power = next;
        }
        for (j, p) in power.iter().enumerate() {
            coefficients[j] += s * p;
        }
    }

    let mut model = CalibrationModel {
        coefficients,
        order,
        input_range: (lo, hi),
        trained_on: m,
        scaled_coefficients: scaled,
        monotone: true,
    };
    model.monotone = is_monotone(&model);
    Ok(model)
}

/// Checks monotonicity over the training range on a uniform grid.
pub fn is_monotone(model: &CalibrationModel) -> bool {
    let (lo, hi) = model.input_range;
    let values: Vec<f64> = (0..MONOTONE_GRID)
        .map(|k| model.evaluate(lo + (hi - lo) * k as f64 / (MONOTONE_GRID - 1) as f64))
        .collect();
    let up = values.windows(2).all(|w| w[1] >= w[0]);
    let down = values.windows(2).all(|w| w[1] <= w[0]);
    up || down
}

/// Evaluates the map and clamps it to `[-1, 1]`, flagging clamping and extrapolation.
pub fn apply_inverse(model: &CalibrationModel, raw: f64) -> InverseValue {
    let v = model.evaluate(raw);
    let (lo, hi) = model.input_range;
    InverseValue {
        value: v.clamp(-1.0, 1.0),
        clamped: !(-1.0..=1.0).contains(&v),
        extrapolated: raw < lo || raw > hi,
    }
}
