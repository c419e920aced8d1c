//! Differential MP correlator, the MAC baseline and test-input generators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::mp::{mp_solve, MpProblem, ReluMpSolver, DEFAULT_TOL};
use crate::nonlinearity::Nonlinearity;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputDistribution {
    Gaussian,
    Uniform,
    Sinusoid,
}

/// Two equal-length input vectors plus how they were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub distribution: InputDistribution,
    /// Phase offset in degrees for sinusoid pairs.
    pub phase_deg: Option<f64>,
}

impl InputPair {
    /// Wraps caller-supplied vectors.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::EmptyInput("input pair"));
        }
        check_finite(&x, "x")?;
        check_finite(&y, "y")?;
        Ok(Self {
            x,
            y,
            seed: 0,
            distribution: InputDistribution::Gaussian,
            phase_deg: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    MpStatic,
    MpTransient,
    Mac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub raw_output: f64,
    /// Correlation estimate; present only once an inverse map has been applied.
    pub r_hat: Option<f64>,
    pub method: EstimateMethod,
}

/// Positive and negative operand families, each exactly symmetric.
pub fn build_operands(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = x.len();
    let mut plus = Vec::with_capacity(2 * n);
    let mut minus = Vec::with_capacity(2 * n);
    plus.extend(x.iter().zip(y).map(|(a, b)| a + b));
    minus.extend(x.iter().zip(y).map(|(a, b)| a - b));
    for i in 0..n {
        plus.push(-plus[i]);
        minus.push(-minus[i]);
    }
    Ok((plus, minus))
}

/// `z+ - z-` for raw vectors, solved to `tol`.
///
/// Relu thresholds are computed exactly from the sorted operands.
pub fn mp_difference(
    x: &[f64],
    y: &[f64],
    gamma_plus: f64,
    gamma_minus: f64,
    nl: &Nonlinearity,
    tol: f64,
) -> Result<f64> {
    let (mut plus, mut minus) = build_operands(x, y)?;
    if let Nonlinearity::Relu = nl {
        check_finite(&plus, "operand")?;
        check_finite(&minus, "operand")?;
        for g in [gamma_plus, gamma_minus] {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InputDomain(format!(
                    "gamma must be finite and positive, got {g}"
                )));
            }
        }
        let z_plus = ReluMpSolver::new(&plus)?.solve(gamma_plus);
        let z_minus = ReluMpSolver::new(&minus)?.solve(gamma_minus);
        return Ok(z_plus - z_minus);
    }
    // Sorted operands make the result a function of the multiset alone.
    plus.sort_by(f64::total_cmp);
    minus.sort_by(f64::total_cmp);
    let z_plus = mp_solve(&MpProblem::new(plus, gamma_plus)?, nl, tol)?.z;
    let z_minus = mp_solve(&MpProblem::new(minus, gamma_minus)?, nl, tol)?.z;
    Ok(z_plus - z_minus)
}

/// Static MP correlator output `z+ - z-` on the pair as given.
pub fn mp_correlate(
    pair: &InputPair,
    gamma_plus: f64,
    gamma_minus: f64,
    nl: &Nonlinearity,
) -> Result<CorrelationEstimate> {
    Ok(CorrelationEstimate {
        raw_output: mp_difference(&pair.x, &pair.y, gamma_plus, gamma_minus, nl, DEFAULT_TOL)?,
        r_hat: None,
        method: EstimateMethod::MpStatic,
    })
}

/// Shifts to zero mean and scales to unit (population) variance.
pub fn standardize(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("vector to standardize"));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = mean.abs().max(1.0);
    if !(var.sqrt() > 1e-12 * scale) {
        return Err(Error::Normalization(format!("vector has zero variance (mean {mean})")));
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|a| (a - mean) / sd).collect())
}

/// Pearson correlation `(1/N) sum x_i y_i` of the standardized vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let xs = standardize(x)?;
    let ys = standardize(y)?;
    let r = xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64;
    Ok(r.clamp(-1.0, 1.0))
}

/// Multiply-accumulate baseline; `r_hat` is the empirical correlation.
pub fn mac_correlate(pair: &InputPair) -> Result<CorrelationEstimate> {
    let r = pearson(&pair.x, &pair.y)?;
    Ok(CorrelationEstimate {
        raw_output: r,
        r_hat: Some(r),
        method: EstimateMethod::Mac,
    })
}

fn draw(rng: &mut impl Rng, distribution: InputDistribution) -> f64 {
    match distribution {
        InputDistribution::Uniform => {
            let half = 3f64.sqrt();
            Uniform::new_inclusive(-half, half).expect("valid bounds").sample(rng)
        }
        _ => rng.sample(StandardNormal),
    }
}

/// `X = S1`, `Y = r S1 + sqrt(1 - r^2) S2` with i.i.d. zero-mean unit-variance draws.
pub fn gen_correlated(r: f64, n: usize, distribution: InputDistribution, seed: u64) -> Result<InputPair> {
    if !(r.is_finite() && r.abs() <= 1.0) {
        return Err(Error::OutOfRange {
            value: r,
            min: -1.0,
            max: 1.0,
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput("generated pair"));
    }
    if distribution == InputDistribution::Sinusoid {
        return Err(Error::InputDomain("use gen_sinusoid_pair for sinusoid inputs".into()));
    }
    let mut rng = rng_from_seed(seed);
    let s1: Vec<f64> = (0..n).map(|_| draw(&mut rng, distribution)).collect();
    let s2: Vec<f64> = (0..n).map(|_| draw(&mut rng, distribution)).collect();
    let mix = (1.0 - r * r).max(0.0).sqrt();
    let y = s1.iter().zip(&s2).map(|(a, b)| r * a + mix * b).collect();
    Ok(InputPair {
        x: s1,
        y,
        seed,
        distribution,
        phase_deg: None,
    })
}

/// Unit-amplitude cosines with an integer number of cycles and a phase lag.
pub fn gen_sinusoid_pair(phase_deg: f64, n: usize, cycles: f64) -> Result<InputPair> {
    if !(cycles >= 1.0 && cycles.fract() == 0.0 && cycles.is_finite()) {
        return Err(Error::InputDomain(format!(
            "cycles must be a positive integer, got {cycles}"
        )));
    }
    if !(0.0..=180.0).contains(&phase_deg) {
        return Err(Error::OutOfRange {
            value: phase_deg,
            min: 0.0,
            max: 180.0,
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput("sinusoid pair"));
    }
    let phase = phase_deg.to_radians();
    let w = 2.0 * std::f64::consts::PI * cycles / n as f64;
    let x = (0..n).map(|i| (w * i as f64).cos()).collect();
    let y = (0..n).map(|i| (w * i as f64 - phase).cos()).collect();
    Ok(InputPair {
        x,
        y,
        seed: 0,
        distribution: InputDistribution::Sinusoid,
        phase_deg: Some(phase_deg),
    })
}
