//! The monotone convex nonlinearity `h(.)` that parameterizes margin
//! propagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this ratio `x / T` softplus is returned as `x` to avoid overflow.
const SOFTPLUS_LINEAR_CUTOFF: f64 = 30.0;

/// Positive, non-decreasing, convex function applied to every MP operand.
///
/// `Power { eta }` is the positive-part power `[x]_+^{1/(eta-1)}` that falls out
/// of Tsallis maximum entropy; `eta = 2` recovers `Relu`. `Softplus` is a smooth
/// surrogate, strictly positive everywhere, so the zero-occupancy-above-threshold
/// property only holds approximately for it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Relu,
    Power {
        eta: f64,
    },
    Softplus {
        temperature: f64,
    },
}

impl Nonlinearity {
    pub fn power(eta: f64) -> Result<Self> {
        let nl = Nonlinearity::Power { eta };
        nl.validate()?;
        Ok(nl)
    }

    pub fn softplus(temperature: f64) -> Result<Self> {
        let nl = Nonlinearity::Softplus { temperature };
        nl.validate()?;
        Ok(nl)
    }

    /// Rejects parameters for which `h` would not be convex and non-decreasing.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::Relu => Ok(()),
            Nonlinearity::Power { eta } => {
                if eta.is_finite() && eta > 1.0 && eta <= 2.0 {
                    Ok(())
                } else {
                    Err(Error::InputDomain(format!(
                        "power nonlinearity needs eta in (1, 2], got {eta}"
                    )))
                }
            }
            Nonlinearity::Softplus { temperature } => {
                if temperature.is_finite() && temperature > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InputDomain(format!(
                        "softplus temperature must be positive, got {temperature}"
                    )))
                }
            }
        }
    }

    /// True when `h` has a continuous first derivative.
    pub fn is_smooth(&self) -> bool {
        match *self {
            Nonlinearity::Relu => false,
            Nonlinearity::Power { eta } => eta < 2.0,
            Nonlinearity::Softplus { .. } => true,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Power { eta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    x.powf(1.0 / (eta - 1.0))
                }
            }
            Nonlinearity::Softplus { temperature } => {
                let u = x / temperature;
                if u > SOFTPLUS_LINEAR_CUTOFF {
                    x
                } else {
                    temperature * u.exp().ln_1p()
                }
            }
        }
    }

    /// First derivative. For relu the value at the kink is taken as 0.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Power { eta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let p = 1.0 / (eta - 1.0);
                    p * x.powf(p - 1.0)
                }
            }
            Nonlinearity::Softplus { temperature } => sigmoid(x / temperature),
        }
    }

    /// Second derivative (zero almost everywhere for relu).
    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => 0.0,
            Nonlinearity::Power { eta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let p = 1.0 / (eta - 1.0);
                    p * (p - 1.0) * x.powf(p - 2.0)
                }
            }
            Nonlinearity::Softplus { temperature } => {
                let s = sigmoid(x / temperature);
                s * (1.0 - s) / temperature
            }
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}
