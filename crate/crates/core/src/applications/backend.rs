use serde::{Deserialize, Serialize};

use crate::calibration::{fit_inverse_map, CalibrationModel};
use crate::correlator::mp_difference;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;

/// How a signal is correlated against a template.
///
/// Both backends estimate the projection coefficient `<s, t> / <t, t>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Mac,
    Mp(MpBackend),
}

/// Static relu MP correlator in the template-dominant operating point.
///
/// The signal is scaled so its peak is `headroom` while templates keep unit
/// peak, and `gamma = gamma_fraction * sum |t_i|` for both branches. With
/// templates valued in `{-1, 0, 1}` the threshold then lands where only the
/// template-aligned operands are active and `z+ - z-` is exactly
/// `2 <x, t> / sum |t_i|`; other templates give a close, calibrated
/// approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpBackend {
    pub headroom: f64,
    pub gamma_fraction: f64,
    #[serde(default)]
    pub calibration: Option<CalibrationModel>,
}

impl Default for MpBackend {
    fn default() -> Self {
        Self {
            headroom: 0.2,
            gamma_fraction: 0.5,
            calibration: None,
        }
    }
}

impl MpBackend {
    fn validate(&self) -> Result<()> {
        if !(self.headroom > 0.0 && self.headroom < 0.5) {
            return Err(Error::InputDomain(format!(
                "headroom must lie in (0, 0.5), got {}",
                self.headroom
            )));
        }
        if !(self.gamma_fraction > 0.0 && self.gamma_fraction < 1.0) {
            return Err(Error::InputDomain(format!(
                "gamma fraction must lie in (0, 1), got {}",
                self.gamma_fraction
            )));
        }
        Ok(())
    }

    /// Uncalibrated projection estimate from the MP difference output.
    pub fn raw_projection(&self, signal: &[f64], template: &[f64]) -> Result<f64> {
        self.validate()?;
        let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l1: f64 = template.iter().map(|t| t.abs()).sum();
        let energy: f64 = template.iter().map(|t| t * t).sum();
        if peak == 0.0 || l1 == 0.0 {
            return Ok(0.0);
        }
        let scale = self.headroom / peak;
        let x: Vec<f64> = signal.iter().map(|v| scale * v).collect();
        let gamma = self.gamma_fraction * l1;
        let raw = mp_difference(&x, template, gamma, gamma, &Nonlinearity::Relu, 1e-12)?;
        Ok(raw * l1 / (2.0 * scale * energy))
    }

    /// Fits an order-1 map from raw MP projections to exact projections on probe pairs.
    pub fn calibrate(mut self, probes: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let mut raw = Vec::with_capacity(probes.len());
        let mut exact = Vec::with_capacity(probes.len());
        for (signal, template) in probes {
            raw.push(self.raw_projection(signal, template)?);
            exact.push(Backend::Mac.correlate(signal, template)?);
        }
        self.calibration = Some(fit_inverse_map(&raw, &exact, 1)?);
        Ok(self)
    }
}

impl Backend {
    pub fn mp() -> Self {
        Backend::Mp(MpBackend::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Mac => "mac",
            Backend::Mp(_) => "mp",
        }
    }

    /// Projection coefficient of `signal` onto `template`.
    pub fn correlate(&self, signal: &[f64], template: &[f64]) -> Result<f64> {
        if signal.len() != template.len() {
            return Err(Error::LengthMismatch {
                expected: template.len(),
                actual: signal.len(),
            });
        }
        if signal.is_empty() {
            return Err(Error::EmptyInput("correlation input"));
        }
        match self {
            Backend::Mac => {
                let energy: f64 = template.iter().map(|t| t * t).sum();
                if energy == 0.0 {
                    return Ok(0.0);
                }
                Ok(signal.iter().zip(template).map(|(s, t)| s * t).sum::<f64>() / energy)
            }
            Backend::Mp(mp) => {
                let raw = mp.raw_projection(signal, template)?;
                Ok(match &mp.calibration {
                    Some(model) => model.evaluate(raw),
                    None => raw,
                })
            }
        }
    }
}
