//! Template-sweep spectrum sensing from DC towards Nyquist.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Backend;
use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScanConfig {
    pub sample_rate: f64,
    pub n: usize,
    pub bins: usize,
    pub use_iq: bool,
}

impl SpectrumScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::InputDomain(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if self.n == 0 || self.bins == 0 || self.bins > self.n {
            return Err(Error::InputDomain(format!(
                "need 1 <= bins <= n, got bins {} and n {}",
                self.bins, self.n
            )));
        }
        Ok(())
    }

    /// Bin spacing `sample_rate / (2 bins)`.
    pub fn resolution(&self) -> f64 {
        self.sample_rate / (2.0 * self.bins as f64)
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.resolution()
    }

    /// Nearest bin to a frequency in Hz.
    pub fn bin_of(&self, frequency: f64) -> usize {
        ((frequency / self.resolution()).round().max(0.0) as usize).min(self.bins - 1)
    }

    /// In-phase and quadrature templates of bin `k`.
    pub fn templates(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let w = PI * k as f64 / self.bins as f64;
        let cos = (0..self.n).map(|i| (w * i as f64).cos()).collect();
        let sin = (0..self.n).map(|i| (w * i as f64).sin()).collect();
        (cos, sin)
    }
}

/// Magnitude of the correlation against every bin's templates.
pub fn spectrum_scan(signal: &[f64], config: &SpectrumScanConfig, backend: &Backend) -> Result<Vec<f64>> {
    config.validate()?;
    if signal.len() != config.n {
        return Err(Error::LengthMismatch {
            expected: config.n,
            actual: signal.len(),
        });
    }
    check_finite(signal, "signal")?;
    (0..config.bins)
        .into_par_iter()
        .map(|k| {
            let (cos, sin) = config.templates(k);
            let i = backend.correlate(signal, &cos)?;
            let q = if config.use_iq {
                backend.correlate(signal, &sin)?
            } else {
                0.0
            };
            Ok(i.hypot(q))
        })
        .collect()
}

/// Sum of cosines `amplitude * cos(2 pi f t + phase)` sampled at `sample_rate`.
pub fn tone_mixture(tones: &[(f64, f64, f64)], sample_rate: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            tones
                .iter()
                .map(|&(f, a, phase)| a * (2.0 * PI * f * t + phase).cos())
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::applications::{dominant_peaks, Backend};

    #[test]
    fn on_bin_tone_is_isolated() {
        let cfg = SpectrumScanConfig {
            sample_rate: 1.0,
            n: 256,
            bins: 128,
            use_iq: true,
        };
        let k = 37;
        let s = tone_mixture(&[(cfg.bin_frequency(k), 1.0, 0.4)], 1.0, 256);
        let mags = spectrum_scan(&s, &cfg, &Backend::Mac).unwrap();
        assert!((mags[k] - 1.0).abs() < 1e-12);
        for (j, m) in mags.iter().enumerate() {
            if j != k {
                assert!(*m <= 1e-10, "bin {j}: {m}");
            }
        }
        assert_eq!(dominant_peaks(&mags, 1), vec![k]);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SpectrumScanConfig {
            sample_rate: 1.0,
            n: 16,
            bins: 32,
            use_iq: true,
        };
        assert!(spectrum_scan(&[0.0; 16], &cfg, &Backend::Mac).is_err());
        let cfg = SpectrumScanConfig { bins: 8, ..cfg };
        assert!(spectrum_scan(&[0.0; 15], &cfg, &Backend::Mac).is_err());
    }
}
