//! Code-domain synchronization and code-modulated 64-APSK demodulation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Backend;
use crate::error::{check_finite, Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    Bpsk,
    Apsk64,
}

/// Ring sizes of the 64-point APSK layout, innermost first.
pub const APSK64_RINGS: [usize; 4] = [4, 12, 20, 28];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqSymbol {
    pub i: f64,
    pub q: f64,
}

impl IqSymbol {
    pub fn new(i: f64, q: f64) -> Self {
        Self { i, q }
    }

    fn distance_sq(&self, other: &IqSymbol) -> f64 {
        (self.i - other.i).powi(2) + (self.q - other.q).powi(2)
    }
}

impl Constellation {
    /// Unit-RMS constellation points.
    ///
    /// 64-APSK uses equally spaced rings with radii 1..4, each ring rotated by
    /// half its angular step.
    pub fn points(&self) -> Vec<IqSymbol> {
        match self {
            Constellation::Bpsk => vec![IqSymbol::new(-1.0, 0.0), IqSymbol::new(1.0, 0.0)],
            Constellation::Apsk64 => {
                let mut pts = Vec::with_capacity(64);
                for (ring, &count) in APSK64_RINGS.iter().enumerate() {
                    let radius = (ring + 1) as f64;
                    let step = 2.0 * PI / count as f64;
                    for k in 0..count {
                        let angle = step * (k as f64 + 0.5);
                        pts.push(IqSymbol::new(radius * angle.cos(), radius * angle.sin()));
                    }
                }
                let rms = (pts.iter().map(|p| p.i * p.i + p.q * p.q).sum::<f64>() / pts.len() as f64).sqrt();
                pts.iter().map(|p| IqSymbol::new(p.i / rms, p.q / rms)).collect()
            }
        }
    }

    /// Index of the nearest point.
    pub fn decide(&self, symbol: &IqSymbol) -> usize {
        let pts = self.points();
        (0..pts.len())
            .min_by(|&a, &b| symbol.distance_sq(&pts[a]).total_cmp(&symbol.distance_sq(&pts[b])))
            .expect("non-empty constellation")
    }

    pub fn bits_per_symbol(&self) -> u32 {
        match self {
            Constellation::Bpsk => 1,
            Constellation::Apsk64 => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadSpectrumConfig {
    pub code_length: usize,
    pub chip_rate: f64,
    /// Zero means baseband (no carrier).
    pub carrier_freq: f64,
    /// Signal-to-noise power ratio; `+inf` disables noise.
    pub snr_db: f64,
    pub constellation: Constellation,
    pub code_seed: u64,
    #[serde(default)]
    pub blockers: usize,
}

impl SpreadSpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.code_length == 0 {
            return Err(Error::InputDomain("code length must be positive".into()));
        }
        if !(self.chip_rate.is_finite() && self.chip_rate > 0.0) {
            return Err(Error::InputDomain(format!(
                "chip rate must be positive, got {}",
                self.chip_rate
            )));
        }
        if !(self.carrier_freq >= 0.0 && self.carrier_freq < 0.5 * self.chip_rate) {
            return Err(Error::InputDomain(format!(
                "carrier {} must lie in [0, chip_rate/2)",
                self.carrier_freq
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InputDomain(format!("invalid SNR {}", self.snr_db)));
        }
        Ok(())
    }
}

/// Seeded +/-1 pseudo-random code.
pub fn pn_code(length: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..length)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// Code-modulated carrier references `(c cos(w i), -c sin(w i))`.
///
/// At baseband the in-phase template is the code itself and the quadrature
/// template is zero.
pub fn carrier_templates(code: &[f64], config: &SpreadSpectrumConfig) -> (Vec<f64>, Vec<f64>) {
    let w = 2.0 * PI * config.carrier_freq / config.chip_rate;
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let i_t = code
        .iter()
        .enumerate()
        .map(|(k, c)| c * clean((w * k as f64).cos()))
        .collect();
    let q_t = code
        .iter()
        .enumerate()
        .map(|(k, c)| -c * clean((w * k as f64).sin()))
        .collect();
    (i_t, q_t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadSignal {
    pub samples: Vec<f64>,
    pub code: Vec<f64>,
    /// Mean power of the wanted component alone.
    pub signal_power: f64,
    pub noise_power: f64,
}

fn mean_power(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64
}

/// One code block per symbol, plus equal-power blocker codes and AWGN.
pub fn make_spread_signal(symbols: &[IqSymbol], config: &SpreadSpectrumConfig, seed: u64) -> Result<SpreadSignal> {
    config.validate()?;
    if symbols.is_empty() {
        return Err(Error::EmptyInput("symbols"));
    }
    let n = config.code_length;
    let code = pn_code(n, config.code_seed);
    let (ti, tq) = carrier_templates(&code, config);
    let modulate = |syms: &[IqSymbol], ti: &[f64], tq: &[f64]| -> Vec<f64> {
        syms.iter()
            .flat_map(|s| (0..n).map(move |k| s.i * ti[k] + s.q * tq[k]))
            .collect()
    };
    let wanted = modulate(symbols, &ti, &tq);
    let signal_power = mean_power(&wanted);
    let mut samples = wanted;

    let mut rng = rng_from_seed(seed);
    for b in 0..config.blockers {
        let blocker_code = pn_code(n, derive_seed(seed, 1_000 + b as u64));
        let (bi, bq) = carrier_templates(&blocker_code, config);
        let syms: Vec<IqSymbol> = symbols
            .iter()
            .map(|_| {
                let angle = rng.random_range(0.0..2.0 * PI);
                if config.carrier_freq == 0.0 {
                    IqSymbol::new(if angle < PI { 1.0 } else { -1.0 }, 0.0)
                } else {
                    IqSymbol::new(angle.cos(), angle.sin())
                }
            })
            .collect();
        let blocker = modulate(&syms, &bi, &bq);
        let p = mean_power(&blocker);
        if p > 0.0 {
            let scale = (signal_power / p).sqrt();
            for (s, v) in samples.iter_mut().zip(blocker) {
                *s += scale * v;
            }
        }
    }

    let noise_power = if config.snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / 10f64.powf(config.snr_db / 10.0)
    };
    if noise_power > 0.0 {
        let sd = noise_power.sqrt();
        for s in samples.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *s += sd * e;
        }
    }
    Ok(SpreadSignal {
        samples,
        code,
        signal_power,
        noise_power,
    })
}

/// Normalized correlation magnitude `|<r, c>| / (N rms(r) rms(c))` for each code.
pub fn code_sync(received: &[f64], codes: &[Vec<f64>], backend: &Backend) -> Result<Vec<f64>> {
    check_finite(received, "received")?;
    let rms_r = mean_power(received).sqrt();
    codes
        .par_iter()
        .map(|code| {
            if code.len() != received.len() {
                return Err(Error::LengthMismatch {
                    expected: code.len(),
                    actual: received.len(),
                });
            }
            let rms_c = mean_power(code).sqrt();
            if rms_r == 0.0 || rms_c == 0.0 {
                return Ok(0.0);
            }
            Ok(backend.correlate(received, code)?.abs() * rms_c / rms_r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demodulation {
    pub estimates: Vec<IqSymbol>,
    pub decisions: Vec<usize>,
    /// EVM against the decided points.
    pub evm_db: f64,
}

/// `20 log10(rms |estimate - reference| / rms |reference|)`.
pub fn evm_db(estimates: &[IqSymbol], reference: &[IqSymbol]) -> Result<f64> {
    if estimates.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyInput("symbols"));
    }
    let err: f64 = estimates.iter().zip(reference).map(|(e, r)| e.distance_sq(r)).sum();
    let power: f64 = reference.iter().map(|r| r.i * r.i + r.q * r.q).sum();
    if err == 0.0 {
        return Ok(-200.0);
    }
    Ok(10.0 * (err / power).log10())
}

/// Despreads each code block against the I/Q templates and slices to the constellation.
///
/// The backend's response to each template alone forms a 2x2 probe matrix whose
/// inverse removes gain and I/Q cross-talk before slicing.
pub fn apsk_demodulate(
    received: &[f64],
    i_template: &[f64],
    q_template: &[f64],
    constellation: Constellation,
    backend: &Backend,
) -> Result<Demodulation> {
    let n = i_template.len();
    if n == 0 || q_template.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: q_template.len(),
        });
    }
    if received.is_empty() || !received.len().is_multiple_of(n) {
        return Err(Error::InputDomain(format!(
            "received length {} is not a multiple of the code length {n}",
            received.len()
        )));
    }
    check_finite(received, "received")?;
    let project = |block: &[f64]| -> Result<(f64, f64)> {
        Ok((
            backend.correlate(block, i_template)?,
            backend.correlate(block, q_template)?,
        ))
    };
    let (m00, m10) = project(i_template)?;
    let (m01, m11) = project(q_template)?;
    let det = m00 * m11 - m01 * m10;
    if !(det.abs() > 1e-12) {
        return Err(Error::Normalization("I/Q templates are not separable".into()));
    }
    let estimates: Vec<IqSymbol> = received
        .par_chunks(n)
        .map(|block| {
            let (a, b) = project(block)?;
            Ok(IqSymbol::new((m11 * a - m01 * b) / det, (m00 * b - m10 * a) / det))
        })
        .collect::<Result<_>>()?;
    let points = constellation.points();
    let decisions: Vec<usize> = estimates.iter().map(|e| constellation.decide(e)).collect();
    let reference: Vec<IqSymbol> = decisions.iter().map(|&d| points[d]).collect();
    let evm_db = evm_db(&estimates, &reference)?;
    Ok(Demodulation {
        estimates,
        decisions,
        evm_db,
    })
}

/// Uniformly drawn constellation indices.
pub fn random_symbol_indices(constellation: Constellation, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let size = constellation.points().len();
    (0..count).map(|_| rng.random_range(0..size)).collect()
}
