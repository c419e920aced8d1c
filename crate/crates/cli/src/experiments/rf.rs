use mpcorr_core::applications::cosamp::{
    cosamp_recover, make_templates, measure, planted_spectrum, reconstruction_snr_db, synthesize, CompressiveConfig,
};
use mpcorr_core::applications::spectrum::{spectrum_scan, tone_mixture, SpectrumScanConfig};
use mpcorr_core::applications::spread::{
    apsk_demodulate, carrier_templates, code_sync, evm_db, make_spread_signal, pn_code, random_symbol_indices,
    Constellation, IqSymbol, SpreadSpectrumConfig,
};
use mpcorr_core::applications::{dominant_peaks, elevated_runs, median_threshold, Backend, MpBackend};
use mpcorr_core::rng::{derive_seed, rng_from_seed};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_count, check_positive, check_range, invalid, BackendKind, Params};
use crate::error::CliError;
use crate::output::{num, Artifacts};

/// Adds white Gaussian noise at the given SNR relative to the mean signal power.
pub fn add_noise(signal: &mut [f64], snr_db: f64, seed: u64) {
    let power = signal.iter().map(|v| v * v).sum::<f64>() / signal.len() as f64;
    let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = rng_from_seed(seed);
    for v in signal.iter_mut() {
        *v += sd * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Tone probes at a few bins spread over the band.
pub fn spectrum_backend(kind: BackendKind, config: &SpectrumScanConfig) -> Result<Backend, CliError> {
    Ok(match kind {
        BackendKind::Mac => Backend::Mac,
        BackendKind::Mp => Backend::mp(),
        BackendKind::MpCalibrated => {
            let bins = config.bins;
            let probes: Vec<(Vec<f64>, Vec<f64>)> = [bins / 73, bins * 11 / 64, bins * 29 / 64, bins * 25 / 32]
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let tone = tone_mixture(
                        &[(config.bin_frequency(k), 1.0, 0.7 * j as f64)],
                        config.sample_rate,
                        config.n,
                    );
                    (tone, config.templates(k).0)
                })
                .collect();
            Backend::Mp(MpBackend::default().calibrate(&probes)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tone {
    pub frequency_hz: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumScan {
    pub sample_rate: f64,
    pub n: usize,
    pub bins: usize,
    pub tones: Vec<Tone>,
    /// `null` scans the noiseless mixture.
    pub snr_db: Option<f64>,
    pub backend: BackendKind,
    pub peaks: usize,
    /// Occupancy threshold as a multiple of the median magnitude.
    pub threshold_factor: f64,
}

impl Default for SpectrumScan {
    fn default() -> Self {
        let tone = |f: f64, phase_rad: f64| Tone {
            frequency_hz: f,
            amplitude: 1.0,
            phase_rad,
        };
        Self {
            sample_rate: 5e9,
            n: 1024,
            bins: 512,
            tones: vec![tone(0.5e9, 0.3), tone(1.365e9, 1.1), tone(2.435e9, 2.0)],
            snr_db: None,
            backend: BackendKind::Mp,
            peaks: 3,
            threshold_factor: 3.0,
        }
    }
}

impl SpectrumScan {
    fn config(&self) -> SpectrumScanConfig {
        SpectrumScanConfig {
            sample_rate: self.sample_rate,
            n: self.n,
            bins: self.bins,
            use_iq: true,
        }
    }
}

impl Params for SpectrumScan {
    fn validate(&self) -> Result<(), CliError> {
        check_positive("sample_rate", self.sample_rate)?;
        check_count("n", self.n, 8, 1 << 20)?;
        check_count("bins", self.bins, 8, self.n)?;
        if self.tones.is_empty() {
            return Err(invalid("tones", "must not be empty"));
        }
        for (k, t) in self.tones.iter().enumerate() {
            check_range(
                &format!("tones[{k}].frequency_hz"),
                t.frequency_hz,
                0.0,
                0.5 * self.sample_rate,
            )?;
            check_range(&format!("tones[{k}].amplitude"), t.amplitude, 0.0, 1e6)?;
            check_range(&format!("tones[{k}].phase_rad"), t.phase_rad, -1e3, 1e3)?;
        }
        if let Some(snr) = self.snr_db {
            check_range("snr_db", snr, -60.0, 200.0)?;
        }
        check_count("peaks", self.peaks, 1, self.bins)?;
        check_positive("threshold_factor", self.threshold_factor)
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let config = self.config();
        let tones: Vec<(f64, f64, f64)> = self
            .tones
            .iter()
            .map(|t| (t.frequency_hz, t.amplitude, t.phase_rad))
            .collect();
        let mut signal = tone_mixture(&tones, self.sample_rate, self.n);
        if let Some(snr) = self.snr_db {
            add_noise(&mut signal, snr, derive_seed(seed, 0));
        }
        let backend = spectrum_backend(self.backend, &config)?;
        let mags = spectrum_scan(&signal, &config, &backend)?;

        let mut out = Artifacts::new();
        out.csv(
            "spectrum.csv",
            &["bin", "frequency_hz", "magnitude"],
            mags.iter()
                .enumerate()
                .map(|(k, &m)| vec![k.to_string(), num(config.bin_frequency(k)), num(m)]),
        );
        let peaks = dominant_peaks(&mags, self.peaks);
        let threshold = median_threshold(&mags, self.threshold_factor);
        let runs = elevated_runs(&mags, threshold);
        out.json(
            "peaks.json",
            &json!({
                "backend": backend.name(),
                "resolution_hz": config.resolution(),
                "peaks": peaks.iter().map(|&k| json!({ "bin": k, "frequency_hz": config.bin_frequency(k), "magnitude": mags[k] })).collect::<Vec<_>>(),
                "threshold": threshold,
                "occupied_runs": runs.iter().map(|&(a, b)| json!({ "first_bin": a, "last_bin": b, "width_hz": (b - a + 1) as f64 * config.resolution() })).collect::<Vec<_>>(),
            }),
        )?;
        out.note(format!(
            "backend {}, {} bins at {:.4e} Hz",
            backend.name(),
            self.bins,
            config.resolution()
        ));
        for &k in &peaks {
            out.note(format!(
                "peak at bin {k} ({:.4e} Hz), magnitude {:.4e}",
                config.bin_frequency(k),
                mags[k]
            ));
        }
        out.note(format!("{} occupied runs above {:.3e}", runs.len(), threshold));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cosamp {
    pub k_templates: usize,
    pub sparsity: usize,
    pub bins: usize,
    pub trials: usize,
    pub backend: BackendKind,
}

impl Default for Cosamp {
    fn default() -> Self {
        Self {
            k_templates: 64,
            sparsity: 4,
            bins: 256,
            trials: 20,
            backend: BackendKind::Mac,
        }
    }
}

pub struct CosampTrial {
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl CosampTrial {
    pub fn support_exact(&self) -> bool {
        self.truth
            .iter()
            .zip(&self.estimate)
            .all(|(a, b)| (*a != 0.0) == (*b != 0.0))
    }

    pub fn max_error(&self) -> f64 {
        self.truth
            .iter()
            .zip(&self.estimate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn snr_db(&self) -> f64 {
        reconstruction_snr_db(&self.truth, &self.estimate)
    }
}

impl Cosamp {
    pub fn trial(&self, seed: u64, t: u64) -> Result<CosampTrial, CliError> {
        let config = CompressiveConfig {
            k_templates: self.k_templates,
            sparsity: self.sparsity,
            bins: self.bins,
            seed,
        };
        let truth = planted_spectrum(self.bins, self.sparsity, derive_seed(seed, 3 * t));
        let template_seed = derive_seed(seed, 3 * t + 1);
        let templates = make_templates(self.k_templates, self.bins, template_seed)?;
        let backend = match self.backend {
            BackendKind::Mac => Backend::Mac,
            BackendKind::Mp => Backend::mp(),
            BackendKind::MpCalibrated => {
                let probe_seed = derive_seed(seed, 3 * t + 2);
                let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
                    .map(|j| {
                        let probe = planted_spectrum(self.bins, self.sparsity, derive_seed(probe_seed, j as u64));
                        (synthesize(&probe), templates.templates[j].clone())
                    })
                    .collect();
                Backend::Mp(MpBackend::default().calibrate(&probes)?)
            }
        };
        let m = measure(&synthesize(&truth), &templates, &backend)?;
        let result = cosamp_recover(&m, template_seed, &config)?;
        Ok(CosampTrial {
            truth,
            estimate: result.estimate,
            converged: result.converged,
            iterations: result.iterations,
        })
    }
}

impl Params for Cosamp {
    fn validate(&self) -> Result<(), CliError> {
        check_count("bins", self.bins, 4, 1 << 16)?;
        check_count("k_templates", self.k_templates, 2, self.bins - 1)?;
        check_count("sparsity", self.sparsity, 1, self.k_templates - 1)?;
        check_count("trials", self.trials, 1, 100_000)?;
        if self.backend == BackendKind::MpCalibrated && self.k_templates < 4 {
            return Err(invalid(
                "k_templates",
                "mp_calibrated needs at least 4 templates for probes",
            ));
        }
        Ok(())
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let trials: Vec<CosampTrial> = (0..self.trials as u64)
            .into_par_iter()
            .map(|t| self.trial(seed, t))
            .collect::<Result<_, CliError>>()?;
        let mut out = Artifacts::new();
        out.csv(
            "cosamp.csv",
            &[
                "trial",
                "support_exact",
                "max_coeff_error",
                "snr_db",
                "converged",
                "iterations",
            ],
            trials.iter().enumerate().map(|(t, r)| {
                vec![
                    t.to_string(),
                    r.support_exact().to_string(),
                    num(r.max_error()),
                    num(r.snr_db()),
                    r.converged.to_string(),
                    r.iterations.to_string(),
                ]
            }),
        );
        let first = &trials[0];
        out.csv(
            "estimate.csv",
            &["bin", "truth", "estimate"],
            first
                .truth
                .iter()
                .zip(&first.estimate)
                .enumerate()
                .map(|(k, (a, b))| vec![k.to_string(), num(*a), num(*b)]),
        );
        let exact = trials.iter().filter(|r| r.support_exact()).count();
        let worst = trials.iter().map(CosampTrial::max_error).fold(0.0, f64::max);
        let min_snr = trials.iter().map(CosampTrial::snr_db).fold(f64::INFINITY, f64::min);
        out.note(format!(
            "{exact}/{} exact supports, worst coefficient error {worst:.3e}, minimum SNR {min_snr:.2} dB",
            trials.len()
        ));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeComm {
    pub code_length: usize,
    pub chip_rate: f64,
    pub carrier_freq: f64,
    pub snr_db: f64,
    pub symbols: usize,
    /// Candidate codes besides the transmitted one in the sync search.
    pub unmatched_codes: usize,
    pub blockers: usize,
    pub backend: BackendKind,
}

impl Default for CodeComm {
    fn default() -> Self {
        Self {
            code_length: 1024,
            chip_rate: 5e9,
            carrier_freq: 1.25e9,
            snr_db: 0.0,
            symbols: 200,
            unmatched_codes: 15,
            blockers: 0,
            backend: BackendKind::Mp,
        }
    }
}

/// Outcome of the code search and of the 64-APSK link.
pub struct CodeCommResult {
    pub sync: Vec<f64>,
    /// Matched magnitude over the RMS of the unmatched ones.
    pub sync_ratio: f64,
    pub sent: Vec<usize>,
    pub estimates: Vec<IqSymbol>,
    pub decisions: Vec<usize>,
    pub evm_db: f64,
    pub evm_data_aided_db: f64,
}

impl CodeComm {
    fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::Mac => Backend::Mac,
            _ => Backend::mp(),
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<CodeCommResult, CliError> {
        let backend = self.backend();
        let n = self.code_length;
        let base = SpreadSpectrumConfig {
            code_length: n,
            chip_rate: self.chip_rate,
            carrier_freq: 0.0,
            snr_db: self.snr_db,
            constellation: Constellation::Bpsk,
            code_seed: derive_seed(seed, 0),
            blockers: self.blockers,
        };
        let pilot = make_spread_signal(&[IqSymbol::new(1.0, 0.0)], &base, derive_seed(seed, 1))?;
        let mut codes = vec![pilot.code.clone()];
        codes.extend((0..self.unmatched_codes as u64).map(|k| pn_code(n, derive_seed(seed, 100 + k))));
        let sync = code_sync(&pilot.samples, &codes, &backend)?;
        let sync_ratio = if sync.len() > 1 {
            let floor = (sync[1..].iter().map(|v| v * v).sum::<f64>() / (sync.len() - 1) as f64).sqrt();
            sync[0] / floor
        } else {
            f64::INFINITY
        };

        let link = SpreadSpectrumConfig {
            carrier_freq: self.carrier_freq,
            constellation: Constellation::Apsk64,
            code_seed: derive_seed(seed, 2),
            ..base
        };
        let points = Constellation::Apsk64.points();
        let sent = random_symbol_indices(Constellation::Apsk64, self.symbols, derive_seed(seed, 3));
        let symbols: Vec<IqSymbol> = sent.iter().map(|&k| points[k]).collect();
        let signal = make_spread_signal(&symbols, &link, derive_seed(seed, 4))?;
        let (ti, tq) = carrier_templates(&signal.code, &link);
        let d = apsk_demodulate(&signal.samples, &ti, &tq, Constellation::Apsk64, &backend)?;
        let evm_data_aided_db = evm_db(&d.estimates, &symbols)?;
        Ok(CodeCommResult {
            sync,
            sync_ratio,
            sent,
            estimates: d.estimates,
            decisions: d.decisions,
            evm_db: d.evm_db,
            evm_data_aided_db,
        })
    }
}

impl Params for CodeComm {
    fn validate(&self) -> Result<(), CliError> {
        check_count("code_length", self.code_length, 8, 1 << 20)?;
        check_positive("chip_rate", self.chip_rate)?;
        check_range(
            "carrier_freq",
            self.carrier_freq,
            1e-9 * self.chip_rate,
            0.499 * self.chip_rate,
        )?;
        check_range("snr_db", self.snr_db, -60.0, 200.0)?;
        check_count("symbols", self.symbols, 1, 100_000)?;
        check_count("unmatched_codes", self.unmatched_codes, 0, 10_000)?;
        check_count("blockers", self.blockers, 0, 64)?;
        if self.backend == BackendKind::MpCalibrated {
            return Err(invalid(
                "backend",
                "expected mac or mp; MP is exact on binary code templates",
            ));
        }
        Ok(())
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let r = self.simulate(seed)?;
        let mut out = Artifacts::new();
        out.csv(
            "sync.csv",
            &["code", "matched", "magnitude"],
            r.sync
                .iter()
                .enumerate()
                .map(|(k, &m)| vec![k.to_string(), (k == 0).to_string(), num(m)]),
        );
        out.csv(
            "constellation.csv",
            &["symbol", "i", "q", "sent", "decided"],
            r.estimates
                .iter()
                .zip(&r.sent)
                .zip(&r.decisions)
                .enumerate()
                .map(|(k, ((e, s), d))| vec![k.to_string(), num(e.i), num(e.q), s.to_string(), d.to_string()]),
        );
        let errors = r.sent.iter().zip(&r.decisions).filter(|(a, b)| a != b).count();
        out.json(
            "link_summary.json",
            &json!({
                "backend": self.backend(),
                "sync_matched": r.sync[0],
                "sync_ratio": r.sync_ratio,
                "evm_db": r.evm_db,
                "evm_data_aided_db": r.evm_data_aided_db,
                "despreading_evm_db": -10.0 * (self.code_length as f64).log10(),
                "symbol_errors": errors,
                "symbols": r.sent.len(),
            }),
        )?;
        out.note(format!(
            "sync: matched {:.4}, ratio to unmatched RMS {:.2}",
            r.sync[0], r.sync_ratio
        ));
        out.note(format!(
            "64-APSK: EVM {:.2} dB, {errors}/{} symbol errors",
            r.evm_db,
            r.sent.len()
        ));
        Ok(out)
    }
}
