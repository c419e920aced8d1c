use mpcorr_core::calibration::fit_inverse_map;
use mpcorr_core::correlator::InputDistribution;
use mpcorr_core::metrics::tops_per_watt;
use mpcorr_core::studies::{
    calibration_order_study, sinusoid_static_outputs, spg_scaling, transient_tradeoff, SpgConfig, TradeoffConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_count, check_nonempty, check_positive, check_range, invalid, Params};
use crate::error::CliError;
use crate::output::{num, Artifacts};

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpgScaling {
    pub lengths: Vec<usize>,
    pub train: usize,
    pub test: usize,
    pub order: usize,
    pub gamma_per_element: f64,
    pub distribution: InputDistribution,
}

impl Default for SpgScaling {
    fn default() -> Self {
        let c = SpgConfig::default();
        Self {
            lengths: vec![64, 128, 256, 512, 1024, 2048, 4096],
            train: c.train,
            test: c.test,
            order: c.order,
            gamma_per_element: c.gamma_per_element,
            distribution: c.distribution,
        }
    }
}

impl Params for SpgScaling {
    fn validate(&self) -> Result<(), CliError> {
        check_nonempty("lengths", &self.lengths)?;
        for (k, &n) in self.lengths.iter().enumerate() {
            check_count(&format!("lengths[{k}]"), n, 4, 1 << 20)?;
        }
        check_count("order", self.order, 1, 12)?;
        check_count("train", self.train, self.order + 2, 1_000_000)?;
        check_count("test", self.test, 2, 1_000_000)?;
        check_range("gamma_per_element", self.gamma_per_element, 1e-3, 10.0)?;
        if self.distribution == InputDistribution::Sinusoid {
            return Err(invalid("distribution", "expected gaussian or uniform"));
        }
        Ok(())
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let config = SpgConfig {
            train: self.train,
            test: self.test,
            order: self.order,
            gamma_per_element: self.gamma_per_element,
            distribution: self.distribution,
        };
        let points = spg_scaling(&self.lengths, &config, seed)?;
        let mut out = Artifacts::new();
        out.csv(
            "spg.csv",
            &[
                "n",
                "spg_mp_db",
                "spg_mac_db",
                "train_rms_db",
                "test_rms_db",
                "calibration_monotone",
            ],
            points.iter().map(|p| {
                vec![
                    p.n.to_string(),
                    num(p.spg_mp_db),
                    num(p.spg_mac_db),
                    num(p.train_rms_db),
                    num(p.test_rms_db),
                    p.calibration_monotone.to_string(),
                ]
            }),
        );
        for p in &points {
            out.note(format!(
                "N {:>6}: MP {:6.2} dB, MAC {:6.2} dB",
                p.n, p.spg_mp_db, p.spg_mac_db
            ));
        }
        if points.len() >= 2 {
            let log_n: Vec<f64> = points.iter().map(|p| (p.n as f64).log2()).collect();
            let mp = slope(&log_n, &points.iter().map(|p| p.spg_mp_db).collect::<Vec<_>>());
            let mac = slope(&log_n, &points.iter().map(|p| p.spg_mac_db).collect::<Vec<_>>());
            out.note(format!("gain per doubling: MP {mp:.3} dB, MAC {mac:.3} dB"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub n: usize,
    pub cycles: usize,
    pub gamma_per_element: f64,
    /// Readout noise relative to the full-scale output.
    pub readout_noise: f64,
    pub orders: Vec<usize>,
    /// Order of the fitted curve written to `calibration_curve.csv`.
    pub curve_order: usize,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            n: 1024,
            cycles: 5,
            gamma_per_element: 0.25,
            readout_noise: 0.0,
            orders: (1..=7).collect(),
            curve_order: 5,
        }
    }
}

impl Params for Calibration {
    fn validate(&self) -> Result<(), CliError> {
        check_count("n", self.n, 8, 1 << 20)?;
        check_count("cycles", self.cycles, 1, self.n / 4)?;
        check_range("gamma_per_element", self.gamma_per_element, 1e-3, 10.0)?;
        check_range("readout_noise", self.readout_noise, 0.0, 1.0)?;
        check_nonempty("orders", &self.orders)?;
        for (k, &o) in self.orders.iter().enumerate() {
            check_count(&format!("orders[{k}]"), o, 1, 12)?;
        }
        check_count("curve_order", self.curve_order, 1, 12)
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let study = calibration_order_study(
            self.n,
            self.cycles,
            self.gamma_per_element,
            self.readout_noise,
            &self.orders,
            seed,
        )?;
        let mut out = Artifacts::new();
        out.csv(
            "order_study.csv",
            &["order", "train_rms", "test_rms", "train_rms_db", "test_rms_db"],
            study.iter().map(|p| {
                vec![
                    p.order.to_string(),
                    num(p.train_rms),
                    num(p.test_rms),
                    num(20.0 * p.train_rms.log10()),
                    num(20.0 * p.test_rms.log10()),
                ]
            }),
        );
        for p in &study {
            out.note(format!(
                "order {}: train {:.2} dB, test {:.2} dB",
                p.order,
                20.0 * p.train_rms.log10(),
                20.0 * p.test_rms.log10()
            ));
        }

        let phases: Vec<f64> = (0..=180).map(f64::from).collect();
        let raw = sinusoid_static_outputs(&phases, self.n, self.cycles, self.gamma_per_element)?;
        let truth: Vec<f64> = phases.iter().map(|p| p.to_radians().cos()).collect();
        let model = fit_inverse_map(&raw, &truth, self.curve_order)?;
        out.csv(
            "calibration_curve.csv",
            &["phase_deg", "true_r", "raw", "r_hat"],
            phases
                .iter()
                .zip(&raw)
                .zip(&truth)
                .map(|((p, v), r)| vec![num(*p), num(*r), num(*v), num(model.predict(*v))]),
        );
        out.json("calibration_model.json", &model)?;
        out.note(format!("order-{} curve monotone: {}", self.curve_order, model.monotone));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientTradeoff {
    pub n: usize,
    pub cycles: usize,
    pub r_sink: f64,
    pub c_par: f64,
    pub i_static: f64,
    pub vdd: f64,
    pub e_sampling: f64,
    pub readout_noise: f64,
    pub order: usize,
    /// Readout instants as multiples of `R C`.
    pub t_reads_tau: Vec<f64>,
    pub steps_per_tau: usize,
}

impl Default for TransientTradeoff {
    fn default() -> Self {
        let c = TradeoffConfig::default();
        Self {
            n: c.n,
            cycles: c.cycles,
            r_sink: c.r_sink,
            c_par: c.c_par,
            i_static: c.i_static,
            vdd: c.vdd,
            e_sampling: c.e_sampling,
            readout_noise: c.readout_noise,
            order: c.order,
            t_reads_tau: vec![0.1, 0.2, 0.3, 0.5, 0.7, 1.0],
            steps_per_tau: c.steps_per_tau,
        }
    }
}

impl TransientTradeoff {
    pub fn config(&self) -> TradeoffConfig {
        TradeoffConfig {
            n: self.n,
            cycles: self.cycles,
            r_sink: self.r_sink,
            c_par: self.c_par,
            i_static: self.i_static,
            vdd: self.vdd,
            e_sampling: self.e_sampling,
            readout_noise: self.readout_noise,
            order: self.order,
            t_reads_tau: self.t_reads_tau.clone(),
            steps_per_tau: self.steps_per_tau,
        }
    }
}

impl Params for TransientTradeoff {
    fn validate(&self) -> Result<(), CliError> {
        check_count("n", self.n, 8, 1 << 16)?;
        check_count("cycles", self.cycles, 1, self.n / 4)?;
        check_positive("r_sink", self.r_sink)?;
        check_positive("c_par", self.c_par)?;
        check_range("i_static", self.i_static, 0.0, 1.0)?;
        check_positive("vdd", self.vdd)?;
        check_range("e_sampling", self.e_sampling, 0.0, 1.0)?;
        check_range("readout_noise", self.readout_noise, 0.0, 1.0)?;
        check_count("order", self.order, 1, 12)?;
        check_nonempty("t_reads_tau", &self.t_reads_tau)?;
        for (k, &t) in self.t_reads_tau.iter().enumerate() {
            check_range(&format!("t_reads_tau[{k}]"), t, 1e-3, 100.0)?;
        }
        check_count("steps_per_tau", self.steps_per_tau, 20, 100_000)?;
        let steps = self.t_reads_tau.iter().cloned().fold(0.0, f64::max) * self.steps_per_tau as f64;
        if steps > 5e6 {
            return Err(invalid(
                "steps_per_tau",
                format!("{steps:.0} integration steps exceed the 5e6 limit"),
            ));
        }
        Ok(())
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let points = transient_tradeoff(&self.config(), seed)?;
        let tau = self.r_sink * self.c_par;
        let mut out = Artifacts::new();
        out.csv(
            "tradeoff.csv",
            &[
                "t_read",
                "t_read_tau",
                "swing",
                "hdr_db",
                "enob",
                "energy_j",
                "tops_w_system",
                "tops_w_core",
            ],
            points.iter().map(|p| {
                vec![
                    num(p.t_read),
                    num(p.t_read / tau),
                    num(p.swing),
                    num(p.hdr_db),
                    num(p.enob_bits),
                    num(p.energy_j),
                    num(p.tops_w_system),
                    num(p.tops_w_core),
                ]
            }),
        );
        for p in &points {
            out.note(format!(
                "t_read {:.3} tau: ENOB {:.2}, energy {:.3e} J, {:.1} TOPS/W",
                p.t_read / tau,
                p.enob_bits,
                p.energy_j,
                p.tops_w_system
            ));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyReport {
    pub lengths: Vec<usize>,
    pub enob: Vec<f64>,
    /// Compute energy per correlation in joules.
    pub e_compute: f64,
    pub e_sampling: f64,
}

impl Default for EnergyReport {
    fn default() -> Self {
        Self {
            lengths: vec![256],
            enob: vec![8.0],
            e_compute: 6.27e-12,
            e_sampling: 0.0,
        }
    }
}

impl Params for EnergyReport {
    fn validate(&self) -> Result<(), CliError> {
        check_nonempty("lengths", &self.lengths)?;
        for (k, &n) in self.lengths.iter().enumerate() {
            check_count(&format!("lengths[{k}]"), n, 1, usize::MAX)?;
        }
        check_nonempty("enob", &self.enob)?;
        for (k, &b) in self.enob.iter().enumerate() {
            check_range(&format!("enob[{k}]"), b, 0.0, 64.0)?;
        }
        check_positive("e_compute", self.e_compute)?;
        check_range("e_sampling", self.e_sampling, 0.0, f64::MAX)
    }

    fn run(&self, _seed: u64) -> Result<Artifacts, CliError> {
        let mut out = Artifacts::new();
        let mut rows = Vec::new();
        let mut points = Vec::new();
        for &n in &self.lengths {
            for &b in &self.enob {
                let (system, core) = tops_per_watt(n, b, self.e_sampling, self.e_compute)?;
                let ops = n as f64 * (b * b + b);
                out.note(format!("N {n} ENOB {b}: {core:.1} TOPS/W core, {system:.1} system"));
                rows.push(vec![n.to_string(), num(b), num(ops), num(system), num(core)]);
                points.push(json!({ "n": n, "enob": b, "ops": ops, "tops_w_system": system, "tops_w_core": core }));
            }
        }
        out.csv(
            "energy.csv",
            &["n", "enob", "ops", "tops_w_system", "tops_w_core"],
            rows,
        );
        out.json("tops_per_watt.json", &points)?;
        Ok(out)
    }
}
