//! Monte-Carlo pipelines shared by the experiment runner and the test suites.
//!
//! Every trial derives its own seed from `(seed, index)` and results are
//! gathered by index, so outputs do not depend on the thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_inverse, fit_inverse_map};
use crate::correlator::{gen_correlated, gen_sinusoid_pair, mp_difference, pearson, InputDistribution};
use crate::dynamics::{integrate_first_order, integrate_relu_dynamics, transient_readout, CircuitParams, DeviceModel};
use crate::error::{Error, Result};
use crate::metrics::{enob_from_hdr, estimate_transient_energy, gain_db, rms_error, tops_per_watt};
use crate::nonlinearity::Nonlinearity;
use crate::rng::{derive_seed, rng_from_seed};

/// Static MP outputs `z+ - z-` for correlated pairs at the given correlations.
pub fn static_mp_outputs(
    r_values: &[f64],
    n: usize,
    gamma_per_element: f64,
    distribution: InputDistribution,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let gamma = gamma_per_element * n as f64;
    r_values
        .par_iter()
        .enumerate()
        .map(|(j, &r)| {
            let pair = gen_correlated(r, n, distribution, derive_seed(seed, j as u64))?;
            let mp = mp_difference(&pair.x, &pair.y, gamma, gamma, &Nonlinearity::Relu, 1e-10)?;
            let mac = pearson(&pair.x, &pair.y)?;
            Ok((mp, mac))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpgConfig {
    pub train: usize,
    pub test: usize,
    pub order: usize,
    /// MP constraint per input element, `gamma = gamma_per_element * N`.
    pub gamma_per_element: f64,
    pub distribution: InputDistribution,
}

impl Default for SpgConfig {
    fn default() -> Self {
        Self {
            train: 500,
            test: 1000,
            order: 5,
            gamma_per_element: 0.25,
            distribution: InputDistribution::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpgPoint {
    pub n: usize,
    pub spg_mp_db: f64,
    pub spg_mac_db: f64,
    pub train_rms_db: f64,
    pub test_rms_db: f64,
    pub calibration_monotone: bool,
}

/// Test correlations spread evenly over `(-1, 1)`.
pub fn stratified_grid(count: usize) -> Vec<f64> {
    (0..count).map(|j| -1.0 + (2 * j + 1) as f64 / count as f64).collect()
}

/// Calibrated static MP and uncalibrated MAC gains at one length.
///
/// Training correlations are uniform on `[-1, 1]`; test correlations are
/// stratified to keep the Monte-Carlo spread of the estimate small.
pub fn spg_point(n: usize, config: &SpgConfig, seed: u64) -> Result<SpgPoint> {
    if config.train <= config.order || config.test < 2 {
        return Err(Error::Config("training set too small for the calibration order".into()));
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let train_r: Vec<f64> = (0..config.train).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let test_r = stratified_grid(config.test);
    let train = static_mp_outputs(
        &train_r,
        n,
        config.gamma_per_element,
        config.distribution,
        derive_seed(seed, 1),
    )?;
    let test = static_mp_outputs(
        &test_r,
        n,
        config.gamma_per_element,
        config.distribution,
        derive_seed(seed, 2),
    )?;

    let train_raw: Vec<f64> = train.iter().map(|p| p.0).collect();
    let model = fit_inverse_map(&train_raw, &train_r, config.order)?;
    let train_pred: Vec<f64> = train_raw.iter().map(|&v| apply_inverse(&model, v).value).collect();
    let test_pred: Vec<f64> = test.iter().map(|p| apply_inverse(&model, p.0).value).collect();
    let mac_pred: Vec<f64> = test.iter().map(|p| p.1).collect();
    let train_rms = rms_error(&train_pred, &train_r)?;
    let test_rms = rms_error(&test_pred, &test_r)?;
    Ok(SpgPoint {
        n,
        spg_mp_db: gain_db(test_rms),
        spg_mac_db: gain_db(rms_error(&mac_pred, &test_r)?),
        train_rms_db: -gain_db(train_rms),
        test_rms_db: -gain_db(test_rms),
        calibration_monotone: model.monotone,
    })
}

pub fn spg_scaling(lengths: &[usize], config: &SpgConfig, seed: u64) -> Result<Vec<SpgPoint>> {
    lengths
        .iter()
        .enumerate()
        .map(|(k, &n)| spg_point(n, config, derive_seed(seed, k as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityConfig {
    pub n: usize,
    pub trials: usize,
    pub r_grid: Vec<f64>,
    /// Readout instants in integration steps.
    pub read_steps: Vec<usize>,
    /// `R = r_scale / N`.
    pub r_scale: f64,
    /// `C = c_scale * N`.
    pub c_scale: f64,
    pub dt: f64,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        Self {
            n: 256,
            trials: 500,
            r_grid: (0..19).map(|k| -0.9 + 0.1 * k as f64).collect(),
            read_steps: vec![2, 10, 80],
            r_scale: 25.0,
            c_scale: 1e-5,
            dt: 1e-5,
        }
    }
}

/// Mean and standard error of the output against correlation at one readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCurve {
    pub label: String,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl MonotonicityCurve {
    /// Largest drop between neighbours in units of their combined standard error.
    pub fn worst_violation(&self) -> f64 {
        self.means
            .windows(2)
            .zip(self.std_errors.windows(2))
            .map(|(m, s)| (m[0] - m[1]) / (s[0] * s[0] + s[1] * s[1]).sqrt().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when no drop exceeds two combined standard errors.
    pub fn is_monotone(&self) -> bool {
        self.worst_violation() <= 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityResult {
    pub r_grid: Vec<f64>,
    pub curves: Vec<MonotonicityCurve>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Relu dynamics Monte-Carlo: transient readouts and the steady state per correlation.
///
/// Trial `t` uses the same underlying draws at every grid point.
pub fn monotonicity_study(config: &MonotonicityConfig, seed: u64) -> Result<MonotonicityResult> {
    if config.trials < 2 || config.r_grid.len() < 2 {
        return Err(Error::Config("need at least two trials and two grid points".into()));
    }
    let n = config.n;
    let r = config.r_scale / n as f64;
    let c = config.c_scale * n as f64;
    let last = *config.read_steps.iter().max().unwrap_or(&1);
    let t_end = last.max(1) as f64 * config.dt;
    let columns = config.read_steps.len() + 1;

    let per_point: Vec<Vec<Vec<f64>>> = config
        .r_grid
        .iter()
        .map(|&rho| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let pair = gen_correlated(rho, n, InputDistribution::Gaussian, derive_seed(seed, t as u64))?;
                    let traj = integrate_relu_dynamics(&pair, r, c, config.dt, t_end)?;
                    let mut row: Vec<f64> = config
                        .read_steps
                        .iter()
                        .map(|&s| transient_readout(&traj, s as f64 * config.dt))
                        .collect::<Result<_>>()?;
                    row.push(traj.steady_state.unwrap_or(f64::NAN));
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let curves = (0..columns)
        .map(|col| {
            let label = match config.read_steps.get(col) {
                Some(s) => format!("t={s}dt"),
                None => "steady".to_string(),
            };
            let (means, std_errors) = per_point
                .iter()
                .map(|rows| mean_and_se(&rows.iter().map(|row| row[col]).collect::<Vec<_>>()))
                .unzip();
            MonotonicityCurve {
                label,
                means,
                std_errors,
            }
        })
        .collect();
    Ok(MonotonicityResult {
        r_grid: config.r_grid.clone(),
        curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig {
    pub n: usize,
    pub cycles: usize,
    pub r_sink: f64,
    pub c_par: f64,
    pub i_static: f64,
    pub vdd: f64,
    pub e_sampling: f64,
    /// Readout noise standard deviation relative to the full-scale steady-state output.
    pub readout_noise: f64,
    pub order: usize,
    /// Readout instants as multiples of `R C`.
    pub t_reads_tau: Vec<f64>,
    pub steps_per_tau: usize,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        Self {
            n: 256,
            cycles: 5,
            r_sink: 1000.0,
            c_par: 100e-12,
            i_static: 1e-3,
            vdd: 1.2,
            e_sampling: 0.0,
            readout_noise: 1e-3,
            order: 5,
            t_reads_tau: vec![0.1, 0.2, 0.5, 1.0],
            steps_per_tau: 200,
        }
    }
}

impl TradeoffConfig {
    /// Relu devices scaled so the MP constraint is about `N/4` at steady state.
    pub fn device(&self) -> DeviceModel {
        DeviceModel::relu(4.0 / (self.n as f64 * self.r_sink))
    }

    pub fn circuit(&self) -> CircuitParams {
        CircuitParams {
            r_sink: self.r_sink,
            c_par: self.c_par,
            l_par: 0.0,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub t_read: f64,
    pub swing: f64,
    pub hdr_db: f64,
    pub enob_bits: f64,
    pub energy_j: f64,
    pub tops_w_system: f64,
    pub tops_w_core: f64,
}

/// Precision and efficiency of transient readout over a range of readout times.
///
/// Calibration uses sinusoid pairs at whole-degree phases and testing uses the
/// half-degree phases in between, each with seeded Gaussian readout noise that
/// is shared across readout times.
pub fn transient_tradeoff(config: &TradeoffConfig, seed: u64) -> Result<Vec<TradeoffPoint>> {
    if config.t_reads_tau.is_empty() {
        return Err(Error::Config("no readout times".into()));
    }
    let params = config.circuit();
    let model = config.device();
    let tau = params.tau();
    let t_max = config.t_reads_tau.iter().cloned().fold(0.0, f64::max) * tau;
    let dt = tau / config.steps_per_tau as f64;
    let train_phases: Vec<f64> = (0..=180).map(|d| d as f64).collect();
    let test_phases: Vec<f64> = (0..180).map(|d| d as f64 + 0.5).collect();

    let run = |phases: &[f64]| -> Result<Vec<crate::dynamics::Trajectory>> {
        phases
            .par_iter()
            .map(|&p| {
                let pair = gen_sinusoid_pair(p, config.n, config.cycles as f64)?;
                integrate_first_order(&pair, &model, &params, t_max, dt)
            })
            .collect()
    };
    let train = run(&train_phases)?;
    let test = run(&test_phases)?;
    let full_scale = train[0].steady_state.unwrap_or(1.0).abs();
    let sigma = config.readout_noise * full_scale;
    let noise = |count: usize, stream: u64| -> Vec<f64> {
        let mut rng = rng_from_seed(derive_seed(seed, stream));
        (0..count)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let train_noise = noise(train.len(), 0);
    let test_noise = noise(test.len(), 1);
    let truth = |phases: &[f64]| phases.iter().map(|p| p.to_radians().cos()).collect::<Vec<f64>>();
    let (train_r, test_r) = (truth(&train_phases), truth(&test_phases));

    config
        .t_reads_tau
        .iter()
        .map(|&k| {
            let t_read = k * tau;
            let read = |trajs: &[crate::dynamics::Trajectory], noise: &[f64]| -> Result<Vec<f64>> {
                trajs
                    .iter()
                    .zip(noise)
                    .map(|(t, e)| Ok(transient_readout(t, t_read)? + e))
                    .collect()
            };
            let train_raw = read(&train, &train_noise)?;
            let test_raw = read(&test, &test_noise)?;
            let model = fit_inverse_map(&train_raw, &train_r, config.order)?;
            let pred: Vec<f64> = test_raw.iter().map(|&v| apply_inverse(&model, v).value).collect();
            let hdr_db = gain_db(rms_error(&pred, &test_r)?);
            let enob_bits = enob_from_hdr(hdr_db);
            let energy_j = estimate_transient_energy(&train[0], config.i_static, config.c_par, config.vdd, t_read)?;
            let (tops_w_system, tops_w_core) = tops_per_watt(config.n, enob_bits, config.e_sampling, energy_j)?;
            Ok(TradeoffPoint {
                t_read,
                swing: transient_readout(&train[0], t_read)?,
                hdr_db,
                enob_bits,
                energy_j,
                tops_w_system,
                tops_w_core,
            })
        })
        .collect()
}

/// Static MP outputs for unit sinusoid pairs at the given phases.
pub fn sinusoid_static_outputs(phases: &[f64], n: usize, cycles: usize, gamma_per_element: f64) -> Result<Vec<f64>> {
    let gamma = gamma_per_element * n as f64;
    phases
        .par_iter()
        .map(|&p| {
            let pair = gen_sinusoid_pair(p, n, cycles as f64)?;
            mp_difference(&pair.x, &pair.y, gamma, gamma, &Nonlinearity::Relu, 1e-10)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStudyPoint {
    pub order: usize,
    pub train_rms: f64,
    pub test_rms: f64,
}

/// Calibration error against polynomial order on a sinusoid phase sweep.
///
/// `readout_noise` adds seeded Gaussian noise relative to the full-scale output.
pub fn calibration_order_study(
    n: usize,
    cycles: usize,
    gamma_per_element: f64,
    readout_noise: f64,
    orders: &[usize],
    seed: u64,
) -> Result<Vec<OrderStudyPoint>> {
    let train_phases: Vec<f64> = (0..=180).map(|d| d as f64).collect();
    let test_phases: Vec<f64> = (0..180).map(|d| d as f64 + 0.5).collect();
    let mut train_raw = sinusoid_static_outputs(&train_phases, n, cycles, gamma_per_element)?;
    let mut test_raw = sinusoid_static_outputs(&test_phases, n, cycles, gamma_per_element)?;
    let sigma = readout_noise * train_raw[0].abs();
    for (stream, values) in [(0u64, &mut train_raw), (1, &mut test_raw)] {
        let mut rng = rng_from_seed(derive_seed(seed, stream));
        for v in values.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let train_r: Vec<f64> = train_phases.iter().map(|p| p.to_radians().cos()).collect();
    let test_r: Vec<f64> = test_phases.iter().map(|p| p.to_radians().cos()).collect();
    orders
        .iter()
        .map(|&order| {
            let model = fit_inverse_map(&train_raw, &train_r, order)?;
            let fit = |raw: &[f64]| raw.iter().map(|&v| apply_inverse(&model, v).value).collect::<Vec<_>>();
            Ok(OrderStudyPoint {
                order,
                train_rms: rms_error(&fit(&train_raw), &train_r)?,
                test_rms: rms_error(&fit(&test_raw), &test_r)?,
            })
        })
        .collect()
}
