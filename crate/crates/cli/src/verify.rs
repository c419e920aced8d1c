//! Acceptance criteria as runnable checks.
//!
//! The fast suite shrinks the Monte-Carlo studies; every tolerance is the same
//! in both suites.

use std::time::Instant;

use mpcorr_core::correlator::{gen_correlated, gen_sinusoid_pair, InputDistribution, InputPair};
use mpcorr_core::dynamics::{
    fit_exponential, integrate_first_order, integrate_second_order, static_fixed_point, transient_readout,
    CircuitParams, DeviceModel,
};
use mpcorr_core::maxent::{
    branch_offsets, constraint_residuals, maxent_distribution, maxent_to_mp_params, solve_multipliers, Branch,
    EnergyTarget,
};
use mpcorr_core::metrics::tops_per_watt;
use mpcorr_core::rng::rng_from_seed;
use mpcorr_core::studies::{monotonicity_study, spg_scaling, transient_tradeoff, MonotonicityConfig, SpgConfig};
use mpcorr_core::{mp_gradient, mp_solve, mp_solve_with, Error, MpProblem, Nonlinearity, SolverOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiments::{BackendKind, CodeComm, Cosamp, Experiment, Plan, TransientTradeoff};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            _ => Err(CliError::Usage(format!("suite: expected fast or full, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(Suite) -> Result<(bool, String), CliError>;

pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub check: Check,
}

impl Criterion {
    pub fn run(&self, suite: Suite) -> Outcome {
        let start = Instant::now();
        let (passed, detail) = match (self.check)(suite) {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        Outcome {
            id: self.id,
            name: self.name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

pub const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "MP solver oracle equivalence",
        check: oracle_equivalence,
    },
    Criterion {
        id: 2,
        name: "convexity and Lipschitz properties",
        check: convexity_suite,
    },
    Criterion {
        id: 3,
        name: "maxent and MP equivalence",
        check: maxent_equivalence,
    },
    Criterion {
        id: 4,
        name: "monotonicity in correlation",
        check: monotonicity,
    },
    Criterion {
        id: 5,
        name: "SPG scaling",
        check: spg,
    },
    Criterion {
        id: 6,
        name: "dynamics consistency",
        check: dynamics,
    },
    Criterion {
        id: 7,
        name: "transient trade-off shape",
        check: tradeoff,
    },
    Criterion {
        id: 8,
        name: "CoSaMP recovery",
        check: cosamp,
    },
    Criterion {
        id: 9,
        name: "spread-spectrum sync and EVM",
        check: spread_spectrum,
    },
    Criterion {
        id: 10,
        name: "determinism across thread counts",
        check: determinism,
    },
];

pub fn run_suite(suite: Suite) -> Vec<Outcome> {
    CRITERIA.iter().map(|c| c.run(suite)).collect()
}

pub fn format_table(outcomes: &[Outcome]) -> String {
    let mut text = String::new();
    for o in outcomes {
        text.push_str(&format!(
            "{:>2}  {}  {:<36} {:>8.2}s  {}\n",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        ));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    text.push_str(&format!("{passed}/{} criteria passed\n", outcomes.len()));
    text
}

fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn h(nl: &Nonlinearity, x: f64) -> f64 {
    match *nl {
        Nonlinearity::Relu => x.max(0.0),
        Nonlinearity::Power { eta } => x.max(0.0).powf(1.0 / (eta - 1.0)),
        Nonlinearity::Softplus { temperature } => {
            let u = x / temperature;
            if u > 30.0 {
                x
            } else {
                temperature * u.exp().ln_1p()
            }
        }
    }
}

/// Plain bisection on `sum h(o - z) = gamma`, sharing no code with the solver.
pub fn bisection_oracle(ops: &[f64], gamma: f64, nl: &Nonlinearity) -> f64 {
    let f = |z: f64| ops.iter().map(|&o| h(nl, o - z)).sum::<f64>() - gamma;
    let top = ops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = top - gamma - 1.0;
    while f(lo) < 0.0 {
        lo -= 2.0 * (top - lo).abs() + 1.0;
    }
    let mut hi = top;
    while f(hi) > 0.0 {
        hi += 2.0 * (hi - lo).abs() + 1.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn random_nl(rng: &mut impl Rng, k: usize) -> Nonlinearity {
    match k % 3 {
        0 => Nonlinearity::Relu,
        1 => Nonlinearity::Softplus {
            temperature: rng.random_range(0.05..1.0),
        },
        _ => Nonlinearity::Power { eta: 1.5 },
    }
}

/// Largest solver deviation from the oracle over 1000 instances.
pub fn oracle_deviation(options: &SolverOptions, seed: u64) -> Result<f64, CliError> {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = rng.random_range(1..=64);
        let scale = rng.random_range(0.1..5.0);
        let ops: Vec<f64> = normals(&mut rng, n).iter().map(|v| v * scale).collect();
        let gamma = rng.random_range(0.01..20.0);
        let nl = random_nl(&mut rng, k);
        let z = mp_solve_with(&MpProblem::new(ops.clone(), gamma)?, &nl, options)?.z;
        worst = worst.max((z - bisection_oracle(&ops, gamma, &nl)).abs());
    }
    Ok(worst)
}

fn oracle_equivalence(_: Suite) -> Result<(bool, String), CliError> {
    let worst = oracle_deviation(&SolverOptions::default(), 1001)?;
    Ok((worst <= 1e-9, format!("worst |z - oracle| {worst:.2e} (limit 1e-9)")))
}

fn convexity_suite(_: Suite) -> Result<(bool, String), CliError> {
    let mut rng = rng_from_seed(1002);
    let tol = 1e-10;
    let step = 1e-4;
    let (mut worst_gap, mut worst_grad, mut worst_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for k in 0..100 {
        let n = rng.random_range(1..=6);
        let o = normals(&mut rng, n);
        let gamma = rng.random_range(0.2..4.0);
        let nl = if k % 2 == 0 {
            Nonlinearity::Softplus {
                temperature: rng.random_range(0.1..1.0),
            }
        } else {
            Nonlinearity::Power { eta: 1.5 }
        };
        let problem = MpProblem::symmetric(&o, gamma)?;
        let from = |bracket| -> Result<f64, CliError> {
            let options = SolverOptions {
                tol,
                initial_bracket: Some(bracket),
                ..SolverOptions::default()
            };
            Ok(mp_solve_with(&problem, &nl, &options)?.z)
        };
        worst_gap = worst_gap.max((from((-100.0, -99.0))? - from((40.0, 41.0))?).abs());

        let z0 = mp_solve(&problem, &nl, 1e-13)?.z;
        match mp_gradient(&problem, &nl, z0) {
            Ok(g) => worst_grad = g.iter().fold(worst_grad, |m, v| m.max(v.abs())),
            Err(Error::DegenerateGradient(_)) => {}
            Err(e) => return Err(e.into()),
        }

        let z = |v: &[f64]| -> Result<f64, CliError> { Ok(mp_solve(&MpProblem::symmetric(v, gamma)?, &nl, 1e-13)?.z) };
        let shifted = |a: usize, da: f64, b: usize, db: f64| {
            let mut v = o.clone();
            v[a] += da;
            v[b] += db;
            z(&v)
        };
        let mut hess = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let value = (shifted(a, step, b, step)? - shifted(a, step, b, -step)? - shifted(a, -step, b, step)?
                    + shifted(a, -step, b, -step)?)
                    / (4.0 * step * step);
                hess[(a, b)] = value;
                hess[(b, a)] = value;
            }
        }
        worst_eig = worst_eig.min(SymmetricEigen::new(hess).eigenvalues.min());
    }
    let passed = worst_gap <= 2.0 * tol && worst_grad <= 1.0 + 1e-12 && worst_eig >= -1e-6;
    Ok((
        passed,
        format!("bracket gap {worst_gap:.1e}, max |grad| {worst_grad:.6}, min Hessian eigenvalue {worst_eig:.2e}"),
    ))
}

fn maxent_equivalence(_: Suite) -> Result<(bool, String), CliError> {
    let mut rng = rng_from_seed(1003);
    let (mut worst_z, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(1..=16);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let peak =
            |b| -> Result<f64, CliError> { Ok(branch_offsets(&x, &y, b)?.iter().fold(0.0f64, |m, v| m.max(v.abs()))) };
        let (fp, fm) = (rng.random_range(0.05..0.9), rng.random_range(0.05..0.9));
        let target = EnergyTarget::new(fp * peak(Branch::Plus)?, fm * peak(Branch::Minus)?);
        for branch in [Branch::Plus, Branch::Minus] {
            let m = solve_multipliers(&x, &y, 2.0, &target, branch)?;
            let (z, gamma) = maxent_to_mp_params(m.alpha, m.beta, 2.0)?;
            let s = branch_offsets(&x, &y, branch)?;
            let z_mp = mp_solve(&MpProblem::symmetric(&s, gamma)?, &Nonlinearity::Relu, 1e-12)?.z;
            worst_z = worst_z.max((z - z_mp).abs());
            let (p, q) = maxent_distribution(&x, &y, 2.0, m.alpha, m.beta, branch)?;
            let (norm, energy) = constraint_residuals(&x, &y, &p, &q, &target, branch)?;
            worst_res = worst_res.max(norm).max(energy);
        }
    }
    Ok((
        worst_z <= 1e-7 && worst_res <= 1e-8,
        format!("worst z gap {worst_z:.2e} (limit 1e-7), worst residual {worst_res:.2e} (limit 1e-8)"),
    ))
}

fn monotonicity(suite: Suite) -> Result<(bool, String), CliError> {
    let config = MonotonicityConfig {
        trials: if suite == Suite::Full { 500 } else { 200 },
        ..MonotonicityConfig::default()
    };
    let study = monotonicity_study(&config, 1004)?;
    let worst = study
        .curves
        .iter()
        .map(|c| c.worst_violation())
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = study.curves.iter().all(|c| c.is_monotone());
    Ok((
        passed,
        format!(
            "{} curves x {} points, {} trials, worst drop {worst:.2} combined SE (limit 2)",
            study.curves.len(),
            study.r_grid.len(),
            config.trials
        ),
    ))
}

fn spg(suite: Suite) -> Result<(bool, String), CliError> {
    let lengths: &[usize] = match suite {
        Suite::Full => &[64, 128, 256, 512, 1024, 2048, 4096],
        Suite::Fast => &[64, 128, 256, 512, 1024],
    };
    let points = spg_scaling(lengths, &SpgConfig::default(), 7)?;
    let gains: Vec<f64> = points.windows(2).map(|w| w[1].spg_mp_db - w[0].spg_mp_db).collect();
    let at_1024 = points
        .iter()
        .find(|p| p.n == 1024)
        .map(|p| p.spg_mp_db)
        .unwrap_or(f64::NAN);
    let theory = 10.0 * 1024f64.log10();
    let passed = gains.iter().all(|g| (g - 3.0).abs() <= 0.75) && (at_1024 - theory).abs() <= 1.5;
    let gains: Vec<String> = gains.iter().map(|g| format!("{g:.2}")).collect();
    Ok((
        passed,
        format!(
            "per-doubling gains [{}] dB (3 +/- 0.75), SPG(1024) {at_1024:.2} dB vs {theory:.1}",
            gains.join(", ")
        ),
    ))
}

const DYN_N: usize = 1024;

fn stock_circuit() -> (CircuitParams, DeviceModel) {
    (
        CircuitParams {
            r_sink: 1000.0,
            c_par: 100e-12,
            l_par: 0.0,
            n: DYN_N,
        },
        DeviceModel::relu(4.0 / (DYN_N as f64 * 1000.0)),
    )
}

fn dynamics(_: Suite) -> Result<(bool, String), CliError> {
    let (params, model) = stock_circuit();
    let tau = params.tau();
    let mut pairs: Vec<InputPair> = [0.0, 45.0, 120.0, 180.0]
        .iter()
        .map(|&ph| gen_sinusoid_pair(ph, DYN_N, 5.0))
        .collect::<Result<_, _>>()?;
    for (k, r) in [-0.8, 0.0, 0.6].into_iter().enumerate() {
        pairs.push(gen_correlated(r, DYN_N, InputDistribution::Gaussian, 30 + k as u64)?);
    }
    let mut worst_ss = 0.0f64;
    for pair in &pairs {
        let traj = integrate_first_order(pair, &model, &params, 10.0 * tau, tau / 200.0)?;
        let (vp, vm) = static_fixed_point(pair, &model, &params)?;
        let scale = vp.abs().max(vm.abs());
        let last = traj.len() - 1;
        let err = (traj.v_plus[last] - vp).abs().max((traj.v_minus[last] - vm).abs()) / scale;
        worst_ss = worst_ss.max(err);
    }

    let mut worst_r2 = f64::INFINITY;
    for phase in [0.0, 30.0, 60.0, 120.0, 150.0, 180.0] {
        let traj = integrate_first_order(
            &gen_sinusoid_pair(phase, DYN_N, 5.0)?,
            &model,
            &params,
            10.0 * tau,
            tau / 200.0,
        )?;
        let v = traj.v_out();
        let first = fit_exponential(&traj.times, &v)?;
        let end = traj.times.partition_point(|&t| t <= 5.0 * first.tau);
        worst_r2 = worst_r2.min(fit_exponential(&traj.times[..end], &v[..end])?.r_squared);
    }

    let small = CircuitParams {
        l_par: 1e-6 * params.r_sink * tau,
        ..params
    };
    let mut worst_rlc = 0.0f64;
    for phase in [30.0, 140.0] {
        let pair = gen_sinusoid_pair(phase, DYN_N, 5.0)?;
        let dt = 0.05 * (small.l_par * small.c_par).sqrt();
        let rlc = integrate_second_order(&pair, &model, &small, 10.0 * tau, dt)?;
        let rc = integrate_first_order(&pair, &model, &params, 10.0 * tau, tau / 200.0)?;
        let (a, b) = (
            transient_readout(&rlc, 10.0 * tau)?,
            transient_readout(&rc, 10.0 * tau)?,
        );
        worst_rlc = worst_rlc.max((a - b).abs() / b.abs());
    }
    let passed = worst_ss <= 1e-3 && worst_r2 > 0.99 && worst_rlc <= 5e-3;
    Ok((
        passed,
        format!(
            "steady-state error {:.2e}% (limit 0.1%), min R^2 {worst_r2:.5}, RLC vs RC {:.2e}% (limit 0.5%)",
            100.0 * worst_ss,
            100.0 * worst_rlc
        ),
    ))
}

fn tradeoff(_: Suite) -> Result<(bool, String), CliError> {
    let params = TransientTradeoff::default();
    let points = transient_tradeoff(&params.config(), 1007)?;
    let enob_up = points.windows(2).all(|w| w[1].enob_bits >= w[0].enob_bits);
    let tops_down = points.windows(2).all(|w| w[1].tops_w_system <= w[0].tops_w_system);
    let (_, core) = tops_per_watt(256, 8.0, 0.0, 6.27e-12)?;
    let (first, last) = (&points[0], &points[points.len() - 1]);
    Ok((
        enob_up && tops_down && (core - 2940.0).abs() <= 1.0,
        format!(
            "ENOB {:.2} -> {:.2}, TOPS/W {:.0} -> {:.0} over t_read {:.1e}..{:.1e} s; formula check {core:.2} TOPS/W",
            first.enob_bits, last.enob_bits, first.tops_w_system, last.tops_w_system, first.t_read, last.t_read
        ),
    ))
}

fn cosamp(_: Suite) -> Result<(bool, String), CliError> {
    let mac = Cosamp::default();
    let mut exact = 0;
    let mut worst = 0.0f64;
    for t in 0..20 {
        let r = mac.trial(1008, t)?;
        exact += usize::from(r.support_exact() && r.converged);
        worst = worst.max(r.max_error());
    }
    let mp = Cosamp {
        k_templates: 128,
        bins: 1024,
        trials: 1,
        backend: BackendKind::MpCalibrated,
        ..Cosamp::default()
    };
    let r = mp.trial(1008, 0)?;
    let snr = r.snr_db();
    let passed = exact == 20 && worst <= 1e-8 && r.support_exact() && snr >= 20.0;
    Ok((
        passed,
        format!(
            "MAC {exact}/20 exact, worst error {worst:.1e}; MP K=128 support {}, SNR {snr:.1} dB",
            if r.support_exact() { "exact" } else { "wrong" }
        ),
    ))
}

fn spread_spectrum(_: Suite) -> Result<(bool, String), CliError> {
    let r = CodeComm::default().simulate(1009)?;
    let target = -10.0 * 1024f64.log10();
    let passed = r.sync_ratio >= 10.0 && (r.evm_db - target).abs() <= 3.0;
    Ok((
        passed,
        format!(
            "sync ratio {:.1} (limit 10), EVM {:.2} dB vs {target:.1} +/- 3",
            r.sync_ratio, r.evm_db
        ),
    ))
}

/// Small configs covering every experiment family.
pub fn determinism_configs(suite: Suite) -> Vec<(Experiment, Value)> {
    let mut configs = vec![
        (Experiment::MpDemo, json!({})),
        (Experiment::MaxentCheck, json!({ "ensembles": 20 })),
        (
            Experiment::SpgScaling,
            json!({ "lengths": [64, 256], "train": 100, "test": 200 }),
        ),
        (
            Experiment::DynamicsRc,
            json!({ "n": 256, "phases_deg": [0.0, 90.0, 150.0], "t_end_tau": 3.0 }),
        ),
        (Experiment::SpectrumScan, json!({ "snr_db": 0.0 })),
        (Experiment::Cosamp, json!({ "trials": 8 })),
        (Experiment::CodeComm, json!({ "code_length": 256, "symbols": 50 })),
        (Experiment::EnergyReport, json!({})),
    ];
    if suite == Suite::Full {
        configs.extend([
            (Experiment::Calibration, json!({ "n": 256, "readout_noise": 1e-3 })),
            (Experiment::TransientTradeoff, json!({ "t_reads_tau": [0.1, 1.0] })),
            (
                Experiment::DynamicsRlc,
                json!({ "n": 256, "phases_deg": [0.0, 120.0], "l_par": [2e-9], "t_end_tau": 1.0 }),
            ),
        ]);
    }
    configs
}

/// Runs a config on `threads` workers and returns the artifacts with their manifest.
pub fn run_in_memory(config: &ExperimentConfig, threads: usize) -> Result<crate::output::Artifacts, CliError> {
    let plan: Plan = config.plan()?;
    let mut artifacts = crate::run_plan(&plan, config.seed, Some(threads))?;
    artifacts.add_manifest(config, &plan)?;
    Ok(artifacts)
}

fn determinism(suite: Suite) -> Result<(bool, String), CliError> {
    let mut mismatched = Vec::new();
    let configs = determinism_configs(suite);
    for (experiment, params) in &configs {
        let parameters: Map<String, Value> = params.as_object().cloned().unwrap_or_default();
        let config = ExperimentConfig::new(*experiment, parameters, 42, "unused".into());
        let reference = run_in_memory(&config, 1)?;
        for threads in [1, 2, 4] {
            if run_in_memory(&config, threads)? != reference {
                mismatched.push(format!("{experiment}@{threads}"));
            }
        }
    }
    if mismatched.is_empty() {
        Ok((
            true,
            format!("{} experiments identical on 1, 2 and 4 threads", configs.len()),
        ))
    } else {
        Ok((false, format!("artifacts differ: {}", mismatched.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loose_solver_tolerance_fails_the_oracle_check() {
        let tampered = SolverOptions {
            tol: 1e-2,
            bisection_width: 1e-2,
            polish: false,
            ..SolverOptions::default()
        };
        assert!(oracle_deviation(&tampered, 1001).map_or(true, |worst| worst > 1e-9));
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("fast".parse::<Suite>().unwrap(), Suite::Fast);
        assert!("slow".parse::<Suite>().is_err());
    }

    #[test]
    fn criteria_are_numbered_in_order() {
        let ids: Vec<u8> = CRITERIA.iter().map(|c| c.id).collect();
        assert_eq!(ids, (1..=10).collect::<Vec<_>>());
    }
}
