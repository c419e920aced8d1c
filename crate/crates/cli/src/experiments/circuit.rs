use mpcorr_core::correlator::{gen_sinusoid_pair, InputPair};
use mpcorr_core::dynamics::{
    fit_exponential, integrate_first_order, integrate_second_order, static_fixed_point, transient_readout,
    CircuitParams, DeviceModel, Trajectory,
};
use mpcorr_core::studies::{monotonicity_study, MonotonicityConfig};
use mpcorr_core::Nonlinearity;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_count, check_nonempty, check_nonlinearity, check_positive, check_range, Params};
use crate::error::CliError;
use crate::output::{num, Artifacts};

/// Shared circuit and input description of the transient experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsRc {
    pub n: usize,
    pub phases_deg: Vec<f64>,
    pub cycles: f64,
    pub r_sink: f64,
    pub c_par: f64,
    /// Device current scale; defaults to `4 / (N R)`.
    pub i0: Option<f64>,
    pub nonlinearity: Nonlinearity,
    pub mismatch_sigma: f64,
    pub t_end_tau: f64,
    pub steps_per_tau: usize,
    /// Keep every k-th sample in the trajectory file.
    pub sample_every: usize,
    /// Also run the Monte-Carlo monotonicity study.
    pub monotonicity: bool,
    pub monotonicity_trials: usize,
}

impl Default for DynamicsRc {
    fn default() -> Self {
        Self {
            n: 1024,
            phases_deg: vec![0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0],
            cycles: 5.0,
            r_sink: 1000.0,
            c_par: 100e-12,
            i0: None,
            nonlinearity: Nonlinearity::Relu,
            mismatch_sigma: 0.0,
            t_end_tau: 10.0,
            steps_per_tau: 200,
            sample_every: 10,
            monotonicity: false,
            monotonicity_trials: 500,
        }
    }
}

impl DynamicsRc {
    fn circuit(&self, l_par: f64) -> CircuitParams {
        CircuitParams {
            r_sink: self.r_sink,
            c_par: self.c_par,
            l_par,
            n: self.n,
        }
    }

    fn device(&self, seed: u64) -> DeviceModel {
        DeviceModel {
            h_kind: self.nonlinearity,
            i0: self.i0.unwrap_or(4.0 / (self.n as f64 * self.r_sink)),
            mismatch_sigma: self.mismatch_sigma,
            mismatch_seed: seed,
            ..DeviceModel::default()
        }
    }

    fn pairs(&self) -> Result<Vec<InputPair>, CliError> {
        self.phases_deg
            .iter()
            .map(|&p| Ok(gen_sinusoid_pair(p, self.n, self.cycles)?))
            .collect()
    }

    fn check_inputs(&self) -> Result<(), CliError> {
        check_count("n", self.n, 4, 1 << 20)?;
        check_nonempty("phases_deg", &self.phases_deg)?;
        for (k, &p) in self.phases_deg.iter().enumerate() {
            check_range(&format!("phases_deg[{k}]"), p, -360.0, 360.0)?;
        }
        check_range("cycles", self.cycles, 0.0, self.n as f64 / 2.0)?;
        check_positive("r_sink", self.r_sink)?;
        check_positive("c_par", self.c_par)?;
        if let Some(i0) = self.i0 {
            check_positive("i0", i0)?;
        }
        check_nonlinearity("nonlinearity", &self.nonlinearity)?;
        check_range("mismatch_sigma", self.mismatch_sigma, 0.0, 0.5)?;
        check_range("t_end_tau", self.t_end_tau, 0.01, 1000.0)?;
        check_count("sample_every", self.sample_every, 1, 1 << 20)
    }
}

fn trajectory_rows(label: &[String], traj: &Trajectory, every: usize) -> Vec<Vec<String>> {
    let last = traj.len() - 1;
    (0..traj.len())
        .filter(|k| k % every == 0 || *k == last)
        .map(|k| {
            let mut row = label.to_vec();
            row.extend([
                num(traj.times[k]),
                num(traj.v_plus[k]),
                num(traj.v_minus[k]),
                num(traj.v_plus[k] - traj.v_minus[k]),
            ]);
            row
        })
        .collect()
}

impl Params for DynamicsRc {
    fn validate(&self) -> Result<(), CliError> {
        self.check_inputs()?;
        check_count("steps_per_tau", self.steps_per_tau, 20, 100_000)?;
        if self.monotonicity {
            check_count("monotonicity_trials", self.monotonicity_trials, 2, 1_000_000)?;
        }
        Ok(())
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let params = self.circuit(0.0);
        let model = self.device(seed);
        let tau = params.tau();
        let dt = tau / self.steps_per_tau as f64;
        let pairs = self.pairs()?;
        let runs: Vec<(Trajectory, (f64, f64))> = pairs
            .par_iter()
            .map(|pair| {
                let traj = integrate_first_order(pair, &model, &params, self.t_end_tau * tau, dt)?;
                Ok((traj, static_fixed_point(pair, &model, &params)?))
            })
            .collect::<Result<_, CliError>>()?;

        let mut out = Artifacts::new();
        let mut rows = Vec::new();
        let mut fits = Vec::new();
        for (&phase, (traj, (vp, vm))) in self.phases_deg.iter().zip(&runs) {
            rows.extend(trajectory_rows(&[num(phase)], traj, self.sample_every));
            let v_out = traj.v_out();
            let fit = fit_exponential(&traj.times, &v_out).ok().and_then(|first| {
                let end = traj.times.partition_point(|&t| t <= 5.0 * first.tau).max(3);
                fit_exponential(&traj.times[..end], &v_out[..end]).ok()
            });
            let final_out = v_out[v_out.len() - 1];
            fits.push(json!({
                "phase_deg": phase,
                "static_v_plus": vp,
                "static_v_minus": vm,
                "steady_state": traj.steady_state,
                "final_v_out": final_out,
                "fit": fit,
            }));
            match fit {
                Some(f) => out.note(format!(
                    "phase {phase:6.1}: final {final_out:.6e}, static {:.6e}, tau_out {:.4e} s, R^2 {:.5}",
                    vp - vm,
                    f.tau,
                    f.r_squared
                )),
                None => out.note(format!("phase {phase:6.1}: final {final_out:.6e}, no exponential fit")),
            }
        }
        out.csv(
            "trajectories.csv",
            &["phase_deg", "t", "v_plus", "v_minus", "v_out"],
            rows,
        );
        out.json("fits.json", &json!({ "tau_rc": tau, "dt": dt, "phases": fits }))?;

        if self.monotonicity {
            let config = MonotonicityConfig {
                trials: self.monotonicity_trials,
                ..MonotonicityConfig::default()
            };
            let study = monotonicity_study(&config, seed)?;
            let mut header = vec!["r".to_string()];
            for c in &study.curves {
                header.push(format!("mean_{}", c.label));
                header.push(format!("se_{}", c.label));
            }
            let rows = study.r_grid.iter().enumerate().map(|(j, &r)| {
                let mut row = vec![num(r)];
                for c in &study.curves {
                    row.push(num(c.means[j]));
                    row.push(num(c.std_errors[j]));
                }
                row
            });
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.csv("monotonicity.csv", &header, rows);
            for c in &study.curves {
                out.note(format!(
                    "{}: monotone {}, worst violation {:.3e}",
                    c.label,
                    c.is_monotone(),
                    c.worst_violation()
                ));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsRlc {
    pub n: usize,
    pub phases_deg: Vec<f64>,
    pub cycles: f64,
    pub r_sink: f64,
    pub c_par: f64,
    pub i0: Option<f64>,
    pub nonlinearity: Nonlinearity,
    pub mismatch_sigma: f64,
    pub t_end_tau: f64,
    /// Steps per `R C` of the first-order reference.
    pub steps_per_tau: usize,
    pub sample_every: usize,
    pub l_par: Vec<f64>,
    /// Step as a fraction of `sqrt(L C)`.
    pub dt_fraction: f64,
}

impl Default for DynamicsRlc {
    fn default() -> Self {
        let rc = DynamicsRc::default();
        Self {
            n: rc.n,
            phases_deg: vec![0.0, 60.0, 120.0, 180.0],
            cycles: rc.cycles,
            r_sink: rc.r_sink,
            c_par: rc.c_par,
            i0: rc.i0,
            nonlinearity: rc.nonlinearity,
            mismatch_sigma: rc.mismatch_sigma,
            t_end_tau: 3.0,
            steps_per_tau: rc.steps_per_tau,
            sample_every: 1,
            l_par: vec![0.5e-9, 1e-9, 2e-9, 5e-9],
            dt_fraction: 0.05,
        }
    }
}

impl DynamicsRlc {
    fn base(&self) -> DynamicsRc {
        DynamicsRc {
            n: self.n,
            phases_deg: self.phases_deg.clone(),
            cycles: self.cycles,
            r_sink: self.r_sink,
            c_par: self.c_par,
            i0: self.i0,
            nonlinearity: self.nonlinearity,
            mismatch_sigma: self.mismatch_sigma,
            t_end_tau: self.t_end_tau,
            steps_per_tau: self.steps_per_tau,
            sample_every: self.sample_every,
            monotonicity: false,
            monotonicity_trials: 0,
        }
    }
}

impl Params for DynamicsRlc {
    fn validate(&self) -> Result<(), CliError> {
        let base = self.base();
        base.check_inputs()?;
        check_count("steps_per_tau", self.steps_per_tau, 20, 100_000)?;
        check_nonempty("l_par", &self.l_par)?;
        for (k, &l) in self.l_par.iter().enumerate() {
            check_positive(&format!("l_par[{k}]"), l)?;
        }
        check_range("dt_fraction", self.dt_fraction, 1e-4, 0.05)?;
        let tau = self.r_sink * self.c_par;
        for (k, &l) in self.l_par.iter().enumerate() {
            let steps = self.t_end_tau * tau / (self.dt_fraction * (l * self.c_par).sqrt());
            if steps > 2e7 {
                return Err(super::invalid(
                    &format!("l_par[{k}]"),
                    format!("needs {steps:.3e} steps, limit 2e7"),
                ));
            }
        }
        Ok(())
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let base = &self.base();
        let model = base.device(seed);
        let rc = base.circuit(0.0);
        let tau = rc.tau();
        let t_end = base.t_end_tau * tau;
        let pairs = base.pairs()?;
        let reference: Vec<Trajectory> = pairs
            .par_iter()
            .map(|pair| {
                Ok(integrate_first_order(
                    pair,
                    &model,
                    &rc,
                    t_end,
                    tau / base.steps_per_tau as f64,
                )?)
            })
            .collect::<Result<_, CliError>>()?;
        let jobs: Vec<(usize, usize)> = (0..self.l_par.len())
            .flat_map(|a| (0..pairs.len()).map(move |b| (a, b)))
            .collect();
        let runs: Vec<Trajectory> = jobs
            .par_iter()
            .map(|&(a, b)| {
                let params = base.circuit(self.l_par[a]);
                let dt = self.dt_fraction * (params.l_par * params.c_par).sqrt();
                Ok(integrate_second_order(&pairs[b], &model, &params, t_end, dt)?)
            })
            .collect::<Result<_, CliError>>()?;

        let mut out = Artifacts::new();
        let mut rows = Vec::new();
        let mut report: Vec<Value> = Vec::new();
        for (&(a, b), traj) in jobs.iter().zip(&runs) {
            let l = self.l_par[a];
            let phase = base.phases_deg[b];
            // Thin long traces to about a thousand samples each.
            let every = (traj.len() / 1000).max(1) * base.sample_every;
            rows.extend(trajectory_rows(&[num(l), num(phase)], traj, every));
            let first = &reference[b];
            let (end_rlc, end_rc) = (traj.v_out()[traj.len() - 1], first.v_out()[first.len() - 1]);
            let ss = traj.steady_state.unwrap_or(end_rc);
            let peak = traj
                .v_out()
                .iter()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            let overshoot = if ss != 0.0 { peak / ss - 1.0 } else { 0.0 };
            let read_rlc = transient_readout(traj, tau)?;
            let read_rc = transient_readout(first, tau)?;
            report.push(json!({
                "l_par": l,
                "phase_deg": phase,
                "final_v_out": end_rlc,
                "first_order_final_v_out": end_rc,
                "readout_at_tau": read_rlc,
                "first_order_readout_at_tau": read_rc,
                "overshoot": overshoot,
            }));
            out.note(format!(
                "L {l:.2e} H, phase {phase:6.1}: final {end_rlc:.6e} (first order {end_rc:.6e}), overshoot {overshoot:.3e}"
            ));
        }
        out.csv(
            "rlc_trajectories.csv",
            &["l_par", "phase_deg", "t", "v_plus", "v_minus", "v_out"],
            rows,
        );
        out.json("rlc_summary.json", &json!({ "tau_rc": tau, "runs": report }))?;
        Ok(out)
    }
}
