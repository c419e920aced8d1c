use mpcorr_core::maxent::{
    branch_offsets, constraint_residuals, maxent_distribution, maxent_to_mp_params, solve_multipliers, tsallis_entropy,
    Branch, EnergyTarget,
};
use mpcorr_core::rng::{derive_seed, rng_from_seed};
use mpcorr_core::{mp_gradient, mp_solve, MpProblem, Nonlinearity};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_count, check_nonempty, check_nonlinearity, check_positive, check_range, invalid, Params};
use crate::error::CliError;
use crate::output::{num, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpDemo {
    pub operands: Vec<f64>,
    pub gamma: f64,
    pub nonlinearities: Vec<Nonlinearity>,
    /// Constraint values for the sweep.
    pub gamma_sweep: Vec<f64>,
    pub tol: f64,
}

impl Default for MpDemo {
    fn default() -> Self {
        Self {
            operands: vec![1.0, 0.6, 0.1, -0.3, -1.2],
            gamma: 1.0,
            nonlinearities: vec![
                Nonlinearity::Relu,
                Nonlinearity::Softplus { temperature: 0.25 },
                Nonlinearity::Power { eta: 1.5 },
            ],
            gamma_sweep: (0..=16).map(|k| 10f64.powf(-2.0 + 0.25 * k as f64)).collect(),
            tol: 1e-12,
        }
    }
}

impl Params for MpDemo {
    fn validate(&self) -> Result<(), CliError> {
        check_nonempty("operands", &self.operands)?;
        if self.operands.iter().any(|v| !v.is_finite()) {
            return Err(invalid("operands", "must be finite"));
        }
        check_positive("gamma", self.gamma)?;
        check_nonempty("nonlinearities", &self.nonlinearities)?;
        for (k, nl) in self.nonlinearities.iter().enumerate() {
            check_nonlinearity(&format!("nonlinearities[{k}]"), nl)?;
        }
        for (k, &g) in self.gamma_sweep.iter().enumerate() {
            check_positive(&format!("gamma_sweep[{k}]"), g)?;
        }
        check_range("tol", self.tol, 1e-15, 1e-3)
    }

    fn run(&self, _seed: u64) -> Result<Artifacts, CliError> {
        let mut out = Artifacts::new();
        let problem = MpProblem::new(self.operands.clone(), self.gamma)?;
        let mut solutions = Vec::new();
        for nl in &self.nonlinearities {
            let sol = mp_solve(&problem, nl, self.tol)?;
            let gradient = mp_gradient(&problem, nl, sol.z).ok();
            out.note(format!(
                "{}: z = {:.9}, residual {:.2e}",
                label(nl),
                sol.z,
                sol.residual
            ));
            solutions.push(json!({
                "nonlinearity": nl,
                "z": sol.z,
                "residual": sol.residual,
                "iterations": sol.iterations,
                "gradient": gradient,
            }));
        }
        out.json(
            "solutions.json",
            &json!({ "operands": self.operands, "gamma": self.gamma, "solutions": solutions }),
        )?;

        let mut header = vec!["gamma".to_string()];
        header.extend(self.nonlinearities.iter().map(|nl| format!("z_{}", label(nl))));
        let rows = self
            .gamma_sweep
            .iter()
            .map(|&g| {
                let p = MpProblem::new(self.operands.clone(), g)?;
                let mut row = vec![num(g)];
                for nl in &self.nonlinearities {
                    row.push(num(mp_solve(&p, nl, self.tol)?.z));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv("gamma_sweep.csv", &header, rows);
        Ok(out)
    }
}

fn label(nl: &Nonlinearity) -> String {
    match nl {
        Nonlinearity::Relu => "relu".into(),
        Nonlinearity::Softplus { temperature } => format!("softplus_{temperature}"),
        Nonlinearity::Power { eta } => format!("power_{eta}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxentCheck {
    pub n: usize,
    pub ensembles: usize,
    pub etas: Vec<f64>,
    /// Branch energies are drawn as this range of fractions of the largest offset.
    pub energy_fraction: (f64, f64),
}

impl Default for MaxentCheck {
    fn default() -> Self {
        Self {
            n: 16,
            ensembles: 100,
            etas: vec![2.0, 1.5],
            energy_fraction: (0.05, 0.9),
        }
    }
}

impl Params for MaxentCheck {
    fn validate(&self) -> Result<(), CliError> {
        check_count("n", self.n, 1, 4096)?;
        check_count("ensembles", self.ensembles, 1, 100_000)?;
        check_nonempty("etas", &self.etas)?;
        for (k, &eta) in self.etas.iter().enumerate() {
            check_range(&format!("etas[{k}]"), eta, 1.05, 2.0)?;
        }
        let (lo, hi) = self.energy_fraction;
        check_range("energy_fraction[0]", lo, 1e-6, 1.0)?;
        check_range("energy_fraction[1]", hi, lo, 0.999)
    }

    fn run(&self, seed: u64) -> Result<Artifacts, CliError> {
        let rows: Vec<Vec<Row>> = (0..self.ensembles)
            .into_par_iter()
            .map(|k| self.ensemble(derive_seed(seed, k as u64), k))
            .collect::<Result<_, CliError>>()?;
        let rows: Vec<Row> = rows.into_iter().flatten().collect();

        let mut out = Artifacts::new();
        let worst = |f: fn(&Row) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
        let (dz, norm, energy) = (
            worst(|r| (r.z_maxent - r.z_mp).abs()),
            worst(|r| r.norm),
            worst(|r| r.energy),
        );
        out.note(format!("{} ensemble branches", rows.len()));
        out.note(format!("worst |z_maxent - z_mp| {dz:.3e}"));
        out.note(format!(
            "worst residuals: normalization {norm:.3e}, energy {energy:.3e}"
        ));
        out.json(
            "maxent_summary.json",
            &json!({ "branches": rows.len(), "worst_z_gap": dz, "worst_norm_residual": norm, "worst_energy_residual": energy }),
        )?;
        out.csv(
            "ensembles.csv",
            &[
                "ensemble",
                "eta",
                "branch",
                "alpha",
                "beta",
                "gamma",
                "z_maxent",
                "z_mp",
                "norm_residual",
                "energy_residual",
                "entropy",
            ],
            rows.iter().map(|r| {
                vec![
                    r.ensemble.to_string(),
                    num(r.eta),
                    r.branch.to_string(),
                    num(r.alpha),
                    num(r.beta),
                    num(r.gamma),
                    num(r.z_maxent),
                    num(r.z_mp),
                    num(r.norm),
                    num(r.energy),
                    num(r.entropy),
                ]
            }),
        );
        Ok(out)
    }
}

struct Row {
    ensemble: usize,
    eta: f64,
    branch: &'static str,
    alpha: f64,
    beta: f64,
    gamma: f64,
    z_maxent: f64,
    z_mp: f64,
    norm: f64,
    energy: f64,
    entropy: f64,
}

impl MaxentCheck {
    fn ensemble(&self, seed: u64, index: usize) -> Result<Vec<Row>, CliError> {
        let mut rng = rng_from_seed(seed);
        let x: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lo, hi) = self.energy_fraction;
        let mut fraction = || if hi > lo { rng.random_range(lo..hi) } else { lo };
        let peak =
            |b| -> Result<f64, CliError> { Ok(branch_offsets(&x, &y, b)?.iter().fold(0.0f64, |m, v| m.max(v.abs()))) };
        let target = EnergyTarget::new(fraction() * peak(Branch::Plus)?, fraction() * peak(Branch::Minus)?);
        let mut rows = Vec::new();
        for &eta in &self.etas {
            for (branch, name) in [(Branch::Plus, "plus"), (Branch::Minus, "minus")] {
                let m = solve_multipliers(&x, &y, eta, &target, branch)?;
                let (z_maxent, gamma) = maxent_to_mp_params(m.alpha, m.beta, eta)?;
                let s = branch_offsets(&x, &y, branch)?;
                let nl = if eta == 2.0 {
                    Nonlinearity::Relu
                } else {
                    Nonlinearity::power(eta)?
                };
                let z_mp = mp_solve(&MpProblem::symmetric(&s, gamma)?, &nl, 1e-12 * gamma.max(1e-3))?.z;
                let (p, q) = maxent_distribution(&x, &y, eta, m.alpha, m.beta, branch)?;
                let (norm, energy) = constraint_residuals(&x, &y, &p, &q, &target, branch)?;
                let all: Vec<f64> = p.iter().chain(&q).copied().collect();
                rows.push(Row {
                    ensemble: index,
                    eta,
                    branch: name,
                    alpha: m.alpha,
                    beta: m.beta,
                    gamma,
                    z_maxent,
                    z_mp,
                    norm,
                    energy,
                    entropy: tsallis_entropy(&all, eta)?,
                });
            }
        }
        Ok(rows)
    }
}
