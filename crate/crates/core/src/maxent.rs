//! Tsallis maximum-entropy mesostate ensembles and their MP equivalent.
//!
//! Each branch (`+` and `-`) places `2N` wells with energy offsets `s_i` and
//! `-s_i`, where `s_i = x_i + y_i` or `x_i - y_i`. Maximizing the Tsallis
//! entropy under normalization and an energy constraint gives
//! `p_i = [(eta-1)(alpha + beta s_i)/eta]_+^{1/(eta-1)}` and the same for `q_i`
//! with `-s_i`. Normalization is exactly an MP equation over `[s, -s]`, which
//! is how the multipliers are solved here.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::mp::{mp_solve, MpProblem};
use crate::nonlinearity::Nonlinearity;

/// Which differential branch an ensemble belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Ensemble energies `U+`, `U-` and the common reference level `E0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTarget {
    pub u_plus: f64,
    pub u_minus: f64,
    #[serde(default)]
    pub e0: f64,
}

impl EnergyTarget {
    pub fn new(u_plus: f64, u_minus: f64) -> Self {
        Self {
            u_plus,
            u_minus,
            e0: 0.0,
        }
    }

    /// Net energy `U - E0` for one branch.
    pub fn net(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Plus => self.u_plus - self.e0,
            Branch::Minus => self.u_minus - self.e0,
        }
    }
}

/// Lagrange multipliers of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub alpha: f64,
    pub beta: f64,
}

/// Both branches of a solved maximum-entropy ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesostateEnsemble {
    pub p_plus: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub q_minus: Vec<f64>,
    pub alpha_plus: f64,
    pub beta_plus: f64,
    pub alpha_minus: f64,
    pub beta_minus: f64,
    pub eta: f64,
}

impl MesostateEnsemble {
    /// Solves both branches independently for the given energies.
    pub fn solve(x: &[f64], y: &[f64], eta: f64, target: &EnergyTarget) -> Result<Self> {
        let plus = solve_multipliers(x, y, eta, target, Branch::Plus)?;
        let minus = solve_multipliers(x, y, eta, target, Branch::Minus)?;
        let (p_plus, q_plus) = maxent_distribution(x, y, eta, plus.alpha, plus.beta, Branch::Plus)?;
        let (p_minus, q_minus) = maxent_distribution(x, y, eta, minus.alpha, minus.beta, Branch::Minus)?;
        Ok(Self {
            p_plus,
            q_plus,
            p_minus,
            q_minus,
            alpha_plus: plus.alpha,
            beta_plus: plus.beta,
            alpha_minus: minus.alpha,
            beta_minus: minus.beta,
            eta,
        })
    }

    /// `|sum(p + q) - 1|` for each branch.
    pub fn normalization_residuals(&self) -> (f64, f64) {
        let total = |p: &[f64], q: &[f64]| (p.iter().sum::<f64>() + q.iter().sum::<f64>() - 1.0).abs();
        (total(&self.p_plus, &self.q_plus), total(&self.p_minus, &self.q_minus))
    }
}

/// Tsallis entropy `(1 - sum p^eta)/(eta - 1)`, or Shannon entropy at `eta = 1`.
pub fn tsallis_entropy(probabilities: &[f64], eta: f64) -> Result<f64> {
    check_finite(probabilities, "probability")?;
    if !(eta.is_finite() && eta >= 1.0) {
        return Err(Error::InputDomain(format!("entropy index must be >= 1, got {eta}")));
    }
    if let Some(p) = probabilities.iter().find(|&&p| p < 0.0) {
        return Err(Error::InputDomain(format!("negative probability {p}")));
    }
    let total: f64 = probabilities.iter().sum();
    if total > 1.0 + 1e-8 {
        return Err(Error::InputDomain(format!("probabilities sum to {total} > 1")));
    }
    if eta == 1.0 {
        return Ok(-probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>());
    }
    Ok((1.0 - probabilities.iter().map(|p| p.powf(eta)).sum::<f64>()) / (eta - 1.0))
}

fn check_index(eta: f64) -> Result<()> {
    if eta == 1.0 {
        return Err(Error::UnsupportedIndex(eta));
    }
    if !(eta.is_finite() && eta > 1.0 && eta <= 2.0) {
        return Err(Error::InputDomain(format!(
            "entropy index must lie in (1, 2], got {eta}"
        )));
    }
    Ok(())
}

/// Well offsets `s_i = x_i +/- y_i` for a branch.
pub fn branch_offsets(x: &[f64], y: &[f64], branch: Branch) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("ensemble inputs"));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let sign = branch.sign();
    Ok(x.iter().zip(y).map(|(a, b)| a + sign * b).collect())
}

/// Unnormalized maximum-entropy occupancies `(p, q)` for given multipliers.
pub fn maxent_distribution(
    x: &[f64],
    y: &[f64],
    eta: f64,
    alpha: f64,
    beta: f64,
    branch: Branch,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_index(eta)?;
    if !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InputDomain("multipliers must be finite".into()));
    }
    let s = branch_offsets(x, y, branch)?;
    let c = (eta - 1.0) / eta;
    let k = 1.0 / (eta - 1.0);
    let occupancy = |e: f64| {
        let base = c * (alpha + beta * e);
        if base > 0.0 {
            base.powf(k)
        } else {
            0.0
        }
    };
    Ok((
        s.iter().map(|&e| occupancy(e)).collect(),
        s.iter().map(|&e| occupancy(-e)).collect(),
    ))
}

/// Maps multipliers to the MP threshold and normalization constraint.
pub fn maxent_to_mp_params(alpha: f64, beta: f64, eta: f64) -> Result<(f64, f64)> {
    check_index(eta)?;
    if beta == 0.0 || !beta.is_finite() || !alpha.is_finite() {
        return Err(Error::InputDomain(format!(
            "beta must be finite and nonzero, got {beta}"
        )));
    }
    let gamma = ((eta - 1.0) * beta.abs() / eta).powf(1.0 / (1.0 - eta));
    Ok((-alpha / beta, gamma))
}

/// Normalized energy `sum s (p - q)` of the ensemble whose MP constraint is `gamma`.
fn energy_at(s: &[f64], problem_ops: &[f64], nl: &Nonlinearity, gamma: f64) -> Result<(f64, f64)> {
    let problem = MpProblem::new(problem_ops.to_vec(), gamma)?;
    // Below the rounding floor of the operands a relative tolerance is unreachable.
    let scale = problem_ops.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = (1e-10 * gamma).max(1e-14 * scale * problem_ops.len() as f64);
    let z = mp_solve(&problem, nl, tol)?.z;
    let energy = s
        .iter()
        .map(|&e| e * (nl.evaluate(e - z) - nl.evaluate(-e - z)))
        .sum::<f64>()
        / gamma;
    Ok((energy, z))
}

/// Finds `(alpha, beta)` satisfying normalization and the branch energy constraint.
///
/// The energy of the normalized ensemble decreases from `max |s|` to 0 as the
/// MP constraint `gamma` grows, so the solve is a bisection on `ln gamma` with
/// an MP solve at every step. A negative net energy mirrors the ensemble and
/// flips the sign of `beta`.
pub fn solve_multipliers(x: &[f64], y: &[f64], eta: f64, target: &EnergyTarget, branch: Branch) -> Result<Multipliers> {
    check_index(eta)?;
    let s = branch_offsets(x, y, branch)?;
    let u = target.net(branch);
    if !u.is_finite() {
        return Err(Error::InputDomain(format!("energy target {u} is not finite")));
    }
    let n = s.len() as f64;
    let c = (eta - 1.0) / eta;
    let max_abs = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    if u == 0.0 || max_abs == 0.0 {
        if u != 0.0 {
            return Err(Error::Infeasible(format!(
                "energy {u} requested but all offsets are zero"
            )));
        }
        // Uniform occupancy 1/(2N) on every well.
        let alpha = (2.0 * n).powf(1.0 - eta) / c;
        return Ok(Multipliers { alpha, beta: 0.0 });
    }
    let target_energy = u.abs();
    if target_energy > max_abs {
        return Err(Error::Infeasible(format!(
            "|U - E0| = {target_energy} exceeds the largest achievable energy {max_abs}"
        )));
    }

    let nl = Nonlinearity::Power { eta };
    let ops: Vec<f64> = s.iter().copied().chain(s.iter().map(|v| -v)).collect();

    let mut lo = (max_abs * 1e-9).ln();
    let mut hi = (max_abs * n).max(1.0).ln();
    let mut tries = 0;
    while energy_at(&s, &ops, &nl, hi.exp())?.0 > target_energy {
        lo = hi;
        hi += 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Convergence {
                reason: "energy target too small to bracket".into(),
                lo,
                hi,
            });
        }
    }
    tries = 0;
    while energy_at(&s, &ops, &nl, lo.exp())?.0 < target_energy {
        hi = lo;
        lo -= 2.0;
        tries += 1;
        if tries > 10 {
            return Err(Error::Convergence {
                reason: "energy target too close to the maximum to bracket".into(),
                lo,
                hi,
            });
        }
    }

    let mut best = (lo + hi) / 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        best = mid;
        let (e, _) = energy_at(&s, &ops, &nl, mid.exp())?;
        if e > target_energy {
            lo = mid;
        } else if e < target_energy {
            hi = mid;
        } else {
            break;
        }
    }

    let gamma = best.exp();
    let (_, z) = energy_at(&s, &ops, &nl, gamma)?;
    let beta_abs = gamma.powf(1.0 - eta) / c;
    let beta = beta_abs * u.signum();
    let alpha = -z * beta_abs;
    Ok(Multipliers { alpha, beta })
}

/// Residuals `(normalization, energy)` of a branch distribution.
pub fn constraint_residuals(
    x: &[f64],
    y: &[f64],
    p: &[f64],
    q: &[f64],
    target: &EnergyTarget,
    branch: Branch,
) -> Result<(f64, f64)> {
    let s = branch_offsets(x, y, branch)?;
    if p.len() != s.len() || q.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            actual: p.len().min(q.len()),
        });
    }
    let norm = p.iter().sum::<f64>() + q.iter().sum::<f64>() - 1.0;
    let energy: f64 = s.iter().zip(p.iter().zip(q)).map(|(e, (a, b))| e * (a - b)).sum();
    Ok((norm.abs(), (energy - target.net(branch)).abs()))
}
