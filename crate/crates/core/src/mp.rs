//! Margin propagation: solving `sum_i h(o_i - z) = gamma` for the threshold `z`.
//!
//! The left-hand side is non-increasing in `z` and tends to infinity as
//! `z -> -inf`, so for any `gamma > 0` the root is unique. The solver brackets
//! it, bisects to a 1e-12 wide interval and then polishes with guarded Newton
//! steps that never leave the bracket.

use crate::error::{check_finite, Error, Result};
use crate::nonlinearity::Nonlinearity;

/// Default tolerance on the constraint residual.
pub const DEFAULT_TOL: f64 = 1e-10;

const BISECTION_WIDTH: f64 = 1e-12;
const MAX_EXPANSIONS: usize = 200;
const MAX_BISECTIONS: usize = 400;
const MAX_POLISH: usize = 12;
const DEGENERATE_DERIVATIVE: f64 = 1e-15;

/// Operand vector and normalization constraint of one MP evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MpProblem {
    operands: Vec<f64>,
    gamma: f64,
}

impl MpProblem {
    pub fn new(operands: Vec<f64>, gamma: f64) -> Result<Self> {
        if operands.is_empty() {
            return Err(Error::EmptyInput("MP operands"));
        }
        check_finite(&operands, "operand")?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InputDomain(format!(
                "gamma must be finite and positive, got {gamma}"
            )));
        }
        Ok(Self { operands, gamma })
    }

    /// Builds the rectangular-symmetric operand vector `[v, -v]`.
    pub fn symmetric(values: &[f64], gamma: f64) -> Result<Self> {
        let mut operands = Vec::with_capacity(2 * values.len());
        operands.extend_from_slice(values);
        operands.extend(values.iter().map(|v| -v));
        Self::new(operands, gamma)
    }

    pub fn operands(&self) -> &[f64] {
        &self.operands
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `sum_i h(o_i - z)`.
    pub fn constraint_sum(&self, nl: &Nonlinearity, z: f64) -> f64 {
        self.operands.iter().map(|&o| nl.evaluate(o - z)).sum()
    }

    /// `sum_i h'(o_i - z)`, the negated slope of the constraint in `z`.
    pub fn constraint_slope(&self, nl: &Nonlinearity, z: f64) -> f64 {
        self.operands.iter().map(|&o| nl.derivative(o - z)).sum()
    }

    fn excess(&self, nl: &Nonlinearity, z: f64) -> f64 {
        self.constraint_sum(nl, z) - self.gamma
    }
}

/// Solved threshold with its achieved residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpSolution {
    pub z: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Knobs for [`mp_solve_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// Starting bracket; it is widened until it encloses the root.
    pub initial_bracket: Option<(f64, f64)>,
    /// Bisection stops once the bracket is this narrow.
    pub bisection_width: f64,
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            initial_bracket: None,
            bisection_width: BISECTION_WIDTH,
            polish: true,
        }
    }
}

/// Solves the MP equation with the default bracket and Newton polish.
pub fn mp_solve(problem: &MpProblem, nl: &Nonlinearity, tol: f64) -> Result<MpSolution> {
    mp_solve_with(
        problem,
        nl,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn mp_solve_with(problem: &MpProblem, nl: &Nonlinearity, options: &SolverOptions) -> Result<MpSolution> {
    nl.validate()?;
    let tol = options.tol;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InputDomain(format!("tolerance must be positive, got {tol}")));
    }
    if !(options.bisection_width.is_finite() && options.bisection_width > 0.0) {
        return Err(Error::InputDomain(format!(
            "bisection width must be positive, got {}",
            options.bisection_width
        )));
    }
    let gamma = problem.gamma;
    let (min, max) = problem
        .operands
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &o| {
            (lo.min(o), hi.max(o))
        });
    let (mut lo, mut hi) = options.initial_bracket.unwrap_or((min - gamma - 1.0, max));
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InputDomain(format!("invalid bracket [{lo}, {hi}]")));
    }

    // Widen until excess(lo) >= 0 >= excess(hi).
    let mut iterations = 0;
    let mut step = (hi - lo).max(1.0);
    while problem.excess(nl, lo) < 0.0 {
        iterations += 1;
        if iterations > MAX_EXPANSIONS {
            return Err(Error::Convergence {
                reason: "could not bracket root from below".into(),
                lo,
                hi,
            });
        }
        hi = lo;
        lo -= step;
        step *= 2.0;
    }
    let mut step = (hi - lo).max(1.0);
    let mut expansions = 0;
    while problem.excess(nl, hi) > 0.0 {
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Convergence {
                reason: "could not bracket root from above".into(),
                lo,
                hi,
            });
        }
        lo = hi;
        hi += step;
        step *= 2.0;
    }
    iterations += expansions;

    let mut exact = None;
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= options.bisection_width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let e = problem.excess(nl, mid);
        if e > 0.0 {
            lo = mid;
        } else if e < 0.0 {
            hi = mid;
        } else {
            exact = Some(mid);
            break;
        }
    }

    let mut z = exact.unwrap_or(0.5 * (lo + hi));
    let mut residual = problem.excess(nl, z).abs();
    if options.polish && exact.is_none() {
        for _ in 0..MAX_POLISH {
            if residual == 0.0 {
                break;
            }
            let slope = problem.constraint_slope(nl, z);
            if slope <= 0.0 {
                break;
            }
            let candidate = z + problem.excess(nl, z) / slope;
            if !(candidate >= lo && candidate <= hi) {
                break;
            }
            let r = problem.excess(nl, candidate).abs();
            iterations += 1;
            if r < residual {
                z = candidate;
                residual = r;
            } else {
                break;
            }
        }
    }

    if residual > tol {
        return Err(Error::Convergence {
            reason: format!("residual {residual:e} above tolerance {tol:e}"),
            lo,
            hi,
        });
    }
    Ok(MpSolution {
        z,
        residual,
        iterations,
    })
}

/// Gradient of the symmetric MP output with respect to the underlying values.
///
/// `problem.operands()` holds the `n` underlying values `o`; the MP equation is
/// the symmetric one over `[o, -o]` and `z` must already solve it. Each
/// component is `(h'(o_j - z) - h'(-o_j - z)) / sum_i (h'(o_i - z) + h'(-o_i - z))`,
/// which is bounded by 1 in magnitude.
pub fn mp_gradient(problem: &MpProblem, nl: &Nonlinearity, z: f64) -> Result<Vec<f64>> {
    let (numerators, denominator): (Vec<f64>, f64) = problem.operands.iter().fold(
        (Vec::with_capacity(problem.operands.len()), 0.0),
        |(mut num, den), &o| {
            let up = nl.derivative(o - z);
            let down = nl.derivative(-o - z);
            num.push(up - down);
            (num, den + up + down)
        },
    );
    if denominator < DEGENERATE_DERIVATIVE {
        return Err(Error::DegenerateGradient(denominator));
    }
    Ok(numerators.into_iter().map(|n| n / denominator).collect())
}

/// Exact relu MP solver over a fixed operand set.
///
/// Operands are sorted once; each solve is a binary search over the active
/// count, so repeated solves with varying `gamma` (as in the inductive circuit
/// model) cost `O(log n)`.
#[derive(Debug, Clone)]
pub struct ReluMpSolver {
    sorted_desc: Vec<f64>,
    prefix: Vec<f64>,
}

impl ReluMpSolver {
    pub fn new(operands: &[f64]) -> Result<Self> {
        if operands.is_empty() {
            return Err(Error::EmptyInput("MP operands"));
        }
        check_finite(operands, "operand")?;
        let mut sorted_desc = operands.to_vec();
        sorted_desc.sort_by(|a, b| b.total_cmp(a));
        let prefix = sorted_desc
            .iter()
            .scan(0.0, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        Ok(Self { sorted_desc, prefix })
    }

    pub fn len(&self) -> usize {
        self.sorted_desc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_desc.is_empty()
    }

    pub fn max_operand(&self) -> f64 {
        self.sorted_desc[0]
    }

    fn candidate(&self, k: usize, gamma: f64) -> f64 {
        (self.prefix[k - 1] - gamma) / k as f64
    }

    /// Threshold `z` with `sum_i max(0, o_i - z) = gamma`, for `gamma > 0`.
    pub fn solve(&self, gamma: f64) -> f64 {
        let n = self.sorted_desc.len();
        // z_k is unimodal in k and the root is the first k whose candidate
        // already sits above the next operand.
        let done = |k: usize| k == n || self.sorted_desc[k] <= self.candidate(k, gamma);
        let (mut lo, mut hi) = (1usize, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if done(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        self.candidate(lo, gamma)
    }

    /// Number of operands strictly above `z`.
    pub fn active_count(&self, z: f64) -> usize {
        self.sorted_desc.partition_point(|&o| o > z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Plain fixed-step bisection, kept separate from the solver under test.
    fn bisection_oracle(ops: &[f64], gamma: f64, nl: &Nonlinearity) -> f64 {
        let f = |z: f64| ops.iter().map(|&o| nl.evaluate(o - z)).sum::<f64>() - gamma;
        let mut lo = ops.iter().cloned().fold(f64::INFINITY, f64::min) - gamma - 1.0;
        let mut hi = ops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        while f(hi) > 0.0 {
            hi += 1.0;
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

    fn solve(ops: &[f64], gamma: f64, nl: Nonlinearity) -> f64 {
        let p = MpProblem::new(ops.to_vec(), gamma).unwrap();
        mp_solve(&p, &nl, DEFAULT_TOL).unwrap().z
    }

    #[test]
    fn two_zero_operands() {
        assert!((solve(&[0.0, 0.0], 1.0, Nonlinearity::Relu) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn opposite_operands() {
        assert!(solve(&[1.0, -1.0], 1.0, Nonlinearity::Relu).abs() < 1e-12);
    }

    #[test]
    fn gaussian_operands_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ops: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let z = solve(&ops, 2.0, Nonlinearity::Relu);
        let oracle = bisection_oracle(&ops, 2.0, &Nonlinearity::Relu);
        assert!((z - oracle).abs() < 1e-9, "{z} vs {oracle}");
    }

    #[test]
    fn residual_is_reported_within_tolerance() {
        let p = MpProblem::new(vec![0.3, -1.2, 2.5, 0.0], 0.7).unwrap();
        for nl in [
            Nonlinearity::Relu,
            Nonlinearity::Power { eta: 1.5 },
            Nonlinearity::Softplus { temperature: 0.3 },
        ] {
            let s = mp_solve(&p, &nl, 1e-10).unwrap();
            assert!(s.residual <= 1e-10);
            assert!((p.constraint_sum(&nl, s.z) - 0.7).abs() <= 1e-10);
        }
    }

    #[test]
    fn softplus_needs_upward_bracket_expansion() {
        // Sum of softplus at z = max(o) already exceeds gamma here.
        let ops = vec![0.0; 64];
        let nl = Nonlinearity::Softplus { temperature: 1.0 };
        let z = solve(&ops, 0.5, nl);
        let oracle = bisection_oracle(&ops, 0.5, &nl);
        assert!(z > 0.0);
        assert!((z - oracle).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(matches!(
            MpProblem::new(vec![1.0, f64::NAN], 1.0),
            Err(Error::InputDomain(_))
        ));
        assert!(MpProblem::new(vec![], 1.0).is_err());
        assert!(MpProblem::new(vec![1.0], 0.0).is_err());
        assert!(MpProblem::new(vec![1.0], f64::INFINITY).is_err());
        let p = MpProblem::new(vec![1.0], 1.0).unwrap();
        assert!(mp_solve(&p, &Nonlinearity::Relu, 0.0).is_err());
    }

    #[test]
    fn too_tight_tolerance_reports_convergence_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ops: Vec<f64> = (0..4000).map(|_| 1e3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let p = MpProblem::new(ops, 1e6).unwrap();
        match mp_solve(&p, &Nonlinearity::Power { eta: 1.5 }, 1e-300) {
            Err(Error::Convergence { lo, hi, .. }) => assert!(lo <= hi),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn coarse_bisection_without_polish_is_inexact() {
        let p = MpProblem::new(vec![0.3, -1.2, 2.5, 0.9], 1.7).unwrap();
        let nl = Nonlinearity::Softplus { temperature: 0.4 };
        let exact = mp_solve(&p, &nl, 1e-12).unwrap().z;
        let coarse = SolverOptions {
            tol: 1.0,
            bisection_width: 0.25,
            polish: false,
            ..SolverOptions::default()
        };
        let z = mp_solve_with(&p, &nl, &coarse).unwrap().z;
        assert!((z - exact).abs() > 1e-6 && (z - exact).abs() <= 0.125 + 1e-12);
        let bad = SolverOptions {
            bisection_width: 0.0,
            ..SolverOptions::default()
        };
        assert!(matches!(mp_solve_with(&p, &nl, &bad), Err(Error::InputDomain(_))));
    }

    #[test]
    fn gradient_closed_form_examples() {
        let p = MpProblem::new(vec![1.0], 1.0).unwrap();
        let g = mp_gradient(&p, &Nonlinearity::Relu, 0.0).unwrap();
        assert_eq!(g, vec![1.0]);
        let p = MpProblem::new(vec![0.0], 3.0).unwrap();
        let z = solve(&[0.0, 0.0], 3.0, Nonlinearity::Relu);
        assert_eq!(mp_gradient(&p, &Nonlinearity::Relu, z).unwrap(), vec![0.0]);
    }

    #[test]
    fn gradient_degenerate_when_all_inactive() {
        let p = MpProblem::new(vec![0.1, -0.2], 1.0).unwrap();
        assert!(matches!(
            mp_gradient(&p, &Nonlinearity::Relu, 5.0),
            Err(Error::DegenerateGradient(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences_softplus() {
        let nl = Nonlinearity::Softplus { temperature: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let gamma = 1.3;
        let z_of = |v: &[f64]| {
            let p = MpProblem::symmetric(v, gamma).unwrap();
            mp_solve(&p, &nl, 1e-12).unwrap().z
        };
        let z = z_of(&o);
        let grad = mp_gradient(&MpProblem::new(o.clone(), gamma).unwrap(), &nl, z).unwrap();
        let h = 1e-6;
        for j in 0..o.len() {
            let mut up = o.clone();
            let mut dn = o.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (z_of(&up) - z_of(&dn)) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-5, "component {j}: {fd} vs {}", grad[j]);
            assert!(grad[j].abs() <= 1.0);
        }
    }

    #[test]
    fn relu_fast_solver_examples() {
        let s = ReluMpSolver::new(&[2.0, -2.0, -2.0, 2.0]).unwrap();
        assert!((s.solve(1.0) - 1.5).abs() < 1e-15);
        let s = ReluMpSolver::new(&[0.0; 4]).unwrap();
        assert!((s.solve(1.0) + 0.25).abs() < 1e-15);
        assert_eq!(s.active_count(-0.25), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn relu_fast_solver_agrees_with_bisection(
            ops in proptest::collection::vec(-5.0f64..5.0, 1..40),
            gamma in 0.01f64..20.0,
        ) {
            let fast = ReluMpSolver::new(&ops).unwrap().solve(gamma);
            let slow = solve(&ops, gamma, Nonlinearity::Relu);
            prop_assert!((fast - slow).abs() < 1e-9);
        }

        #[test]
        fn relu_scale_equivariance(
            ops in proptest::collection::vec(-3.0f64..3.0, 1..30),
            gamma in 0.05f64..10.0,
            c in 0.1f64..10.0,
        ) {
            let z = solve(&ops, gamma, Nonlinearity::Relu);
            let scaled: Vec<f64> = ops.iter().map(|o| c * o).collect();
            let zc = solve(&scaled, c * gamma, Nonlinearity::Relu);
            prop_assert!((zc - c * z).abs() <= 1e-10 * (1.0 + c * z.abs()));
        }

        #[test]
        fn symmetric_solution_is_one_lipschitz(
            base in proptest::collection::vec(-2.0f64..2.0, 1..12),
            delta in proptest::collection::vec(-0.5f64..0.5, 12),
            gamma in 0.1f64..5.0,
        ) {
            let moved: Vec<f64> = base.iter().zip(&delta).map(|(b, d)| b + d).collect();
            let max_shift = base.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            for nl in [Nonlinearity::Relu, Nonlinearity::Softplus { temperature: 0.2 }] {
                let za = mp_solve(&MpProblem::symmetric(&base, gamma).unwrap(), &nl, 1e-10).unwrap().z;
                let zb = mp_solve(&MpProblem::symmetric(&moved, gamma).unwrap(), &nl, 1e-10).unwrap().z;
                prop_assert!((za - zb).abs() <= max_shift + 1e-9);
            }
        }
    }
}
