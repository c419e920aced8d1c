mod common;

use common::{bisection_oracle, normals, rng};
use mpcorr_core::{mp_gradient, mp_solve, mp_solve_with, MpProblem, Nonlinearity, SolverOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

fn random_nl(rng: &mut impl Rng, k: usize) -> Nonlinearity {
    match k % 3 {
        0 => Nonlinearity::Relu,
        1 => Nonlinearity::Softplus {
            temperature: rng.random_range(0.05..1.0),
        },
        _ => Nonlinearity::Power { eta: 1.5 },
    }
}

#[test]
fn thousand_instances_match_bisection_oracle() {
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = r.random_range(1..=64);
        let scale = r.random_range(0.1..5.0);
        let ops: Vec<f64> = normals(&mut r, n).iter().map(|v| v * scale).collect();
        let gamma = r.random_range(0.01..20.0);
        let nl = random_nl(&mut r, k);
        let z = mp_solve(&MpProblem::new(ops.clone(), gamma).unwrap(), &nl, 1e-10)
            .unwrap()
            .z;
        let oracle = bisection_oracle(&ops, gamma, &nl);
        worst = worst.max((z - oracle).abs());
    }
    assert!(worst <= 1e-9, "worst deviation {worst:e}");
}

#[test]
fn solves_from_different_brackets_agree() {
    let mut r = rng(102);
    let tol = 1e-10;
    for k in 0..1000 {
        let n = r.random_range(1..=32);
        let ops = normals(&mut r, n);
        let gamma = r.random_range(0.05..10.0);
        let nl = random_nl(&mut r, k);
        let problem = MpProblem::new(ops, gamma).unwrap();
        let solve = |bracket| {
            let options = SolverOptions {
                tol,
                initial_bracket: Some(bracket),
                ..SolverOptions::default()
            };
            mp_solve_with(&problem, &nl, &options).unwrap().z
        };
        let a = solve((-100.0, -99.0));
        let b = solve((40.0, 41.0));
        assert!((a - b).abs() <= 2.0 * tol, "instance {k}: {a} vs {b}");
    }
}

fn symmetric_z(values: &[f64], gamma: f64, nl: &Nonlinearity) -> f64 {
    mp_solve(&MpProblem::symmetric(values, gamma).unwrap(), nl, 1e-13)
        .unwrap()
        .z
}

#[test]
fn finite_difference_hessian_is_psd() {
    let mut r = rng(103);
    let step = 1e-4;
    let mut worst = f64::INFINITY;
    for k in 0..100 {
        let n = r.random_range(1..=6);
        let o = normals(&mut r, n);
        let gamma = r.random_range(0.2..4.0);
        let nl = if k % 2 == 0 {
            Nonlinearity::Softplus {
                temperature: r.random_range(0.1..1.0),
            }
        } else {
            Nonlinearity::Power { eta: 1.5 }
        };
        let z = |v: &[f64]| symmetric_z(v, gamma, &nl);
        let shifted = |a: usize, da: f64, b: usize, db: f64| {
            let mut v = o.clone();
            v[a] += da;
            v[b] += db;
            z(&v)
        };
        let mut hess = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let value = (shifted(a, step, b, step) - shifted(a, step, b, -step) - shifted(a, -step, b, step)
                    + shifted(a, -step, b, -step))
                    / (4.0 * step * step);
                hess[(a, b)] = value;
                hess[(b, a)] = value;
            }
        }
        let min = SymmetricEigen::new(hess).eigenvalues.min();
        worst = worst.min(min);
    }
    assert!(worst >= -1e-6, "minimum eigenvalue {worst:e}");
}

#[test]
fn gradient_components_are_bounded_by_one() {
    let mut r = rng(104);
    for k in 0..500 {
        let n = r.random_range(1..=16);
        let o = normals(&mut r, n);
        let gamma = r.random_range(0.1..8.0);
        let nl = random_nl(&mut r, k);
        let problem = MpProblem::symmetric(&o, gamma).unwrap();
        let z = mp_solve(&problem, &nl, 1e-12).unwrap().z;
        match mp_gradient(&problem, &nl, z) {
            Ok(g) => assert!(g.iter().all(|v| v.abs() <= 1.0 + 1e-12), "{g:?}"),
            Err(mpcorr_core::Error::DegenerateGradient(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

proptest! {
    #[test]
    fn symmetric_operands_are_one_lipschitz(
        o in prop::collection::vec(-3.0f64..3.0, 1..12),
        delta in prop::collection::vec(-0.5f64..0.5, 12),
        gamma in 0.05f64..6.0,
        kind in 0usize..3,
    ) {
        let nl = [Nonlinearity::Relu, Nonlinearity::Softplus { temperature: 0.3 }, Nonlinearity::Power { eta: 1.5 }][kind];
        let moved: Vec<f64> = o.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let shift = o.iter().zip(&moved).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let za = symmetric_z(&o, gamma, &nl);
        let zb = symmetric_z(&moved, gamma, &nl);
        prop_assert!((za - zb).abs() <= shift + 1e-9);
    }

    #[test]
    fn relu_solution_scales_with_operands(
        o in prop::collection::vec(-5.0f64..5.0, 1..40),
        gamma in 0.01f64..10.0,
        c in 0.01f64..100.0,
    ) {
        let z = mp_solve(&MpProblem::new(o.clone(), gamma).unwrap(), &Nonlinearity::Relu, 1e-12).unwrap().z;
        let scaled: Vec<f64> = o.iter().map(|v| c * v).collect();
        let zc = mp_solve(&MpProblem::new(scaled, c * gamma).unwrap(), &Nonlinearity::Relu, 1e-12 * c).unwrap().z;
        prop_assert!((zc - c * z).abs() <= 1e-10 * (1.0 + c * z.abs()));
    }
}
