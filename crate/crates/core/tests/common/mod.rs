//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-stochastic matrix with entries bounded away from zero.
pub fn random_chain(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(d, d, |_, _| rng.random_range(0.05..1.0));
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// Random point of the open simplex.
pub fn random_simplex(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Stationary law by repeated multiplication.
pub fn power_iteration(p: &DMatrix<f64>, steps: usize) -> DVector<f64> {
    let d = p.nrows();
    let mut row = DMatrix::from_element(1, d, 1.0 / d as f64);
    for _ in 0..steps {
        row = &row * p;
    }
    row.transpose().column(0).into_owned()
}

/// Balanced doublet `diag(pi) P` of an ergodic chain.
pub fn chain_doublet(p: &DMatrix<f64>) -> DMatrix<f64> {
    let pi = power_iteration(p, 20_000);
    DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| pi[i] * p[(i, j)])
}

/// Relative entropy with the usual conventions, written out directly.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in p.iter().zip(q) {
        if *a > 0.0 {
            if *b <= 0.0 {
                return f64::INFINITY;
            }
            s += a * (a / b).ln();
        }
    }
    s
}

/// Long-run mean loss of the two-state chain leaving state 1 w.p. `a` and state 2 w.p. `b`.
pub fn two_state_mean(loss: [f64; 2], a: f64, b: f64) -> f64 {
    (loss[0] * b + loss[1] * a) / (a + b)
}

/// Grid search over 2x2 transition matrices `[[1-a, a], [b, 1-b]]` with
/// `a, b` on the interior lattice of step `1/n`. Returns the best value of
/// `objective` among points passing `feasible`.
pub fn grid_max_2x2(n: usize, feasible: impl Fn(f64, f64) -> bool, objective: impl Fn(f64, f64) -> f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 1..n {
        let a = i as f64 / n as f64;
        for k in 1..n {
            let b = k as f64 / n as f64;
            if feasible(a, b) {
                best = best.max(objective(a, b));
            }
        }
    }
    best
}
