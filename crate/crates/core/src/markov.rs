//! Finite-state Markov chain models.
//!
//! A chain on `d` states is described either by its doublet matrix (the
//! joint law of two consecutive states) or by a transition matrix together
//! with a distribution over states. This module converts between the two,
//! computes stationary laws through a bordered linear system, simulates
//! trajectories, estimates empirical doublets, and evaluates the conditional
//! relative entropy that drives the ambiguity sets used elsewhere.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for row/column balance of a doublet matrix.
pub const BALANCE_TOL: f64 = 1e-12;

/// Perturbation used to lift empirical doublets into the interior.
pub const DEFAULT_POSITIVE_SHIFT: f64 = 1e-6;

fn sum_tol(entries: usize) -> f64 {
    1e-12_f64.max(entries as f64 * 4.0 * f64::EPSILON)
}

fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Joint distribution of consecutive states `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubletMatrix(DMatrix<f64>);

impl DoubletMatrix {
    /// Validates a square, nonnegative matrix whose entries sum to one.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("doublet entries must be finite and nonnegative"));
        }
        let total = neumaier_sum(entries.iter().copied());
        if (total - 1.0).abs() > sum_tol(entries.len()) {
            return Err(Error::invalid(format!("doublet entries sum to {total}, expected 1")));
        }
        Ok(Self(entries))
    }

    /// Rescales a nonnegative matrix (e.g. transition counts) to unit mass.
    pub fn normalize(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("doublet entries must be finite and nonnegative"));
        }
        let total = neumaier_sum(entries.iter().copied());
        if total <= 0.0 {
            return Err(Error::invalid("doublet matrix has no mass"));
        }
        Ok(Self(entries / total))
    }

    /// Doublet of a chain started in stationarity: `diag(pi) P`.
    pub fn from_chain(pi: &StationaryDistribution, p: &TransitionMatrix) -> Result<Self> {
        let d = p.dim();
        if pi.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: pi.dim() });
        }
        let mut m = p.0.clone();
        for i in 0..d {
            let w = pi.0[i];
            m.row_mut(i).scale_mut(w);
        }
        Self::normalize(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row_marginals(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.0.row_iter().map(|r| neumaier_sum(r.iter().copied())))
    }

    pub fn col_marginals(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.0.column_iter().map(|c| neumaier_sum(c.iter().copied())))
    }

    /// Row sums equal column sums within [`BALANCE_TOL`].
    pub fn is_balanced(&self) -> bool {
        self.balance_defect() <= BALANCE_TOL
    }

    /// Largest gap between a row marginal and the matching column marginal.
    pub fn balance_defect(&self) -> f64 {
        let r = self.row_marginals();
        let c = self.col_marginals();
        (r - c).amax()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|v| *v > 0.0)
    }
}

/// Row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("transition entries must be finite and nonnegative"));
        }
        let n = entries.ncols();
        for (i, row) in entries.row_iter().enumerate() {
            let s = neumaier_sum(row.iter().copied());
            if (s - 1.0).abs() > sum_tol(n) {
                return Err(Error::invalid(format!("row {} sums to {s}", i + 1)));
            }
        }
        Ok(Self(entries))
    }

    /// Divides each row by its sum.
    pub fn normalize_rows(mut entries: DMatrix<f64>) -> Result<Self> {
        check_square(&entries)?;
        for i in 0..entries.nrows() {
            let s = neumaier_sum(entries.row(i).iter().copied());
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::ZeroRowMarginal { state: i });
            }
            entries.row_mut(i).unscale_mut(s);
        }
        Self::new(entries)
    }

    /// Wraps a matrix produced by trusted internal arithmetic.
    pub(crate) fn from_raw(entries: DMatrix<f64>) -> Self {
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Probability vector over the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution(DVector<f64>);

impl StationaryDistribution {
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        let s = neumaier_sum(entries.iter().copied());
        if (s - 1.0).abs() > sum_tol(entries.len()) {
            return Err(Error::invalid(format!("probabilities sum to {s}")));
        }
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Sequence of visited states, 0-based, starting from `initial_state`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    n_states: usize,
    initial_state: usize,
    states: Vec<usize>,
}

impl Trajectory {
    /// `states` are the visits after `initial_state`; their count is the horizon.
    pub fn new(n_states: usize, initial_state: usize, states: Vec<usize>) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::invalid("a chain needs at least one state"));
        }
        if initial_state >= n_states {
            return Err(Error::invalid(format!("initial state {} out of range", initial_state + 1)));
        }
        if let Some(bad) = states.iter().find(|&&s| s >= n_states) {
            return Err(Error::invalid(format!("state {} out of range 1..={n_states}", bad + 1)));
        }
        Ok(Self { n_states, initial_state, states })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Visits after the initial state.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Number of observed transitions.
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Consecutive pairs, starting with the transition out of the initial state.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.initial_state)
            .chain(self.states.iter().copied())
            .zip(self.states.iter().copied())
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::invalid("matrix must be nonempty"));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    Ok(())
}

/// Splits a doublet into its row marginal and conditional transition matrix.
///
/// For balanced doublets the row marginal is the stationary law of the
/// returned transition matrix.
pub fn doublet_to_chain(theta: &DoubletMatrix) -> Result<(StationaryDistribution, TransitionMatrix)> {
    let pi = theta.row_marginals();
    let mut p = theta.0.clone();
    for i in 0..theta.dim() {
        if !(pi[i] > 0.0) {
            return Err(Error::ZeroRowMarginal { state: i });
        }
        p.row_mut(i).unscale_mut(pi[i]);
    }
    Ok((StationaryDistribution(pi), TransitionMatrix(p)))
}

/// Bordered system whose solution against the last unit vector is the
/// stationary law: rows `i < d` hold `(P^T - I)` row `i`, the last row is all ones.
pub fn stationary_system(p: &DMatrix<f64>) -> DMatrix<f64> {
    let d = p.nrows();
    let mut a = p.transpose();
    for i in 0..d {
        a[(i, i)] -= 1.0;
    }
    a.row_mut(d - 1).fill(1.0);
    a
}

const CONDITION_GUARD: f64 = 1e-13;

/// Solves the bordered system, rejecting pivots that signal (near) singularity.
pub(crate) fn solve_bordered(a: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.amax().max(1.0);
    let lu = a.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_pivot > CONDITION_GUARD * scale) {
        return Err(Error::SingularSystem);
    }
    let x = lu.solve(rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}

/// Unit vector on the last coordinate.
pub(crate) fn last_unit(d: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[d - 1] = 1.0;
    e
}

/// Stationary law of `P`, from the bordered linear system.
pub fn stationary_from_transition(p: &TransitionMatrix) -> Result<StationaryDistribution> {
    let d = p.dim();
    let mut pi = solve_bordered(stationary_system(&p.0), &last_unit(d))?;
    for v in pi.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-9 {
                return Err(Error::SingularSystem);
            }
            *v = 0.0;
        }
    }
    let s = pi.sum();
    pi /= s;
    Ok(StationaryDistribution(pi))
}

/// Draws `horizon` transitions of the chain from `initial_state`.
pub fn simulate<R: Rng + ?Sized>(
    p: &TransitionMatrix,
    initial_state: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let d = p.dim();
    if initial_state >= d {
        return Err(Error::invalid(format!("initial state {} out of range", initial_state + 1)));
    }
    let sampler = RowSampler::new(p);
    let mut states = Vec::with_capacity(horizon);
    let mut cur = initial_state;
    for _ in 0..horizon {
        cur = sampler.sample(cur, rng);
        states.push(cur);
    }
    Trajectory::new(d, initial_state, states)
}

/// Cumulative row tables for inverse-CDF sampling.
pub(crate) struct RowSampler {
    cumulative: Vec<Vec<f64>>,
    last_positive: Vec<usize>,
}

impl RowSampler {
    pub(crate) fn new(p: &TransitionMatrix) -> Self {
        let mut cumulative = Vec::with_capacity(p.dim());
        let mut last_positive = Vec::with_capacity(p.dim());
        for row in p.0.row_iter() {
            let mut acc = 0.0;
            let cum: Vec<f64> = row
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect();
            last_positive.push(row.iter().rposition(|v| *v > 0.0).unwrap_or(0));
            cumulative.push(cum);
        }
        Self { cumulative, last_positive }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let cum = &self.cumulative[from];
        let k = cum.partition_point(|c| *c <= u);
        if k >= cum.len() {
            self.last_positive[from]
        } else {
            k
        }
    }
}

fn transition_counts(traj: &Trajectory) -> DMatrix<f64> {
    let d = traj.n_states();
    let mut counts = DMatrix::zeros(d, d);
    for (a, b) in traj.transitions() {
        counts[(a, b)] += 1.0;
    }
    counts
}

/// Empirical doublet: transition counts over the horizon.
pub fn estimate_doublet(traj: &Trajectory) -> Result<DoubletMatrix> {
    let t = traj.horizon();
    if t == 0 {
        return Err(Error::invalid("trajectory has no transitions"));
    }
    Ok(DoubletMatrix(transition_counts(traj) / t as f64))
}

/// Empirical doublet with one extra transition from the last state back to
/// the initial one, which closes the path into a cycle and balances the
/// counts. Normalized by `T + 1`.
pub fn ghost_balance(traj: &Trajectory) -> Result<DoubletMatrix> {
    let t = traj.horizon();
    if t == 0 {
        return Err(Error::invalid("trajectory has no transitions"));
    }
    let mut counts = transition_counts(traj);
    let last = *traj.states().last().expect("nonempty");
    counts[(last, traj.initial_state())] += 1.0;
    Ok(DoubletMatrix(counts / (t + 1) as f64))
}

/// Mixes a doublet with the uniform one: `(theta + shift J) / (1 + shift d^2)`.
pub fn make_positive(theta: &DoubletMatrix, shift: f64) -> Result<DoubletMatrix> {
    if !(shift >= 0.0) || !shift.is_finite() {
        return Err(Error::invalid("shift must be finite and nonnegative"));
    }
    let d = theta.dim() as f64;
    Ok(DoubletMatrix(theta.0.map(|v| (v + shift) / (1.0 + shift * d * d))))
}

/// Conditional relative entropy between doublets: the `theta_prime`
/// weighted sum of row-wise relative entropies of the induced transition
/// kernels. Returns `+inf` when `theta_prime` charges a transition that
/// `theta` excludes.
pub fn conditional_relative_entropy(theta_prime: &DoubletMatrix, theta: &DoubletMatrix) -> Result<f64> {
    let d = theta.dim();
    if theta_prime.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: theta_prime.dim() });
    }
    let rp = theta_prime.row_marginals();
    let r = theta.row_marginals();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            let a = theta_prime.0[(i, j)];
            if a == 0.0 {
                continue;
            }
            let b = theta.0[(i, j)];
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += a * ((a / rp[i]) / (b / r[i])).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Conditional relative entropy from a marginal and two transition kernels:
/// `sum_i pi'_i D(P'_i || P_i)`. Rows with zero weight are ignored.
pub fn cond_entropy_vs_transition(
    pi_prime: &StationaryDistribution,
    p_prime: &TransitionMatrix,
    p: &TransitionMatrix,
) -> Result<f64> {
    let d = p.dim();
    for found in [pi_prime.dim(), p_prime.dim()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    Ok(weighted_row_divergence(&pi_prime.0, &p_prime.0, &p.0))
}

/// Relative entropy `D(p || q)` between probability vectors.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return f64::INFINITY;
        }
        total += a * (a / b).ln();
    }
    total.max(0.0)
}

/// `sum_i weights_i D(center_i || candidate_i)` over matrix rows.
pub fn weighted_row_divergence(weights: &DVector<f64>, center: &DMatrix<f64>, candidate: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..center.nrows() {
        if weights[i] == 0.0 {
            continue;
        }
        let p: Vec<f64> = center.row(i).iter().copied().collect();
        let q: Vec<f64> = candidate.row(i).iter().copied().collect();
        total += weights[i] * kl_divergence(&p, &q);
    }
    total
}
