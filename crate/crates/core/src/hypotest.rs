//! Deciding which of two Markov chains generated a trajectory.
//!
//! The test picks the first chain when the empirical doublet is strictly
//! closer to it in conditional relative entropy. Error probabilities decay
//! exponentially in the horizon; the exponent is the smallest divergence
//! from the first chain to a stationary doublet on the decision boundary.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    conditional_relative_entropy, doublet_to_chain, estimate_doublet, simulate, stationary_from_transition,
    DoubletMatrix, RowSampler, TransitionMatrix, Trajectory,
};
use crate::rng::task_rng;

/// Two candidate models, each strictly positive with balanced marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisPair {
    first: DoubletMatrix,
    second: DoubletMatrix,
}

impl HypothesisPair {
    pub fn new(first: DoubletMatrix, second: DoubletMatrix) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), found: second.dim() });
        }
        for theta in [&first, &second] {
            if !theta.is_strictly_positive() || !theta.is_balanced() {
                return Err(Error::invalid("hypotheses must be strictly positive with balanced marginals"));
            }
        }
        if first == second {
            return Err(Error::invalid("hypotheses must differ"));
        }
        Ok(Self { first, second })
    }

    pub fn first(&self) -> &DoubletMatrix {
        &self.first
    }

    pub fn second(&self) -> &DoubletMatrix {
        &self.second
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    /// Same pair in the opposite order.
    pub fn swapped(&self) -> Self {
        Self { first: self.second.clone(), second: self.first.clone() }
    }
}

/// Which hypothesis the test selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    First,
    Second,
}

impl Verdict {
    /// 1-based index.
    pub fn index(self) -> u8 {
        match self {
            Verdict::First => 1,
            Verdict::Second => 2,
        }
    }
}

/// Verdict with the two divergences it was based on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisVerdict {
    pub verdict: Verdict,
    pub distance_first: f64,
    pub distance_second: f64,
}

/// Chooses the first hypothesis only when it is strictly closer; ties,
/// including two infinite distances, go to the second.
pub fn decide(theta_hat: &DoubletMatrix, pair: &HypothesisPair) -> Result<HypothesisVerdict> {
    let distance_first = conditional_relative_entropy(theta_hat, &pair.first)?;
    let distance_second = conditional_relative_entropy(theta_hat, &pair.second)?;
    let verdict = if distance_first < distance_second { Verdict::First } else { Verdict::Second };
    Ok(HypothesisVerdict { verdict, distance_first, distance_second })
}

/// Empirical misclassification frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRates {
    /// Trajectories of the first chain assigned to the second.
    pub alpha_hat: f64,
    /// Trajectories of the second chain assigned to the first.
    pub beta_hat: f64,
    pub horizon: usize,
    pub trials: usize,
}

impl ErrorRates {
    /// `-ln(alpha_hat) / T`; infinite when no error was observed.
    pub fn rate_estimate(&self) -> f64 {
        -self.alpha_hat.ln() / self.horizon as f64
    }
}

const TYPE_ONE: u64 = 1;
const TYPE_TWO: u64 = 2;

/// Plain Monte Carlo error frequencies. Trial `k` of each hypothesis draws
/// from its own stream, so results do not depend on scheduling.
pub fn error_rates_mc(
    pair: &HypothesisPair,
    horizon: usize,
    trials: usize,
    initial_state: usize,
    seed: u64,
) -> Result<ErrorRates> {
    if horizon == 0 || trials == 0 {
        return Err(Error::invalid("horizon and trial count must be positive"));
    }
    let (_, p1) = doublet_to_chain(&pair.first)?;
    let (_, p2) = doublet_to_chain(&pair.second)?;
    let count = |p: &TransitionMatrix, tag: u64, wrong: Verdict| -> Result<usize> {
        let flags: Vec<bool> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = task_rng(seed, &[tag, horizon as u64, k as u64]);
                let traj = simulate(p, initial_state, horizon, &mut rng)?;
                Ok(decide(&estimate_doublet(&traj)?, pair)?.verdict == wrong)
            })
            .collect::<Result<_>>()?;
        Ok(flags.into_iter().filter(|f| *f).count())
    };
    let a = count(&p1, TYPE_ONE, Verdict::Second)?;
    let b = count(&p2, TYPE_TWO, Verdict::First)?;
    Ok(ErrorRates {
        alpha_hat: a as f64 / trials as f64,
        beta_hat: b as f64 / trials as f64,
        horizon,
        trials,
    })
}

/// Which error probability to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// First chain true, second selected.
    TypeOne,
    /// Second chain true, first selected.
    TypeTwo,
}

/// Importance-sampling estimate of a small error probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceEstimate {
    /// Natural log of the estimated probability (`-inf` if no error was drawn).
    pub log_probability: f64,
    /// Standard error divided by the estimate.
    pub relative_std_error: f64,
    /// Proposal trajectories that produced an error.
    pub hits: usize,
}

/// Estimates an error probability by drawing trajectories from `proposal`
/// and reweighting each with its likelihood ratio against the true chain.
/// Unbiased for any strictly positive proposal; efficient when the proposal
/// puts the decision boundary within typical reach.
pub fn error_probability_is(
    pair: &HypothesisPair,
    kind: ErrorKind,
    horizon: usize,
    trials: usize,
    initial_state: usize,
    proposal: &TransitionMatrix,
    seed: u64,
) -> Result<ImportanceEstimate> {
    if horizon == 0 || trials == 0 {
        return Err(Error::invalid("horizon and trial count must be positive"));
    }
    if proposal.dim() != pair.dim() {
        return Err(Error::DimensionMismatch { expected: pair.dim(), found: proposal.dim() });
    }
    if proposal.entries().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("proposal chain must be strictly positive"));
    }
    let (truth, wrong, tag) = match kind {
        ErrorKind::TypeOne => (&pair.first, Verdict::Second, TYPE_ONE),
        ErrorKind::TypeTwo => (&pair.second, Verdict::First, TYPE_TWO),
    };
    let (_, p_true) = doublet_to_chain(truth)?;
    let log_ratio = DMatrix::from_fn(pair.dim(), pair.dim(), |i, j| {
        (p_true.entries()[(i, j)] / proposal.entries()[(i, j)]).ln()
    });
    let sampler = RowSampler::new(proposal);
    let log_weights: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = task_rng(seed, &[tag + 16, horizon as u64, k as u64]);
            let mut states = Vec::with_capacity(horizon);
            let mut cur = initial_state;
            let mut lw = 0.0;
            for _ in 0..horizon {
                let next = sampler.sample(cur, &mut rng);
                lw += log_ratio[(cur, next)];
                states.push(next);
                cur = next;
            }
            let traj = Trajectory::new(pair.dim(), initial_state, states)?;
            let hit = decide(&estimate_doublet(&traj)?, pair)?.verdict == wrong;
            Ok(if hit { lw } else { f64::NEG_INFINITY })
        })
        .collect::<Result<_>>()?;
    let hits = log_weights.iter().filter(|w| w.is_finite()).count();
    if hits == 0 {
        return Ok(ImportanceEstimate { log_probability: f64::NEG_INFINITY, relative_std_error: f64::INFINITY, hits });
    }
    let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = trials as f64;
    let mean_scaled: f64 = log_weights.iter().map(|w| (w - top).exp()).sum::<f64>() / n;
    let second_scaled: f64 = log_weights.iter().map(|w| (2.0 * (w - top)).exp()).sum::<f64>() / n;
    let var = (second_scaled - mean_scaled * mean_scaled).max(0.0) / n;
    Ok(ImportanceEstimate {
        log_probability: top + mean_scaled.ln(),
        relative_std_error: var.sqrt() / mean_scaled,
        hits,
    })
}

/// Transition matrix of a doublet; handy as an importance-sampling proposal.
pub fn doublet_chain(theta: &DoubletMatrix) -> Result<TransitionMatrix> {
    Ok(doublet_to_chain(theta)?.1)
}

/// Large-deviation exponent of the type-one error.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRate {
    pub rate: f64,
    /// Stationary boundary doublet attaining the rate; absent when the
    /// chains coincide.
    pub minimizer: Option<DoubletMatrix>,
}

/// Largest state count accepted by [`decay_rate`].
pub const MAX_RATE_DIM: usize = 3;

/// Smallest divergence from the first model to a stationary doublet the
/// test does not attribute to it.
///
/// Candidates are stationary doublets of transition matrices on a lattice
/// with `resolution` steps per row, each pushed along the ray from the
/// first model onto the decision boundary; the best candidate is then
/// polished by Nelder-Mead.
pub fn decay_rate(pair: &HypothesisPair, resolution: usize) -> Result<DecayRate> {
    let d = pair.dim();
    if d > MAX_RATE_DIM {
        return Err(Error::TooLarge { size: d, limit: MAX_RATE_DIM });
    }
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    let boundary = Boundary::new(pair)?;
    if boundary.base >= 0.0 {
        return Ok(DecayRate { rate: 0.0, minimizer: None });
    }
    let rows = simplex_lattice(d, resolution);
    let total = rows.len().checked_pow(d as u32).unwrap_or(usize::MAX);
    if total > 50_000_000 {
        return Err(Error::TooLarge { size: total, limit: 50_000_000 });
    }
    let mut best = (f64::INFINITY, Vec::new());
    let mut index = vec![0usize; d];
    loop {
        let params: Vec<f64> = index.iter().flat_map(|&k| rows[k][..d - 1].iter().copied()).collect();
        let v = boundary.value(&params);
        if v < best.0 {
            best = (v, params);
        }
        let mut pos = 0;
        while pos < d {
            index[pos] += 1;
            if index[pos] < rows.len() {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
        if pos == d {
            break;
        }
    }
    if !best.0.is_finite() {
        return Err(Error::NoFeasiblePoint);
    }
    let mut x = best.1;
    let mut fx = best.0;
    let mut scale = 0.5 / resolution as f64;
    for _ in 0..4 {
        let (nx, nf) = nelder_mead(|p| boundary.value(p), &x, scale, 4000, 1e-15);
        if nf < fx {
            x = nx;
            fx = nf;
        }
        scale *= 0.1;
    }
    Ok(DecayRate { rate: fx, minimizer: boundary.point(&x) })
}

fn simplex_lattice(d: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(d: usize, left: usize, res: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == d - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / res as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(d, left - k, res, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, resolution, resolution, &mut Vec::new(), &mut out);
    out
}

struct Boundary {
    first: DoubletMatrix,
    /// `ln(P2_ij / P1_ij)`; its inner product with a stationary doublet is
    /// the divergence to the first model minus the divergence to the second.
    log_ratio: DMatrix<f64>,
    base: f64,
    d: usize,
}

impl Boundary {
    fn new(pair: &HypothesisPair) -> Result<Self> {
        let (_, p1) = doublet_to_chain(&pair.first)?;
        let (_, p2) = doublet_to_chain(&pair.second)?;
        let d = pair.dim();
        let log_ratio = DMatrix::from_fn(d, d, |i, j| (p2.entries()[(i, j)] / p1.entries()[(i, j)]).ln());
        let base = pair.first.entries().dot(&log_ratio);
        Ok(Self { first: pair.first.clone(), log_ratio, base, d })
    }

    fn point(&self, params: &[f64]) -> Option<DoubletMatrix> {
        let d = self.d;
        let mut p = DMatrix::zeros(d, d);
        for i in 0..d {
            let mut rest = 1.0;
            for j in 0..d - 1 {
                let v = params[i * (d - 1) + j];
                if !(v >= 0.0) {
                    return None;
                }
                p[(i, j)] = v;
                rest -= v;
            }
            if rest < -1e-12 {
                return None;
            }
            p[(i, d - 1)] = rest.max(0.0);
        }
        let p = TransitionMatrix::normalize_rows(p).ok()?;
        let pi = stationary_from_transition(&p).ok()?;
        let theta = DoubletMatrix::from_chain(&pi, &p).ok()?;
        let h = theta.entries().dot(&self.log_ratio);
        if !(h > self.base) {
            return None;
        }
        let t = -self.base / (h - self.base);
        let mixed: DMatrix<f64> = self.first.entries().scale(1.0 - t) + theta.entries().scale(t);
        if mixed.iter().any(|v| *v < 0.0) {
            return None;
        }
        DoubletMatrix::normalize(mixed).ok()
    }

    fn value(&self, params: &[f64]) -> f64 {
        match self.point(params) {
            Some(b) => conditional_relative_entropy(&b, &self.first).unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        }
    }
}

/// Downhill simplex minimization from `x0` with initial edge `scale`.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_iter: usize, ftol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    let start = DVector::from_column_slice(x0);
    simplex.push((start.clone(), f(x0)));
    for i in 0..n {
        let mut v = start.clone();
        v[i] += scale;
        let mut fv = f(v.as_slice());
        if !fv.is_finite() {
            v[i] -= 2.0 * scale;
            fv = f(v.as_slice());
        }
        simplex.push((v, fv));
    }
    let eval = |v: &DVector<f64>| f(v.as_slice());
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.is_finite() && spread <= ftol {
            break;
        }
        let centroid = simplex[..n].iter().fold(DVector::zeros(n), |acc, (v, _)| acc + v) / n as f64;
        let worst = simplex[n].clone();
        let reflected = &centroid + (&centroid - &worst.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = &centroid + (&centroid - &worst.0) * 2.0;
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                &centroid + (&reflected - &centroid) * 0.5
            } else {
                &centroid + (&worst.0 - &centroid) * 0.5
            };
            let fc = eval(&contracted);
            if fc < worst.1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let v = &best + (&item.0 - &best) * 0.5;
                    let fv = eval(&v);
                    *item = (v, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (v, fv) = simplex.swap_remove(0);
    (v.as_slice().to_vec(), fv)
}

/// Two-state chains with equal switching and i.i.d. behaviour, controlled by `epsilon`.
pub fn coin_pair(epsilon: f64) -> Result<HypothesisPair> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    let e = epsilon;
    let switching = DMatrix::from_row_slice(2, 2, &[(1.0 - e) / 2.0, e / 2.0, e / 2.0, (1.0 - e) / 2.0]);
    let iid = DMatrix::from_row_slice(2, 2, &[e * e, e * (1.0 - e), e * (1.0 - e), (1.0 - e) * (1.0 - e)]);
    let first = DoubletMatrix::new(switching)?;
    let second = DoubletMatrix::new(iid)?;
    if first == second {
        return Ok(HypothesisPair { first, second });
    }
    HypothesisPair::new(first, second)
}

/// Divergence of the i.i.d. coin from the switching coin, in closed form.
pub fn coin_entropy(epsilon: f64) -> f64 {
    epsilon * (1.0 - 2.0 * epsilon) * ((1.0 - epsilon) / epsilon).ln()
}
