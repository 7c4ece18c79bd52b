//! Linear direction-finding subproblem over a conditional-entropy ball.
//!
//! Given a gain matrix `C`, row weights `alpha`, a strictly positive
//! row-stochastic center `P'` and a radius `r`, the oracle maximizes
//! `<C, S>` over row-stochastic `S` subject to
//! `sum_i alpha_i D(P'_i || S_i) <= r`. The problem is solved through its
//! dual in one variable per row. Three solvers are offered: an exact nested
//! one-dimensional method (default), projected gradient descent on the full
//! dual vector, and a Gauss-Seidel sweep over coordinates.
//!
//! Matrices may be rectangular (`m` rows over `n` columns); the stationary
//! baseline reuses the machinery with a single row.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::weighted_row_divergence;

/// Oracle instance.
#[derive(Debug, Clone)]
pub struct OracleProblem {
    gain: DMatrix<f64>,
    weights: DVector<f64>,
    center: DMatrix<f64>,
    radius: f64,
}

impl OracleProblem {
    /// `weights` must be positive and sum to one; `center` rows must be
    /// strictly positive probability vectors.
    pub fn new(gain: DMatrix<f64>, weights: DVector<f64>, center: DMatrix<f64>, radius: f64) -> Result<Self> {
        let (m, n) = center.shape();
        if m == 0 || n == 0 {
            return Err(Error::invalid("empty oracle problem"));
        }
        if gain.shape() != (m, n) {
            return Err(Error::DimensionMismatch { expected: m * n, found: gain.len() });
        }
        if weights.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: weights.len() });
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("radius must be positive and finite, got {radius}")));
        }
        if gain.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gain matrix must be finite"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("row weights must be strictly positive"));
        }
        if (weights.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("row weights must sum to one"));
        }
        if center.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("center must be strictly positive"));
        }
        for (i, row) in center.row_iter().enumerate() {
            if (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("center row {} is not a distribution", i + 1)));
            }
        }
        Ok(Self { gain, weights, center, radius })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn center(&self) -> &DMatrix<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn rows(&self) -> usize {
        self.center.nrows()
    }

    fn row_max(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows(), self.gain.row_iter().map(|r| r.max()))
    }

    /// `sum_i alpha_i D(P'_i || S_i)`.
    pub fn divergence(&self, s: &DMatrix<f64>) -> f64 {
        weighted_row_divergence(&self.weights, &self.center, s)
    }

    /// `<C, S>`.
    pub fn objective(&self, s: &DMatrix<f64>) -> f64 {
        self.gain.dot(s)
    }
}

/// Box known to contain every dual minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Closed-form bounds on the dual variables.
pub fn dual_bounds(problem: &OracleProblem) -> Result<DualBox> {
    let lower = problem.row_max();
    let m = problem.rows() as f64;
    let c_max = problem.gain.max();
    let shrink = (-problem.radius).exp();
    let trace = problem.gain.dot(&problem.center);
    let head = (m * c_max - shrink * trace) / (1.0 - shrink);
    let total_lower = lower.sum();
    let upper = DVector::from_iterator(problem.rows(), lower.iter().map(|l| head - (total_lower - l)));
    if let Some(row) = (0..problem.rows()).find(|&i| !(upper[i] > lower[i])) {
        return Err(Error::DegenerateBox { row });
    }
    Ok(DualBox { lower, upper })
}

fn dual_exponent(eta: &DVector<f64>, problem: &OracleProblem) -> Result<f64> {
    if eta.len() != problem.rows() {
        return Err(Error::DimensionMismatch { expected: problem.rows(), found: eta.len() });
    }
    let mut total = 0.0;
    for i in 0..problem.rows() {
        total += row_exponent(problem, i, eta[i])?;
    }
    Ok(total - problem.radius)
}

fn row_exponent(problem: &OracleProblem, i: usize, eta_i: f64) -> Result<f64> {
    let a = problem.weights[i];
    let mut acc = 0.0;
    for j in 0..problem.center.ncols() {
        let slack = eta_i - problem.gain[(i, j)];
        if !(slack > 0.0) {
            return Err(Error::DomainViolation { row: i });
        }
        acc += problem.center[(i, j)] * (slack / a).ln();
    }
    Ok(a * acc)
}

/// Minimizer over the multiplier of the Lagrangian for fixed `eta`.
pub fn lambda_star(eta: &DVector<f64>, problem: &OracleProblem) -> Result<f64> {
    Ok(dual_exponent(eta, problem)?.exp())
}

/// Full Lagrangian dual function `J(lambda, eta)`.
pub fn dual_lagrangian(lambda: f64, eta: &DVector<f64>, problem: &OracleProblem) -> Result<f64> {
    let mut log_term = 0.0;
    for i in 0..problem.rows() {
        let a = problem.weights[i];
        for j in 0..problem.center.ncols() {
            let slack = eta[i] - problem.gain[(i, j)];
            if !(slack > 0.0) {
                return Err(Error::DomainViolation { row: i });
            }
            log_term += a * problem.center[(i, j)] * (lambda * a / slack).ln();
        }
    }
    Ok(lambda * (problem.radius - 1.0) + eta.sum() + lambda * log_term)
}

/// Dual objective with the multiplier minimized out: `sum(eta) - lambda*(eta)`.
pub fn dual_objective(eta: &DVector<f64>, problem: &OracleProblem) -> Result<f64> {
    Ok(eta.sum() - lambda_star(eta, problem)?)
}

/// Which expression to use for the dual partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeForm {
    /// Chain rule through the optimal multiplier.
    #[default]
    Exact,
    /// `m - alpha_i sum_j P'_ij / (eta_i - C_ij)` without the multiplier factor.
    Simplified,
}

/// Gradient of the dual objective.
pub fn dual_gradient(eta: &DVector<f64>, problem: &OracleProblem, form: DerivativeForm) -> Result<DVector<f64>> {
    let lambda = lambda_star(eta, problem)?;
    let m = problem.rows() as f64;
    let mut g = DVector::zeros(problem.rows());
    for i in 0..problem.rows() {
        let inv = inverse_slack_sum(problem, i, eta[i]);
        g[i] = match form {
            DerivativeForm::Exact => 1.0 - lambda * problem.weights[i] * inv,
            DerivativeForm::Simplified => m - problem.weights[i] * inv,
        };
    }
    Ok(g)
}

fn inverse_slack_sum(problem: &OracleProblem, i: usize, eta_i: f64) -> f64 {
    (0..problem.center.ncols())
        .map(|j| problem.center[(i, j)] / (eta_i - problem.gain[(i, j)]))
        .sum()
}

/// Dual solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualMode {
    /// Outer root search on the multiplier, inner per-row root search.
    #[default]
    Decomposed,
    /// Projected gradient descent on the whole dual vector.
    FullGradient,
    /// Projected gradient sweep, one coordinate at a time.
    PerCoordinate,
}

/// Oracle settings. `iterations` and `step_constant` apply to the gradient
/// modes, whose step is `step_constant / sqrt(iterations)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualConfig {
    pub mode: DualMode,
    pub iterations: usize,
    pub step_constant: f64,
    pub gap_tol: f64,
    pub derivative: DerivativeForm,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            mode: DualMode::Decomposed,
            iterations: 10_000,
            step_constant: 1.0,
            gap_tol: 1e-6,
            derivative: DerivativeForm::Exact,
        }
    }
}

impl DualConfig {
    /// Additive suboptimality the caller should budget for.
    pub fn tolerance(&self) -> f64 {
        match self.mode {
            DualMode::Decomposed => 1e-10,
            _ => self.gap_tol,
        }
    }
}

/// Primal maximizer together with dual certificates.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub s: DMatrix<f64>,
    pub eta_star: DVector<f64>,
    pub lambda_star: f64,
    pub dual_value: f64,
    pub primal_value: f64,
    pub duality_gap: f64,
    /// Largest deviation of a recovered row sum from one before renormalization.
    pub row_sum_violation: f64,
    pub divergence: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the oracle subproblem.
pub fn solve_dual(problem: &OracleProblem, cfg: &DualConfig) -> Result<OracleSolution> {
    if let Some(sol) = slack_solution(problem) {
        return Ok(sol);
    }
    match cfg.mode {
        DualMode::Decomposed => decomposed(problem),
        DualMode::FullGradient | DualMode::PerCoordinate => gradient_descent(problem, cfg),
    }
}

/// Offsets from the row maxima: `gaps_ij = max_k C_ik - C_ij >= 0`.
fn gaps(problem: &OracleProblem) -> (DVector<f64>, DMatrix<f64>) {
    let top = problem.row_max();
    let mut g = problem.gain.clone();
    for i in 0..problem.rows() {
        let t = top[i];
        g.row_mut(i).apply(|v| *v = t - *v);
    }
    (top, g)
}

/// Rows of the gain that are constant on the support of `P'` leave the
/// objective indifferent, so when every row is like that the center itself
/// is optimal and the multiplier is zero. Any other row forces the
/// constraint to bind, since moving all mass onto maximizing columns costs
/// an infinite divergence.
fn slack_solution(problem: &OracleProblem) -> Option<OracleSolution> {
    let (top, g) = gaps(problem);
    let flat = (0..problem.rows()).all(|i| (0..g.ncols()).all(|j| problem.center[(i, j)] == 0.0 || g[(i, j)] == 0.0));
    if !flat {
        return None;
    }
    let s = problem.center.clone();
    let value = top.sum();
    Some(OracleSolution {
        divergence: 0.0,
        s,
        eta_star: top,
        lambda_star: 0.0,
        dual_value: value,
        primal_value: value,
        duality_gap: 0.0,
        row_sum_violation: 0.0,
        iterations: 0,
        converged: true,
    })
}

/// Root of `sum_j p_j / (t + g_j) = 1 / beta` in `t > 0`, where `min_j g_j = 0`.
fn row_offset(p: &[f64], g: &[f64], beta: f64, guess: Option<f64>) -> f64 {
    let top_mass: f64 = p.iter().zip(g).filter(|(_, gj)| **gj == 0.0).map(|(pj, _)| pj).sum();
    let g_max = g.iter().copied().fold(0.0, f64::max);
    let mut lo = (beta * top_mass).max(beta - g_max);
    let mut hi = beta;
    if !(hi > lo) {
        return beta;
    }
    let f = |t: f64| -> (f64, f64) {
        let mut v = -1.0;
        let mut dv = 0.0;
        for (pj, gj) in p.iter().zip(g) {
            let q = beta * pj / (t + gj);
            v += q;
            dv -= q / (t + gj);
        }
        (v, dv)
    };
    let mut t = guess.filter(|x| *x > lo && *x < hi).unwrap_or(lo);
    for _ in 0..200 {
        let (v, dv) = f(t);
        if v == 0.0 {
            return t;
        }
        if v > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - v / dv;
        if !(next > lo && next < hi) {
            next = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        }
        if (next - t).abs() <= 1e-15 * t || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        t = next;
    }
    t
}

struct RowState<'a> {
    problem: &'a OracleProblem,
    gaps: DMatrix<f64>,
    offsets: Vec<f64>,
    last_lambda: Option<f64>,
    evaluations: usize,
}

impl<'a> RowState<'a> {
    fn new(problem: &'a OracleProblem, gaps: DMatrix<f64>) -> Self {
        Self { offsets: vec![0.0; problem.rows()], problem, gaps, last_lambda: None, evaluations: 0 }
    }

    /// Solves every row for the multiplier and returns the resulting divergence.
    fn divergence_at(&mut self, lambda: f64) -> f64 {
        self.evaluations += 1;
        let n = self.gaps.ncols();
        let scale = self.last_lambda.map(|l| lambda / l);
        let mut total = 0.0;
        let mut p = vec![0.0; n];
        let mut g = vec![0.0; n];
        for i in 0..self.problem.rows() {
            for j in 0..n {
                p[j] = self.problem.center[(i, j)];
                g[j] = self.gaps[(i, j)];
            }
            let beta = lambda * self.problem.weights[i];
            let guess = scale.map(|s| self.offsets[i] * s);
            let t = row_offset(&p, &g, beta, guess);
            self.offsets[i] = t;
            let row: f64 = p.iter().zip(&g).map(|(pj, gj)| pj * ((t + gj) / beta).ln()).sum();
            total += self.problem.weights[i] * row;
        }
        self.last_lambda = Some(lambda);
        total
    }

    fn recover(&self, lambda: f64) -> DMatrix<f64> {
        let (m, n) = self.gaps.shape();
        let mut s = DMatrix::zeros(m, n);
        for i in 0..m {
            let beta = lambda * self.problem.weights[i];
            for j in 0..n {
                s[(i, j)] = beta * self.problem.center[(i, j)] / (self.offsets[i] + self.gaps[(i, j)]);
            }
        }
        s
    }
}

const GAP_FLOOR: f64 = 1e-15;

fn decomposed(problem: &OracleProblem) -> Result<OracleSolution> {
    let (top, g) = gaps(problem);
    let r = problem.radius;
    // second-order guess: divergence ~ sum_i Var_i / (2 lambda^2 alpha_i)
    let mut spread = 0.0;
    for i in 0..problem.rows() {
        let row = problem.gain.row(i);
        let p = problem.center.row(i);
        let mean = row.dot(&p);
        let var: f64 = row.iter().zip(p.iter()).map(|(c, q)| q * (c - mean).powi(2)).sum();
        spread += var / problem.weights[i];
    }
    let mut state = RowState::new(problem, g);
    let phi = |state: &mut RowState, s: f64| -> f64 {
        let e = state.divergence_at(s.exp());
        e.ln() - r.ln()
    };

    let guess = (spread / (2.0 * r)).sqrt().max(f64::MIN_POSITIVE.sqrt());
    let step = 4.0_f64.ln();
    let mut a = guess.ln();
    let mut fa = phi(&mut state, a);
    let mut b = a;
    let mut fb = fa;
    // Below this multiplier the gap `lambda * (r - divergence)` is lost in
    // rounding. Rows whose maximizers carry almost all the center mass only
    // spend divergence logarithmically in `1 / lambda`, so the root can lie
    // far below it; the point found there is feasible and certified.
    let floor = (GAP_FLOOR * (1.0 + top.amax()) / r).ln();
    let mut expansions = 0;
    let mut at_floor = false;
    while fa.signum() == fb.signum() && fa != 0.0 {
        expansions += 1;
        if fb < 0.0 && b <= floor {
            at_floor = true;
            break;
        }
        if expansions > 400 {
            return Err(Error::SingularSystem);
        }
        a = b;
        fa = fb;
        // divergence decreases in the multiplier
        b = if fb > 0.0 { b + step } else { (b - step).max(floor) };
        fb = phi(&mut state, b);
    }
    let (s_log, converged) = if at_floor { (b, true) } else { brent(|s| phi(&mut state, s), a, fa, b, fb, 1e-14, 200) };
    let lambda = s_log.exp();
    let mut e = state.divergence_at(lambda);
    let mut s = state.recover(lambda);
    let row_sum_violation = max_row_violation(&s);
    normalize_rows(&mut s);
    if e > r {
        e = repair(problem, &mut s);
    }
    let eta: DVector<f64> = DVector::from_iterator(problem.rows(), (0..problem.rows()).map(|i| top[i] + state.offsets[i]));
    let primal = problem.objective(&s);
    let dual = dual_objective(&eta, problem).unwrap_or(eta.sum() - lambda);
    Ok(OracleSolution {
        s,
        lambda_star: lambda,
        dual_value: dual,
        primal_value: primal,
        duality_gap: (dual - primal).max(0.0),
        row_sum_violation,
        divergence: e,
        eta_star: eta,
        iterations: state.evaluations,
        converged,
    })
}

/// Brent root search on a bracket `[a, b]` with `f(a) f(b) <= 0`.
pub(crate) fn brent(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    xtol: f64,
    max_iter: usize,
) -> (f64, bool) {
    if fa == 0.0 {
        return (a, true);
    }
    if fb == 0.0 {
        return (b, true);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return (b, true);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let rr = fb / fc;
                p = s * (2.0 * m * qq * (qq - rr) - (b - a) * (rr - 1.0));
                q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    (b, false)
}

fn max_row_violation(s: &DMatrix<f64>) -> f64 {
    s.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
}

fn normalize_rows(s: &mut DMatrix<f64>) {
    for i in 0..s.nrows() {
        let total = s.row(i).sum();
        s.row_mut(i).unscale_mut(total);
    }
}

/// Pulls `s` toward the center until the divergence budget holds; returns
/// the resulting divergence.
fn repair(problem: &OracleProblem, s: &mut DMatrix<f64>) -> f64 {
    let e = problem.divergence(s);
    if e <= problem.radius {
        return e;
    }
    let mix = |t: f64| s.scale(1.0 - t) + problem.center.scale(t);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if problem.divergence(&mix(mid)) <= problem.radius {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    *s = mix(hi);
    problem.divergence(s)
}

fn gradient_descent(problem: &OracleProblem, cfg: &DualConfig) -> Result<OracleSolution> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("dual iterations must be positive"));
    }
    if !(cfg.step_constant > 0.0) {
        return Err(Error::invalid("step constant must be positive"));
    }
    let bounds = dual_bounds(problem)?;
    let width = &bounds.upper - &bounds.lower;
    let floor = &bounds.lower + width.scale(1e-12);
    let mut eta = &bounds.lower + width.scale(0.1);
    let step = cfg.step_constant / (cfg.iterations as f64).sqrt();
    let m = problem.rows();
    let clamp = |eta: &mut DVector<f64>, i: usize| {
        eta[i] = eta[i].max(floor[i]).min(bounds.upper[i]);
    };

    let mut best_eta = eta.clone();
    let mut best_dual = dual_objective(&eta, problem)?;
    let mut iterations = 0;
    let check_every = 50.max(cfg.iterations / 100);
    for k in 0..cfg.iterations {
        iterations = k + 1;
        match cfg.mode {
            DualMode::PerCoordinate => {
                let mut rows: Vec<f64> = (0..m).map(|i| row_exponent(problem, i, eta[i])).collect::<Result<_>>()?;
                let mut total: f64 = rows.iter().sum();
                for i in 0..m {
                    let lambda = (total - problem.radius).exp();
                    let inv = inverse_slack_sum(problem, i, eta[i]);
                    let gi = match cfg.derivative {
                        DerivativeForm::Exact => 1.0 - lambda * problem.weights[i] * inv,
                        DerivativeForm::Simplified => m as f64 - problem.weights[i] * inv,
                    };
                    eta[i] -= step * gi;
                    clamp(&mut eta, i);
                    let fresh = row_exponent(problem, i, eta[i])?;
                    total += fresh - rows[i];
                    rows[i] = fresh;
                }
            }
            _ => {
                let g = dual_gradient(&eta, problem, cfg.derivative)?;
                eta.axpy(-step, &g, 1.0);
                for i in 0..m {
                    clamp(&mut eta, i);
                }
            }
        }
        let q = dual_objective(&eta, problem)?;
        if q < best_dual {
            best_dual = q;
            best_eta.copy_from(&eta);
        }
        if (k + 1) % check_every == 0 {
            let (_, primal, _, _) = recover_from_dual(problem, &best_eta)?;
            if best_dual - primal <= cfg.gap_tol {
                break;
            }
        }
    }
    let (s, primal, violation, divergence) = recover_from_dual(problem, &best_eta)?;
    let gap = (best_dual - primal).max(0.0);
    if violation > 1e-4 {
        log::debug!("dual recovery row-sum violation {violation:.3e}");
    }
    Ok(OracleSolution {
        s,
        lambda_star: lambda_star(&best_eta, problem)?,
        eta_star: best_eta,
        dual_value: best_dual,
        primal_value: primal,
        duality_gap: gap,
        row_sum_violation: violation,
        divergence,
        iterations,
        converged: gap <= cfg.gap_tol && violation <= 1e-4,
    })
}

/// Primal point implied by a dual vector, made feasible.
fn recover_from_dual(problem: &OracleProblem, eta: &DVector<f64>) -> Result<(DMatrix<f64>, f64, f64, f64)> {
    let lambda = lambda_star(eta, problem)?;
    let (m, n) = problem.center.shape();
    let mut s = DMatrix::zeros(m, n);
    for i in 0..m {
        let beta = lambda * problem.weights[i];
        for j in 0..n {
            s[(i, j)] = beta * problem.center[(i, j)] / (eta[i] - problem.gain[(i, j)]);
        }
    }
    let violation = max_row_violation(&s);
    normalize_rows(&mut s);
    let divergence = repair(problem, &mut s);
    let primal = problem.objective(&s);
    Ok((s, primal, violation, divergence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn uniform_problem(c: DMatrix<f64>, r: f64) -> OracleProblem {
        let d = c.nrows();
        let n = c.ncols();
        OracleProblem::new(c, DVector::from_element(d, 1.0 / d as f64), DMatrix::from_element(d, n, 1.0 / n as f64), r)
            .unwrap()
    }

    #[test]
    fn bounds_identity_gain() {
        let b = dual_bounds(&uniform_problem(DMatrix::identity(2, 2), 1.0)).unwrap();
        let e = (-1.0_f64).exp();
        assert_eq!(b.lower.as_slice(), &[1.0, 1.0]);
        let expected = (2.0 - e) / (1.0 - e) - 1.0;
        assert_abs_diff_eq!(b.upper[0], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(b.upper[0], 1.582, epsilon = 1e-3);
    }

    #[test]
    fn constant_gain_collapses_box() {
        let p = uniform_problem(DMatrix::from_element(3, 3, 0.7), 0.5);
        assert!(matches!(dual_bounds(&p), Err(Error::DegenerateBox { .. })));
        for mode in [DualMode::Decomposed, DualMode::FullGradient, DualMode::PerCoordinate] {
            let sol = solve_dual(&p, &DualConfig { mode, ..Default::default() }).unwrap();
            assert_abs_diff_eq!(sol.primal_value, 2.1, epsilon = 1e-12);
            assert_abs_diff_eq!(sol.dual_value, 2.1, epsilon = 1e-12);
            assert_abs_diff_eq!(&sol.s, p.center(), epsilon = 1e-15);
        }
    }

    #[test]
    fn multiplier_for_zero_gain() {
        let d = 3;
        let p = uniform_problem(DMatrix::zeros(d, d), 0.4);
        let eta = DVector::from_element(d, 1.0);
        assert_abs_diff_eq!(lambda_star(&eta, &p).unwrap(), 3.0 * (-0.4_f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn domain_violation_reported() {
        let p = uniform_problem(DMatrix::identity(2, 2), 1.0);
        let eta = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(lambda_star(&eta, &p), Err(Error::DomainViolation { row: 0 })));
    }

    #[test]
    fn lagrangian_matches_reduced_dual() {
        let p = uniform_problem(dmatrix![0.3, -0.2, 0.1; 0.0, 0.5, -0.4; 0.2, 0.2, 0.9], 0.3);
        let eta = DVector::from_vec(vec![0.8, 1.1, 1.5]);
        let lam = lambda_star(&eta, &p).unwrap();
        assert_abs_diff_eq!(
            dual_lagrangian(lam, &eta, &p).unwrap(),
            dual_objective(&eta, &p).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn decomposed_solution_is_tight() {
        let p = uniform_problem(dmatrix![0.3, -0.2, 0.1; 0.0, 0.5, -0.4; 0.2, 0.2, 0.9], 0.3);
        let sol = solve_dual(&p, &DualConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.row_sum_violation < 1e-12);
        assert_abs_diff_eq!(sol.divergence, 0.3, epsilon = 1e-10);
        assert!(sol.duality_gap < 1e-10);
    }

    #[test]
    fn huge_radius_reaches_row_maxima() {
        let c = dmatrix![0.3, -0.2, 0.1; 0.0, 0.5, -0.4; 0.2, 0.2, 0.9];
        let p = uniform_problem(c, 50.0);
        let sol = solve_dual(&p, &DualConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.primal_value, 0.3 + 0.5 + 0.9, epsilon = 1e-3);
    }

    #[test]
    fn row_offset_solves_its_equation() {
        let p = [0.2, 0.5, 0.3];
        let g = [0.0, 0.7, 2.0];
        for beta in [1e-6, 0.01, 0.3, 5.0] {
            let t = row_offset(&p, &g, beta, None);
            let lhs: f64 = p.iter().zip(&g).map(|(pj, gj)| beta * pj / (t + gj)).sum();
            assert_abs_diff_eq!(lhs, 1.0, epsilon = 1e-12);
        }
    }
}
