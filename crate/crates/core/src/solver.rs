//! Worst-case expected loss over an ambiguity set of Markov models.
//!
//! The worst case is computed in transition-matrix coordinates: the
//! expected loss under the stationary law of `P` is a smooth but
//! nonconvex function of `P`, maximized by a Frank-Wolfe loop whose linear
//! subproblem is delegated to a pluggable [`DirectionOracle`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{kl_dro_value, WassersteinBallOracle};
use crate::error::{Error, Result};
use crate::markov::{
    doublet_to_chain, last_unit, make_positive, solve_bordered, stationary_system, DoubletMatrix, TransitionMatrix,
    DEFAULT_POSITIVE_SHIFT,
};
use crate::oracle::{solve_dual, DualConfig, OracleProblem};

/// Per-state loss `L(x, i)` for a fixed decision.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(DVector<f64>);

impl LossVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("loss vector is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("loss entries must be finite"));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Divergence used to build the ambiguity set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbiguityKind {
    /// Conditional relative entropy between doublets.
    ConditionalRelativeEntropy,
    /// Relative entropy between stationary laws, ignoring serial dependence.
    KlStationary,
    /// Row-wise 1-Wasserstein balls around the estimated transition matrix.
    WassersteinRows,
}

/// Ambiguity radius and divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    radius: f64,
    kind: AmbiguityKind,
}

impl AmbiguitySpec {
    pub fn new(radius: f64, kind: AmbiguityKind) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("radius must satisfy r > 0, got {radius}")));
        }
        Ok(Self { radius, kind })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kind(&self) -> AmbiguityKind {
        self.kind
    }
}

/// Frank-Wolfe settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FwConfig {
    pub gap_tol: f64,
    pub max_iters: usize,
    pub line_search_tol: f64,
    pub oracle: DualConfig,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self { gap_tol: 1e-6, max_iters: 10_000, line_search_tol: 1e-8, oracle: DualConfig::default() }
    }
}

impl FwConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0) || self.max_iters == 0 || !(self.line_search_tol > 0.0) {
            return Err(Error::invalid("gap_tol, max_iters and line_search_tol must be positive"));
        }
        Ok(())
    }
}

/// One Frank-Wolfe step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwIterate {
    pub objective: f64,
    pub gap: f64,
    pub step: f64,
}

/// Result of a worst-case solve.
#[derive(Debug, Clone)]
pub struct WorstCaseSolution {
    pub value: f64,
    pub p_star: TransitionMatrix,
    pub final_gap: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out or the line search stalled
    /// above the gap tolerance; the remaining fields describe the best iterate.
    pub converged: bool,
    pub trace: Vec<FwIterate>,
}

/// Stationary law of an arbitrary square matrix via the bordered system.
fn stationary_raw(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    solve_bordered(stationary_system(p), &last_unit(p.nrows()))
}

fn check_dims(loss: &LossVector, d: usize) -> Result<()> {
    if loss.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: loss.dim() });
    }
    Ok(())
}

/// Long-run average loss `<loss, pi(P)>`.
pub fn psi(loss: &LossVector, p: &TransitionMatrix) -> Result<f64> {
    check_dims(loss, p.dim())?;
    Ok(loss.0.dot(&stationary_raw(p.entries())?))
}

/// Gradient of [`psi`] with respect to the entries of `P`. The last column
/// is zero because the bordered system does not read it.
pub fn grad_psi(loss: &LossVector, p: &TransitionMatrix) -> Result<DMatrix<f64>> {
    check_dims(loss, p.dim())?;
    gradient_raw(loss, p.entries())
}

fn gradient_raw(loss: &LossVector, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = p.nrows();
    let a = stationary_system(p);
    let pi = solve_bordered(a.clone(), &last_unit(d))?;
    let adjoint = solve_bordered(a.transpose(), &loss.0)?;
    let mut g = DMatrix::zeros(d, d);
    for j in 0..d - 1 {
        for i in 0..d {
            g[(i, j)] = -adjoint[j] * pi[i];
        }
    }
    Ok(g)
}

const COARSE_POINTS: usize = 16;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Step in `[0, 1]` maximizing `psi` along the segment from `P` to `S`,
/// together with the objective reached. Failed evaluations count as `-inf`;
/// returns step zero when nothing beats the current point.
pub fn line_search(loss: &LossVector, p: &TransitionMatrix, s: &TransitionMatrix, tol: f64) -> Result<(f64, f64)> {
    check_dims(loss, p.dim())?;
    if s.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: s.dim() });
    }
    let base = psi(loss, p)?;
    Ok(segment_search(loss, p.entries(), s.entries(), base, tol))
}

fn segment_search(loss: &LossVector, p: &DMatrix<f64>, s: &DMatrix<f64>, base: f64, tol: f64) -> (f64, f64) {
    let dir = s - p;
    let eval = |g: f64| -> f64 {
        if g == 0.0 {
            return base;
        }
        let q = p + dir.scale(g);
        match stationary_raw(&q) {
            Ok(pi) => loss.0.dot(&pi),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let last = (COARSE_POINTS - 1) as f64;
    let values: Vec<f64> = (0..COARSE_POINTS).map(|k| eval(k as f64 / last)).collect();
    let k_best = values
        .iter()
        .enumerate()
        .fold(0, |best, (k, v)| if *v > values[best] { k } else { best });
    let mut lo = k_best.saturating_sub(1) as f64 / last;
    let mut hi = (k_best + 1).min(COARSE_POINTS - 1) as f64 / last;
    let (mut best_g, mut best_v) = (k_best as f64 / last, values[k_best]);

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2);
        }
        for (g, v) in [(x1, f1), (x2, f2)] {
            if v > best_v {
                best_g = g;
                best_v = v;
            }
        }
    }
    if best_v > base {
        (best_g, best_v)
    } else {
        (0.0, base)
    }
}

/// Linear maximization over an ambiguity set of transition matrices.
pub trait DirectionOracle {
    /// Feasible starting point.
    fn center(&self) -> &TransitionMatrix;

    /// Feasible `S` maximizing `<gradient, S>`.
    fn direction(&self, gradient: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// Additive suboptimality of [`DirectionOracle::direction`].
    fn tolerance(&self) -> f64 {
        0.0
    }
}

/// Conditional-entropy ball around a strictly positive doublet.
#[derive(Debug, Clone)]
pub struct EntropyBallOracle {
    weights: DVector<f64>,
    center: TransitionMatrix,
    radius: f64,
    cfg: DualConfig,
}

impl EntropyBallOracle {
    pub fn new(theta_prime: &DoubletMatrix, radius: f64, cfg: DualConfig) -> Result<Self> {
        if !theta_prime.is_strictly_positive() {
            return Err(Error::invalid("center doublet must be strictly positive"));
        }
        let (pi, p) = doublet_to_chain(theta_prime)?;
        Ok(Self { weights: pi.into_inner(), center: p, radius, cfg })
    }
}

impl DirectionOracle for EntropyBallOracle {
    fn center(&self) -> &TransitionMatrix {
        &self.center
    }

    fn direction(&self, gradient: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let problem =
            OracleProblem::new(gradient.clone(), self.weights.clone(), self.center.entries().clone(), self.radius)?;
        let sol = solve_dual(&problem, &self.cfg)?;
        if !sol.converged {
            log::debug!("oracle stopped with duality gap {:.3e}", sol.duality_gap);
        }
        Ok(sol.s)
    }

    fn tolerance(&self) -> f64 {
        self.cfg.tolerance()
    }
}

/// Frank-Wolfe maximization of [`psi`] over the oracle's set, started at its center.
pub fn frank_wolfe(loss: &LossVector, oracle: &dyn DirectionOracle, cfg: &FwConfig) -> Result<WorstCaseSolution> {
    cfg.validate()?;
    let d = oracle.center().dim();
    check_dims(loss, d)?;
    let mut p = oracle.center().entries().clone();
    let mut value = loss.0.dot(&stationary_raw(&p)?);
    let mut trace = Vec::new();
    let threshold = cfg.gap_tol + oracle.tolerance();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = gradient_raw(loss, &p)?;
        let s = oracle.direction(&grad)?;
        gap = (&s - &p).dot(&grad);
        if gap <= threshold {
            trace.push(FwIterate { objective: value, gap, step: 0.0 });
            converged = true;
            break;
        }
        let (step, reached) = segment_search(loss, &p, &s, value, cfg.line_search_tol);
        trace.push(FwIterate { objective: value, gap, step });
        if step == 0.0 {
            log::debug!("line search stalled at gap {gap:.3e}");
            break;
        }
        p += (&s - &p).scale(step);
        value = reached;
    }
    Ok(WorstCaseSolution {
        value,
        p_star: TransitionMatrix::from_raw(p),
        final_gap: gap,
        iterations,
        converged,
        trace,
    })
}

/// Worst-case expected loss around a strictly positive doublet.
pub fn frank_wolfe_worst_case(
    loss: &LossVector,
    theta_prime: &DoubletMatrix,
    spec: &AmbiguitySpec,
    cfg: &FwConfig,
) -> Result<WorstCaseSolution> {
    check_dims(loss, theta_prime.dim())?;
    if !theta_prime.is_strictly_positive() {
        return Err(Error::invalid("center doublet must be strictly positive; apply make_positive first"));
    }
    match spec.kind {
        AmbiguityKind::ConditionalRelativeEntropy => {
            let oracle = EntropyBallOracle::new(theta_prime, spec.radius, cfg.oracle)?;
            frank_wolfe(loss, &oracle, cfg)
        }
        AmbiguityKind::WassersteinRows => {
            let (_, p) = doublet_to_chain(theta_prime)?;
            let oracle = WassersteinBallOracle::new(p, spec.radius)?;
            frank_wolfe(loss, &oracle, cfg)
        }
        AmbiguityKind::KlStationary => {
            let (pi, _) = doublet_to_chain(theta_prime)?;
            let sol = kl_dro_value(loss, &pi, spec.radius, &cfg.oracle)?;
            let d = theta_prime.dim();
            let rows = DMatrix::from_fn(d, d, |_, j| sol.distribution[j]);
            Ok(WorstCaseSolution {
                value: sol.value,
                p_star: TransitionMatrix::from_raw(rows),
                final_gap: 0.0,
                iterations: 0,
                converged: sol.converged,
                trace: Vec::new(),
            })
        }
    }
}

/// Worst-case expected loss around a raw estimate. Estimates with zero
/// entries are first mixed with the uniform doublet, which keeps the
/// center inside the ambiguity set.
pub fn predictor(
    loss: &LossVector,
    theta_raw: &DoubletMatrix,
    spec: &AmbiguitySpec,
    cfg: &FwConfig,
) -> Result<WorstCaseSolution> {
    if theta_raw.is_strictly_positive() {
        frank_wolfe_worst_case(loss, theta_raw, spec, cfg)
    } else {
        let lifted = make_positive(theta_raw, DEFAULT_POSITIVE_SHIFT)?;
        debug_assert!(lifted.is_strictly_positive());
        frank_wolfe_worst_case(loss, &lifted, spec, cfg)
    }
}
