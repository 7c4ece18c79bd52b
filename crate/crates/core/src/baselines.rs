//! Comparison methods: sample average approximation, relative-entropy
//! robustness on the stationary law, and row-wise 1-Wasserstein robustness
//! on the transition matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{DoubletMatrix, StationaryDistribution, TransitionMatrix};
use crate::oracle::{solve_dual, DualConfig, OracleProblem};
use crate::solver::{frank_wolfe, predictor, AmbiguitySpec, DirectionOracle, FwConfig, LossVector, WorstCaseSolution};

/// Nominal expected loss under the estimate's row marginal.
pub fn saa_value(loss: &LossVector, theta_hat: &DoubletMatrix) -> Result<f64> {
    if loss.dim() != theta_hat.dim() {
        return Err(Error::DimensionMismatch { expected: theta_hat.dim(), found: loss.dim() });
    }
    Ok(loss.values().dot(&theta_hat.row_marginals()))
}

/// Worst-case law for the stationary relative-entropy ball.
#[derive(Debug, Clone)]
pub struct KlSolution {
    pub value: f64,
    pub distribution: DVector<f64>,
    pub converged: bool,
}

/// `max <loss, p>` over distributions with `D(pi_hat || p) <= r`.
pub fn kl_dro_value(loss: &LossVector, pi_hat: &StationaryDistribution, radius: f64, cfg: &DualConfig) -> Result<KlSolution> {
    let d = pi_hat.dim();
    if loss.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: loss.dim() });
    }
    let problem = OracleProblem::new(
        DMatrix::from_row_slice(1, d, loss.values().as_slice()),
        DVector::from_element(1, 1.0),
        DMatrix::from_row_slice(1, d, pi_hat.entries().as_slice()),
        radius,
    )?;
    let sol = solve_dual(&problem, cfg)?;
    Ok(KlSolution {
        value: sol.primal_value,
        distribution: sol.s.row(0).transpose(),
        converged: sol.converged,
    })
}

/// 1-Wasserstein distance between distributions on ordered states with
/// ground cost `|j - k|`.
pub fn wasserstein_distance(p: &[f64], q: &[f64]) -> f64 {
    let mut fp = 0.0;
    let mut fq = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q).take(p.len().saturating_sub(1)) {
        fp += a;
        fq += b;
        total += (fp - fq).abs();
    }
    total
}

/// Maximizes `<gain, p>` over distributions within 1-Wasserstein distance
/// `budget` of `center`.
///
/// Moving mass out of source `j` to distance `k` earns `max gain at j +- k`
/// minus `gain_j`; each source's options form a concave envelope in the
/// distance, and spending the budget on the steepest remaining segment
/// across all sources solves the transport program exactly.
pub fn wasserstein_row_max(gain: &[f64], center: &[f64], budget: f64) -> Vec<f64> {
    let n = gain.len();
    struct Segment {
        source: usize,
        slope: f64,
        cost: f64,
        to: (usize, usize),
        from: usize,
    }
    let mut hulls: Vec<Vec<(usize, f64, usize)>> = Vec::with_capacity(n);
    let mut segments = Vec::new();
    for j in 0..n {
        // (distance, gain increase, destination)
        let mut hull: Vec<(usize, f64, usize)> = vec![(0, 0.0, j)];
        for dist in 1..n {
            let mut best: Option<(f64, usize)> = None;
            for k in [j.checked_sub(dist), Some(j + dist).filter(|&k| k < n)].into_iter().flatten() {
                let g = gain[k] - gain[j];
                if best.is_none_or(|(bg, _)| g > bg) {
                    best = Some((g, k));
                }
            }
            let Some((g, k)) = best else { continue };
            if g <= hull.last().expect("nonempty").1 {
                continue;
            }
            while hull.len() >= 2 {
                let (d1, g1, _) = hull[hull.len() - 2];
                let (d2, g2, _) = hull[hull.len() - 1];
                let s12 = (g2 - g1) / (d2 - d1) as f64;
                let s2n = (g - g2) / (dist - d2) as f64;
                if s12 <= s2n {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push((dist, g, k));
        }
        for w in 1..hull.len() {
            let (d1, g1, _) = hull[w - 1];
            let (d2, g2, _) = hull[w];
            segments.push(Segment {
                source: j,
                slope: (g2 - g1) / (d2 - d1) as f64,
                cost: center[j] * (d2 - d1) as f64,
                to: (w, hull[w].2),
                from: hull[w - 1].2,
            });
        }
        hulls.push(hull);
    }
    segments.sort_by(|a, b| b.slope.total_cmp(&a.slope).then(a.source.cmp(&b.source)).then(a.to.0.cmp(&b.to.0)));

    let mut p = vec![0.0; n];
    let mut position: Vec<usize> = (0..n).collect();
    let mut split: Option<(usize, usize, usize, f64)> = None;
    let mut remaining = budget.max(0.0);
    for seg in &segments {
        if center[seg.source] == 0.0 {
            position[seg.source] = seg.to.1;
            continue;
        }
        if remaining <= 0.0 {
            break;
        }
        if seg.cost <= remaining {
            remaining -= seg.cost;
            position[seg.source] = seg.to.1;
        } else {
            let frac = remaining / seg.cost;
            split = Some((seg.source, seg.from, seg.to.1, frac));
            remaining = 0.0;
        }
    }
    for j in 0..n {
        match split {
            Some((src, from, to, frac)) if src == j => {
                p[from] += (1.0 - frac) * center[j];
                p[to] += frac * center[j];
            }
            _ => p[position[j]] += center[j],
        }
    }
    p
}

/// Row-wise Wasserstein linear subproblem.
#[derive(Debug, Clone)]
pub struct RowWassersteinOracleProblem {
    pub gain: DMatrix<f64>,
    pub center: TransitionMatrix,
    pub radius: f64,
}

/// Solves each row's transport program independently.
pub fn wasserstein_row_oracle(problem: &RowWassersteinOracleProblem) -> Result<TransitionMatrix> {
    let d = problem.center.dim();
    if problem.gain.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: problem.gain.nrows() });
    }
    if !(problem.radius >= 0.0) {
        return Err(Error::invalid("radius must be nonnegative"));
    }
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        let gain: Vec<f64> = problem.gain.row(i).iter().copied().collect();
        let center: Vec<f64> = problem.center.entries().row(i).iter().copied().collect();
        let row = wasserstein_row_max(&gain, &center, problem.radius);
        for (j, v) in row.into_iter().enumerate() {
            s[(i, j)] = v;
        }
    }
    Ok(TransitionMatrix::from_raw(s))
}

/// Row-wise Wasserstein ball around a transition matrix.
#[derive(Debug, Clone)]
pub struct WassersteinBallOracle {
    center: TransitionMatrix,
    radius: f64,
}

impl WassersteinBallOracle {
    pub fn new(center: TransitionMatrix, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::invalid("radius must be nonnegative"));
        }
        Ok(Self { center, radius })
    }
}

impl DirectionOracle for WassersteinBallOracle {
    fn center(&self) -> &TransitionMatrix {
        &self.center
    }

    fn direction(&self, gradient: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let problem =
            RowWassersteinOracleProblem { gain: gradient.clone(), center: self.center.clone(), radius: self.radius };
        Ok(wasserstein_row_oracle(&problem)?.into_inner())
    }
}

/// Worst-case expected loss over row-wise Wasserstein balls around the
/// estimate's transition matrix.
pub fn wasserstein_dro_value(
    loss: &LossVector,
    theta_hat: &DoubletMatrix,
    radius: f64,
    cfg: &FwConfig,
) -> Result<WorstCaseSolution> {
    let (_, p) = crate::markov::doublet_to_chain(theta_hat)?;
    frank_wolfe(loss, &WassersteinBallOracle::new(p, radius)?, cfg)
}

/// Estimation method behind the common worst-case interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// Nominal plug-in estimate.
    Saa,
    /// Worst case over an ambiguity set around the estimate.
    Robust(AmbiguitySpec),
}

/// Value reported by a method, with a convergence flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodValue {
    pub value: f64,
    pub converged: bool,
}

/// Evaluates `method` on a raw estimate.
pub fn worst_case_value(loss: &LossVector, theta_hat: &DoubletMatrix, method: &Method, cfg: &FwConfig) -> Result<MethodValue> {
    match method {
        Method::Saa => Ok(MethodValue { value: saa_value(loss, theta_hat)?, converged: true }),
        Method::Robust(spec) => {
            let sol = predictor(loss, theta_hat, spec, cfg)?;
            Ok(MethodValue { value: sol.value, converged: sol.converged })
        }
    }
}
