//! Decision optimization on top of the worst-case predictor: a directional
//! direct-search method with an extreme barrier, and exhaustive enumeration
//! for small binary decision sets.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{worst_case_value, Method};
use crate::error::{Error, Result};
use crate::markov::DoubletMatrix;
use crate::solver::{FwConfig, LossVector};

/// Largest binary dimension accepted by [`enumerate_binary`].
pub const MAX_ENUMERATION_DIM: usize = 20;

/// Feasible decisions.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionSpace {
    /// Componentwise bounds.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Binary vectors `x` with `matrix x <= rhs`.
    BinaryPolytope { matrix: DMatrix<f64>, rhs: DVector<f64> },
}

impl DecisionSpace {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("box bounds must be nonempty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("box requires lower < upper"));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn new_binary(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: rhs.len() });
        }
        if matrix.ncols() == 0 {
            return Err(Error::invalid("binary space needs at least one variable"));
        }
        Ok(Self::BinaryPolytope { matrix, rhs })
    }

    /// Cardinality budget `sum_j x_j <= k` over `n` binary variables.
    pub fn cardinality(n: usize, k: usize) -> Result<Self> {
        Self::new_binary(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, k as f64))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lower, .. } => lower.len(),
            Self::BinaryPolytope { matrix, .. } => matrix.ncols(),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Self::BinaryPolytope { .. })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| v >= l && v <= u),
            Self::BinaryPolytope { matrix, rhs } => {
                x.iter().all(|v| *v == 0.0 || *v == 1.0)
                    && (0..matrix.nrows()).all(|r| {
                        let lhs: f64 = matrix.row(r).iter().zip(x).map(|(a, v)| a * v).sum();
                        lhs <= rhs[r] + 1e-12
                    })
            }
        }
    }
}

/// Poll directions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanningSet {
    /// `+e_i` and `-e_i`.
    #[default]
    CoordinatePlusMinus,
    /// Coordinate directions followed by every exchange `e_i - e_j`.
    CoordinateAndSwaps,
    Custom(Vec<Vec<f64>>),
}

impl SpanningSet {
    fn directions(&self, n: usize) -> Vec<Vec<f64>> {
        let unit = |i: usize, s: f64| {
            let mut v = vec![0.0; n];
            v[i] = s;
            v
        };
        match self {
            Self::CoordinatePlusMinus => (0..n).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect(),
            Self::CoordinateAndSwaps => {
                let mut dirs: Vec<Vec<f64>> = (0..n).flat_map(|i| [unit(i, 1.0), unit(i, -1.0)]).collect();
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            let mut v = unit(i, 1.0);
                            v[j] = -1.0;
                            dirs.push(v);
                        }
                    }
                }
                dirs
            }
            Self::Custom(dirs) => dirs.clone(),
        }
    }
}

/// Optional global step tried before polling.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStep {
    #[default]
    Skip,
    /// Uniform random feasible-space samples per iteration.
    RandomSample { samples: usize, seed: u64 },
}

/// Direct-search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DfoConfig {
    pub alpha0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub spanning_set: SpanningSet,
    pub search: SearchStep,
}

impl Default for DfoConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            beta1: 0.5,
            beta2: 0.5,
            gamma: 2.0,
            max_iters: 500,
            spanning_set: SpanningSet::CoordinatePlusMinus,
            search: SearchStep::Skip,
        }
    }
}

impl DfoConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.alpha0 > 0.0
            && 0.0 < self.beta1
            && self.beta1 <= self.beta2
            && self.beta2 < 1.0
            && self.gamma >= 1.0;
        if !ok {
            return Err(Error::invalid("direct search needs alpha0 > 0, 0 < beta1 <= beta2 < 1, gamma >= 1"));
        }
        Ok(())
    }
}

/// Outcome of a direct search.
#[derive(Debug, Clone)]
pub struct DirectSearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Distinct points evaluated.
    pub evaluations: usize,
    /// Step size at the start of every iteration, then the final one.
    pub step_sizes: Vec<f64>,
    /// Incumbent value after every iteration.
    pub values: Vec<f64>,
}

struct Memo<F> {
    objective: F,
    cache: HashMap<Vec<u64>, f64>,
}

impl<F: FnMut(&[f64]) -> f64> Memo<F> {
    fn eval(&mut self, space: &DecisionSpace, x: &[f64]) -> f64 {
        if !space.contains(x) {
            return f64::INFINITY;
        }
        let key: Vec<u64> = x.iter().map(|v| (v + 0.0).to_bits()).collect();
        if let Some(v) = self.cache.get(&key) {
            return *v;
        }
        let v = (self.objective)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        self.cache.insert(key, v);
        v
    }
}

/// Directional direct search from a feasible `x0`. On binary spaces every
/// poll moves by a whole direction (unit bit flips or exchanges) while the
/// step size still governs the sufficient-decrease threshold.
pub fn direct_search(
    objective: impl FnMut(&[f64]) -> f64,
    space: &DecisionSpace,
    x0: &[f64],
    cfg: &DfoConfig,
) -> Result<DirectSearchResult> {
    cfg.validate()?;
    if !space.contains(x0) {
        return Err(Error::invalid("starting point is infeasible"));
    }
    let n = space.dim();
    let dirs = cfg.spanning_set.directions(n);
    if dirs.iter().any(|d| d.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: dirs.iter().map(Vec::len).find(|l| *l != n).unwrap_or(0) });
    }
    let mut memo = Memo { objective, cache: HashMap::new() };
    let mut x = x0.to_vec();
    let mut fx = memo.eval(space, &x);
    let mut alpha = cfg.alpha0;
    let mut rng = match cfg.search {
        SearchStep::RandomSample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        SearchStep::Skip => None,
    };
    let mut step_sizes = Vec::with_capacity(cfg.max_iters + 1);
    let mut values = Vec::with_capacity(cfg.max_iters);
    for _ in 0..cfg.max_iters {
        step_sizes.push(alpha);
        let threshold = fx - alpha * alpha;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        if let (Some(rng), SearchStep::RandomSample { samples, .. }) = (rng.as_mut(), &cfg.search) {
            for _ in 0..*samples {
                let y = random_point(space, rng);
                let fy = memo.eval(space, &y);
                if fy < threshold {
                    accepted = Some((y, fy));
                    break;
                }
            }
        }
        if accepted.is_none() {
            let scale = if space.is_binary() { 1.0 } else { alpha };
            for d in &dirs {
                let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + scale * b).collect();
                let fy = memo.eval(space, &y);
                if fy < threshold {
                    accepted = Some((y, fy));
                    break;
                }
            }
        }
        match accepted {
            Some((y, fy)) => {
                x = y;
                fx = fy;
                alpha *= cfg.gamma;
            }
            None => alpha *= cfg.beta2,
        }
        values.push(fx);
    }
    step_sizes.push(alpha);
    Ok(DirectSearchResult {
        x,
        value: fx,
        iterations: cfg.max_iters,
        evaluations: memo.cache.len(),
        step_sizes,
        values,
    })
}

fn random_point(space: &DecisionSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match space {
        DecisionSpace::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| rng.random_range(*l..=*u)).collect(),
        DecisionSpace::BinaryPolytope { matrix, .. } => {
            (0..matrix.ncols()).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()
        }
    }
}

/// Exact minimizer over a small binary polytope; the first point in
/// increasing bitmask order wins ties.
pub fn enumerate_binary(mut objective: impl FnMut(&[f64]) -> f64, space: &DecisionSpace) -> Result<(Vec<f64>, f64)> {
    if !space.is_binary() {
        return Err(Error::invalid("enumeration requires a binary decision space"));
    }
    let n = space.dim();
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::TooLarge { size: n, limit: MAX_ENUMERATION_DIM });
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1u32 << n) {
        let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
        if !space.contains(&x) {
            continue;
        }
        let v = objective(&x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((x, v));
        }
    }
    best.ok_or(Error::NoFeasiblePoint)
}

/// Estimated doublet of one customer group with its population weight.
#[derive(Debug, Clone)]
pub struct WeightedDoublet {
    pub weight: f64,
    pub doublet: DoubletMatrix,
}

/// How to search the decision space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Enumeration for binary spaces up to [`MAX_ENUMERATION_DIM`], else direct search.
    #[default]
    Auto,
    Enumerate,
    DirectSearch,
}

/// Chosen decision and its in-sample (worst-case) risk.
#[derive(Debug, Clone)]
pub struct Prescription {
    pub x: Vec<f64>,
    pub in_sample_risk: f64,
    pub evaluations: usize,
    /// Inner solves that hit their iteration budget.
    pub unconverged: usize,
}

/// Settings for [`prescriptor_solve`].
#[derive(Debug, Clone, Default)]
pub struct PrescriptorConfig {
    pub fw: FwConfig,
    pub dfo: DfoConfig,
    pub strategy: Strategy,
    /// Starting point for direct search; defaults to the zero vector on
    /// binary spaces and the box midpoint otherwise.
    pub x0: Option<Vec<f64>>,
}

/// Minimizes the weighted method value over the decision space. `loss`
/// maps a decision and a group index to per-state losses.
pub fn prescriptor_solve(
    loss: &dyn Fn(&[f64], usize) -> Result<LossVector>,
    groups: &[WeightedDoublet],
    method: &Method,
    space: &DecisionSpace,
    cfg: &PrescriptorConfig,
) -> Result<Prescription> {
    if groups.is_empty() {
        return Err(Error::invalid("at least one group is required"));
    }
    let mut first_error: Option<Error> = None;
    let mut unconverged = 0;
    let mut evaluations = 0;
    let mut objective = |x: &[f64]| -> f64 {
        evaluations += 1;
        let mut total = 0.0;
        for (k, g) in groups.iter().enumerate() {
            let outcome = loss(x, k).and_then(|l| worst_case_value(&l, &g.doublet, method, &cfg.fw));
            match outcome {
                Ok(v) => {
                    if !v.converged {
                        unconverged += 1;
                    }
                    total += g.weight * v.value;
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    return f64::INFINITY;
                }
            }
        }
        total
    };
    let enumerate = match cfg.strategy {
        Strategy::Enumerate => true,
        Strategy::DirectSearch => false,
        Strategy::Auto => space.is_binary() && space.dim() <= MAX_ENUMERATION_DIM,
    };
    let (x, value) = if enumerate {
        enumerate_binary(&mut objective, space)?
    } else {
        let x0 = match (&cfg.x0, space) {
            (Some(x0), _) => x0.clone(),
            (None, DecisionSpace::Box { lower, upper }) => lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            (None, DecisionSpace::BinaryPolytope { .. }) => vec![0.0; space.dim()],
        };
        let res = direct_search(&mut objective, space, &x0, &cfg.dfo)?;
        (res.x, res.value)
    };
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(Prescription { x, in_sample_risk: value, evaluations, unconverged })
}
