//! Synthetic revenue-maximization study: problem generator, out-of-sample
//! risk and disappointment experiments, and a solver timing benchmark.
//!
//! A retailer offers a subset of `d` brands to `n` customer groups whose
//! brand choices follow group-specific Markov chains. Offering brand `j`
//! earns `a_j` whenever a customer picks it, so the loss in state `j` is
//! `-a_j x_j` and every method minimizes.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{saa_value, Method};
use crate::error::{Error, Result};
use crate::markov::{estimate_doublet, simulate, stationary_from_transition, StationaryDistribution, TransitionMatrix};
use crate::prescriptor::{prescriptor_solve, DecisionSpace, PrescriptorConfig, Strategy, WeightedDoublet};
use crate::rng::{task_rng, DEFAULT_SEED};
use crate::solver::{predictor, AmbiguityKind, AmbiguitySpec, FwConfig, LossVector};

/// Revenue problem with known customer chains.
#[derive(Debug, Clone)]
pub struct RevenueProblem {
    weights: Vec<f64>,
    prices: Vec<f64>,
    space: DecisionSpace,
    chains: Vec<TransitionMatrix>,
    stationary: Vec<StationaryDistribution>,
}

impl RevenueProblem {
    pub fn new(weights: Vec<f64>, prices: Vec<f64>, space: DecisionSpace, chains: Vec<TransitionMatrix>) -> Result<Self> {
        if weights.len() != chains.len() || weights.is_empty() {
            return Err(Error::invalid("need one weight per group and at least one group"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("group weights must form a probability vector"));
        }
        if prices.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("prices must be positive"));
        }
        let d = prices.len();
        if space.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: space.dim() });
        }
        if let Some(c) = chains.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: c.dim() });
        }
        let stationary = chains.iter().map(stationary_from_transition).collect::<Result<_>>()?;
        Ok(Self { weights, prices, space, chains, stationary })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn space(&self) -> &DecisionSpace {
        &self.space
    }

    pub fn chains(&self) -> &[TransitionMatrix] {
        &self.chains
    }

    pub fn n_groups(&self) -> usize {
        self.weights.len()
    }

    pub fn n_states(&self) -> usize {
        self.prices.len()
    }

    /// Per-state loss `-a_j x_j`.
    pub fn loss(&self, x: &[f64]) -> Result<LossVector> {
        revenue_loss(&self.prices, x)
    }

    /// Exact long-run loss of `x` under the true chains.
    pub fn true_risk(&self, x: &[f64]) -> Result<f64> {
        let loss = self.loss(x)?;
        Ok(self.weights.iter().zip(&self.stationary).map(|(w, pi)| w * loss.values().dot(pi.entries())).sum())
    }
}

/// Per-state loss `-a_j x_j`.
pub fn revenue_loss(prices: &[f64], x: &[f64]) -> Result<LossVector> {
    if prices.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: prices.len(), found: x.len() });
    }
    LossVector::from_slice(&prices.iter().zip(x).map(|(a, v)| -a * v).collect::<Vec<_>>())
}

/// Random strictly positive chain: uniform entries, two of which are
/// raised to 4 and 5, then rows normalized.
pub fn synth_chain<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<TransitionMatrix> {
    if d < 2 {
        return Err(Error::invalid("synthetic chains need at least two states"));
    }
    let mut m = DMatrix::from_fn(d, d, |_, _| 1.0 - rng.random::<f64>());
    let first = rng.random_range(0..d * d);
    let mut second = rng.random_range(0..d * d - 1);
    if second >= first {
        second += 1;
    }
    m[(first / d, first % d)] = 4.0;
    m[(second / d, second % d)] = 5.0;
    TransitionMatrix::normalize_rows(m)
}

/// Random instance with `n` groups over `d` brands: weights uniform on the
/// simplex, integer prices in `1..=10`, and at most `ceil(d/2)` brands offered
/// unless `budget` says otherwise.
pub fn synth_problem<R: Rng + ?Sized>(n: usize, d: usize, budget: Option<usize>, rng: &mut R) -> Result<RevenueProblem> {
    if n == 0 {
        return Err(Error::invalid("need at least one group"));
    }
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    let prices = (0..d).map(|_| f64::from(rng.random_range(1..=10u8))).collect();
    let space = DecisionSpace::cardinality(d, budget.unwrap_or(d.div_ceil(2)))?;
    let chains = (0..n).map(|_| synth_chain(d, rng)).collect::<Result<_>>()?;
    RevenueProblem::new(weights, prices, space, chains)
}

/// Method label used in configs, the command line and CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    /// Conditional relative entropy around the doublet estimate.
    Cre,
    /// Relative entropy around the stationary estimate.
    Kl,
    /// Row-wise 1-Wasserstein around the transition estimate.
    Wass,
    /// Plug-in estimate.
    Saa,
}

impl MethodName {
    pub fn label(self) -> &'static str {
        match self {
            MethodName::Cre => "cre",
            MethodName::Kl => "kl",
            MethodName::Wass => "wass",
            MethodName::Saa => "saa",
        }
    }

    pub fn method(self, radius: f64) -> Result<Method> {
        let kind = match self {
            MethodName::Saa => return Ok(Method::Saa),
            MethodName::Cre => AmbiguityKind::ConditionalRelativeEntropy,
            MethodName::Kl => AmbiguityKind::KlStationary,
            MethodName::Wass => AmbiguityKind::WassersteinRows,
        };
        Ok(Method::Robust(AmbiguitySpec::new(radius, kind)?))
    }
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cre" => Ok(Self::Cre),
            "kl" => Ok(Self::Kl),
            "wass" => Ok(Self::Wass),
            "saa" => Ok(Self::Saa),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected cre|kl|wass|saa)"))),
        }
    }
}

/// Timing benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub horizon: usize,
    pub radius: f64,
    pub trials: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { dims: vec![10, 50, 100, 200], horizon: 5000, radius: 1.0, trials: 10 }
    }
}

/// Ten log-spaced radii from `1e-4` to `10`.
pub fn default_radii() -> Vec<f64> {
    (0..10).map(|k| 10f64.powf(-4.0 + 5.0 * k as f64 / 9.0)).collect()
}

/// Experiment settings. States in `initial_state` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_groups: usize,
    pub n_states: usize,
    pub budget: Option<usize>,
    pub horizons: Vec<usize>,
    pub radii: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<MethodName>,
    pub initial_state: usize,
    pub fw: FwConfig,
    pub strategy: Strategy,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_groups: 5,
            n_states: 10,
            budget: None,
            horizons: vec![10, 300, 500],
            radii: default_radii(),
            trials: 100,
            seed: DEFAULT_SEED,
            methods: vec![MethodName::Cre, MethodName::Kl, MethodName::Wass, MethodName::Saa],
            initial_state: 1,
            fw: FwConfig { gap_tol: 1e-4, ..FwConfig::default() },
            strategy: Strategy::Auto,
            bench: BenchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.radii.is_empty() || self.methods.is_empty() || self.trials == 0 {
            return Err(Error::invalid("horizons, radii, methods and trials must be nonempty"));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("radii must be positive"));
        }
        if self.horizons.contains(&0) {
            return Err(Error::invalid("horizons must be positive"));
        }
        if self.initial_state == 0 || self.initial_state > self.n_states {
            return Err(Error::invalid("initial_state must lie in 1..=n_states"));
        }
        Ok(())
    }

    /// Problem instance drawn from this config's seed.
    pub fn problem(&self) -> Result<RevenueProblem> {
        synth_problem(self.n_groups, self.n_states, self.budget, &mut task_rng(self.seed, &[STREAM_PROBLEM]))
    }
}

const STREAM_PROBLEM: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_BENCH: u64 = 2;

/// One prescriptor run. Losses are negative revenue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRow {
    pub method: MethodName,
    pub radius: f64,
    pub horizon: usize,
    pub trial: usize,
    pub out_of_sample_risk: f64,
    pub in_sample_risk: f64,
    /// 1 when the true risk exceeds the in-sample risk, NaN for failed solves.
    pub disappointment: f64,
    pub unconverged_solves: usize,
}

/// Simulated data of one trial: one raw doublet estimate per group.
pub fn trial_data(problem: &RevenueProblem, horizon: usize, trial: usize, cfg: &ExperimentConfig) -> Result<Vec<WeightedDoublet>> {
    problem
        .chains
        .iter()
        .zip(&problem.weights)
        .enumerate()
        .map(|(k, (chain, w))| {
            let mut rng = task_rng(cfg.seed, &[STREAM_DATA, horizon as u64, trial as u64, k as u64]);
            let traj = simulate(chain, cfg.initial_state - 1, horizon, &mut rng)?;
            Ok(WeightedDoublet { weight: *w, doublet: estimate_doublet(&traj)? })
        })
        .collect()
}

fn solve_row(
    problem: &RevenueProblem,
    groups: &[WeightedDoublet],
    name: MethodName,
    radius: f64,
    horizon: usize,
    trial: usize,
    cfg: &ExperimentConfig,
) -> RiskRow {
    let pcfg = PrescriptorConfig { fw: cfg.fw, strategy: cfg.strategy.clone(), ..Default::default() };
    let loss = |x: &[f64], _k: usize| problem.loss(x);
    let outcome = name
        .method(radius)
        .and_then(|m| prescriptor_solve(&loss, groups, &m, &problem.space, &pcfg))
        .and_then(|p| Ok((problem.true_risk(&p.x)?, p)));
    match outcome {
        Ok((oos, p)) => RiskRow {
            method: name,
            radius,
            horizon,
            trial,
            out_of_sample_risk: oos,
            in_sample_risk: p.in_sample_risk,
            disappointment: if oos > p.in_sample_risk { 1.0 } else { 0.0 },
            unconverged_solves: p.unconverged,
        },
        Err(e) => {
            log::warn!("{} r={radius} T={horizon} trial={trial} failed: {e}", name.label());
            RiskRow {
                method: name,
                radius,
                horizon,
                trial,
                out_of_sample_risk: f64::NAN,
                in_sample_risk: f64::NAN,
                disappointment: f64::NAN,
                unconverged_solves: 0,
            }
        }
    }
}

/// Out-of-sample and in-sample risk of every method, radius, horizon and
/// trial, sorted by that key. The plug-in method ignores the radius, so its
/// result is computed once per trial and repeated across radii.
pub fn run_risk_experiment(problem: &RevenueProblem, cfg: &ExperimentConfig) -> Result<Vec<RiskRow>> {
    cfg.validate()?;
    if problem.n_states() < cfg.initial_state {
        return Err(Error::invalid("initial_state exceeds the number of states"));
    }
    let jobs: Vec<(usize, usize)> =
        cfg.horizons.iter().flat_map(|&t| (0..cfg.trials).map(move |k| (t, k))).collect();
    let per_job: Vec<Vec<RiskRow>> = jobs
        .par_iter()
        .map(|&(t, k)| -> Result<Vec<RiskRow>> {
            let groups = trial_data(problem, t, k, cfg)?;
            let mut rows = Vec::new();
            for &name in &cfg.methods {
                if name == MethodName::Saa {
                    let base = solve_row(problem, &groups, name, cfg.radii[0], t, k, cfg);
                    rows.extend(cfg.radii.iter().map(|&r| RiskRow { radius: r, ..base.clone() }));
                } else {
                    rows.extend(cfg.radii.iter().map(|&r| solve_row(problem, &groups, name, r, t, k, cfg)));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<RiskRow> = per_job.into_iter().flatten().collect();
    let method_rank = |m: MethodName| cfg.methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        method_rank(a.method)
            .cmp(&method_rank(b.method))
            .then(a.radius.total_cmp(&b.radius))
            .then(a.horizon.cmp(&b.horizon))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(rows)
}

/// Disappointment frequency per method, radius and horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisappointmentRow {
    pub method: MethodName,
    pub radius: f64,
    pub horizon: usize,
    pub disappointment_frequency: f64,
    /// Trials with a successful solve.
    pub trials: usize,
    pub failed: usize,
}

/// Aggregates risk rows into disappointment frequencies.
pub fn disappointment_from_rows(rows: &[RiskRow]) -> Vec<DisappointmentRow> {
    let mut out: Vec<DisappointmentRow> = Vec::new();
    for row in rows {
        let pos = out
            .iter()
            .position(|o| o.method == row.method && o.radius == row.radius && o.horizon == row.horizon);
        let entry = match pos {
            Some(p) => &mut out[p],
            None => {
                out.push(DisappointmentRow {
                    method: row.method,
                    radius: row.radius,
                    horizon: row.horizon,
                    disappointment_frequency: 0.0,
                    trials: 0,
                    failed: 0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        if row.disappointment.is_nan() {
            entry.failed += 1;
        } else {
            entry.disappointment_frequency += row.disappointment;
            entry.trials += 1;
        }
    }
    for o in &mut out {
        o.disappointment_frequency = if o.trials > 0 { o.disappointment_frequency / o.trials as f64 } else { f64::NAN };
    }
    out
}

/// Runs the risk experiment and reports disappointment frequencies.
pub fn run_disappointment_experiment(problem: &RevenueProblem, cfg: &ExperimentConfig) -> Result<Vec<DisappointmentRow>> {
    Ok(disappointment_from_rows(&run_risk_experiment(problem, cfg)?))
}

/// Wall time of one worst-case solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub d: usize,
    pub trial: usize,
    pub wall_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    pub value: f64,
}

/// Times the conditional-entropy worst-case solve on random chains of
/// increasing size, each with a uniformly random binary decision.
pub fn run_scalability_bench(bench: &BenchConfig, fw: &FwConfig, seed: u64) -> Result<Vec<BenchRow>> {
    if bench.dims.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("bench dimensions must be ascending"));
    }
    let spec = AmbiguitySpec::new(bench.radius, AmbiguityKind::ConditionalRelativeEntropy)?;
    let mut rows = Vec::new();
    for &d in &bench.dims {
        for trial in 0..bench.trials {
            let mut rng = task_rng(seed, &[STREAM_BENCH, d as u64, trial as u64]);
            let chain = synth_chain(d, &mut rng)?;
            let prices: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(1..=10u8))).collect();
            let x: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
            let traj = simulate(&chain, 0, bench.horizon, &mut rng)?;
            let theta = estimate_doublet(&traj)?;
            let loss = revenue_loss(&prices, &x)?;
            let start = Instant::now();
            let sol = predictor(&loss, &theta, &spec, fw)?;
            rows.push(BenchRow {
                d,
                trial,
                wall_seconds: start.elapsed().as_secs_f64(),
                iterations: sol.iterations,
                converged: sol.converged,
                value: sol.value,
            });
        }
    }
    Ok(rows)
}

/// SAA in-sample value of a decision on a trial's data.
pub fn saa_objective(problem: &RevenueProblem, groups: &[WeightedDoublet], x: &[f64]) -> Result<f64> {
    let loss = problem.loss(x)?;
    groups.iter().map(|g| Ok(g.weight * saa_value(&loss, &g.doublet)?)).sum()
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
