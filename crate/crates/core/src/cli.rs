//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a solver stopped before converging
//! (outputs are still written), 2 on bad input or any other failure. Errors
//! are reported on stderr as one JSON object.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::experiments::{
    run_disappointment_experiment, run_risk_experiment, run_scalability_bench, revenue_loss, ExperimentConfig,
    MethodName,
};
use crate::hypotest::{coin_pair, error_rates_mc, HypothesisPair};
use crate::io::{self, Format, MatrixRecord};
use crate::markov::{estimate_doublet, ghost_balance, simulate, DoubletMatrix, TransitionMatrix};
use crate::prescriptor::{prescriptor_solve, DecisionSpace, PrescriptorConfig, Strategy, WeightedDoublet};
use crate::rng::{task_rng, DEFAULT_SEED};
use crate::solver::{predictor, AmbiguityKind, AmbiguitySpec, FwConfig, FwIterate};
use crate::{Error, Result};

/// Robust prediction and prescription with Markovian data.
#[derive(Debug, Parser)]
#[command(name = "markov-dro", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// Seed for all random streams [default: 20240917]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeat for more)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Encoding of matrix and table outputs
    #[arg(long, value_enum, default_value = "csv", global = true)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Cre,
    Kl,
    Wass,
}

impl From<KindArg> for AmbiguityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cre => AmbiguityKind::ConditionalRelativeEntropy,
            KindArg::Kl => AmbiguityKind::KlStationary,
            KindArg::Wass => AmbiguityKind::WassersteinRows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cre,
    Kl,
    Wass,
    Saa,
}

impl From<MethodArg> for MethodName {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cre => MethodName::Cre,
            MethodArg::Kl => MethodName::Kl,
            MethodArg::Wass => MethodName::Wass,
            MethodArg::Saa => MethodName::Saa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Risk,
    Disappointment,
    Bench,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory from a transition matrix
    Simulate {
        /// Transition matrix (CSV or JSON)
        #[arg(long = "P", value_name = "FILE")]
        transition: PathBuf,
        /// Number of transitions
        #[arg(long = "T", value_name = "N")]
        horizon: usize,
        /// Initial state, 1-based
        #[arg(long, default_value_t = 1)]
        xi0: usize,
        /// Output file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the doublet distribution of a trajectory
    Estimate {
        /// Trajectory file, one 1-based state per line
        #[arg(long)]
        traj: PathBuf,
        /// Number of states
        #[arg(long)]
        states: usize,
        /// Close the path with a transition back to the initial state
        #[arg(long)]
        ghost: bool,
        /// Output file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case long-run expected loss over an ambiguity set
    WorstCase {
        /// Per-state losses (CSV row or column)
        #[arg(long)]
        loss: PathBuf,
        /// Estimated doublet (CSV or JSON)
        #[arg(long)]
        doublet: PathBuf,
        /// Ambiguity radius, r > 0
        #[arg(long, allow_negative_numbers = true)]
        radius: f64,
        #[arg(long, value_enum, default_value = "cre")]
        kind: KindArg,
        /// Frank-Wolfe duality gap tolerance
        #[arg(long, default_value_t = 1e-6)]
        gap_tol: f64,
        /// Output JSON file
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose an assortment minimizing weighted worst-case loss
    Prescribe {
        /// Problem JSON (prices, weights, constraint, doublet files)
        #[arg(long)]
        problem: PathBuf,
        /// Ambiguity radius, r > 0 (ignored by saa)
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, value_enum, default_value = "cre")]
        kind: MethodArg,
        /// Output JSON file
        #[arg(long)]
        out: PathBuf,
    },
    /// Error frequencies of the two-chain test
    Hypotest {
        /// Pair JSON {"first": .., "second": ..} or coin:EPS
        #[arg(long)]
        pair: String,
        /// Horizons, comma separated
        #[arg(long = "T", value_name = "N", value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        /// Trajectories per hypothesis and horizon
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Initial state, 1-based
        #[arg(long, default_value_t = 1)]
        xi0: usize,
        /// Output file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a synthetic experiment and write results plus metadata
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        /// Experiment config JSON; missing fields take defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Done,
    NotConverged,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.verbose);
    match dispatch(&cli) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::NotConverged) => {
            report("not_converged", "solver stopped before reaching its tolerance; results were written");
            1
        }
        Err(e) => {
            report(e.kind(), &e.to_string());
            2
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn report(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let seed = cli.global.seed.unwrap_or(DEFAULT_SEED);
    let format = Format::from(cli.global.format);
    match &cli.command {
        Command::Simulate { transition, horizon, xi0, out } => {
            let p = TransitionMatrix::new(io::read_matrix(transition)?)?;
            if *xi0 == 0 {
                return Err(Error::invalid("xi0 is 1-based"));
            }
            if *horizon == 0 {
                return Err(Error::invalid("T must be at least 1"));
            }
            let traj = simulate(&p, xi0 - 1, *horizon, &mut task_rng(seed, &[]))?;
            emit(out.as_deref(), &io::format_trajectory(&traj))?;
        }
        Command::Estimate { traj, states, ghost, out } => {
            let t = io::read_trajectory(traj, *states)?;
            let theta = if *ghost { ghost_balance(&t)? } else { estimate_doublet(&t)? };
            emit(out.as_deref(), &io::format_matrix(theta.entries(), format)?)?;
        }
        Command::WorstCase { loss, doublet, radius, kind, gap_tol, out } => {
            let spec = AmbiguitySpec::new(*radius, (*kind).into())?;
            let loss = io::read_loss(loss)?;
            let theta = DoubletMatrix::new(io::read_matrix(doublet)?)?;
            let cfg = FwConfig { gap_tol: *gap_tol, ..FwConfig::default() };
            let sol = predictor(&loss, &theta, &spec, &cfg)?;
            let report = WorstCaseReport {
                value: sol.value,
                gap: sol.final_gap,
                iterations: sol.iterations,
                converged: sol.converged,
                p_star: MatrixRecord::from_matrix(sol.p_star.entries()).entries,
                trace: sol.trace,
            };
            io::write_atomic(out, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
            if !sol.converged {
                return Ok(Outcome::NotConverged);
            }
        }
        Command::Prescribe { problem, radius, kind, out } => {
            let file = PrescribeProblem::load(problem)?;
            let method = match MethodName::from(*kind) {
                MethodName::Saa => Method::Saa,
                other => other.method(*radius)?,
            };
            let cfg = PrescriptorConfig { strategy: file.strategy.clone(), ..Default::default() };
            let loss = |x: &[f64], _k: usize| revenue_loss(&file.prices, x);
            let p = prescriptor_solve(&loss, &file.groups, &method, &file.space, &cfg)?;
            let report = PrescribeReport {
                x: p.x,
                in_sample_risk: p.in_sample_risk,
                evaluations: p.evaluations,
                unconverged_solves: p.unconverged,
            };
            io::write_atomic(out, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
            if p.unconverged > 0 {
                return Ok(Outcome::NotConverged);
            }
        }
        Command::Hypotest { pair, horizons, trials, xi0, out } => {
            let pair = parse_pair(pair)?;
            if *xi0 == 0 || *xi0 > pair.dim() {
                return Err(Error::invalid(format!("xi0 must lie in 1..={}", pair.dim())));
            }
            let rows = horizons
                .iter()
                .map(|&t| {
                    let r = error_rates_mc(&pair, t, *trials, xi0 - 1, seed)?;
                    Ok(HypotestRow {
                        horizon: t,
                        alpha_hat: r.alpha_hat,
                        beta_hat: r.beta_hat,
                        rate_estimate: r.rate_estimate(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            emit(out.as_deref(), &io::format_rows(&rows, format)?)?;
        }
        Command::Experiment { kind, config, out } => return run_experiment(*kind, config.as_deref(), out, cli.global.seed, format),
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct WorstCaseReport {
    value: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
    #[serde(rename = "P_star")]
    p_star: Vec<Vec<f64>>,
    trace: Vec<FwIterate>,
}

#[derive(Debug, Serialize)]
struct PrescribeReport {
    x: Vec<f64>,
    in_sample_risk: f64,
    evaluations: usize,
    unconverged_solves: usize,
}

#[derive(Debug, Serialize)]
struct HypotestRow {
    #[serde(rename = "T")]
    horizon: usize,
    alpha_hat: f64,
    beta_hat: f64,
    rate_estimate: f64,
}

/// Linear constraint `matrix * x <= rhs` over binary decisions.
#[derive(Debug, Clone, Deserialize)]
pub struct ConstraintFile {
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

/// On-disk prescription problem. Doublet paths are relative to the file.
#[derive(Debug, Clone, Deserialize)]
pub struct ProblemFile {
    pub prices: Vec<f64>,
    pub weights: Vec<f64>,
    pub constraint: ConstraintFile,
    pub doublets: Vec<PathBuf>,
    #[serde(default)]
    pub strategy: Strategy,
}

struct PrescribeProblem {
    prices: Vec<f64>,
    space: DecisionSpace,
    groups: Vec<WeightedDoublet>,
    strategy: Strategy,
}

impl PrescribeProblem {
    fn load(path: &Path) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.weights.len() != file.doublets.len() {
            return Err(Error::DimensionMismatch { expected: file.weights.len(), found: file.doublets.len() });
        }
        let d = file.prices.len();
        let m = file.constraint.matrix.len();
        if file.constraint.rhs.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: file.constraint.rhs.len() });
        }
        if let Some(row) = file.constraint.matrix.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: row.len() });
        }
        let matrix = DMatrix::from_fn(m, d, |i, j| file.constraint.matrix[i][j]);
        let space = DecisionSpace::new_binary(matrix, DVector::from_vec(file.constraint.rhs))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let groups = file
            .doublets
            .iter()
            .zip(&file.weights)
            .map(|(p, w)| {
                let doublet = DoubletMatrix::new(io::read_matrix(&base.join(p))?)?;
                if doublet.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: doublet.dim() });
                }
                Ok(WeightedDoublet { weight: *w, doublet })
            })
            .collect::<Result<_>>()?;
        Ok(Self { prices: file.prices, space, groups, strategy: file.strategy })
    }
}

#[derive(Debug, Deserialize)]
struct PairFile {
    first: MatrixRecord,
    second: MatrixRecord,
}

fn parse_pair(arg: &str) -> Result<HypothesisPair> {
    if let Some(eps) = arg.strip_prefix("coin:") {
        let eps: f64 = eps.parse().map_err(|_| Error::invalid(format!("bad coin parameter {eps:?}")))?;
        return coin_pair(eps);
    }
    let file: PairFile = serde_json::from_str(&fs::read_to_string(arg)?)?;
    HypothesisPair::new(DoubletMatrix::new(file.first.to_matrix()?)?, DoubletMatrix::new(file.second.to_matrix()?)?)
}

const ASSUMPTIONS: &[&str] = &[
    "decision constraint defaults to at most ceil(d/2) offered products",
    "radius grid defaults to 10 log-spaced values from 1e-4 to 10",
    "estimates with zero entries are mixed with the uniform doublet at weight 1e-6",
    "trajectories start in state 1 unless initial_state is set",
];

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    experiment: &'a str,
    seed: u64,
    crate_version: &'a str,
    results: &'a str,
    config: &'a ExperimentConfig,
    assumptions: &'a [&'a str],
}

fn run_experiment(
    kind: ExperimentKind,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    format: Format,
) -> Result<Outcome> {
    let mut cfg: ExperimentConfig = match config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let (name, body, converged) = match kind {
        ExperimentKind::Risk => {
            let rows = run_risk_experiment(&cfg.problem()?, &cfg)?;
            let ok = rows.iter().all(|r| r.unconverged_solves == 0);
            ("risk", io::format_rows(&rows, format)?, ok)
        }
        ExperimentKind::Disappointment => {
            let rows = run_disappointment_experiment(&cfg.problem()?, &cfg)?;
            ("disappointment", io::format_rows(&rows, format)?, true)
        }
        ExperimentKind::Bench => {
            let rows = run_scalability_bench(&cfg.bench, &cfg.fw, cfg.seed)?;
            let ok = rows.iter().all(|r| r.converged);
            ("bench", io::format_rows(&rows, format)?, ok)
        }
    };
    let results = format!("{name}.{ext}");
    io::write_atomic(&out.join(&results), body.as_bytes())?;
    let meta = Metadata {
        experiment: name,
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        results: &results,
        config: &cfg,
        assumptions: ASSUMPTIONS,
    };
    io::write_atomic(&out.join("metadata.json"), (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
    Ok(if converged { Outcome::Done } else { Outcome::NotConverged })
}
