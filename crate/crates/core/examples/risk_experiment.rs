//! Out-of-sample risk of robust and plug-in prescriptions on synthetic
//! revenue data, with disappointment frequencies.
//!
//! Usage: `cargo run --release --example risk_experiment -- [trials]`
use std::time::Instant;

use markov_dro::experiments::{disappointment_from_rows, run_risk_experiment, ExperimentConfig, MethodName};

fn main() -> markov_dro::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let cfg = ExperimentConfig {
        horizons: vec![10],
        radii: vec![0.1],
        trials,
        methods: vec![MethodName::Cre, MethodName::Saa],
        ..ExperimentConfig::default()
    };
    let problem = cfg.problem()?;
    let start = Instant::now();
    let rows = run_risk_experiment(&problem, &cfg)?;
    for name in &cfg.methods {
        let sel: Vec<_> = rows.iter().filter(|r| r.method == *name).collect();
        let mean = sel.iter().map(|r| r.out_of_sample_risk).sum::<f64>() / sel.len() as f64;
        let unconverged: usize = sel.iter().map(|r| r.unconverged_solves).sum();
        println!("{:4}  mean out-of-sample risk {mean:.4}  unconverged solves {unconverged}", name.label());
    }
    for d in disappointment_from_rows(&rows) {
        println!("{:4} r={} T={} disappointment {:.3}", d.method.label(), d.radius, d.horizon, d.disappointment_frequency);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
