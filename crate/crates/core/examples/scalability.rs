//! Wall time of the worst-case solve as the number of states grows.
//!
//! Usage: `cargo run --release --example scalability -- [d ...]`
use markov_dro::experiments::{run_scalability_bench, BenchConfig};
use markov_dro::solver::FwConfig;

fn main() -> markov_dro::Result<()> {
    let dims: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let bench = BenchConfig {
        dims: if dims.is_empty() { vec![10, 20, 50] } else { dims },
        trials: 2,
        ..BenchConfig::default()
    };
    let fw = FwConfig { gap_tol: 1e-4, ..FwConfig::default() };
    for row in run_scalability_bench(&bench, &fw, 1)? {
        println!(
            "d={:4} trial={} seconds={:8.3} iterations={:5} converged={} value={:.6}",
            row.d, row.trial, row.wall_seconds, row.iterations, row.converged, row.value
        );
    }
    Ok(())
}
