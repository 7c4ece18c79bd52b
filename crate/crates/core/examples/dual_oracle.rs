//! The linear subproblem over the entropy ball, solved through its dual in
//! each of the available modes.
use markov_dro::oracle::{dual_bounds, solve_dual, DualConfig, DualMode, OracleProblem};
use nalgebra::{DMatrix, DVector};

fn main() -> markov_dro::Result<()> {
    let gain = DMatrix::from_row_slice(3, 3, &[0.5, -1.0, 2.0, 1.5, 0.0, -0.5, -2.0, 1.0, 0.3]);
    let center = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.2, 0.6, 0.2, 0.3, 0.1, 0.6]);
    let weights = DVector::from_vec(vec![0.3, 0.4, 0.3]);
    let problem = OracleProblem::new(gain, weights, center, 0.05)?;
    let bounds = dual_bounds(&problem)?;
    println!("dual box lower {:.4} upper {:.4}", bounds.lower.transpose(), bounds.upper.transpose());
    for mode in [DualMode::Decomposed, DualMode::FullGradient, DualMode::PerCoordinate] {
        let cfg = DualConfig { mode, iterations: 20_000, step_constant: 50.0, ..DualConfig::default() };
        let sol = solve_dual(&problem, &cfg)?;
        println!(
            "{mode:?}: primal {:.6} dual {:.6} gap {:.1e} divergence {:.4} lambda {:.4}",
            sol.primal_value, sol.dual_value, sol.duality_gap, sol.divergence, sol.lambda_star
        );
    }
    Ok(())
}
