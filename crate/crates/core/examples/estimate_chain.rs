//! Simulate a chain, estimate its doublet and close the path with a ghost
//! transition so the estimate becomes balanced.
use markov_dro::markov::{
    conditional_relative_entropy, doublet_to_chain, estimate_doublet, ghost_balance, simulate, stationary_from_transition,
    TransitionMatrix,
};
use markov_dro::rng::task_rng;
use nalgebra::DMatrix;

fn main() -> markov_dro::Result<()> {
    let p = TransitionMatrix::new(DMatrix::from_row_slice(3, 3, &[0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.3, 0.3, 0.4]))?;
    println!("true stationary law {:.4}", stationary_from_transition(&p)?.entries().transpose());
    let mut rng = task_rng(11, &[]);
    for t in [100, 1_000, 10_000] {
        let traj = simulate(&p, 0, t, &mut rng)?;
        let raw = estimate_doublet(&traj)?;
        let closed = ghost_balance(&traj)?;
        let (pi, _) = doublet_to_chain(&closed)?;
        println!(
            "T={t:6}  raw imbalance {:.2e}  closed imbalance {:.2e}  D_c(raw||closed)={:.2e} <= d/T={:.2e}  pi={:.4}",
            raw.balance_defect(),
            closed.balance_defect(),
            conditional_relative_entropy(&raw, &closed)?,
            3.0 / t as f64,
            pi.entries().transpose()
        );
    }
    Ok(())
}
