//! Worst-case long-run loss of a three-state chain for growing radii.
use markov_dro::markov::{doublet_to_chain, DoubletMatrix};
use markov_dro::solver::{predictor, psi, AmbiguityKind, AmbiguitySpec, FwConfig, LossVector};
use nalgebra::DMatrix;

fn main() -> markov_dro::Result<()> {
    let theta = DoubletMatrix::normalize(DMatrix::from_row_slice(3, 3, &[5.0, 3.0, 2.0, 2.0, 6.0, 2.0, 3.0, 1.0, 6.0]))?;
    let loss = LossVector::from_slice(&[1.0, -2.0, 4.0])?;
    let (_, p) = doublet_to_chain(&theta)?;
    println!("nominal {:.6}", psi(&loss, &p)?);
    for r in [1e-3, 1e-2, 1e-1, 1.0] {
        for kind in [AmbiguityKind::ConditionalRelativeEntropy, AmbiguityKind::KlStationary, AmbiguityKind::WassersteinRows] {
            let sol = predictor(&loss, &theta, &AmbiguitySpec::new(r, kind)?, &FwConfig::default())?;
            println!("r={r:<6} {kind:?}: {:.6} after {} iterations (gap {:.1e})", sol.value, sol.iterations, sol.final_gap);
        }
    }
    Ok(())
}
