//! The comparison methods shrink to the plug-in value as the radius vanishes.
use markov_dro::baselines::{saa_value, worst_case_value, Method};
use markov_dro::markov::DoubletMatrix;
use markov_dro::solver::{AmbiguityKind, AmbiguitySpec, FwConfig, LossVector};
use nalgebra::DMatrix;

fn main() -> markov_dro::Result<()> {
    let theta = DoubletMatrix::normalize(DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 1.0, 1.0, 5.0, 2.0, 2.0, 1.0, 4.0]))?;
    let loss = LossVector::from_slice(&[-3.0, 1.0, 2.0])?;
    println!("saa {:.8}", saa_value(&loss, &theta)?);
    let cfg = FwConfig::default();
    for r in [1.0, 1e-2, 1e-4, 1e-8] {
        print!("r={r:<6}");
        for kind in [AmbiguityKind::ConditionalRelativeEntropy, AmbiguityKind::KlStationary, AmbiguityKind::WassersteinRows] {
            let v = worst_case_value(&loss, &theta, &Method::Robust(AmbiguitySpec::new(r, kind)?), &cfg)?;
            print!("  {kind:?} {:.8}", v.value);
        }
        println!();
    }
    Ok(())
}
