//! Robust assortment choice for one synthetic revenue problem and one data set.
use markov_dro::experiments::{trial_data, ExperimentConfig, MethodName};
use markov_dro::prescriptor::{prescriptor_solve, PrescriptorConfig};

fn main() -> markov_dro::Result<()> {
    let cfg = ExperimentConfig::default();
    let problem = cfg.problem()?;
    println!("prices {:?}", problem.prices());
    let groups = trial_data(&problem, 50, 0, &cfg)?;
    let loss = |x: &[f64], _k: usize| problem.loss(x);
    let pcfg = PrescriptorConfig { fw: cfg.fw, ..PrescriptorConfig::default() };
    for (name, r) in [(MethodName::Saa, 1.0), (MethodName::Cre, 0.01), (MethodName::Cre, 0.1), (MethodName::Wass, 0.1)] {
        let p = prescriptor_solve(&loss, &groups, &name.method(r)?, problem.space(), &pcfg)?;
        println!(
            "{:4} r={r:<5} offer {:?}  in-sample {:.4}  true {:.4}",
            name.label(),
            p.x.iter().map(|v| *v as u8).collect::<Vec<_>>(),
            p.in_sample_risk,
            problem.true_risk(&p.x)?
        );
    }
    Ok(())
}
