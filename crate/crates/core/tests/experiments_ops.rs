mod common;

use markov_dro::experiments::*;
use markov_dro::markov::stationary_from_transition;
use markov_dro::rng::task_rng;
use rand::Rng;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n_groups: 2,
        n_states: 4,
        horizons: vec![10, 60],
        radii: vec![0.01, 0.1, 1.0],
        trials: 3,
        seed: 77,
        ..ExperimentConfig::default()
    }
}

fn csv_text<T: serde::Serialize>(rows: &[T]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn synthetic_chains_are_positive_and_ergodic() {
    for k in 0..1000 {
        let p = synth_chain(10, &mut task_rng(5, &[k])).unwrap();
        assert!(p.entries().iter().all(|v| *v > 0.0));
        for row in p.entries().row_iter() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
        stationary_from_transition(&p).unwrap();
    }
    let a = synth_chain(6, &mut task_rng(1, &[2])).unwrap();
    let b = synth_chain(6, &mut task_rng(1, &[2])).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synthetic_problem_shape() {
    let p = synth_problem(5, 10, None, &mut task_rng(3, &[])).unwrap();
    assert_eq!((p.n_groups(), p.n_states()), (5, 10));
    assert!((p.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert!(p.prices().iter().all(|a| a.fract() == 0.0 && (1.0..=10.0).contains(a)));
}

#[test]
fn true_risk_matches_power_iteration() {
    let p = synth_problem(3, 6, None, &mut task_rng(4, &[])).unwrap();
    let mut rng = common::rng(5);
    for _ in 0..10 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut expected = 0.0;
        for (w, chain) in p.weights().iter().zip(p.chains()) {
            let pi = common::power_iteration(chain.entries(), 10_000);
            expected += w * (0..6).map(|j| -p.prices()[j] * x[j] * pi[j]).sum::<f64>();
        }
        assert!((p.true_risk(&x).unwrap() - expected).abs() <= 1e-10);
    }
}

#[test]
fn risk_experiment_contract() {
    let cfg = small_config();
    let problem = cfg.problem().unwrap();
    let rows = run_risk_experiment(&problem, &cfg).unwrap();
    assert_eq!(rows.len(), cfg.methods.len() * cfg.radii.len() * cfg.horizons.len() * cfg.trials);
    assert!(rows.iter().all(|r| r.disappointment == 0.0 || r.disappointment == 1.0));

    // reproducible to the byte
    let again = run_risk_experiment(&problem, &cfg).unwrap();
    assert_eq!(csv_text(&rows), csv_text(&again));

    for t in &cfg.horizons {
        for k in 0..cfg.trials {
            let pick = |m: MethodName| -> Vec<&RiskRow> {
                rows.iter().filter(|r| r.method == m && r.horizon == *t && r.trial == k).collect()
            };
            let saa = pick(MethodName::Saa);
            assert!(saa.windows(2).all(|w| w[0].out_of_sample_risk == w[1].out_of_sample_risk));
            assert!(saa.windows(2).all(|w| w[0].in_sample_risk == w[1].in_sample_risk));
            for m in [MethodName::Cre, MethodName::Kl, MethodName::Wass] {
                let sel = pick(m);
                assert_eq!(sel.len(), cfg.radii.len());
                // minimized robust values grow with the radius
                for w in sel.windows(2) {
                    assert!(w[0].radius < w[1].radius);
                    assert!(w[0].in_sample_risk <= w[1].in_sample_risk + 1e-4, "{m:?}: {:?}", (w[0], w[1]));
                }
                assert!(sel[0].in_sample_risk >= saa[0].in_sample_risk - 1e-4);
            }
        }
    }
}

#[test]
fn disappointment_frequencies() {
    let cfg = ExperimentConfig { radii: vec![0.1, 10.0], methods: vec![MethodName::Cre, MethodName::Saa], ..small_config() };
    let problem = cfg.problem().unwrap();
    let rows = run_disappointment_experiment(&problem, &cfg).unwrap();
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.disappointment_frequency));
        assert_eq!(r.trials + r.failed, cfg.trials);
        if r.method == MethodName::Cre && r.radius == 10.0 {
            assert_eq!(r.disappointment_frequency, 0.0);
        }
    }
}

#[test]
fn csv_headers_are_stable() {
    let cfg = ExperimentConfig { horizons: vec![10], radii: vec![0.1], trials: 1, methods: vec![MethodName::Saa], ..small_config() };
    let problem = cfg.problem().unwrap();
    let risk = run_risk_experiment(&problem, &cfg).unwrap();
    assert_eq!(
        csv_text(&risk).lines().next().unwrap(),
        "method,radius,horizon,trial,out_of_sample_risk,in_sample_risk,disappointment,unconverged_solves"
    );
    let dis = disappointment_from_rows(&risk);
    assert_eq!(csv_text(&dis).lines().next().unwrap(), "method,radius,horizon,disappointment_frequency,trials,failed");
    let bench = BenchConfig { dims: vec![5], horizon: 200, radius: 1.0, trials: 1 };
    let b = run_scalability_bench(&bench, &cfg.fw, 1).unwrap();
    assert_eq!(csv_text(&b).lines().next().unwrap(), "d,trial,wall_seconds,iterations,converged,value");
}

#[test]
fn bench_small_dimension() {
    let bench = BenchConfig { dims: vec![10], horizon: 5000, radius: 1.0, trials: 2 };
    let rows = run_scalability_bench(&bench, &markov_dro::solver::FwConfig::default(), 3).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.wall_seconds > 0.0 && r.converged));
    let descending = BenchConfig { dims: vec![20, 10], ..bench };
    assert!(run_scalability_bench(&descending, &markov_dro::solver::FwConfig::default(), 3).is_err());
}

#[test]
fn config_validation() {
    let bad = ExperimentConfig { radii: vec![], ..ExperimentConfig::default() };
    assert!(bad.validate().is_err());
    let bad = ExperimentConfig { initial_state: 0, ..ExperimentConfig::default() };
    assert!(bad.validate().is_err());
    let radii = default_radii();
    assert_eq!(radii.len(), 10);
    assert!((radii[0] - 1e-4).abs() <= 1e-18 && (radii[9] - 10.0).abs() <= 1e-12);
    let json = serde_json::to_string(&ExperimentConfig::default()).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, ExperimentConfig::default());
}
