mod common;

use std::cell::RefCell;

use markov_dro::baselines::{worst_case_value, Method};
use markov_dro::experiments::{saa_objective, synth_problem, trial_data, ExperimentConfig, MethodName};
use markov_dro::markov::DoubletMatrix;
use markov_dro::prescriptor::*;
use markov_dro::rng::task_rng;
use markov_dro::solver::{AmbiguityKind, AmbiguitySpec, FwConfig, LossVector};
use markov_dro::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Every feasible 0/1 vector of a polytope, by brute force.
fn feasible_points(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Vec<Vec<f64>> {
    let n = matrix.ncols();
    (0u32..1 << n)
        .map(|m| (0..n).map(|j| f64::from((m >> j) & 1)).collect::<Vec<_>>())
        .filter(|x| (matrix * DVector::from_column_slice(x)).iter().zip(rhs.iter()).all(|(a, b)| *a <= *b + 1e-12))
        .collect()
}

#[test]
fn quadratic_minimizer_is_found() {
    let space = DecisionSpace::new_box(vec![-1.0; 4], vec![2.0; 4]).unwrap();
    let target = [0.1, 1.9, -0.7, 0.33];
    let f = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let res = direct_search(f, &space, &[0.5; 4], &DfoConfig::default()).unwrap();
    for (a, b) in res.x.iter().zip(&target) {
        assert!((a - b).abs() <= 1e-3);
    }
}

#[test]
fn constant_objective_keeps_start() {
    let space = DecisionSpace::new_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
    let cfg = DfoConfig { max_iters: 20, ..DfoConfig::default() };
    let res = direct_search(|_| 1.0, &space, &[0.5; 3], &cfg).unwrap();
    assert_eq!(res.x, vec![0.5; 3]);
    assert!(res.values.iter().all(|v| *v == 1.0));
    for w in res.step_sizes.windows(2) {
        assert_eq!(w[1], cfg.beta2 * w[0]);
    }
}

#[test]
fn infeasible_start_is_rejected() {
    let space = DecisionSpace::new_box(vec![0.0], vec![1.0]).unwrap();
    assert!(direct_search(|_| 0.0, &space, &[2.0], &DfoConfig::default()).is_err());
}

#[test]
fn enumeration_examples() {
    let space = DecisionSpace::new_binary(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 1.0)).unwrap();
    let (x, v) = enumerate_binary(|x| -x[0] - 2.0 * x[1], &space).unwrap();
    assert_eq!((x, v), (vec![0.0, 1.0], -2.0));
    let empty = DecisionSpace::new_binary(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, -0.5)).unwrap();
    assert!(matches!(enumerate_binary(|_| 0.0, &empty), Err(Error::NoFeasiblePoint)));
}

fn revenue_groups(d: usize, n: usize, seed: u64, horizon: usize) -> (markov_dro::experiments::RevenueProblem, Vec<WeightedDoublet>) {
    let cfg = ExperimentConfig { n_groups: n, n_states: d, seed, ..ExperimentConfig::default() };
    let problem = cfg.problem().unwrap();
    let groups = trial_data(&problem, horizon, 0, &cfg).unwrap();
    (problem, groups)
}

#[test]
fn enumeration_path_is_exact_on_revenue_instance() {
    let (problem, groups) = revenue_groups(10, 10, 31, 200);
    let loss = |x: &[f64], _k: usize| problem.loss(x);
    let method = MethodName::Cre.method(0.1).unwrap();
    let cfg = PrescriptorConfig { fw: FwConfig { gap_tol: 1e-9, ..FwConfig::default() }, ..PrescriptorConfig::default() };
    let got = prescriptor_solve(&loss, &groups, &method, problem.space(), &cfg).unwrap();
    let DecisionSpace::BinaryPolytope { matrix, rhs } = problem.space() else { panic!("binary space expected") };
    let mut best = f64::INFINITY;
    for x in feasible_points(matrix, rhs) {
        let l = problem.loss(&x).unwrap();
        let v: f64 = groups
            .iter()
            .map(|g| g.weight * worst_case_value(&l, &g.doublet, &method, &cfg.fw).unwrap().value)
            .sum();
        best = best.min(v);
    }
    assert!((got.in_sample_risk - best).abs() <= 1e-9, "{} vs {best}", got.in_sample_risk);
}

#[test]
fn direct_search_mostly_matches_enumeration() {
    let mut agree = 0;
    let trials = 20;
    for seed in 0..trials {
        let (problem, groups) = revenue_groups(10, 5, 100 + seed, 100);
        let loss = |x: &[f64], _k: usize| problem.loss(x);
        let exact = prescriptor_solve(&loss, &groups, &Method::Saa, problem.space(), &PrescriptorConfig::default()).unwrap();
        let dfo_cfg = PrescriptorConfig {
            strategy: markov_dro::prescriptor::Strategy::DirectSearch,
            dfo: DfoConfig { spanning_set: SpanningSet::CoordinateAndSwaps, ..DfoConfig::default() },
            ..PrescriptorConfig::default()
        };
        let dfo = prescriptor_solve(&loss, &groups, &Method::Saa, problem.space(), &dfo_cfg).unwrap();
        assert!(dfo.in_sample_risk >= exact.in_sample_risk - 1e-12);
        if dfo.in_sample_risk <= exact.in_sample_risk + 1e-9 {
            agree += 1;
        }
    }
    assert!(agree * 10 >= trials * 9, "direct search matched enumeration on {agree}/{trials}");
}

#[test]
fn single_feasible_decision() {
    let space = DecisionSpace::new_binary(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]), DVector::from_vec(vec![0.0, 0.0]))
        .unwrap();
    let theta = DoubletMatrix::normalize(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0])).unwrap();
    let groups = vec![WeightedDoublet { weight: 1.0, doublet: theta.clone() }];
    let loss = |x: &[f64], _k: usize| LossVector::from_slice(&[1.0 - x[0], 2.0 - x[1]]);
    let method = Method::Robust(AmbiguitySpec::new(0.2, AmbiguityKind::ConditionalRelativeEntropy).unwrap());
    let got = prescriptor_solve(&loss, &groups, &method, &space, &PrescriptorConfig::default()).unwrap();
    assert_eq!(got.x, vec![0.0, 0.0]);
    let direct = worst_case_value(&LossVector::from_slice(&[1.0, 2.0]).unwrap(), &theta, &method, &FwConfig::default()).unwrap();
    assert_eq!(got.in_sample_risk, direct.value);
}

#[test]
fn tiny_radius_picks_the_plug_in_minimizer() {
    let (problem, raw) = revenue_groups(6, 3, 41, 50_000);
    // long paths visit every transition, so the estimates are positive
    assert!(raw.iter().all(|g| g.doublet.is_strictly_positive()));
    let loss = |x: &[f64], _k: usize| problem.loss(x);
    let robust = prescriptor_solve(&loss, &raw, &MethodName::Cre.method(1e-9).unwrap(), problem.space(), &PrescriptorConfig::default())
        .unwrap();
    let saa = prescriptor_solve(&loss, &raw, &Method::Saa, problem.space(), &PrescriptorConfig::default()).unwrap();
    assert_eq!(robust.x, saa.x);
    assert!((saa_objective(&problem, &raw, &robust.x).unwrap() - saa.in_sample_risk).abs() <= 1e-12);
}

#[test]
fn robust_premium_is_nonnegative() {
    let (problem, groups) = revenue_groups(10, 5, 51, 300);
    let loss = |x: &[f64], _k: usize| problem.loss(x);
    let robust = prescriptor_solve(&loss, &groups, &MethodName::Cre.method(0.1).unwrap(), problem.space(), &PrescriptorConfig::default())
        .unwrap();
    let saa = prescriptor_solve(&loss, &groups, &Method::Saa, problem.space(), &PrescriptorConfig::default()).unwrap();
    assert!(robust.in_sample_risk >= saa.in_sample_risk);
}

#[test]
fn synthetic_problem_uses_half_budget() {
    let p = synth_problem(5, 10, None, &mut task_rng(1, &[])).unwrap();
    assert!(p.space().contains(&[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
    assert!(!p.space().contains(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn direct_search_contract(
        target in prop::collection::vec(-1.0f64..1.0, 3),
        start in prop::collection::vec(-0.9f64..0.9, 3),
        gamma in 1.0f64..3.0,
        beta in 0.1f64..0.9,
    ) {
        let space = DecisionSpace::new_box(vec![-1.0, -1.0, -1.0], vec![1.0, 0.5, 1.0]).unwrap();
        prop_assume!(space.contains(&start));
        let seen = RefCell::new(Vec::new());
        let f = |x: &[f64]| {
            seen.borrow_mut().push(x.to_vec());
            x.iter().zip(&target).map(|(a, b)| (a - b).abs().powf(1.5)).sum::<f64>()
        };
        let cfg = DfoConfig { gamma, beta1: beta, beta2: beta, max_iters: 60, ..DfoConfig::default() };
        let res = direct_search(f, &space, &start, &cfg).unwrap();
        // the barrier keeps infeasible points away from the objective
        prop_assert!(seen.borrow().iter().all(|x| space.contains(x)));
        prop_assert!(space.contains(&res.x));
        let mut prev = target.iter().zip(&start).map(|(b, a)| (a - b).abs().powf(1.5)).sum::<f64>();
        for k in 0..res.values.len() {
            let alpha = res.step_sizes[k];
            let next = res.step_sizes[k + 1];
            if res.values[k] < prev {
                prop_assert!(res.values[k] < prev - alpha * alpha);
                prop_assert_eq!(next, gamma * alpha);
            } else {
                prop_assert_eq!(res.values[k], prev);
                prop_assert_eq!(next, beta * alpha);
            }
            prev = res.values[k];
        }
    }
}
