mod common;

use approx::assert_abs_diff_eq;
use markov_dro::markov::{
    doublet_to_chain, estimate_doublet, simulate, weighted_row_divergence, DoubletMatrix, TransitionMatrix,
};
use markov_dro::rng::task_rng;
use markov_dro::solver::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn chain(d: usize, v: &[f64]) -> TransitionMatrix {
    TransitionMatrix::new(DMatrix::from_row_slice(d, d, v)).unwrap()
}

fn loss(v: &[f64]) -> LossVector {
    LossVector::from_slice(v).unwrap()
}

fn cre(r: f64) -> AmbiguitySpec {
    AmbiguitySpec::new(r, AmbiguityKind::ConditionalRelativeEntropy).unwrap()
}

/// Central difference of `psi` along `e_ij - e_i,last`, which keeps rows stochastic.
fn projected_fd(l: &LossVector, p: &DMatrix<f64>, i: usize, j: usize, h: f64) -> f64 {
    let d = p.nrows();
    let shift = |s: f64| {
        let mut q = p.clone();
        q[(i, j)] += s;
        q[(i, d - 1)] -= s;
        psi(l, &TransitionMatrix::new(q).unwrap()).unwrap()
    };
    (shift(h) - shift(-h)) / (2.0 * h)
}

#[test]
fn psi_examples() {
    let mut rng = common::rng(1);
    let p = TransitionMatrix::new(common::random_chain(4, &mut rng)).unwrap();
    assert_abs_diff_eq!(psi(&loss(&[2.5; 4]), &p).unwrap(), 2.5, epsilon = 1e-14);
    assert_abs_diff_eq!(psi(&loss(&[1.0, 0.0]), &chain(2, &[0.7, 0.3, 0.1, 0.9])).unwrap(), 0.25, epsilon = 1e-14);
    for eps in [0.1, 0.3, 0.45] {
        let coin = chain(2, &[1.0 - eps, eps, eps, 1.0 - eps]);
        assert_abs_diff_eq!(psi(&loss(&[1.0, 2.0]), &coin).unwrap(), 1.5, epsilon = 1e-14);
    }
}

#[test]
fn constant_loss_has_zero_gradient() {
    let p = TransitionMatrix::new(common::random_chain(5, &mut common::rng(2))).unwrap();
    let g = grad_psi(&loss(&[3.0; 5]), &p).unwrap();
    assert!(g.abs().max() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = common::rng(3);
    for d in [2, 5, 10] {
        for _ in 0..10 {
            let p = common::random_chain(d, &mut rng);
            let l: Vec<f64> = (0..d).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let l = loss(&l);
            let g = grad_psi(&l, &TransitionMatrix::new(p.clone()).unwrap()).unwrap();
            let mut err = 0.0f64;
            let mut norm = 0.0f64;
            for i in 0..d {
                for j in 0..d - 1 {
                    let exact = g[(i, j)] - g[(i, d - 1)];
                    let fd = projected_fd(&l, &p, i, j, 1e-5);
                    err += (exact - fd).powi(2);
                    norm += exact.powi(2);
                }
                assert_eq!(g[(i, d - 1)], 0.0);
            }
            assert!(err.sqrt() <= 1e-6 * norm.sqrt(), "d={d}: {} vs {}", err.sqrt(), norm.sqrt());
        }
    }
}

#[test]
fn two_state_hessian_determinant() {
    // Psi as a function of (P_11, P_21) with the second column implied.
    let (l1, l2) = (1.7, -0.4);
    let l = loss(&[l1, l2]);
    let f = |x: f64, y: f64| psi(&l, &chain(2, &[x, 1.0 - x, y, 1.0 - y])).unwrap();
    for (x, y) in [(0.3, 0.6), (0.8, 0.1), (0.5, 0.5)] {
        let h = 1e-4;
        let fxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
        let fyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
        let fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
        let det = fxx * fyy - fxy * fxy;
        let expected = -(l1 - l2).powi(2) / (1.0 - x + y).powi(4);
        assert!((det - expected).abs() <= 1e-4 * expected.abs(), "{det} vs {expected}");
    }
}

#[test]
fn line_search_examples() {
    let mut rng = common::rng(4);
    let p = TransitionMatrix::new(common::random_chain(3, &mut rng)).unwrap();
    let l = loss(&[1.0, -1.0, 0.5]);
    let (g, v) = line_search(&l, &p, &p, 1e-8).unwrap();
    assert_eq!(g, 0.0);
    assert_eq!(v, psi(&l, &p).unwrap());
    for _ in 0..20 {
        let s = TransitionMatrix::new(common::random_chain(3, &mut rng)).unwrap();
        let (_, v) = line_search(&l, &p, &s, 1e-8).unwrap();
        assert!(v >= psi(&l, &p).unwrap() - 1e-12);
    }
}

#[test]
fn two_state_segment_matches_dense_scan() {
    let l = loss(&[1.0, 0.0]);
    let mut rng = common::rng(5);
    for _ in 0..10 {
        let p = common::random_chain(2, &mut rng);
        let s = common::random_chain(2, &mut rng);
        let n = 100_000;
        let (mut best_g, mut best_v) = (0.0, f64::NEG_INFINITY);
        for k in 0..=n {
            let g = k as f64 / n as f64;
            let q = &p + (&s - &p) * g;
            let v = common::two_state_mean([1.0, 0.0], q[(0, 1)], q[(1, 0)]);
            if v > best_v {
                best_v = v;
                best_g = g;
            }
        }
        let (g, v) = line_search(&l, &TransitionMatrix::new(p).unwrap(), &TransitionMatrix::new(s).unwrap(), 1e-8).unwrap();
        assert!((g - best_g).abs() <= 1e-4, "{g} vs {best_g}");
        assert!((v - best_v).abs() <= 1e-10);
    }
}

fn coin_doublet(eps: f64) -> DoubletMatrix {
    DoubletMatrix::new(DMatrix::from_row_slice(2, 2, &[(1.0 - eps) / 2.0, eps / 2.0, eps / 2.0, (1.0 - eps) / 2.0]))
        .unwrap()
}

#[test]
fn vanishing_radius_approaches_nominal_at_root_rate() {
    // To first order the excess over the nominal value is
    // sqrt(2 r sum_i Var_{P'_i}(G_i) / alpha_i) with G the gradient.
    let theta = coin_doublet(0.3);
    let l = loss(&[1.0, 0.0]);
    let (pi, p) = doublet_to_chain(&theta).unwrap();
    let g = grad_psi(&l, &p).unwrap();
    let mut spread = 0.0;
    for i in 0..2 {
        let mean: f64 = (0..2).map(|j| p.entries()[(i, j)] * g[(i, j)]).sum();
        let var: f64 = (0..2).map(|j| p.entries()[(i, j)] * (g[(i, j)] - mean).powi(2)).sum();
        spread += var / pi.entries()[i];
    }
    for r in [1e-10, 1e-12] {
        let sol = frank_wolfe_worst_case(&l, &theta, &cre(r), &FwConfig::default()).unwrap();
        let predicted = (2.0 * r * spread).sqrt();
        let excess = sol.value - 0.5;
        assert!((excess - predicted).abs() <= 1e-2 * predicted, "r={r}: {excess} vs {predicted}");
    }
    let tiny = frank_wolfe_worst_case(&l, &theta, &cre(1e-14), &FwConfig::default()).unwrap();
    assert_abs_diff_eq!(tiny.value, 0.5, epsilon = 1e-6);
}

#[test]
fn coin_worst_case_matches_grid() {
    let eps = 0.3;
    let r = 0.05;
    let sol = frank_wolfe_worst_case(&loss(&[1.0, 0.0]), &coin_doublet(eps), &cre(r), &FwConfig::default()).unwrap();
    assert!(sol.converged);
    let center = [1.0 - eps, eps];
    let grid = common::grid_max_2x2(
        1000,
        |a, b| 0.5 * common::kl(&center, &[1.0 - a, a]) + 0.5 * common::kl(&[eps, 1.0 - eps], &[b, 1.0 - b]) <= r,
        |a, b| common::two_state_mean([1.0, 0.0], a, b),
    );
    assert!(sol.value >= grid - 1e-9);
    assert!((sol.value - grid).abs() <= 2e-3, "{} vs {grid}", sol.value);
}

#[test]
fn value_grows_with_radius() {
    let mut rng = common::rng(6);
    let theta = DoubletMatrix::new(common::chain_doublet(&common::random_chain(4, &mut rng))).unwrap();
    let l = loss(&[1.0, -2.0, 0.5, 3.0]);
    let values: Vec<f64> = [0.01, 0.1, 1.0]
        .iter()
        .map(|r| frank_wolfe_worst_case(&l, &theta, &cre(*r), &FwConfig::default()).unwrap().value)
        .collect();
    assert!(values[0] <= values[1] && values[1] <= values[2], "{values:?}");
}

#[test]
fn predictor_handles_unvisited_states() {
    let p = chain(5, &[0.2; 25]);
    let traj = simulate(&p, 0, 5, &mut task_rng(9, &[])).unwrap();
    let raw = estimate_doublet(&traj).unwrap();
    assert!(!raw.is_strictly_positive());
    let sol = predictor(&loss(&[1.0, 2.0, 3.0, 4.0, 5.0]), &raw, &cre(0.1), &FwConfig::default()).unwrap();
    assert!(sol.value.is_finite());
}

#[test]
fn predictor_is_the_solver_on_positive_input() {
    let theta = coin_doublet(0.2);
    let l = loss(&[0.0, 1.0]);
    let a = predictor(&l, &theta, &cre(0.1), &FwConfig::default()).unwrap();
    let b = frank_wolfe_worst_case(&l, &theta, &cre(0.1), &FwConfig::default()).unwrap();
    assert_eq!(a.value, b.value);
}

#[test]
fn rejects_nonpositive_radius() {
    assert!(AmbiguitySpec::new(0.0, AmbiguityKind::ConditionalRelativeEntropy).is_err());
    assert!(AmbiguitySpec::new(-1.0, AmbiguityKind::WassersteinRows).is_err());
}

#[test]
fn halving_the_tolerance_costs_a_bounded_factor() {
    let mut rng = common::rng(8);
    for _ in 0..5 {
        let theta = DoubletMatrix::new(common::chain_doublet(&common::random_chain(6, &mut rng))).unwrap();
        let l: Vec<f64> = (0..6).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let l = loss(&l);
        let run = |eps: f64| {
            let cfg = FwConfig { gap_tol: eps, ..FwConfig::default() };
            frank_wolfe_worst_case(&l, &theta, &cre(0.5), &cfg).unwrap().iterations
        };
        let (coarse, fine) = (run(1e-4), run(5e-5));
        assert!(fine <= 5 * coarse.max(1), "{coarse} -> {fine}");
    }
}

fn arb_instance() -> impl Strategy<Value = (DoubletMatrix, LossVector, f64)> {
    (2usize..6).prop_flat_map(|d| {
        (
            prop::collection::vec(0.05f64..1.0, d * d),
            prop::collection::vec(-2.0f64..2.0, d),
            1e-3f64..2.0,
        )
            .prop_map(move |(p, l, r)| {
                let p = TransitionMatrix::normalize_rows(DMatrix::from_row_slice(d, d, &p)).unwrap();
                let theta = DoubletMatrix::new(common::chain_doublet(p.entries())).unwrap();
                (theta, LossVector::from_slice(&l).unwrap(), r)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn worst_case_contract((theta, l, r) in arb_instance()) {
        let sol = frank_wolfe_worst_case(&l, &theta, &cre(r), &FwConfig::default()).unwrap();
        let (pi, center) = doublet_to_chain(&theta).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.final_gap <= 1e-6 + 1e-10);
        for w in sol.trace.windows(2) {
            prop_assert!(w[1].objective >= w[0].objective);
        }
        for it in &sol.trace {
            prop_assert!(it.gap >= -1e-10);
        }
        prop_assert!(sol.value >= psi(&l, &center).unwrap() - 1e-8);
        let used = weighted_row_divergence(pi.entries(), center.entries(), sol.p_star.entries());
        prop_assert!(used <= r + 1e-8, "divergence {} > {}", used, r);
        for row in sol.p_star.entries().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-10);
        }
        prop_assert!((psi(&l, &sol.p_star).unwrap() - sol.value).abs() <= 1e-10);
    }

    #[test]
    fn every_kind_dominates_the_center((theta, l, r) in arb_instance()) {
        let (_, center) = doublet_to_chain(&theta).unwrap();
        let nominal = psi(&l, &center).unwrap();
        for kind in [AmbiguityKind::ConditionalRelativeEntropy, AmbiguityKind::KlStationary, AmbiguityKind::WassersteinRows] {
            let v = predictor(&l, &theta, &AmbiguitySpec::new(r, kind).unwrap(), &FwConfig::default()).unwrap().value;
            prop_assert!(v >= nominal - 1e-8, "{:?}: {} < {}", kind, v, nominal);
        }
    }
}
