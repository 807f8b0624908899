mod common;

use common::{random_dataset, rng};
use manifold_plm::inference::covariance_from_parts;
use manifold_plm::*;
use rand::Rng;

const PINNED_V: f64 = 0.223_356_597_374_118_5;

fn one_by_one(se: f64) -> AsymptoticCovariance<f64> {
    AsymptoticCovariance {
        a_hat: Matrix::identity(1),
        sigma_hat: Matrix::identity(1),
        v_hat: Matrix::from_rows(&[vec![se * se]]).unwrap(),
        standard_errors: vec![se],
        scale: 1.0,
        n: 1,
    }
}

#[test]
fn interval_and_test_by_hand() {
    let cov = one_by_one(0.1);
    let ci = confidence_interval(&[2.0], &cov, 0.95).unwrap();
    assert!((ci[0].lower - 1.8040).abs() < 1e-4 && (ci[0].upper - 2.1960).abs() < 1e-4);
    let t = wald_test(&[2.0], &cov, &[1.8]).unwrap();
    assert!((t.statistic - 2.0).abs() < 1e-12);
    assert!((t.p_value - 0.0455).abs() < 1e-4);
    let t = wald_test(&[2.0], &cov, &[2.0]).unwrap();
    assert_eq!(t.statistic, 0.0);
    assert!((t.p_value - 1.0).abs() < 1e-15);
    let zero = confidence_interval(&[2.0], &one_by_one(0.0), 0.9).unwrap();
    assert_eq!((zero[0].lower, zero[0].upper), (2.0, 2.0));
    assert!(wald_test(&[2.0], &one_by_one(0.0), &[1.0]).is_err());
}

#[test]
fn duality_on_random_instances() {
    let mut r = rng(61);
    for _ in 0..100 {
        let beta = r.random_range(-100.0..100.0);
        let se = r.random_range(1e-3..10.0);
        let cov = one_by_one(se);
        for _ in 0..10 {
            let level = r.random_range(0.5..0.9999);
            let null = beta + r.random_range(-5.0..5.0) * se;
            let ci = confidence_interval(&[beta], &cov, level).unwrap();
            let test = wald_test(&[beta], &cov, &[null]).unwrap();
            assert_eq!(ci[0].contains(null), !test.rejects(1.0 - level));
            for edge in [ci[0].lower, ci[0].upper] {
                let t = wald_test(&[beta], &cov, &[edge]).unwrap();
                assert!(ci[0].contains(edge) && !t.rejects(1.0 - level));
            }
        }
    }
}

#[test]
fn hand_evaluated_sandwich() {
    let eta = Matrix::column_vector(&[1.0; 6]);
    let s = 0.7;
    let residuals: Vec<f64> = (0..6).map(|i| if i % 2 == 0 { s } else { -s }).collect();
    let cov =
        covariance_from_parts(&eta, &residuals, s, &ScoreFunction::huber(), &WeightFunction::One).unwrap();
    assert!((cov.a_hat[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((cov.sigma_hat[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((cov.v_hat[(0, 0)] - s * s / 6.0).abs() < 1e-12);
}

#[test]
fn identity_score_covariance_matches_the_ols_formula() {
    for seed in 0..10 {
        let ds = random_dataset(600 + seed, 90, 2);
        let f = fit(&ds, 0.9, FitMode::Classical, &PlmConfig::default()).unwrap();
        let cov = estimate_covariance(&f).unwrap();
        let n = ds.len() as f64;
        let eta = &f.eta_hat;
        let mut gram = Matrix::zeros(2, 2);
        for i in 0..ds.len() {
            for a in 0..2 {
                for b in 0..2 {
                    gram.row_mut(a)[b] += eta.row(i)[a] * eta.row(i)[b] / n;
                }
            }
        }
        let sigma2: f64 = f.regression.residuals.iter().map(|e| e * e).sum::<f64>() / n;
        let expected = gram.inverse().unwrap().scale(sigma2 / n);
        for a in 0..2 {
            for b in 0..2 {
                assert!((cov.v_hat[(a, b)] - expected[(a, b)]).abs() < 1e-8 * expected[(a, a)].abs());
            }
        }
    }
}

#[test]
fn covariance_is_symmetric_and_psd() {
    for seed in 0..10 {
        let ds = random_dataset(700 + seed, 100, 2);
        for w in [WeightFunction::One, WeightFunction::mallows()] {
            let mut cfg = PlmConfig::default();
            cfg.gm = cfg.gm.with_weight(w);
            let f = fit(&ds, 0.9, FitMode::Robust, &cfg).unwrap();
            let cov = estimate_covariance(&f).unwrap();
            assert!(cov.a_hat.max_asymmetry() < 1e-10);
            assert!(cov.sigma_hat.max_asymmetry() < 1e-10);
            assert!(cov.v_hat.symmetric_eigenvalues().iter().all(|l| *l > -1e-10));
        }
    }
}

#[test]
fn seeded_covariance_is_pinned() {
    let mut r = replication_rng(62, 0);
    let sample = generate_sample::<f64, _>(200, Contamination::C0, 0.05, &mut r).unwrap();
    let f = fit(&sample.dataset, 0.8, FitMode::Robust, &PlmConfig::default()).unwrap();
    let cov = estimate_covariance(&f).unwrap();
    println!("v_hat {:?}", cov.v_hat[(0, 0)]);
    assert!((cov.v_hat[(0, 0)] - PINNED_V).abs() < 1e-10 * PINNED_V);
}

#[test]
fn singular_a_is_reported() {
    let eta = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![-1.0, -2.0]]).unwrap();
    let res = [0.1, -0.2, 0.3, -0.1];
    let err = covariance_from_parts(&eta, &res, 1.0, &ScoreFunction::huber(), &WeightFunction::One);
    assert!(matches!(err, Err(PlmError::SingularA { .. })));
}
