mod common;

use common::{max_abs_diff, random_dataset, rng};
use manifold_plm::{fit, FitMode, Manifold, ManifoldPoint, Matrix, PlmConfig, PlmDataset};
use rand::seq::SliceRandom;

#[test]
fn robust_with_identity_scores_equals_classical() {
    for seed in 0..20 {
        let ds = random_dataset(seed, 70, 2);
        let r = fit(&ds, 0.9, FitMode::Robust, &PlmConfig::identity_scores()).unwrap();
        let c = fit(&ds, 0.9, FitMode::Classical, &PlmConfig::default()).unwrap();
        assert!(max_abs_diff(&r.beta, &c.beta) < 1e-8);
        assert!(max_abs_diff(&r.g_hat, &c.g_hat) < 1e-8);
    }
}

#[test]
fn fit_invariants_hold() {
    let ds = random_dataset(7, 90, 2);
    for mode in [FitMode::Robust, FitMode::Classical] {
        let f = fit(&ds, 0.8, mode, &PlmConfig::default()).unwrap();
        for i in 0..ds.len() {
            let phi = f.phi.row(i);
            let g = f.phi0[i] - phi[0] * f.beta[0] - phi[1] * f.beta[1];
            assert!((g - f.g_hat[i]).abs() < 1e-12);
            let xi = ds.x.row(i);
            let e = ds.y[i] - xi[0] * f.beta[0] - xi[1] * f.beta[1] - f.g_hat[i];
            assert!((e - f.residuals[i]).abs() < 1e-12);
            let pred = f.predict_y(xi, &ds.t[i]).unwrap();
            assert!((ds.y[i] - pred - f.residuals[i]).abs() < 1e-10);
            assert!((f.predict_g(&ds.t[i]).unwrap() - f.g_hat[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn permutation_invariance() {
    let ds = random_dataset(8, 80, 1);
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    perm.shuffle(&mut rng(80));
    let shuffled = ds.permuted(&perm);
    for mode in [FitMode::Robust, FitMode::Classical] {
        let a = fit(&ds, 0.8, mode, &PlmConfig::default()).unwrap();
        let b = fit(&shuffled, 0.8, mode, &PlmConfig::default()).unwrap();
        assert!((a.beta[0] - b.beta[0]).abs() < 1e-10);
        for (k, &i) in perm.iter().enumerate() {
            assert!((a.g_hat[i] - b.g_hat[k]).abs() < 1e-10);
        }
        let q = ManifoldPoint::cylinder(1.0, 0.5);
        assert!((a.predict_g(&q).unwrap() - b.predict_g(&q).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn location_equivariance_in_both_modes() {
    let ds = random_dataset(9, 100, 2);
    let c = -12.5;
    let shifted = PlmDataset::new(
        ds.y.iter().map(|v| v + c).collect(),
        ds.x.clone(),
        ds.t.clone(),
        ds.manifold.clone(),
    )
    .unwrap();
    for mode in [FitMode::Robust, FitMode::Classical] {
        let a = fit(&ds, 0.7, mode, &PlmConfig::default()).unwrap();
        let b = fit(&shifted, 0.7, mode, &PlmConfig::default()).unwrap();
        assert!(max_abs_diff(&a.beta, &b.beta) < 1e-8);
        let g: Vec<f64> = a.g_hat.iter().map(|v| v + c).collect();
        assert!(max_abs_diff(&g, &b.g_hat) < 1e-8);
    }
}

#[test]
fn noiseless_linear_model_is_recovered() {
    let mut r = rng(10);
    let t = common::cylinder_points(&mut r, 60);
    let xs: Vec<f64> = (0..60).map(|_| common::normal(&mut r)).collect();
    let y: Vec<f64> = xs.iter().map(|v| 3.0 * v).collect();
    let ds = PlmDataset::new(y, Matrix::column_vector(&xs), t, Manifold::unit_cylinder()).unwrap();
    for mode in [FitMode::Robust, FitMode::Classical] {
        let f = fit(&ds, 1.2, mode, &PlmConfig::default()).unwrap();
        assert!((f.beta[0] - 3.0).abs() < 1e-10, "{mode}: {}", f.beta[0]);
        assert!(f.residuals.iter().all(|e| e.abs() < 1e-9));
    }
}

#[test]
fn empty_window_names_indices_and_feasible_bandwidth() {
    let t = vec![
        ManifoldPoint::cylinder(0.0, 0.5),
        ManifoldPoint::cylinder(0.05, 0.5),
        ManifoldPoint::cylinder(0.1, 0.5),
        ManifoldPoint::cylinder(3.0, 0.5),
    ];
    let ds = PlmDataset::new(
        vec![1.0, 2.0, 3.0, 4.0],
        Matrix::column_vector(&[0.1, 0.5, 0.2, 0.9]),
        t,
        Manifold::unit_cylinder(),
    )
    .unwrap();
    let f = fit(&ds, 0.5, FitMode::Classical, &PlmConfig::default()).unwrap();
    assert!(f.predict_g(&ManifoldPoint::cylinder(1.5, 0.5)).is_err());
}

#[test]
fn single_precision_pipeline() {
    let ds64 = random_dataset(11, 80, 1);
    let t: Vec<ManifoldPoint<f32>> =
        ds64.t.iter().map(|p| ManifoldPoint::new(p.coords.iter().map(|c| *c as f32).collect())).collect();
    let x: Vec<f32> = ds64.x.column(0).iter().map(|v| *v as f32).collect();
    let y: Vec<f32> = ds64.y.iter().map(|v| *v as f32).collect();
    let ds =
        manifold_plm::PlmDataset32::new(y, Matrix::column_vector(&x), t, Manifold::unit_cylinder()).unwrap();
    for mode in [FitMode::Robust, FitMode::Classical] {
        let a = fit(&ds, 0.8f32, mode, &PlmConfig::default()).unwrap();
        let b = fit(&ds64, 0.8, mode, &PlmConfig::default()).unwrap();
        assert!((a.beta[0] as f64 - b.beta[0]).abs() < 1e-3, "{mode}: {} vs {}", a.beta[0], b.beta[0]);
    }
}
