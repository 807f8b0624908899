#![allow(dead_code)]

use std::f64::consts::TAU;

use manifold_plm::{Manifold, ManifoldPoint, Matrix, PlmDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn cylinder_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<ManifoldPoint<f64>> {
    (0..n)
        .map(|_| ManifoldPoint::cylinder(rng.random_range(0.0..TAU), rng.random_range(0.02..0.98)))
        .collect()
}

/// Cylinder dataset with `p` covariates, `x_j = sin((j+1) s) + noise`, `y = xᵀβ + g(t) + N(0, 1)`.
pub fn random_dataset(seed: u64, n: usize, p: usize) -> PlmDataset<f64> {
    let mut rng = rng(seed);
    let t = cylinder_points(&mut rng, n);
    let beta: Vec<f64> = (0..p).map(|j| 1.0 + j as f64).collect();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for (i, ti) in t.iter().enumerate() {
        let c = &ti.coords;
        let mut lin = 0.0;
        for (j, b) in beta.iter().enumerate() {
            let v = ((j + 1) as f64 * c[2]).sin() + 0.4 * normal(&mut rng);
            x.row_mut(i)[j] = v;
            lin += b * v;
        }
        let g = (c[0] + c[1] - c[2]).powi(2);
        y.push(lin + g + normal(&mut rng));
    }
    PlmDataset::new(y, x, t, Manifold::unit_cylinder()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Prints the verdict line and returns it for assertion.
pub fn verdict(label: &str, ok: bool, detail: &str) -> bool {
    println!("{label}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    ok
}
