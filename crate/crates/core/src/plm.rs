//! Three-step estimation of `y = xᵀβ + g(t) + ε` with `t` on a manifold.
//!
//! 1. Smooth `y` and every column of `x` over `t` at the sample points.
//! 2. Regress the smoothed responses `r̂ = y − φ̂₀(t)` on `η̂ = x − φ̂(t)`.
//! 3. Set `ĝ(t) = φ̂₀(t) − β̂ᵀφ̂(t)`.
//!
//! Robust mode uses local M-smoothers and a GM regression; classical mode uses
//! kernel means and least squares.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::linalg::{dot, Matrix};
use crate::manifold::{DistanceMatrix, Manifold, ManifoldPoint};
use crate::robust_linear::{gm_estimate, ols_estimate, GmConfig, RegressionResult, WeightFunction};
use crate::scalar::Scalar;
use crate::score::ScoreFunction;
use crate::smoother::{smooth_with_weights, weights_from_distances, Kernel, SmootherConfig};

/// Aligned sample `(y_i, x_i, t_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlmDataset<T> {
    pub y: Vec<T>,
    pub x: Matrix<T>,
    pub t: Vec<ManifoldPoint<T>>,
    pub manifold: Manifold<T>,
}

impl<T: Scalar> PlmDataset<T> {
    pub fn new(y: Vec<T>, x: Matrix<T>, t: Vec<ManifoldPoint<T>>, manifold: Manifold<T>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || t.len() != n {
            return Err(PlmError::Dimension(format!(
                "misaligned dataset: {} responses, {} covariate rows, {} manifold points",
                n,
                x.nrows(),
                t.len()
            )));
        }
        if n <= x.ncols() + 1 {
            return Err(PlmError::Dimension(format!("need n > p + 1, got n = {n}, p = {}", x.ncols())));
        }
        for (i, p) in t.iter().enumerate() {
            manifold.validate(p).map_err(|e| PlmError::InvalidPoint(format!("row {i}: {e}")))?;
        }
        if y.iter().chain(x.as_slice()).any(|v| !v.is_finite()) {
            return Err(PlmError::Config("non-finite response or covariate".into()));
        }
        Ok(Self { y, x, t, manifold })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of linear covariates.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn distances(&self) -> DistanceMatrix<T> {
        DistanceMatrix::new(&self.manifold, &self.t)
    }

    /// Reorder rows by `perm` (row `k` of the result is row `perm[k]` of `self`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.p();
        let mut x = Matrix::zeros(self.len(), p);
        for (k, &i) in perm.iter().enumerate() {
            x.row_mut(k).copy_from_slice(self.x.row(i));
        }
        Self {
            y: perm.iter().map(|&i| self.y[i]).collect(),
            x,
            t: perm.iter().map(|&i| self.t[i].clone()).collect(),
            manifold: self.manifold.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Robust,
    Classical,
}

impl FitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::Robust => "robust",
            FitMode::Classical => "classical",
        }
    }
}

impl std::fmt::Display for FitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimator settings. The bandwidth is passed separately.
#[derive(Debug, Clone)]
pub struct PlmConfig<T> {
    pub kernel: Kernel<T>,
    /// Step 1 settings for robust mode.
    pub smoother: SmootherConfig<T>,
    /// Step 2 settings for robust mode.
    pub gm: GmConfig<T>,
}

impl<T: Scalar> Default for PlmConfig<T> {
    fn default() -> Self {
        Self { kernel: Kernel::Quadratic, smoother: SmootherConfig::default(), gm: GmConfig::default() }
    }
}

impl<T: Scalar> PlmConfig<T> {
    /// Identity scores everywhere and `w₁ ≡ 1`: the robust pipeline then reduces to the classical one.
    pub fn identity_scores() -> Self {
        Self {
            kernel: Kernel::Quadratic,
            smoother: SmootherConfig::classical(),
            gm: GmConfig::default().with_score(ScoreFunction::Identity).with_weight(WeightFunction::One),
        }
    }

    /// Smoother settings actually used in `mode`.
    pub fn smoother_for(&self, mode: FitMode) -> SmootherConfig<T> {
        match mode {
            FitMode::Robust => self.smoother,
            FitMode::Classical => SmootherConfig { score: ScoreFunction::Identity, ..self.smoother },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        self.gm.validate()
    }
}

/// A row whose local scale was zero, so its smoothed value is a local median.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DegenerateWindow {
    pub index: usize,
    /// 0 for the response, `j` for covariate column `j - 1`.
    pub column: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitFlags {
    pub degenerate_windows: Vec<DegenerateWindow>,
    /// Step 2 design was singular but the responses were identically zero; β̂ set to 0.
    pub degenerate_design: bool,
}

impl FitFlags {
    pub fn is_clean(&self) -> bool {
        self.degenerate_windows.is_empty() && !self.degenerate_design
    }

    pub fn describe(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.degenerate_windows.is_empty() {
            out.push(format!("degenerate_local_scale:{}", self.degenerate_windows.len()));
        }
        if self.degenerate_design {
            out.push("degenerate_design".to_string());
        }
        out
    }
}

/// Smoothed columns at the sample points.
#[derive(Debug, Clone)]
pub(crate) struct Smoothed<T> {
    pub phi0: Vec<T>,
    pub phi: Matrix<T>,
    pub degenerate: Vec<DegenerateWindow>,
}

/// Smooth `y` and each column of `x` with every row of weights (one per target).
pub(crate) fn smooth_columns<T: Scalar>(
    ds: &PlmDataset<T>,
    weights: &[Vec<T>],
    config: &SmootherConfig<T>,
) -> Result<Smoothed<T>> {
    let p = ds.p();
    let columns: Vec<Vec<T>> = (0..p).map(|j| ds.x.column(j)).collect();
    let rows: Vec<Result<Vec<(T, bool)>>> = weights
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            std::iter::once(&ds.y)
                .chain(columns.iter())
                .map(|values| {
                    smooth_with_weights(w, values, config)
                        .map(|e| (e.value, e.degenerate_scale))
                        .map_err(|e| e.at_query(i))
                })
                .collect()
        })
        .collect();
    let n = weights.len();
    let mut phi0 = Vec::with_capacity(n);
    let mut phi = Matrix::zeros(n, p);
    let mut degenerate = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        for (col, (v, flag)) in row?.into_iter().enumerate() {
            if col == 0 {
                phi0.push(v);
            } else {
                phi[(i, col - 1)] = v;
            }
            if flag {
                degenerate.push(DegenerateWindow { index: i, column: col });
            }
        }
    }
    Ok(Smoothed { phi0, phi, degenerate })
}

/// Kernel weights around every sample point, optionally leaving that point out.
pub(crate) fn sample_weights<T: Scalar>(
    ds: &PlmDataset<T>,
    dist: &DistanceMatrix<T>,
    kernel: &Kernel<T>,
    h: T,
    leave_one_out: bool,
) -> Result<Vec<Vec<T>>> {
    let rows: Vec<Result<Vec<T>>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let exclude = leave_one_out.then_some(i);
            weights_from_distances(&ds.manifold, kernel, h, dist.row(i), exclude)
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    let mut empty = Vec::new();
    let mut min_h = T::zero();
    for (i, r) in rows.into_iter().enumerate() {
        match r {
            Ok(w) => out.push(w),
            Err(PlmError::EmptyWindow { nearest, .. }) => {
                empty.push(i);
                min_h = min_h.max(T::cst(nearest));
            }
            Err(e) => return Err(e),
        }
    }
    if !empty.is_empty() {
        return Err(PlmError::EmptyWindows { indices: empty, min_feasible_h: min_h.to_f64_lossy() });
    }
    Ok(out)
}

/// Step 2 in either mode.
///
/// A singular design paired with identically zero responses (e.g. constant
/// `y` with `x ≡ 0`) is solved by `β = 0`, with `degenerate` set.
pub(crate) fn regress<T: Scalar>(
    r_hat: &[T],
    eta_hat: &Matrix<T>,
    mode: FitMode,
    gm: &GmConfig<T>,
    reference: T,
) -> Result<(RegressionResult<T>, bool)> {
    let result = match mode {
        FitMode::Classical => ols_estimate(r_hat, eta_hat),
        FitMode::Robust => gm_estimate(r_hat, eta_hat, gm),
    };
    match result {
        Err(PlmError::SingularDesign(msg)) => {
            let tol = (reference.abs() + T::one()) * T::epsilon() * T::cst(64.0);
            if r_hat.iter().all(|r| r.abs() <= tol) {
                let (score, weight) = match mode {
                    FitMode::Classical => (ScoreFunction::Identity, WeightFunction::One),
                    FitMode::Robust => (gm.score, gm.weight),
                };
                Ok((
                    RegressionResult {
                        beta: vec![T::zero(); eta_hat.ncols()],
                        scale: T::zero(),
                        residuals: r_hat.to_vec(),
                        converged: true,
                        iterations: 0,
                        weight,
                        score,
                    },
                    true,
                ))
            } else {
                Err(PlmError::SingularDesign(msg))
            }
        }
        other => other.map(|r| (r, false)),
    }
}

/// A fitted partially linear model.
#[derive(Debug, Clone)]
pub struct PlmFit<T> {
    pub mode: FitMode,
    pub bandwidth: T,
    pub beta: Vec<T>,
    /// φ̂₀(t_i).
    pub phi0: Vec<T>,
    /// φ̂(t_i), one row per observation.
    pub phi: Matrix<T>,
    /// `y_i − φ̂₀(t_i)`.
    pub r_hat: Vec<T>,
    /// `x_i − φ̂(t_i)`.
    pub eta_hat: Matrix<T>,
    /// ĝ(t_i).
    pub g_hat: Vec<T>,
    /// `ε̂_i = y_i − x_iᵀβ̂ − ĝ(t_i)`.
    pub residuals: Vec<T>,
    pub regression: RegressionResult<T>,
    pub flags: FitFlags,
    kernel: Kernel<T>,
    smoother: SmootherConfig<T>,
    data: Arc<PlmDataset<T>>,
}

impl<T: Scalar> PlmFit<T> {
    pub fn dataset(&self) -> &PlmDataset<T> {
        &self.data
    }

    pub fn smoother(&self) -> &SmootherConfig<T> {
        &self.smoother
    }

    /// Residual scale used in Step 2.
    pub fn scale(&self) -> T {
        self.regression.scale
    }

    /// (φ̂₀(t), φ̂(t)) at an arbitrary point.
    pub fn smooth_at(&self, t: &ManifoldPoint<T>) -> Result<(T, Vec<T>)> {
        let ds = &*self.data;
        ds.manifold.validate(t)?;
        let d: Vec<T> = ds.t.iter().map(|s| ds.manifold.distance_unchecked(t, s)).collect();
        let w = weights_from_distances(&ds.manifold, &self.kernel, self.bandwidth, &d, None)?;
        let phi0 = smooth_with_weights(&w, &ds.y, &self.smoother)?.value;
        let phi = (0..ds.p())
            .map(|j| Ok(smooth_with_weights(&w, &ds.x.column(j), &self.smoother)?.value))
            .collect::<Result<Vec<T>>>()?;
        Ok((phi0, phi))
    }

    /// ĝ(t) = φ̂₀(t) − β̂ᵀφ̂(t).
    pub fn predict_g(&self, t: &ManifoldPoint<T>) -> Result<T> {
        let (phi0, phi) = self.smooth_at(t)?;
        Ok(phi0 - dot(&self.beta, &phi))
    }

    /// xᵀβ̂ + ĝ(t).
    pub fn predict_y(&self, x: &[T], t: &ManifoldPoint<T>) -> Result<T> {
        if x.len() != self.beta.len() {
            return Err(PlmError::Dimension(format!(
                "expected {} covariates, got {}",
                self.beta.len(),
                x.len()
            )));
        }
        Ok(dot(x, &self.beta) + self.predict_g(t)?)
    }
}

/// Fit the model at bandwidth `h`.
pub fn fit<T: Scalar>(
    dataset: &PlmDataset<T>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
) -> Result<PlmFit<T>> {
    fit_shared(Arc::new(dataset.clone()), h, mode, config)
}

/// Like [`fit`] but reuses an already shared dataset.
pub fn fit_shared<T: Scalar>(
    dataset: Arc<PlmDataset<T>>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
) -> Result<PlmFit<T>> {
    let dist = dataset.distances();
    fit_with_distances(dataset, &dist, h, mode, config)
}

pub(crate) fn fit_with_distances<T: Scalar>(
    dataset: Arc<PlmDataset<T>>,
    dist: &DistanceMatrix<T>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
) -> Result<PlmFit<T>> {
    let ds = &*dataset;
    ds.manifold.check_bandwidth(h)?;
    config.validate()?;
    let smoother = config.smoother_for(mode);

    let weights = sample_weights(ds, dist, &config.kernel, h, false)?;
    let smoothed = smooth_columns(ds, &weights, &smoother)?;

    let n = ds.len();
    let p = ds.p();
    let r_hat: Vec<T> = ds.y.iter().zip(&smoothed.phi0).map(|(y, f)| *y - *f).collect();
    let mut eta_hat = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            eta_hat[(i, j)] = ds.x[(i, j)] - smoothed.phi[(i, j)];
        }
    }
    let reference = ds.y.iter().fold(T::zero(), |m, y| m.max(y.abs()));
    let (regression, degenerate_design) = regress(&r_hat, &eta_hat, mode, &config.gm, reference)?;
    let beta = regression.beta.clone();

    let g_hat: Vec<T> = (0..n).map(|i| smoothed.phi0[i] - dot(&beta, smoothed.phi.row(i))).collect();
    let residuals: Vec<T> = (0..n).map(|i| ds.y[i] - dot(ds.x.row(i), &beta) - g_hat[i]).collect();

    Ok(PlmFit {
        mode,
        bandwidth: h,
        beta,
        phi0: smoothed.phi0,
        phi: smoothed.phi,
        r_hat,
        eta_hat,
        g_hat,
        residuals,
        regression,
        flags: FitFlags { degenerate_windows: smoothed.degenerate, degenerate_design },
        kernel: config.kernel.clone(),
        smoother,
        data: dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_dataset(y: impl Fn(f64, f64) -> f64, x: impl Fn(f64) -> f64, n: usize) -> PlmDataset<f64> {
        let angles: Vec<f64> = (0..n).map(|i| i as f64 * 2.0 * std::f64::consts::PI / n as f64).collect();
        let xs: Vec<f64> = angles.iter().map(|a| x(*a)).collect();
        let ys: Vec<f64> = angles.iter().zip(&xs).map(|(a, xv)| y(*a, *xv)).collect();
        PlmDataset::new(
            ys,
            Matrix::column_vector(&xs),
            angles.iter().map(|a| ManifoldPoint::circle(*a)).collect(),
            Manifold::Circle,
        )
        .unwrap()
    }

    #[test]
    fn proportional_response_recovers_slope() {
        let ds = circle_dataset(|_, x| 3.0 * x, |a| (3.0 * a).sin() + 0.1 * (7.0 * a).cos(), 60);
        for mode in [FitMode::Robust, FitMode::Classical] {
            let fit = fit(&ds, 0.8, mode, &PlmConfig::default()).unwrap();
            assert!((fit.beta[0] - 3.0).abs() < 1e-8, "{mode}: {}", fit.beta[0]);
            assert!(fit.residuals.iter().all(|e| e.abs() < 1e-8));
        }
    }

    #[test]
    fn constant_response_zero_covariate() {
        let ds = circle_dataset(|_, _| 4.2, |_| 0.0, 30);
        for mode in [FitMode::Robust, FitMode::Classical] {
            let fit = fit(&ds, 1.0, mode, &PlmConfig::default()).unwrap();
            assert!(fit.flags.degenerate_design);
            assert_eq!(fit.beta, vec![0.0]);
            for a in [0.0, 1.3, 4.0] {
                let g = fit.predict_g(&ManifoldPoint::circle(a)).unwrap();
                assert!((g - 4.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn in_sample_consistency() {
        let ds = circle_dataset(
            |a, x| 2.0 * x + a.cos() + 0.3 * (5.0 * a).sin(),
            |a| (2.0 * a).sin() + 0.2 * (11.0 * a).cos(),
            80,
        );
        let fit = fit(&ds, 1.0, FitMode::Robust, &PlmConfig::default()).unwrap();
        for i in 0..ds.len() {
            let g = fit.predict_g(&ds.t[i]).unwrap();
            assert!((g - fit.g_hat[i]).abs() < 1e-12);
            let y = fit.predict_y(ds.x.row(i), &ds.t[i]).unwrap();
            assert!((ds.y[i] - y - fit.residuals[i]).abs() < 1e-12);
            let recomputed = fit.phi0[i] - fit.beta[0] * fit.phi[(i, 0)];
            assert!((recomputed - fit.g_hat[i]).abs() < 1e-12);
        }
        let x0 = fit.predict_y(&[0.0], &ds.t[3]).unwrap();
        assert_eq!(x0, fit.predict_g(&ds.t[3]).unwrap());
    }

    #[test]
    fn empty_window_at_prediction() {
        let ds = PlmDataset::new(
            vec![1.0, 2.0, 1.5, 0.5],
            Matrix::column_vector(&[0.1, 0.2, -0.3, 0.4]),
            [0.0, 0.05, 0.1, 0.15].iter().map(|a| ManifoldPoint::circle(*a)).collect(),
            Manifold::Circle,
        )
        .unwrap();
        let fit = fit(&ds, 0.5, FitMode::Classical, &PlmConfig::default()).unwrap();
        assert!(matches!(fit.predict_g(&ManifoldPoint::circle(2.5)), Err(PlmError::EmptyWindow { .. })));
    }

    #[test]
    fn dataset_validation() {
        let bad = PlmDataset::new(
            vec![1.0, 2.0, 3.0],
            Matrix::column_vector(&[1.0, 2.0, 3.0]),
            vec![ManifoldPoint::circle(0.0), ManifoldPoint::new(vec![2.0, 0.0]), ManifoldPoint::circle(1.0)],
            Manifold::Circle,
        );
        assert!(matches!(bad, Err(PlmError::InvalidPoint(_))));
        let short = PlmDataset::new(
            vec![1.0, 2.0],
            Matrix::column_vector(&[1.0, 2.0]),
            vec![ManifoldPoint::circle(0.0), ManifoldPoint::circle(1.0)],
            Manifold::Circle,
        );
        assert!(matches!(short, Err(PlmError::Dimension(_))));
    }

    #[test]
    fn rejects_bandwidth_past_injectivity_radius() {
        let ds = circle_dataset(|_, x| x, |a| a.sin(), 20);
        assert!(matches!(
            fit(&ds, 3.5, FitMode::Robust, &PlmConfig::default()),
            Err(PlmError::InvalidBandwidth { .. })
        ));
    }
}
