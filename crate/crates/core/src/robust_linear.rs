//! Regression of smoothed responses on smoothed covariates.
//!
//! Solves the Mallows-type estimating equation
//! `Σ ψ₁((r_i − η_iᵀβ)/s) w₁(‖η_i‖) η_i = 0` by iteratively reweighted least
//! squares, starting from ordinary least squares, with the scale `s` fixed at
//! the normalized MAD of least-absolute-deviation residuals.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::linalg::{norm, weighted_normal_equations, Cholesky, Matrix};
use crate::scalar::Scalar;
use crate::score::ScoreFunction;
use crate::smoother::MAD_NORMAL_CONSTANT;

/// Design downweighting `w₁(‖η‖)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum WeightFunction<T> {
    /// `w₁ ≡ 1`: plain M-estimation.
    #[default]
    One,
    /// `w₁(u) = min(1, c/u)`.
    Huber { c: T },
    /// Huber weight with `c` set to the given quantile of the observed `‖η_i‖`.
    HuberQuantile { q: T },
}

impl<T: Scalar> WeightFunction<T> {
    /// Mallows option with the cutoff at the 95th percentile of the design norms.
    pub fn mallows() -> Self {
        WeightFunction::HuberQuantile { q: T::cst(0.95) }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightFunction::One => Ok(()),
            WeightFunction::Huber { c } if c > T::zero() && c.is_finite() => Ok(()),
            WeightFunction::HuberQuantile { q } if q > T::zero() && q <= T::one() => Ok(()),
            other => Err(PlmError::Config(format!("invalid weight function {other:?}"))),
        }
    }

    /// Replace a quantile rule by its concrete cutoff for the given norms.
    pub fn resolve(&self, norms: &[T]) -> Self {
        match *self {
            WeightFunction::HuberQuantile { q } => {
                let mut sorted: Vec<T> = norms.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
                let c = empirical_quantile(&sorted, q);
                if c > T::zero() {
                    WeightFunction::Huber { c }
                } else {
                    WeightFunction::One
                }
            }
            other => other,
        }
    }

    /// Evaluate a resolved weight. Quantile rules must be resolved first.
    #[inline]
    pub fn eval(&self, u: T) -> T {
        match *self {
            WeightFunction::One => T::one(),
            WeightFunction::Huber { c } => {
                if u <= c {
                    T::one()
                } else {
                    c / u
                }
            }
            WeightFunction::HuberQuantile { .. } => {
                panic!("HuberQuantile weight evaluated before resolve()")
            }
        }
    }

    /// `sup_u w₁(u)·u`, the bound on design influence.
    pub fn sup_influence(&self) -> T {
        match *self {
            WeightFunction::Huber { c } => c,
            _ => T::infinity(),
        }
    }
}

/// Type-7 style empirical quantile of sorted data (`⌈q n⌉`-th order statistic).
fn empirical_quantile<T: Scalar>(sorted: &[T], q: T) -> T {
    if sorted.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(sorted.len()).unwrap();
    let k = (q * n).ceil().to_usize().unwrap_or(1).clamp(1, sorted.len());
    sorted[k - 1]
}

/// How the residual scale `s_n` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ScaleEstimate<T> {
    /// Normalized MAD of the least-absolute-deviation residuals, held fixed during IRLS.
    MadOfLadResiduals,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmConfig<T> {
    pub score: ScoreFunction<T>,
    pub weight: WeightFunction<T>,
    pub scale: ScaleEstimate<T>,
    /// Relative change in β below which IRLS stops.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for GmConfig<T> {
    fn default() -> Self {
        Self {
            score: ScoreFunction::huber(),
            weight: WeightFunction::One,
            scale: ScaleEstimate::MadOfLadResiduals,
            tolerance: T::cst(1e-8),
            max_iterations: 100,
        }
    }
}

impl<T: Scalar> GmConfig<T> {
    pub fn with_score(mut self, score: ScoreFunction<T>) -> Self {
        self.score = score;
        self
    }

    pub fn with_weight(mut self, weight: WeightFunction<T>) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_scale(mut self, scale: ScaleEstimate<T>) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.score.validate()?;
        self.weight.validate()?;
        if let ScaleEstimate::Fixed(s) = self.scale {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(PlmError::Config(format!("fixed scale must be positive, got {s}")));
            }
        }
        if !(self.tolerance > T::zero()) || self.max_iterations == 0 {
            return Err(PlmError::Config("IRLS tolerance and iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult<T> {
    pub beta: Vec<T>,
    /// Residual scale. For least squares this is `sqrt(RSS/(n−p))`, possibly zero.
    pub scale: T,
    pub residuals: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    /// The design weight actually applied (quantile rules resolved).
    pub weight: WeightFunction<T>,
    pub score: ScoreFunction<T>,
}

/// `1.4826 · median |res_i − median(res)|`.
pub fn residual_scale<T: Scalar>(residuals: &[T]) -> Result<T> {
    if residuals.len() < 2 {
        return Err(PlmError::Dimension(format!(
            "need at least 2 residuals for a scale estimate, got {}",
            residuals.len()
        )));
    }
    let med = median(residuals);
    let dev: Vec<T> = residuals.iter().map(|r| (*r - med).abs()).collect();
    let s = T::cst(MAD_NORMAL_CONSTANT) * median(&dev);
    if !(s > T::zero()) {
        return Err(PlmError::DegenerateScale("more than half of the residuals coincide".into()));
    }
    Ok(s)
}

/// Ordinary (unweighted) median, averaging the two middle values for even n.
pub fn median<T: Scalar>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::cst(0.5)
    }
}

fn check_design<T: Scalar>(response: &[T], design: &Matrix<T>) -> Result<()> {
    if response.len() != design.nrows() {
        return Err(PlmError::Dimension(format!(
            "{} responses for {} design rows",
            response.len(),
            design.nrows()
        )));
    }
    if design.ncols() == 0 {
        return Err(PlmError::Dimension("design has no columns".into()));
    }
    if design.nrows() <= design.ncols() {
        return Err(PlmError::Dimension(format!(
            "need n > p, got n = {}, p = {}",
            design.nrows(),
            design.ncols()
        )));
    }
    Ok(())
}

fn rank_tolerance<T: Scalar>(n: usize) -> T {
    T::epsilon() * T::from_usize(n.max(1)).unwrap() * T::cst(16.0)
}

pub fn residuals_of<T: Scalar>(response: &[T], design: &Matrix<T>, beta: &[T]) -> Vec<T> {
    response.iter().enumerate().map(|(i, r)| *r - crate::linalg::dot(design.row(i), beta)).collect()
}

/// Least-squares fit via the Cholesky factor of the normal equations.
pub fn ols_estimate<T: Scalar>(response: &[T], design: &Matrix<T>) -> Result<RegressionResult<T>> {
    check_design(response, design)?;
    let (gram, rhs) = weighted_normal_equations(design, response, None);
    let chol = Cholesky::factor(&gram, rank_tolerance(design.nrows()))?;
    let beta = chol.solve(&rhs);
    let residuals = residuals_of(response, design, &beta);
    let dof = T::from_usize(design.nrows() - design.ncols()).unwrap();
    let scale = (residuals.iter().map(|r| *r * *r).sum::<T>() / dof).sqrt();
    Ok(RegressionResult {
        beta,
        scale,
        residuals,
        converged: true,
        iterations: 0,
        weight: WeightFunction::One,
        score: ScoreFunction::Identity,
    })
}

/// Value of `(1/n) Σ ψ₁(res_i/s) w₁(‖η_i‖) η_i`.
pub fn estimating_equation<T: Scalar>(
    response: &[T],
    design: &Matrix<T>,
    beta: &[T],
    scale: T,
    score: &ScoreFunction<T>,
    weight: &WeightFunction<T>,
) -> Vec<T> {
    let p = design.ncols();
    let mut g = vec![T::zero(); p];
    for (i, res) in residuals_of(response, design, beta).into_iter().enumerate() {
        let row = design.row(i);
        let f = score.psi(res / scale) * weight.eval(norm(row));
        for j in 0..p {
            g[j] += f * row[j];
        }
    }
    let n = T::from_usize(design.nrows()).unwrap();
    g.iter_mut().for_each(|x| *x /= n);
    g
}

/// Residuals of an approximate L1 fit, by reweighting with `1/|r|` from `beta`.
///
/// Used only for the scale, which should not be inflated by a single gross
/// outlier the way least-squares residuals are.
fn lad_residuals<T: Scalar>(response: &[T], design: &Matrix<T>, beta: &[T]) -> Result<Vec<T>> {
    let mut beta = beta.to_vec();
    let mut residuals = residuals_of(response, design, &beta);
    let rank_tol = rank_tolerance(design.nrows());
    for _ in 0..LAD_ITERATIONS {
        let floor = residuals.iter().fold(T::zero(), |m, r| m.max(r.abs())) * T::cst(1e-10);
        if !(floor > T::zero()) {
            break;
        }
        let w: Vec<T> = residuals.iter().map(|r| T::one() / r.abs().max(floor)).collect();
        let (gram, rhs) = weighted_normal_equations(design, response, Some(&w));
        let Ok(chol) = Cholesky::factor(&gram, rank_tol) else {
            break;
        };
        let next = chol.solve(&rhs);
        let diff: Vec<T> = next.iter().zip(&beta).map(|(a, b)| *a - *b).collect();
        let change = norm(&diff) / norm(&next).max(T::one());
        beta = next;
        residuals = residuals_of(response, design, &beta);
        if change < T::cst(1e-10) {
            break;
        }
    }
    Ok(residuals)
}

const LAD_ITERATIONS: usize = 200;

/// GM-estimate of β by IRLS.
pub fn gm_estimate<T: Scalar>(
    response: &[T],
    design: &Matrix<T>,
    config: &GmConfig<T>,
) -> Result<RegressionResult<T>> {
    config.validate()?;
    let start = ols_estimate(response, design)?;
    let norms: Vec<T> = (0..design.nrows()).map(|i| norm(design.row(i))).collect();
    let weight = config.weight.resolve(&norms);
    let design_weights: Vec<T> = norms.iter().map(|u| weight.eval(*u)).collect();

    // exact fit: zero residuals solve the equation for any ψ₁, w₁
    let response_size = response.iter().fold(T::zero(), |m, r| m.max(r.abs()));
    let residual_size = start.residuals.iter().fold(T::zero(), |m, r| m.max(r.abs()));
    if residual_size <= response_size * T::epsilon() * T::cst(64.0) {
        return Ok(RegressionResult { converged: true, weight, score: config.score, ..start });
    }

    let scale = match config.scale {
        ScaleEstimate::Fixed(s) => s,
        ScaleEstimate::MadOfLadResiduals => {
            let lad = lad_residuals(response, design, &start.beta)?;
            residual_scale(&lad).or_else(|_| residual_scale(&start.residuals))?
        }
    };

    let mut beta = start.beta;
    let mut residuals = start.residuals;
    let rank_tol = rank_tolerance(design.nrows());
    let mut last_change = T::infinity();
    for iter in 1..=config.max_iterations {
        let w: Vec<T> = residuals
            .iter()
            .zip(&design_weights)
            .map(|(r, dw)| config.score.irls_weight(*r / scale) * *dw)
            .collect();
        let (gram, rhs) = weighted_normal_equations(design, response, Some(&w));
        let next = Cholesky::factor(&gram, rank_tol)
            .map_err(|_| {
                PlmError::SingularDesign(format!("weighted design became singular at IRLS iteration {iter}"))
            })?
            .solve(&rhs);
        let diff: Vec<T> = next.iter().zip(&beta).map(|(a, b)| *a - *b).collect();
        last_change = norm(&diff) / norm(&next).max(T::one());
        beta = next;
        residuals = residuals_of(response, design, &beta);
        if last_change < config.tolerance {
            return Ok(RegressionResult {
                beta,
                scale,
                residuals,
                converged: true,
                iterations: iter,
                weight,
                score: config.score,
            });
        }
    }
    let eq = estimating_equation(response, design, &beta, scale, &config.score, &weight);
    Err(PlmError::Convergence {
        iterations: config.max_iterations,
        last: last_change.to_f64_lossy(),
        residual: norm(&eq).to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn scale_by_hand() {
        let s = residual_scale(&[-1.0f64, 0.0, 1.0]).unwrap();
        assert!((s - 1.4826).abs() < 1e-15);
        assert!(matches!(residual_scale(&[2.0, 2.0, 2.0]), Err(PlmError::DegenerateScale(_))));
        assert!(residual_scale(&[1.0]).is_err());
    }

    #[test]
    fn exact_linear_data() {
        let x = design(&[&[1.0, 0.5], &[2.0, -1.0], &[0.3, 0.2], &[-1.0, 4.0]]);
        let beta0 = [1.5, -0.25];
        let r: Vec<f64> = (0..4).map(|i| crate::linalg::dot(x.row(i), &beta0)).collect();
        for cfg in [GmConfig::default(), GmConfig::default().with_weight(WeightFunction::mallows())] {
            let fit = gm_estimate(&r, &x, &cfg).unwrap();
            assert!((fit.beta[0] - 1.5).abs() < 1e-12 && (fit.beta[1] + 0.25).abs() < 1e-12);
            assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
        }
    }

    #[test]
    fn location_case_matches_closed_form() {
        let x = design(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let r = [0.0, 0.0, 0.0, 10.0];
        let cfg = GmConfig::default().with_scale(ScaleEstimate::Fixed(1.0));
        let fit = gm_estimate(&r, &x, &cfg).unwrap();
        assert!((fit.beta[0] - 1.345 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn orthogonal_response_gives_zero() {
        let x = design(&[&[1.0], &[-1.0], &[1.0], &[-1.0]]);
        let fit = ols_estimate(&[1.0, 1.0, -1.0, -1.0], &x).unwrap();
        assert!(fit.beta[0].abs() < 1e-15);
    }

    #[test]
    fn singular_design() {
        let x = design(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert!(matches!(ols_estimate(&[1.0, 2.0, 3.0], &x), Err(PlmError::SingularDesign(_))));
        assert!(matches!(
            gm_estimate(&[1.0, 2.0, 3.0], &x, &GmConfig::default()),
            Err(PlmError::SingularDesign(_))
        ));
    }

    #[test]
    fn needs_more_rows_than_columns() {
        let x = design(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(ols_estimate(&[1.0, 2.0], &x), Err(PlmError::Dimension(_))));
    }

    #[test]
    fn mallows_weight_resolves_to_quantile() {
        let norms: Vec<f64> = (1..=20).map(f64::from).collect();
        match WeightFunction::<f64>::mallows().resolve(&norms) {
            WeightFunction::Huber { c } => assert_eq!(c, 19.0),
            other => panic!("unexpected {other:?}"),
        }
        let w = WeightFunction::Huber { c: 2.0 };
        assert_eq!(w.eval(1.0), 1.0);
        assert_eq!(w.eval(4.0), 0.5);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let x = design(&[&[1.0], &[2.0], &[3.0], &[4.0], &[5.0]]);
        let r = [1.0, 2.5, 2.0, 4.5, 30.0];
        let cfg = GmConfig { max_iterations: 1, tolerance: 1e-300, ..GmConfig::default() };
        assert!(matches!(gm_estimate(&r, &x, &cfg), Err(PlmError::Convergence { .. })));
    }
}
