//! Sandwich covariance of β̂, Wald intervals and tests.
//!
//! `V = s² A⁻¹ Σ A⁻¹ / n` with the plug-ins
//! `A = (1/n) Σ ψ₁'(ε̂_i/s) w₁(‖η̂_i‖) η̂_i η̂_iᵀ`,
//! `Σ = [(1/n) Σ ψ₁²(ε̂_i/s)] · [(1/n) Σ w₁²(‖η̂_i‖) η̂_i η̂_iᵀ]`.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{PlmError, Result};
use crate::linalg::{norm, Matrix};
use crate::plm::{FitMode, PlmFit};
use crate::robust_linear::WeightFunction;
use crate::scalar::Scalar;
use crate::score::ScoreFunction;

/// Largest condition number of `A` accepted before it is declared singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticCovariance<T> {
    pub a_hat: Matrix<T>,
    pub sigma_hat: Matrix<T>,
    /// Estimated covariance of β̂ (already divided by n).
    pub v_hat: Matrix<T>,
    pub standard_errors: Vec<T>,
    pub scale: T,
    pub n: usize,
}

/// Covariance from Step 2 ingredients.
pub fn covariance_from_parts<T: Scalar>(
    eta: &Matrix<T>,
    residuals: &[T],
    scale: T,
    score: &ScoreFunction<T>,
    weight: &WeightFunction<T>,
) -> Result<AsymptoticCovariance<T>> {
    let n = eta.nrows();
    let p = eta.ncols();
    if residuals.len() != n {
        return Err(PlmError::Dimension(format!("{} residuals for {} design rows", residuals.len(), n)));
    }
    if n == 0 || p == 0 {
        return Err(PlmError::Dimension("empty design".into()));
    }
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(PlmError::DegenerateScale(format!("residual scale must be positive, got {scale}")));
    }
    let weight = match weight {
        WeightFunction::HuberQuantile { .. } => {
            let norms: Vec<T> = (0..n).map(|i| norm(eta.row(i))).collect();
            weight.resolve(&norms)
        }
        w => *w,
    };
    let nf = T::from_usize(n).unwrap();
    let mut a = Matrix::zeros(p, p);
    let mut b = Matrix::zeros(p, p);
    let mut psi2 = T::zero();
    for (i, &r) in residuals.iter().enumerate().take(n) {
        let row = eta.row(i);
        let u = r / scale;
        let w = weight.eval(norm(row));
        let da = score.psi_prime(u) * w;
        let db = w * w;
        let ps = score.psi(u);
        psi2 += ps * ps;
        for j in 0..p {
            for k in 0..=j {
                let rr = row[j] * row[k];
                a[(j, k)] += da * rr;
                b[(j, k)] += db * rr;
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[(k, j)] = a[(j, k)];
            b[(k, j)] = b[(j, k)];
        }
    }
    let a = a.scale(T::one() / nf);
    let sigma = b.scale(psi2 / (nf * nf));

    let condition = a.symmetric_condition_number();
    if !(condition <= T::cst(MAX_CONDITION)) {
        return Err(PlmError::SingularA { condition: condition.to_f64_lossy() });
    }
    let a_inv = a.inverse().map_err(|_| PlmError::SingularA { condition: f64::INFINITY })?;
    let v = a_inv.matmul(&sigma)?.matmul(&a_inv)?.scale(scale * scale / nf).symmetrize();
    let standard_errors = v.diagonal().iter().map(|d| d.max(T::zero()).sqrt()).collect();
    Ok(AsymptoticCovariance { a_hat: a, sigma_hat: sigma, v_hat: v, standard_errors, scale, n })
}

/// Covariance of a fitted model's β̂.
///
/// Classical fits use the identity score with `s` the root mean squared
/// residual; the scale cancels, leaving `σ̂² (Σ η̂ η̂ᵀ)⁻¹` with `σ̂² = RSS/n`.
pub fn estimate_covariance<T: Scalar>(fit: &PlmFit<T>) -> Result<AsymptoticCovariance<T>> {
    let eta = &fit.eta_hat;
    let residuals = &fit.residuals;
    match fit.mode {
        FitMode::Classical => {
            let n = T::from_usize(residuals.len()).unwrap();
            let rms = (residuals.iter().map(|e| *e * *e).sum::<T>() / n).sqrt();
            covariance_from_parts(eta, residuals, rms, &ScoreFunction::Identity, &WeightFunction::One)
        }
        FitMode::Robust => {
            let score = fit.regression.score;
            let scale = if score.is_identity() && !(fit.regression.scale > T::zero()) {
                let n = T::from_usize(residuals.len()).unwrap();
                (residuals.iter().map(|e| *e * *e).sum::<T>() / n).sqrt()
            } else {
                fit.regression.scale
            };
            covariance_from_parts(eta, residuals, scale, &score, &fit.regression.weight)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval<T> {
    pub estimate: T,
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> ConfidenceInterval<T> {
    pub fn contains(&self, value: T) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Standard normal quantile.
pub fn normal_quantile<T: Scalar>(p: T) -> T {
    let n = Normal::standard();
    T::cst(n.inverse_cdf(p.to_f64_lossy()))
}

/// `z_{(1+level)/2}`, shared by intervals and tests so the two agree exactly.
pub fn two_sided_critical<T: Scalar>(level: T) -> T {
    normal_quantile((T::one() + level) * T::cst(0.5))
}

fn check_level<T: Scalar>(level: T) -> Result<()> {
    if !(level > T::zero() && level < T::one()) {
        return Err(PlmError::Config(format!("level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// `β̂_j ± z_{(1+level)/2} · se_j` for each coefficient.
pub fn confidence_interval<T: Scalar>(
    beta: &[T],
    cov: &AsymptoticCovariance<T>,
    level: T,
) -> Result<Vec<ConfidenceInterval<T>>> {
    check_level(level)?;
    if beta.len() != cov.standard_errors.len() {
        return Err(PlmError::Dimension(format!(
            "{} coefficients for {} standard errors",
            beta.len(),
            cov.standard_errors.len()
        )));
    }
    let z = two_sided_critical(level);
    Ok(beta
        .iter()
        .zip(&cov.standard_errors)
        .map(|(b, se)| ConfidenceInterval { estimate: *b, lower: *b - z * *se, upper: *b + z * *se })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest<T> {
    /// `z` for a single coefficient, the χ² quadratic form otherwise.
    pub statistic: T,
    pub p_value: T,
    pub df: usize,
    /// `(β̂, b0, se)` of a single-coefficient test, kept so that rejection is
    /// decided with the same arithmetic as the interval.
    #[serde(skip)]
    single: Option<(T, T, T)>,
}

impl<T: Scalar> WaldTest<T> {
    /// Two-sided rejection at significance `alpha`.
    ///
    /// For one coefficient this is exactly "the `(1 − α)` interval excludes the null".
    pub fn rejects(&self, alpha: T) -> bool {
        if let Some((estimate, null, se)) = self.single {
            let z = two_sided_critical(T::one() - alpha);
            let ci = ConfidenceInterval { estimate, lower: estimate - z * se, upper: estimate + z * se };
            !ci.contains(null)
        } else {
            let chi = ChiSquared::new(self.df as f64).expect("positive dof");
            self.statistic.to_f64_lossy() > chi.inverse_cdf(1.0 - alpha.to_f64_lossy())
        }
    }
}

/// Wald test of `β = b0`.
pub fn wald_test<T: Scalar>(beta: &[T], cov: &AsymptoticCovariance<T>, null: &[T]) -> Result<WaldTest<T>> {
    if beta.len() != null.len() || beta.len() != cov.standard_errors.len() {
        return Err(PlmError::Dimension("null value must match β dimension".into()));
    }
    if beta.len() == 1 {
        let se = cov.standard_errors[0];
        if !(se > T::zero()) {
            return Err(PlmError::DegenerateTest("zero standard error".into()));
        }
        let z = (beta[0] - null[0]) / se;
        let normal = Normal::standard();
        let p = 2.0 * normal.cdf(-z.abs().to_f64_lossy());
        return Ok(WaldTest {
            statistic: z,
            p_value: T::cst(p),
            df: 1,
            single: Some((beta[0], null[0], se)),
        });
    }
    let diff: Vec<T> = beta.iter().zip(null).map(|(b, n)| *b - *n).collect();
    let solved =
        cov.v_hat.solve(&diff).map_err(|_| PlmError::DegenerateTest("singular covariance".into()))?;
    let q = crate::linalg::dot(&diff, &solved);
    let chi = ChiSquared::new(beta.len() as f64).expect("positive dof");
    Ok(WaldTest {
        statistic: q,
        p_value: T::cst(1.0 - chi.cdf(q.to_f64_lossy())),
        df: beta.len(),
        single: None,
    })
}
