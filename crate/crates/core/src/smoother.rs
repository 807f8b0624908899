//! Kernel smoothing of a response over manifold-valued covariates.
//!
//! Kernel weights are corrected by the volume density of the manifold and
//! normalized to sum to one. On top of them sit the weighted conditional ECDF,
//! the local median and MAD, and the local M-estimator that solves
//! `Σ w_i ψ((v_i − m)/σ) = 0` at each query point.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::scalar::Scalar;
use crate::score::ScoreFunction;

/// Normal-consistency factor for the MAD.
pub const MAD_NORMAL_CONSTANT: f64 = 1.4826;

type KernelFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Kernel profile `K(u)` supported on `[0, 1]`.
#[derive(Clone, Default)]
pub enum Kernel<T> {
    /// `K(u) = (15/16)(1 − u²)²` for `|u| < 1`.
    #[default]
    Quadratic,
    /// User-supplied profile. Values outside `[0, 1)` are treated as zero.
    Custom { name: String, eval: KernelFn<T> },
}

impl<T> fmt::Debug for Kernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Quadratic => write!(f, "Quadratic"),
            Kernel::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl<T: Scalar> Kernel<T> {
    pub fn custom(name: impl Into<String>, eval: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Kernel::Custom { name: name.into(), eval: Arc::new(eval) }
    }

    #[inline]
    pub fn eval(&self, u: T) -> T {
        if !(u.abs() < T::one()) {
            return T::zero();
        }
        match self {
            Kernel::Quadratic => {
                let a = T::one() - u * u;
                T::cst(15.0 / 16.0) * a * a
            }
            Kernel::Custom { eval, .. } => eval(u).max(T::zero()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Kernel::Quadratic => "quadratic",
            Kernel::Custom { name, .. } => name,
        }
    }
}

/// Settings of the local estimator, independent of the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmootherConfig<T> {
    pub score: ScoreFunction<T>,
    pub mad_consistency_constant: T,
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for SmootherConfig<T> {
    fn default() -> Self {
        Self {
            score: ScoreFunction::huber(),
            mad_consistency_constant: T::cst(MAD_NORMAL_CONSTANT),
            tolerance: T::cst(1e-10),
            max_iterations: 200,
        }
    }
}

impl<T: Scalar> SmootherConfig<T> {
    /// Weighted-mean smoother.
    pub fn classical() -> Self {
        Self { score: ScoreFunction::Identity, ..Self::default() }
    }

    pub fn with_score(mut self, score: ScoreFunction<T>) -> Self {
        self.score = score;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.score.validate()?;
        if !(self.tolerance > T::zero()) {
            return Err(PlmError::Config("solver tolerance must be positive".into()));
        }
        if !(self.mad_consistency_constant > T::zero()) {
            return Err(PlmError::Config("MAD constant must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(PlmError::Config("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bandwidth plus local estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalFitConfig<T> {
    pub bandwidth: T,
    pub smoother: SmootherConfig<T>,
}

impl<T: Scalar> LocalFitConfig<T> {
    pub fn new(bandwidth: T, smoother: SmootherConfig<T>) -> Self {
        Self { bandwidth, smoother }
    }

    pub fn validate(&self, manifold: &Manifold<T>) -> Result<()> {
        manifold.check_bandwidth(self.bandwidth)?;
        self.smoother.validate()
    }
}

/// Normalized kernel weights `θ_t(t_i)⁻¹ K(d(t, t_i)/h) / Σ_k (…)` from precomputed distances.
///
/// `exclude` zeroes one entry, used for leave-one-out fits.
pub fn weights_from_distances<T: Scalar>(
    manifold: &Manifold<T>,
    kernel: &Kernel<T>,
    h: T,
    distances: &[T],
    exclude: Option<usize>,
) -> Result<Vec<T>> {
    let mut weights = Vec::with_capacity(distances.len());
    let mut total = T::zero();
    for (i, &d) in distances.iter().enumerate() {
        let w = if Some(i) == exclude || !(d < h) {
            T::zero()
        } else {
            kernel.eval(d / h) / manifold.volume_density_at_distance(d)?
        };
        total += w;
        weights.push(w);
    }
    if !(total > T::zero()) {
        let nearest = distances
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .fold(T::infinity(), |m, (_, d)| m.min(*d));
        return Err(PlmError::EmptyWindow { nearest: nearest.to_f64_lossy(), h: h.to_f64_lossy() });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// Kernel weights of `sample` around the query `t`.
pub fn pelletier_weights<T: Scalar>(
    manifold: &Manifold<T>,
    kernel: &Kernel<T>,
    h: T,
    t: &ManifoldPoint<T>,
    sample: &[ManifoldPoint<T>],
) -> Result<Vec<T>> {
    manifold.check_bandwidth(h)?;
    if sample.is_empty() {
        return Err(PlmError::Dimension("empty sample".into()));
    }
    manifold.validate(t)?;
    let distances = sample
        .iter()
        .map(|q| {
            manifold.validate(q)?;
            Ok(manifold.distance_unchecked(t, q))
        })
        .collect::<Result<Vec<_>>>()?;
    weights_from_distances(manifold, kernel, h, &distances, None)
}

fn check_lengths<T>(weights: &[T], values: &[T]) -> Result<()> {
    if weights.len() != values.len() {
        return Err(PlmError::Dimension(format!("{} weights for {} values", weights.len(), values.len())));
    }
    if weights.is_empty() {
        return Err(PlmError::Dimension("no observations".into()));
    }
    Ok(())
}

/// Weighted empirical distribution `F(y) = Σ w_i 1{v_i ≤ y}` as a step function.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEcdf<T> {
    support: Vec<T>,
    cumulative: Vec<T>,
    total: T,
}

impl<T: Scalar> WeightedEcdf<T> {
    /// Build from weights and values. Zero-weight atoms are dropped.
    pub fn new(weights: &[T], values: &[T]) -> Result<Self> {
        check_lengths(weights, values)?;
        let mut atoms: Vec<(T, T)> =
            values.iter().zip(weights).filter(|(_, w)| **w > T::zero()).map(|(v, w)| (*v, *w)).collect();
        if atoms.is_empty() {
            return Err(PlmError::Dimension("all weights are zero".into()));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let mut support: Vec<T> = Vec::with_capacity(atoms.len());
        let mut cumulative: Vec<T> = Vec::with_capacity(atoms.len());
        let mut acc = T::zero();
        for (v, w) in atoms {
            acc += w;
            if support.last() == Some(&v) {
                *cumulative.last_mut().unwrap() = acc;
            } else {
                support.push(v);
                cumulative.push(acc);
            }
        }
        Ok(Self { support, cumulative, total: acc })
    }

    /// Right-continuous evaluation, normalized so that `F(+∞) = 1`.
    pub fn eval(&self, y: T) -> T {
        let k = self.support.partition_point(|v| *v <= y);
        if k == 0 {
            T::zero()
        } else {
            self.cumulative[k - 1] / self.total
        }
    }

    /// Jump locations in ascending order.
    pub fn support(&self) -> &[T] {
        &self.support
    }

    /// `inf { y : F(y) ≥ p }`.
    pub fn quantile(&self, p: T) -> T {
        // Allow a few ulps so that e.g. 0.2 + 0.3 still reaches 0.5.
        let slack = self.total * T::epsilon() * T::from_usize(self.support.len() + 1).unwrap();
        let target = p * self.total - slack;
        let k = self.cumulative.partition_point(|c| *c < target);
        self.support[k.min(self.support.len() - 1)]
    }
}

/// Weighted conditional ECDF at a fixed query point.
pub fn conditional_ecdf<T: Scalar>(weights: &[T], values: &[T]) -> Result<WeightedEcdf<T>> {
    WeightedEcdf::new(weights, values)
}

/// Smallest `y` with `F(y) ≥ 1/2`.
pub fn weighted_median<T: Scalar>(weights: &[T], values: &[T]) -> Result<T> {
    Ok(WeightedEcdf::new(weights, values)?.quantile(T::cst(0.5)))
}

/// `constant × weighted median of |v_i − weighted median(v)|`.
///
/// A zero return means more than half of the local mass sits on one value;
/// callers decide how to treat it.
pub fn local_mad<T: Scalar>(weights: &[T], values: &[T], consistency_constant: T) -> Result<T> {
    let center = weighted_median(weights, values)?;
    let deviations: Vec<T> = values.iter().map(|v| (*v - center).abs()).collect();
    Ok(consistency_constant * weighted_median(weights, &deviations)?)
}

fn weighted_mean<T: Scalar>(weights: &[T], values: &[T]) -> T {
    let total: T = weights.iter().copied().sum();
    weights.iter().zip(values).map(|(w, v)| *w * *v).sum::<T>() / total
}

/// Solve `Σ w_i ψ((v_i − m)/σ) = 0` for `m`.
///
/// Monotone scores are solved by bisection on `[min v, max v]` followed by a
/// final secant step; redescending scores by a fixed-point iteration started
/// at the weighted median. The identity score returns the weighted mean.
pub fn local_m_estimate<T: Scalar>(
    weights: &[T],
    values: &[T],
    score: &ScoreFunction<T>,
    scale: T,
    tolerance: T,
    max_iterations: usize,
) -> Result<T> {
    check_lengths(weights, values)?;
    if score.is_identity() {
        return Ok(weighted_mean(weights, values));
    }
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(PlmError::DegenerateScale(format!("local scale must be positive, got {scale}")));
    }
    if score.is_monotone() {
        bisect(weights, values, score, scale, tolerance, max_iterations)
    } else {
        fixed_point(weights, values, score, scale, tolerance, max_iterations)
    }
}

/// Value of the local estimating equation at `m`.
pub fn local_score_sum<T: Scalar>(
    weights: &[T],
    values: &[T],
    score: &ScoreFunction<T>,
    scale: T,
    m: T,
) -> T {
    weights
        .iter()
        .zip(values)
        .filter(|(w, _)| **w != T::zero())
        .map(|(w, v)| *w * score.psi((*v - m) / scale))
        .sum()
}

fn bisect<T: Scalar>(
    weights: &[T],
    values: &[T],
    score: &ScoreFunction<T>,
    scale: T,
    tolerance: T,
    max_iterations: usize,
) -> Result<T> {
    let (mut lo, mut hi) = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > T::zero())
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
    if lo == hi {
        return Ok(lo);
    }
    let f = |m: T| local_score_sum(weights, values, score, scale, m);
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let width_tol = tolerance * scale;
    let mut converged = false;
    for _ in 0..max_iterations {
        if hi - lo <= width_tol {
            converged = true;
            break;
        }
        let mid = lo + (hi - lo) * T::cst(0.5);
        if mid <= lo || mid >= hi {
            // bracket cannot shrink further in this precision
            converged = true;
            break;
        }
        let f_mid = f(mid);
        if f_mid == T::zero() {
            return Ok(mid);
        } else if f_mid > T::zero() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if !converged {
        let mid = lo + (hi - lo) * T::cst(0.5);
        return Err(PlmError::Convergence {
            iterations: max_iterations,
            last: mid.to_f64_lossy(),
            residual: f(mid).to_f64_lossy(),
        });
    }
    let denom = f_lo - f_hi;
    if denom > T::zero() {
        let m = lo + f_lo * (hi - lo) / denom;
        Ok(m.max(lo).min(hi))
    } else {
        Ok(lo + (hi - lo) * T::cst(0.5))
    }
}

fn fixed_point<T: Scalar>(
    weights: &[T],
    values: &[T],
    score: &ScoreFunction<T>,
    scale: T,
    tolerance: T,
    max_iterations: usize,
) -> Result<T> {
    let mut m = weighted_median(weights, values)?;
    for _ in 0..max_iterations {
        let mut num = T::zero();
        let mut den = T::zero();
        for (w, v) in weights.iter().zip(values) {
            let u = *w * score.irls_weight((*v - m) / scale);
            num += u * *v;
            den += u;
        }
        if !(den > T::zero()) {
            return Err(PlmError::Convergence { iterations: 0, last: m.to_f64_lossy(), residual: f64::NAN });
        }
        let next = num / den;
        let step = (next - m).abs();
        m = next;
        if step <= tolerance * scale {
            return Ok(m);
        }
    }
    Err(PlmError::Convergence {
        iterations: max_iterations,
        last: m.to_f64_lossy(),
        residual: local_score_sum(weights, values, score, scale, m).to_f64_lossy(),
    })
}

/// One smoothed value plus whether the local scale collapsed to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEstimate<T> {
    pub value: T,
    pub degenerate_scale: bool,
}

/// Local estimate from a given weight vector.
///
/// The identity score skips the scale step. A zero local MAD falls back to the
/// weighted median and sets `degenerate_scale`.
pub fn smooth_with_weights<T: Scalar>(
    weights: &[T],
    values: &[T],
    config: &SmootherConfig<T>,
) -> Result<LocalEstimate<T>> {
    if config.score.is_identity() {
        check_lengths(weights, values)?;
        return Ok(LocalEstimate { value: weighted_mean(weights, values), degenerate_scale: false });
    }
    let scale = local_mad(weights, values, config.mad_consistency_constant)?;
    if scale == T::zero() {
        return Ok(LocalEstimate { value: weighted_median(weights, values)?, degenerate_scale: true });
    }
    let value =
        local_m_estimate(weights, values, &config.score, scale, config.tolerance, config.max_iterations)?;
    Ok(LocalEstimate { value, degenerate_scale: false })
}

/// Smoothed values at each query point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmootherOutput<T> {
    pub estimates: Vec<T>,
    /// Query indices where the local MAD was zero.
    pub degenerate: Vec<usize>,
}

/// Smooth `values` observed at `sample` and evaluate at each of `queries`.
pub fn fit_smoother<T: Scalar>(
    manifold: &Manifold<T>,
    kernel: &Kernel<T>,
    config: &LocalFitConfig<T>,
    values: &[T],
    sample: &[ManifoldPoint<T>],
    queries: &[ManifoldPoint<T>],
) -> Result<SmootherOutput<T>> {
    config.validate(manifold)?;
    if values.len() != sample.len() {
        return Err(PlmError::Dimension(format!(
            "{} values for {} sample points",
            values.len(),
            sample.len()
        )));
    }
    for p in sample.iter().chain(queries) {
        manifold.validate(p)?;
    }
    let h = config.bandwidth;
    let results: Vec<Result<LocalEstimate<T>>> = queries
        .par_iter()
        .enumerate()
        .map(|(idx, q)| {
            let d: Vec<T> = sample.iter().map(|s| manifold.distance_unchecked(q, s)).collect();
            weights_from_distances(manifold, kernel, h, &d, None)
                .and_then(|w| smooth_with_weights(&w, values, &config.smoother))
                .map_err(|e| e.at_query(idx))
        })
        .collect();
    let mut out = SmootherOutput { estimates: Vec::with_capacity(queries.len()), degenerate: Vec::new() };
    for (idx, r) in results.into_iter().enumerate() {
        let est = r?;
        if est.degenerate_scale {
            out.degenerate.push(idx);
        }
        out.estimates.push(est.value);
    }
    Ok(out)
}
