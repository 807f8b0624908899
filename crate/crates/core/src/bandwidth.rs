//! Leave-one-out bandwidth selection.
//!
//! For each candidate `h` every smoother is refitted without observation `i`
//! and evaluated at `t_i`; one β̃ is then fitted on all leave-one-out residuals
//! and the criterion is `Σ Ψ²(prediction residual_i / scale)`. With the
//! identity score and least squares this is the ordinary CV sum of squares.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::linalg::{dot, Matrix};
use crate::manifold::DistanceMatrix;
use crate::plm::{regress, sample_weights, smooth_columns, FitMode, PlmConfig, PlmDataset};
use crate::robust_linear::median;
use crate::scalar::Scalar;
use crate::score::ScoreFunction;
use crate::smoother::MAD_NORMAL_CONSTANT;

/// Ascending list of candidate bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid<T> {
    candidates: Vec<T>,
}

impl<T: Scalar> BandwidthGrid<T> {
    /// Sorts the candidates and drops duplicates.
    pub fn new(mut candidates: Vec<T>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(PlmError::Config("bandwidth grid is empty".into()));
        }
        if candidates.iter().any(|h| !(*h > T::zero()) || !h.is_finite()) {
            return Err(PlmError::Config("bandwidths must be positive and finite".into()));
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        candidates.dedup();
        Ok(Self { candidates })
    }

    /// Log-spaced grid of `count` points from the 10th percentile of pairwise
    /// distances up to `0.9 ×` the injectivity radius (or the largest pairwise
    /// distance on non-compact manifolds).
    pub fn default_for(dataset: &PlmDataset<T>, count: usize) -> Result<Self> {
        let mut pairwise = dataset.distances().pairwise();
        pairwise.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        if pairwise.is_empty() {
            return Err(PlmError::Dimension("need at least two points".into()));
        }
        let k = (pairwise.len() as f64 * 0.1).floor() as usize;
        let lo = pairwise[k.min(pairwise.len() - 1)];
        let inj = dataset.manifold.injectivity_radius();
        let hi = if inj.is_finite() { inj * T::cst(0.9) } else { *pairwise.last().unwrap() };
        if !(lo > T::zero()) || !(hi > lo) {
            return Err(PlmError::Config(format!("cannot build a default grid between {lo} and {hi}")));
        }
        let count = count.max(1);
        let ratio = (hi / lo).ln();
        let candidates = (0..count)
            .map(|i| {
                if count == 1 {
                    hi
                } else {
                    let f = T::from_usize(i).unwrap() / T::from_usize(count - 1).unwrap();
                    lo * (ratio * f).exp()
                }
            })
            .collect();
        Self::new(candidates)
    }

    pub fn candidates(&self) -> &[T] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Criterion value at one bandwidth, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CvOutcome<T> {
    Feasible { score: T },
    Infeasible { reason: String },
}

impl<T: Scalar> CvOutcome<T> {
    pub fn score(&self) -> Option<T> {
        match self {
            CvOutcome::Feasible { score } => Some(*score),
            CvOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry<T> {
    pub h: T,
    pub outcome: CvOutcome<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSelection<T> {
    pub h: T,
    pub mode: FitMode,
    pub diagnostics: Vec<GridEntry<T>>,
}

/// Leave-one-out prediction residuals at one bandwidth.
#[derive(Debug, Clone)]
pub struct LeaveOneOut<T> {
    pub r_tilde: Vec<T>,
    pub eta_tilde: Matrix<T>,
    pub beta_tilde: Vec<T>,
    pub prediction_residuals: Vec<T>,
}

pub(crate) fn leave_one_out_with_distances<T: Scalar>(
    dataset: &PlmDataset<T>,
    dist: &DistanceMatrix<T>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
) -> Result<LeaveOneOut<T>> {
    dataset.manifold.check_bandwidth(h)?;
    let weights = sample_weights(dataset, dist, &config.kernel, h, true)?;
    let smoothed = smooth_columns(dataset, &weights, &config.smoother_for(mode))?;
    let n = dataset.len();
    let p = dataset.p();
    let r_tilde: Vec<T> = dataset.y.iter().zip(&smoothed.phi0).map(|(y, f)| *y - *f).collect();
    let mut eta_tilde = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            eta_tilde[(i, j)] = dataset.x[(i, j)] - smoothed.phi[(i, j)];
        }
    }
    let reference = dataset.y.iter().fold(T::zero(), |m, y| m.max(y.abs()));
    let (reg, _) = regress(&r_tilde, &eta_tilde, mode, &config.gm, reference)?;
    let prediction_residuals = (0..n).map(|i| r_tilde[i] - dot(eta_tilde.row(i), &reg.beta)).collect();
    Ok(LeaveOneOut { r_tilde, eta_tilde, beta_tilde: reg.beta, prediction_residuals })
}

/// Leave-one-out residuals for `dataset` at bandwidth `h`.
pub fn leave_one_out<T: Scalar>(
    dataset: &PlmDataset<T>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
) -> Result<LeaveOneOut<T>> {
    leave_one_out_with_distances(dataset, &dataset.distances(), h, mode, config)
}

/// `Σ Ψ²(e_i / s)` with `s` the normalized MAD of the residuals; the identity
/// score is applied to raw residuals.
pub fn criterion_from_residuals<T: Scalar>(residuals: &[T], cv_score: &ScoreFunction<T>) -> T {
    if cv_score.is_identity() {
        return residuals.iter().map(|e| *e * *e).sum();
    }
    let med = median(residuals);
    let dev: Vec<T> = residuals.iter().map(|e| (*e - med).abs()).collect();
    let mut scale = T::cst(MAD_NORMAL_CONSTANT) * median(&dev);
    if !(scale > T::zero()) {
        // more than half the residuals coincide; use the mean deviation instead
        let n = T::from_usize(dev.len()).unwrap();
        scale = T::cst(1.2533) * dev.iter().copied().sum::<T>() / n;
    }
    if !(scale > T::zero()) {
        return T::zero();
    }
    residuals
        .iter()
        .map(|e| {
            let v = cv_score.psi(*e / scale);
            v * v
        })
        .sum()
}

fn score_with_distances<T: Scalar>(
    dataset: &PlmDataset<T>,
    dist: &DistanceMatrix<T>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
    cv_score: &ScoreFunction<T>,
) -> CvOutcome<T> {
    match leave_one_out_with_distances(dataset, dist, h, mode, config) {
        Ok(loo) => {
            let s = criterion_from_residuals(&loo.prediction_residuals, cv_score);
            if s.is_finite() {
                CvOutcome::Feasible { score: s }
            } else {
                CvOutcome::Infeasible { reason: "non-finite criterion".into() }
            }
        }
        Err(e) => CvOutcome::Infeasible { reason: e.to_string() },
    }
}

/// Cross-validation criterion at one bandwidth.
///
/// Robust mode with a bounded `cv_score` gives the robust criterion; classical
/// mode with [`ScoreFunction::Identity`] gives the sum of squared
/// leave-one-out prediction errors.
pub fn rcv_score<T: Scalar>(
    dataset: &PlmDataset<T>,
    h: T,
    mode: FitMode,
    config: &PlmConfig<T>,
    cv_score: &ScoreFunction<T>,
) -> CvOutcome<T> {
    score_with_distances(dataset, &dataset.distances(), h, mode, config, cv_score)
}

/// Criterion used by default in each mode: Huber(1.345) for robust, squares for classical.
pub fn default_cv_score<T: Scalar>(mode: FitMode) -> ScoreFunction<T> {
    match mode {
        FitMode::Robust => ScoreFunction::huber(),
        FitMode::Classical => ScoreFunction::Identity,
    }
}

/// Minimize the criterion over the grid. Ties go to the smallest bandwidth.
pub fn select_bandwidth<T: Scalar>(
    dataset: &PlmDataset<T>,
    grid: &BandwidthGrid<T>,
    mode: FitMode,
    config: &PlmConfig<T>,
    cv_score: &ScoreFunction<T>,
) -> Result<BandwidthSelection<T>> {
    config.validate()?;
    cv_score.validate()?;
    let dist = Arc::new(dataset.distances());
    let diagnostics: Vec<GridEntry<T>> = grid
        .candidates()
        .par_iter()
        .map(|&h| GridEntry { h, outcome: score_with_distances(dataset, &dist, h, mode, config, cv_score) })
        .collect();
    let mut best: Option<(T, T)> = None;
    for entry in &diagnostics {
        if let Some(s) = entry.outcome.score() {
            match best {
                Some((_, b)) if !(s < b) => {}
                _ => best = Some((entry.h, s)),
            }
        }
    }
    match best {
        Some((h, _)) => Ok(BandwidthSelection { h, mode, diagnostics }),
        None => {
            let reasons: Vec<String> = diagnostics
                .iter()
                .map(|e| match &e.outcome {
                    CvOutcome::Infeasible { reason } => format!("h={}: {reason}", e.h),
                    CvOutcome::Feasible { .. } => unreachable!(),
                })
                .collect();
            Err(PlmError::InfeasibleGrid(reasons.join("; ")))
        }
    }
}
