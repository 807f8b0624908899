//! Robust estimation of partially linear models `y = xᵀβ + g(t) + ε` where
//! the nonparametric covariate `t` lives on a Riemannian manifold.
//!
//! The pipeline is split into modules that mirror the estimator:
//!
//! - [`manifold`]: geodesic distance, volume density and injectivity radius
//!   for Euclidean space, the circle, the 2-sphere and the cylinder.
//! - [`smoother`]: density-corrected kernel weights, weighted ECDF, local
//!   median/MAD and local M-smoothers.
//! - [`robust_linear`]: GM regression by IRLS and the least-squares baseline.
//! - [`plm`]: the three-step estimator and prediction.
//! - [`bandwidth`]: robust and classical leave-one-out cross-validation.
//! - [`inference`]: sandwich covariance, Wald intervals and tests.
//! - [`simulation`]: cylinder Monte Carlo with contaminated errors.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision for the common case.
//!
//! ```
//! use manifold_plm::{fit, FitMode, PlmConfig, Contamination, generate_sample, replication_rng};
//!
//! let mut rng = replication_rng(42, 0);
//! let sample = generate_sample::<f64, _>(100, Contamination::C0, 0.05, &mut rng).unwrap();
//! let fit = fit(&sample.dataset, 0.8, FitMode::Robust, &PlmConfig::default()).unwrap();
//! assert!(fit.beta[0].is_finite());
//! ```

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod manifold;
pub mod plm;
pub mod robust_linear;
pub mod scalar;
pub mod score;
pub mod simulation;
pub mod smoother;

pub use bandwidth::{
    default_cv_score, leave_one_out, rcv_score, select_bandwidth, BandwidthGrid, BandwidthSelection,
    CvOutcome, GridEntry,
};
pub use error::{PlmError, Result};
pub use inference::{
    confidence_interval, estimate_covariance, wald_test, AsymptoticCovariance, ConfidenceInterval, WaldTest,
};
pub use linalg::Matrix;
pub use manifold::{Manifold, ManifoldPoint};
pub use plm::{fit, FitMode, PlmConfig, PlmDataset, PlmFit};
pub use robust_linear::{
    gm_estimate, ols_estimate, residual_scale, GmConfig, RegressionResult, ScaleEstimate, WeightFunction,
};
pub use scalar::Scalar;
pub use score::ScoreFunction;
pub use simulation::{
    export_boxplot_data, generate_sample, replication_rng, run_campaign, BandwidthPolicy, Contamination,
    GridChoice, SimulationConfig, SimulationReport,
};
pub use smoother::{Kernel, LocalFitConfig, SmootherConfig};

pub type Manifold64 = Manifold<f64>;
pub type ManifoldPoint64 = ManifoldPoint<f64>;
pub type PlmDataset64 = PlmDataset<f64>;
pub type PlmFit64 = PlmFit<f64>;
pub type PlmConfig64 = PlmConfig<f64>;
pub type GmConfig64 = GmConfig<f64>;
pub type SimulationReport64 = SimulationReport<f64>;

pub type Manifold32 = Manifold<f32>;
pub type ManifoldPoint32 = ManifoldPoint<f32>;
pub type PlmDataset32 = PlmDataset<f32>;
pub type PlmFit32 = PlmFit<f32>;
pub type PlmConfig32 = PlmConfig<f32>;
