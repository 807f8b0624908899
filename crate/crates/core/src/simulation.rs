//! Monte Carlo study on the cylinder.
//!
//! Samples follow `y = 2x + (t₁ + t₂ − t₃)² + ε`, `x = sin(2t₃) + η` with
//! `t = (cos θ, sin θ, s)`, `θ ~ U(0, 2π)`, `s ~ U(0, 1)`, `η ~ N(0, 0.05²)`.
//! Errors are standard normal (C0), a variance-inflated mixture (C1) or a
//! mean-shifted mixture (C2).

use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bandwidth::{default_cv_score, select_bandwidth, BandwidthGrid};
use crate::error::{PlmError, Result};
use crate::inference::estimate_covariance;
use crate::linalg::Matrix;
use crate::manifold::{Manifold, ManifoldPoint};
use crate::plm::{fit_shared, FitMode, PlmConfig, PlmDataset};
use crate::scalar::Scalar;

/// Regression coefficient used by the generator.
pub const TRUE_BETA: f64 = 2.0;
/// Standard deviation of the covariate noise η.
pub const DEFAULT_ETA_SD: f64 = 0.05;
/// Label written in boxplot exports.
pub const BOXPLOT_HEADER: &str = "mode,contamination,replication,beta_hat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Contamination {
    /// ε ~ N(0, 1).
    C0,
    /// ε ~ 0.9 N(0, 1) + 0.1 N(0, 25).
    C1,
    /// ε ~ 0.9 N(0, 1) + 0.1 N(5, 0.25).
    C2,
}

impl Contamination {
    pub const ALL: [Contamination; 3] = [Contamination::C0, Contamination::C1, Contamination::C2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Contamination::C0 => "C0",
            Contamination::C1 => "C1",
            Contamination::C2 => "C2",
        }
    }

    /// Draw one error and whether it came from the contaminating component.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, bool) {
        let z: f64 = StandardNormal.sample(rng);
        match self {
            Contamination::C0 => (z, false),
            Contamination::C1 | Contamination::C2 => {
                let u: f64 = rng.random();
                let outlier = u < 0.1;
                match (self, outlier) {
                    (_, false) => (z, false),
                    (Contamination::C1, true) => (5.0 * z, true),
                    _ => (5.0 + 0.5 * z, true),
                }
            }
        }
    }
}

impl std::str::FromStr for Contamination {
    type Err = PlmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C0" => Ok(Contamination::C0),
            "C1" => Ok(Contamination::C1),
            "C2" => Ok(Contamination::C2),
            other => Err(PlmError::Config(format!("unknown contamination {other:?}"))),
        }
    }
}

impl std::fmt::Display for Contamination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `g(t) = (t₁ + t₂ − t₃)²`.
pub fn true_g<T: Scalar>(t: &ManifoldPoint<T>) -> T {
    let s = t.coords[0] + t.coords[1] - t.coords[2];
    s * s
}

#[derive(Debug, Clone)]
pub struct SimulatedSample<T> {
    pub dataset: PlmDataset<T>,
    pub g_true: Vec<T>,
    /// Whether each error was drawn from the contaminating component.
    pub contaminated: Vec<bool>,
    /// Angles θ_i in radians, kept for export.
    pub angles: Vec<T>,
}

/// Draw a sample of size `n`.
pub fn generate_sample<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    contamination: Contamination,
    eta_sd: f64,
    rng: &mut R,
) -> Result<SimulatedSample<T>> {
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut g_true = Vec::with_capacity(n);
    let mut contaminated = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    for _ in 0..n {
        let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let s: f64 = loop {
            // keep the height strictly inside (0, 1)
            let s: f64 = rng.random();
            if s > 0.0 {
                break s;
            }
        };
        let z: f64 = StandardNormal.sample(rng);
        let eta = eta_sd * z;
        let (eps, outlier) = contamination.draw(rng);
        let point = ManifoldPoint::cylinder(T::cst(theta), T::cst(s));
        let g = true_g(&point);
        let xi = T::cst((2.0 * s).sin() + eta);
        y.push(T::cst(TRUE_BETA) * xi + g + T::cst(eps));
        x.push(xi);
        t.push(point);
        g_true.push(g);
        contaminated.push(outlier);
        angles.push(T::cst(theta));
    }
    let dataset = PlmDataset::new(y, Matrix::column_vector(&x), t, Manifold::unit_cylinder())?;
    Ok(SimulatedSample { dataset, g_true, contaminated, angles })
}

/// RNG for replication `r`: the master seed picks the key, `r` picks the stream.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Where candidate bandwidths come from when cross-validating.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice<T> {
    /// Log-spaced default grid with this many points, built from the sample.
    Default(usize),
    Explicit(BandwidthGrid<T>),
}

impl<T: Scalar> GridChoice<T> {
    fn build(&self, dataset: &PlmDataset<T>) -> Result<BandwidthGrid<T>> {
        match self {
            GridChoice::Default(count) => BandwidthGrid::default_for(dataset, *count),
            GridChoice::Explicit(g) => Ok(g.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPolicy<T> {
    Fixed(T),
    /// Cross-validate every replication.
    CvEachReplication(GridChoice<T>),
    /// Cross-validate on replication 0 and keep that bandwidth for all others.
    CvFirstReplication(GridChoice<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig<T> {
    pub n: usize,
    pub replications: usize,
    pub contamination: Contamination,
    pub bandwidth: BandwidthPolicy<T>,
    pub modes: Vec<FitMode>,
    pub seed: u64,
    pub eta_sd: f64,
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn new(n: usize, replications: usize, contamination: Contamination, seed: u64) -> Self {
        Self {
            n,
            replications,
            contamination,
            bandwidth: BandwidthPolicy::CvEachReplication(GridChoice::Default(8)),
            modes: vec![FitMode::Classical, FitMode::Robust],
            seed,
            eta_sd: DEFAULT_ETA_SD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(PlmError::Config(format!("n must be >= 20, got {}", self.n)));
        }
        if self.replications == 0 {
            return Err(PlmError::Config("replications must be >= 1".into()));
        }
        if self.modes.is_empty() {
            return Err(PlmError::Config("no estimation mode requested".into()));
        }
        if !(self.eta_sd >= 0.0) {
            return Err(PlmError::Config("eta_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord<T> {
    pub replication: usize,
    pub beta: T,
    /// `(1/n) Σ (ĝ(t_i) − g(t_i))²` over the replication's own sample.
    pub mse_g: T,
    pub h: T,
    /// Asymptotic standard error, when the covariance could be estimated.
    pub se: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<T> {
    pub mean_beta: T,
    /// Sample standard deviation (denominator R − 1).
    pub sd_beta: T,
    /// `(1/R) Σ (β̂_r − 2)²`.
    pub mse_beta: T,
    pub mean_mse_g: T,
    pub used: usize,
    pub failed: usize,
}

impl<T: Scalar> Summary<T> {
    pub fn from_records(records: &[ReplicationRecord<T>], failed: usize) -> Self {
        let r = records.len();
        let rf = T::from_usize(r.max(1)).unwrap();
        let truth = T::cst(TRUE_BETA);
        let mean_beta = records.iter().map(|x| x.beta).sum::<T>() / rf;
        let ss = records.iter().map(|x| (x.beta - mean_beta) * (x.beta - mean_beta)).sum::<T>();
        let sd_beta = if r > 1 { (ss / T::from_usize(r - 1).unwrap()).sqrt() } else { T::zero() };
        let mse_beta = records.iter().map(|x| (x.beta - truth) * (x.beta - truth)).sum::<T>() / rf;
        let mean_mse_g = records.iter().map(|x| x.mse_g).sum::<T>() / rf;
        Self { mean_beta, sd_beta, mse_beta, mean_mse_g, used: r, failed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport<T> {
    pub mode: FitMode,
    /// Bandwidth fixed for the whole campaign, if any.
    pub fixed_h: Option<T>,
    pub records: Vec<ReplicationRecord<T>>,
    pub failures: Vec<FailureRecord>,
    pub summary: Summary<T>,
}

impl<T: Scalar> ModeReport<T> {
    /// Fraction of replications whose Wald interval at `level` contains the true β.
    pub fn coverage(&self, level: T) -> T {
        let z = crate::inference::two_sided_critical(level);
        let truth = T::cst(TRUE_BETA);
        let with_se: Vec<_> = self.records.iter().filter_map(|r| r.se.map(|s| (r.beta, s))).collect();
        if with_se.is_empty() {
            return T::zero();
        }
        let hits = with_se.iter().filter(|(b, se)| *b - z * *se <= truth && truth <= *b + z * *se).count();
        T::from_usize(hits).unwrap() / T::from_usize(with_se.len()).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport<T> {
    pub config: SimulationConfig<T>,
    pub modes: Vec<ModeReport<T>>,
}

impl<T: Scalar> SimulationReport<T> {
    pub fn mode(&self, mode: FitMode) -> Option<&ModeReport<T>> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

/// Result of one replication in one mode.
type ReplicationOutcome<T> = std::result::Result<ReplicationRecord<T>, String>;

fn run_replication<T: Scalar>(
    config: &SimulationConfig<T>,
    plm: &PlmConfig<T>,
    fixed: &[Option<T>],
    r: usize,
) -> Vec<ReplicationOutcome<T>> {
    let mut rng = replication_rng(config.seed, r as u64);
    let sample = match generate_sample::<T, _>(config.n, config.contamination, config.eta_sd, &mut rng) {
        Ok(s) => s,
        Err(e) => return config.modes.iter().map(|_| Err(e.to_string())).collect(),
    };
    let data = Arc::new(sample.dataset);
    config
        .modes
        .iter()
        .zip(fixed)
        .map(|(&mode, fixed_h)| {
            let h = match (fixed_h, &config.bandwidth) {
                (Some(h), _) => *h,
                (None, BandwidthPolicy::CvEachReplication(choice)) => {
                    let grid = choice.build(&data).map_err(|e| e.to_string())?;
                    select_bandwidth(&data, &grid, mode, plm, &default_cv_score(mode))
                        .map_err(|e| e.to_string())?
                        .h
                }
                (None, _) => unreachable!("bandwidth resolved before the campaign"),
            };
            let fit = fit_shared(Arc::clone(&data), h, mode, plm).map_err(|e| e.to_string())?;
            let nf = T::from_usize(fit.g_hat.len()).unwrap();
            let mse_g =
                fit.g_hat.iter().zip(&sample.g_true).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>() / nf;
            let se = estimate_covariance(&fit).ok().map(|c| c.standard_errors[0]);
            Ok(ReplicationRecord { replication: r, beta: fit.beta[0], mse_g, h, se })
        })
        .collect()
}

/// Select the bandwidth on replication 0 for `mode`.
pub fn first_replication_bandwidth<T: Scalar>(
    config: &SimulationConfig<T>,
    plm: &PlmConfig<T>,
    choice: &GridChoice<T>,
    mode: FitMode,
) -> Result<T> {
    let mut rng = replication_rng(config.seed, 0);
    let sample = generate_sample::<T, _>(config.n, config.contamination, config.eta_sd, &mut rng)?;
    let grid = choice.build(&sample.dataset)?;
    Ok(select_bandwidth(&sample.dataset, &grid, mode, plm, &default_cv_score(mode))?.h)
}

/// Run every replication (in parallel) and summarize per mode.
///
/// Failed replications are logged and left out of the summaries; more than
/// 10% failures in any mode aborts the campaign.
pub fn run_campaign<T: Scalar>(
    config: &SimulationConfig<T>,
    plm: &PlmConfig<T>,
) -> Result<SimulationReport<T>> {
    config.validate()?;
    plm.validate()?;
    let fixed: Vec<Option<T>> = match &config.bandwidth {
        BandwidthPolicy::Fixed(h) => {
            Manifold::<T>::unit_cylinder().check_bandwidth(*h)?;
            vec![Some(*h); config.modes.len()]
        }
        BandwidthPolicy::CvEachReplication(_) => vec![None; config.modes.len()],
        BandwidthPolicy::CvFirstReplication(choice) => config
            .modes
            .iter()
            .map(|&m| first_replication_bandwidth(config, plm, choice, m).map(Some))
            .collect::<Result<_>>()?,
    };

    let outcomes: Vec<Vec<ReplicationOutcome<T>>> =
        (0..config.replications).into_par_iter().map(|r| run_replication(config, plm, &fixed, r)).collect();

    let mut modes = Vec::with_capacity(config.modes.len());
    for (k, &mode) in config.modes.iter().enumerate() {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (r, per_mode) in outcomes.iter().enumerate() {
            match &per_mode[k] {
                Ok(rec) => records.push(rec.clone()),
                Err(msg) => failures.push(FailureRecord { replication: r, message: msg.clone() }),
            }
        }
        if failures.len() * 10 > config.replications {
            return Err(PlmError::Campaign { failed: failures.len(), total: config.replications });
        }
        let summary = Summary::from_records(&records, failures.len());
        modes.push(ModeReport { mode, fixed_h: fixed[k], records, failures, summary });
    }
    Ok(SimulationReport { config: config.clone(), modes })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotRow<T> {
    pub mode: FitMode,
    pub contamination: Contamination,
    pub replication: usize,
    pub beta_hat: T,
}

/// One row per (mode, successful replication).
pub fn export_boxplot_data<T: Scalar>(report: &SimulationReport<T>) -> Vec<BoxplotRow<T>> {
    report
        .modes
        .iter()
        .flat_map(|m| {
            m.records.iter().map(move |r| BoxplotRow {
                mode: m.mode,
                contamination: report.config.contamination,
                replication: r.replication,
                beta_hat: r.beta,
            })
        })
        .collect()
}

/// Write rows as CSV with the fixed header and LF line endings.
pub fn write_boxplot_csv<T: Scalar, W: Write>(rows: &[BoxplotRow<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "{BOXPLOT_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{:?}",
            row.mode.as_str(),
            row.contamination.as_str(),
            row.replication,
            row.beta_hat
        )?;
    }
    Ok(())
}
