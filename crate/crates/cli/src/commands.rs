use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use manifold_plm::simulation::write_boxplot_csv;
use manifold_plm::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::{check_level, CvArgs, EstimatorArgs, FitArgs, SimulateArgs};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, Table};

const DEFAULT_GRID_POINTS: usize = 8;

fn plm_config(args: &EstimatorArgs) -> PlmConfig<f64> {
    let base = PlmConfig::default();
    PlmConfig {
        smoother: base.smoother.with_score(args.score),
        gm: base.gm.with_score(args.score).with_weight(args.w1),
        ..base
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn write_json(path: Option<&Path>, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn to_value<S: Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    input: Option<String>,
    n: usize,
    n_dropped: usize,
    height_map: Option<crate::ingest::HeightMap>,
    score: ScoreFunction<f64>,
    w1: WeightFunction<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct WaldReport {
    null: Vec<f64>,
    statistic: f64,
    p_value: f64,
    df: usize,
    rejected: bool,
}

#[derive(Serialize)]
struct PointEstimate {
    row: usize,
    g_hat: f64,
}

#[derive(Serialize)]
struct GridRow {
    h: f64,
    score: Option<f64>,
    reason: Option<String>,
}

#[derive(Serialize)]
struct FitReport {
    beta: Vec<f64>,
    se: Option<Vec<f64>>,
    ci: Option<Vec<[f64; 2]>>,
    h: f64,
    n_dropped: usize,
    flags: Vec<String>,
    wald: Option<WaldReport>,
    scale: f64,
    converged: bool,
    iterations: usize,
    cv: Option<Vec<GridRow>>,
    g_hat: Vec<PointEstimate>,
}

fn grid_rows(sel: &BandwidthSelection<f64>) -> Vec<GridRow> {
    sel.diagnostics
        .iter()
        .map(|e| match &e.outcome {
            CvOutcome::Feasible { score } => GridRow { h: e.h, score: Some(*score), reason: None },
            CvOutcome::Infeasible { reason } => GridRow { h: e.h, score: None, reason: Some(reason.clone()) },
        })
        .collect()
}

fn grid_for(ds: &PlmDataset<f64>, explicit: Option<&Vec<f64>>) -> CliResult<BandwidthGrid<f64>> {
    Ok(match explicit {
        Some(g) => BandwidthGrid::new(g.clone())?,
        None => BandwidthGrid::default_for(ds, DEFAULT_GRID_POINTS)?,
    })
}

fn load(data: &crate::args::DataArgs) -> CliResult<(Table, PlmDataset<f64>)> {
    let table = ingest_csv(&data.input, &data.mapping)?;
    let ds = table.dataset()?;
    Ok((table, ds))
}

fn meta(command: &str, table: Option<&Table>, est: &EstimatorArgs, input: Option<&Path>) -> Value {
    to_value(&Meta {
        command,
        input: input.map(|p| p.display().to_string()),
        n: table.map_or(0, Table::len),
        n_dropped: table.map_or(0, |t| t.n_dropped),
        height_map: table.and_then(|t| t.height_map),
        score: est.score,
        w1: est.w1,
        seed: est.seed,
    })
}

pub fn fit_command(args: &FitArgs) -> CliResult<()> {
    check_level(args.level)?;
    let (table, ds) = load(&args.data)?;
    if let Some(null) = &args.null {
        if null.len() != ds.p() {
            return Err(CliError::Config(format!(
                "--null has {} values for {} linear covariates",
                null.len(),
                ds.p()
            )));
        }
    }
    let cfg = plm_config(&args.estimator);
    let mut out = Map::new();
    out.insert("meta".into(), meta("fit", Some(&table), &args.estimator, Some(&args.data.input)));
    for mode in args.estimator.mode.modes() {
        let (h, cv) = match args.bandwidth.bandwidth {
            Some(h) => (h, None),
            None => {
                let grid = grid_for(&ds, args.bandwidth.cv_grid.as_ref())?;
                let sel = select_bandwidth(&ds, &grid, mode, &cfg, &default_cv_score(mode))?;
                (sel.h, Some(grid_rows(&sel)))
            }
        };
        let f = fit(&ds, h, mode, &cfg)?;
        let mut flags = f.flags.describe();
        let (se, ci, wald) = match estimate_covariance(&f) {
            Ok(cov) => {
                let ci = confidence_interval(&f.beta, &cov, args.level)?;
                let wald = match &args.null {
                    Some(null) => match wald_test(&f.beta, &cov, null) {
                        Ok(t) => Some(WaldReport {
                            null: null.clone(),
                            statistic: t.statistic,
                            p_value: t.p_value,
                            df: t.df,
                            rejected: t.rejects(1.0 - args.level),
                        }),
                        Err(e) => {
                            flags.push(format!("wald_unavailable: {e}"));
                            None
                        }
                    },
                    None => None,
                };
                (
                    Some(cov.standard_errors.clone()),
                    Some(ci.iter().map(|c| [c.lower, c.upper]).collect()),
                    wald,
                )
            }
            Err(e) => {
                flags.push(format!("inference_unavailable: {e}"));
                (None, None, None)
            }
        };
        let report = FitReport {
            beta: f.beta.clone(),
            se,
            ci,
            h,
            n_dropped: table.n_dropped,
            flags,
            wald,
            scale: f.regression.scale,
            converged: f.regression.converged,
            iterations: f.regression.iterations,
            cv,
            g_hat: table
                .rows
                .iter()
                .zip(&f.g_hat)
                .map(|(row, g)| PointEstimate { row: *row, g_hat: *g })
                .collect(),
        };
        out.insert(mode.as_str().into(), to_value(&report));
    }
    write_json(args.out.as_deref(), &Value::Object(out))
}

pub fn cv_command(args: &CvArgs) -> CliResult<()> {
    let (table, ds) = load(&args.data)?;
    let cfg = plm_config(&args.estimator);
    let grid = grid_for(&ds, args.cv_grid.as_ref())?;
    let mut out = Map::new();
    out.insert("meta".into(), meta("cv", Some(&table), &args.estimator, Some(&args.data.input)));
    for mode in args.estimator.mode.modes() {
        let sel = select_bandwidth(&ds, &grid, mode, &cfg, &default_cv_score(mode))?;
        let mut entry = Map::new();
        entry.insert("h".into(), to_value(&sel.h));
        entry.insert("grid".into(), to_value(&grid_rows(&sel)));
        out.insert(mode.as_str().into(), Value::Object(entry));
    }
    write_json(args.out.as_deref(), &Value::Object(out))
}

#[derive(Serialize)]
struct SimulationMeta<'a> {
    command: &'a str,
    n: usize,
    replications: usize,
    contamination: Contamination,
    bandwidth: &'a BandwidthPolicy<f64>,
    eta_sd: f64,
    score: ScoreFunction<f64>,
    w1: WeightFunction<f64>,
    seed: u64,
}

#[derive(Serialize)]
struct ModeSummary<'a> {
    fixed_h: Option<f64>,
    summary: &'a simulation::Summary<f64>,
    coverage: f64,
    failures: &'a [simulation::FailureRecord],
    replications: &'a [simulation::ReplicationRecord<f64>],
}

fn write_sample_csv(path: &Path, seed: u64, config: &SimulationConfig<f64>) -> CliResult<()> {
    let mut rng = replication_rng(seed, 0);
    let sample = generate_sample::<f64, _>(config.n, config.contamination, config.eta_sd, &mut rng)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let ds = &sample.dataset;
    let mut text = String::from("y,x,angle_rad,height,g_true\n");
    for i in 0..ds.len() {
        text.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?}\n",
            ds.y[i],
            ds.x.row(i)[0],
            sample.angles[i],
            ds.t[i].coords[2],
            sample.g_true[i]
        ));
    }
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn simulate_command(args: &SimulateArgs) -> CliResult<()> {
    check_level(args.level)?;
    let mut config =
        SimulationConfig::<f64>::new(args.n, args.replications, args.contamination, args.estimator.seed);
    config.modes = args.estimator.mode.modes();
    let grid = |g: &Option<Vec<f64>>| -> CliResult<GridChoice<f64>> {
        Ok(match g {
            Some(v) => GridChoice::Explicit(BandwidthGrid::new(v.clone())?),
            None => GridChoice::Default(DEFAULT_GRID_POINTS),
        })
    };
    config.bandwidth = match (args.bandwidth.bandwidth, args.cv_once) {
        (Some(h), _) => BandwidthPolicy::Fixed(h),
        (None, true) => BandwidthPolicy::CvFirstReplication(grid(&args.bandwidth.cv_grid)?),
        (None, false) => BandwidthPolicy::CvEachReplication(grid(&args.bandwidth.cv_grid)?),
    };
    let cfg = plm_config(&args.estimator);
    let report = run_campaign(&config, &cfg)?;

    let mut out = Map::new();
    out.insert(
        "meta".into(),
        to_value(&SimulationMeta {
            command: "simulate",
            n: config.n,
            replications: config.replications,
            contamination: config.contamination,
            bandwidth: &config.bandwidth,
            eta_sd: config.eta_sd,
            score: args.estimator.score,
            w1: args.estimator.w1,
            seed: config.seed,
        }),
    );
    for m in &report.modes {
        out.insert(
            m.mode.as_str().into(),
            to_value(&ModeSummary {
                fixed_h: m.fixed_h,
                summary: &m.summary,
                coverage: m.coverage(args.level),
                failures: &m.failures,
                replications: &m.records,
            }),
        );
    }
    if let Some(path) = &args.boxplot {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        write_boxplot_csv(&export_boxplot_data(&report), &mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    if let Some(path) = &args.sample_csv {
        write_sample_csv(path, config.seed, &config)?;
    }
    write_json(args.out.as_deref(), &Value::Object(out))
}
