mod common;

use manifold_plm::simulation::{true_g, write_boxplot_csv, BOXPLOT_HEADER, TRUE_BETA};
use manifold_plm::*;

fn small_config(contamination: Contamination, replications: usize) -> SimulationConfig<f64> {
    let mut cfg = SimulationConfig::new(60, replications, contamination, 99);
    cfg.bandwidth = BandwidthPolicy::Fixed(0.9);
    cfg
}

#[test]
fn same_seed_same_report() {
    let cfg = small_config(Contamination::C1, 6);
    let a = run_campaign(&cfg, &PlmConfig::default()).unwrap();
    let b = run_campaign(&cfg, &PlmConfig::default()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| run_campaign(&cfg, &PlmConfig::default()).unwrap());
    assert_eq!(a, c);
}

#[test]
fn one_replication_equals_a_direct_fit() {
    let cfg = small_config(Contamination::C0, 1);
    let report = run_campaign(&cfg, &PlmConfig::default()).unwrap();
    let mut rng = replication_rng(99, 0);
    let sample = generate_sample::<f64, _>(60, Contamination::C0, cfg.eta_sd, &mut rng).unwrap();
    for mode in [FitMode::Classical, FitMode::Robust] {
        let f = fit(&sample.dataset, 0.9, mode, &PlmConfig::default()).unwrap();
        let rec = &report.mode(mode).unwrap().records[0];
        assert_eq!(rec.beta, f.beta[0]);
        let mse: f64 = f.g_hat.iter().zip(&sample.g_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 60.0;
        assert!((rec.mse_g - mse).abs() < 1e-14);
    }
}

#[test]
fn summaries_recompute_from_records() {
    let report = run_campaign(&small_config(Contamination::C2, 8), &PlmConfig::default()).unwrap();
    for m in &report.modes {
        let r = m.records.len() as f64;
        let betas: Vec<f64> = m.records.iter().map(|x| x.beta).collect();
        let mean = betas.iter().sum::<f64>() / r;
        let sd = (betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
        let mse = betas.iter().map(|b| (b - TRUE_BETA).powi(2)).sum::<f64>() / r;
        assert!((m.summary.mean_beta - mean).abs() < 1e-12);
        assert!((m.summary.sd_beta - sd).abs() < 1e-12);
        assert!((m.summary.mse_beta - mse).abs() < 1e-12);
        let recomposed = sd * sd * (r - 1.0) / r + (mean - TRUE_BETA).powi(2);
        assert!((m.summary.mse_beta - recomposed).abs() < 1e-10);
    }
}

#[test]
fn generated_points_lie_on_the_cylinder() {
    let mut rng = replication_rng(7, 3);
    let s = generate_sample::<f64, _>(500, Contamination::C2, 0.05, &mut rng).unwrap();
    for (t, g) in s.dataset.t.iter().zip(&s.g_true) {
        let c = &t.coords;
        assert!((c[0] * c[0] + c[1] * c[1] - 1.0).abs() < 1e-12);
        assert!(c[2] > 0.0 && c[2] < 1.0);
        assert!(*g >= 0.0);
        assert_eq!(*g, true_g(t));
    }
}

#[test]
fn contamination_fraction() {
    let mut rng = replication_rng(8, 0);
    let draws = 100_000;
    let outliers = (0..draws).filter(|_| Contamination::C1.draw(&mut rng).1).count();
    let frac = outliers as f64 / draws as f64;
    assert!((frac - 0.10).abs() < 0.01, "fraction {frac}");
    assert!((0..1000).all(|_| !Contamination::C0.draw(&mut rng).1));
}

#[test]
fn boxplot_export() {
    let report = run_campaign(&small_config(Contamination::C0, 3), &PlmConfig::default()).unwrap();
    let rows = export_boxplot_data(&report);
    assert_eq!(rows.len(), 6);
    let mut out = Vec::new();
    write_boxplot_csv(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with(&format!("{BOXPLOT_HEADER}\n")));
    assert!(!text.contains('\r'));
    for m in &report.modes {
        let values: Vec<f64> = text
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(m.mode.as_str()))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - m.summary.mean_beta).abs() < 1e-12);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(Contamination::C0, 1);
    cfg.n = 10;
    assert!(run_campaign(&cfg, &PlmConfig::default()).unwrap_err().is_config());
    let mut cfg = small_config(Contamination::C0, 0);
    cfg.replications = 0;
    assert!(run_campaign(&cfg, &PlmConfig::default()).is_err());
}
