use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use manifold_plm_cli::ingest::ingest_csv;
use manifold_plm_cli::mapping::ColumnMapping;
use serde_json::Value;
use tempfile::TempDir;

const CYLINDER_MAP: &str = "response=hum,linear=ins,manifold=cylinder:angle_deg=dir,height=speed";

fn mplm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mplm")).args(args).output().unwrap()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Deterministic pseudo-random values in `[0, 1)` without extra dependencies.
fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (*seed >> 11) as f64 / (1u64 << 53) as f64
}

/// Weather-like table: direction in degrees, speed, insolation and humidity.
fn weather_csv(n: usize, beta: f64, noise: f64, outliers: &[usize]) -> String {
    let mut seed = 17;
    let mut s = String::from("hum,ins,dir,speed\n");
    for i in 0..n {
        let dir = 360.0 * lcg(&mut seed);
        let speed = 2.0 + 10.0 * lcg(&mut seed);
        let ins = (speed / 4.0).sin() + lcg(&mut seed) - 0.5;
        let e = noise * (lcg(&mut seed) + lcg(&mut seed) + lcg(&mut seed) - 1.5);
        let mut hum = beta * ins + (dir.to_radians().cos() + 0.1 * speed).powi(2) + e;
        if outliers.contains(&i) {
            hum += 500.0;
        }
        writeln!(s, "{hum},{ins},{dir},{speed}").unwrap();
    }
    s
}

#[test]
fn noiseless_linear_fit_recovers_beta() {
    let dir = TempDir::new().unwrap();
    let mut seed = 3;
    let mut csv = String::from("hum,ins,dir,speed\n");
    for _ in 0..80 {
        let ins = lcg(&mut seed) * 4.0 - 2.0;
        writeln!(csv, "{},{ins},{},{}", -2.5 * ins, 360.0 * lcg(&mut seed), 5.0 * lcg(&mut seed)).unwrap();
    }
    let input = write(&dir, "lin.csv", &csv);
    let out = dir.path().join("fit.json");
    let o = mplm(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--map",
        CYLINDER_MAP,
        "--bandwidth",
        "1.2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out);
    for mode in ["robust", "classical"] {
        let b = report[mode]["beta"][0].as_f64().unwrap();
        assert!((b + 2.5).abs() < 1e-6, "{mode}: {b}");
        assert_eq!(report[mode]["h"].as_f64().unwrap(), 1.2);
    }
}

#[test]
fn both_modes_reported_on_data_with_outliers() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "w.csv", &weather_csv(150, -3.0, 1.0, &[10, 77]));
    let out = dir.path().join("fit.json");
    let o = mplm(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--map",
        CYLINDER_MAP,
        "--cv-grid",
        "0.6,1.0,1.6",
        "--null",
        "-3",
        "--level",
        "0.95",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    let robust = r["robust"]["beta"][0].as_f64().unwrap();
    let classical = r["classical"]["beta"][0].as_f64().unwrap();
    assert!((robust + 3.0).abs() < (classical + 3.0).abs(), "robust {robust}, classical {classical}");
    for mode in ["robust", "classical"] {
        let m = &r[mode];
        let ci = m["ci"][0].as_array().unwrap();
        let (lo, hi) = (ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap());
        let b = m["beta"][0].as_f64().unwrap();
        assert!(lo <= b && b <= hi);
        assert!(m["se"][0].as_f64().unwrap() > 0.0);
        assert_eq!(m["g_hat"].as_array().unwrap().len(), 150);
        assert_eq!(m["cv"].as_array().unwrap().len(), 3);
        let wald = &m["wald"];
        let rejected = wald["rejected"].as_bool().unwrap();
        assert_eq!(rejected, !(lo <= -3.0 && -3.0 <= hi));
    }
    let map = &r["meta"]["height_map"];
    assert!(map["slope"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.json"));
        let boxplot = dir.path().join(format!("{tag}.csv"));
        let o = mplm(&[
            "simulate",
            "--n",
            "50",
            "--replications",
            "4",
            "--contamination",
            "C1",
            "--cv-grid",
            "0.7,1.2",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
            "--boxplot",
            boxplot.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out).unwrap(), std::fs::read(boxplot).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let table = String::from_utf8(a.1).unwrap();
    assert!(table.starts_with("mode,contamination,replication,beta_hat\n"));
    assert_eq!(table.lines().count(), 1 + 2 * 4);
}

#[test]
fn simulator_export_round_trips_through_fit() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim.json");
    let sample = dir.path().join("sample.csv");
    let o = mplm(&[
        "simulate",
        "--n",
        "80",
        "--replications",
        "2",
        "--bandwidth",
        "0.8",
        "--seed",
        "21",
        "--out",
        out.to_str().unwrap(),
        "--sample-csv",
        sample.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim = read_json(&out);
    let fit_out = dir.path().join("fit.json");
    let o = mplm(&[
        "fit",
        "--input",
        sample.to_str().unwrap(),
        "--map",
        "response=y,linear=x,manifold=cylinder:angle_rad=angle_rad,height_raw=height",
        "--bandwidth",
        "0.8",
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = read_json(&fit_out);
    for mode in ["robust", "classical"] {
        let campaign = sim[mode]["replications"][0]["beta"].as_f64().unwrap();
        let refit = fit[mode]["beta"][0].as_f64().unwrap();
        assert!((campaign - refit).abs() < 1e-10, "{mode}: {campaign} vs {refit}");
    }
}

#[test]
fn rows_with_missing_fields_are_dropped_and_counted() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "m.csv", "hum,ins,dir,speed\n1.0,0.5,10,3\n2.0,0.1,20,\n3.0,0.7,30,5\n");
    let mapping: ColumnMapping = CYLINDER_MAP.parse().unwrap();
    let table = ingest_csv(&input, &mapping).unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.n_dropped, 1);
    assert_eq!(table.rows, vec![0, 2]);
    assert!(table.dataset().is_err());

    let o = mplm(&["fit", "--input", input.to_str().unwrap(), "--map", CYLINDER_MAP, "--bandwidth", "1.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient data"));
}

#[test]
fn direction_embedding_and_height_normalization() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "d.csv", "hum,ins,dir,speed\n1,0.1,0,2\n2,0.2,180,4\n3,0.3,90,6\n");
    let mapping: ColumnMapping = CYLINDER_MAP.parse().unwrap();
    let t = ingest_csv(&input, &mapping).unwrap().t;
    assert!((t[0].coords[0] - 1.0).abs() < 1e-15 && t[0].coords[1].abs() < 1e-15);
    assert!((t[1].coords[0] + 1.0).abs() < 1e-15 && t[1].coords[1].abs() < 1e-15);
    assert!((t[0].coords[2] - 0.01).abs() < 1e-15);
    assert!((t[1].coords[2] - 0.5).abs() < 1e-15);
    assert!((t[2].coords[2] - 0.99).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "w.csv", &weather_csv(40, 1.0, 1.0, &[]));
    let path = input.to_str().unwrap();
    let missing = mplm(&[
        "fit",
        "--input",
        path,
        "--map",
        "response=nope,linear=ins,manifold=cylinder:angle_deg=dir,height=speed",
        "--bandwidth",
        "1",
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("\"nope\""));
    let too_wide = mplm(&["fit", "--input", path, "--map", CYLINDER_MAP, "--bandwidth", "4.0"]);
    assert_eq!(too_wide.status.code(), Some(2));
    let bad_score = mplm(&["fit", "--input", path, "--map", CYLINDER_MAP, "--score", "huber:-2"]);
    assert_eq!(bad_score.status.code(), Some(2));

    let mut constant = String::from("hum,ins,dir,speed\n");
    let mut seed = 5;
    for _ in 0..40 {
        writeln!(constant, "{},1.0,{},{}", lcg(&mut seed), 360.0 * lcg(&mut seed), lcg(&mut seed)).unwrap();
    }
    let input = write(&dir, "c.csv", &constant);
    let singular = mplm(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--map",
        CYLINDER_MAP,
        "--mode",
        "robust",
        "--bandwidth",
        "1.0",
    ]);
    assert_eq!(singular.status.code(), Some(3), "{}", String::from_utf8_lossy(&singular.stderr));
}

#[test]
fn cv_command_reports_the_grid() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "w.csv", &weather_csv(90, 2.0, 1.0, &[]));
    let out = dir.path().join("cv.json");
    let o = mplm(&[
        "cv",
        "--input",
        input.to_str().unwrap(),
        "--map",
        CYLINDER_MAP,
        "--cv-grid",
        "0.05,0.8,1.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    for mode in ["robust", "classical"] {
        let grid = r[mode]["grid"].as_array().unwrap();
        assert_eq!(grid.len(), 3);
        assert!(grid[0]["score"].is_null() && grid[0]["reason"].is_string());
        let h = r[mode]["h"].as_f64().unwrap();
        assert!(h == 0.8 || h == 1.5);
    }
}
