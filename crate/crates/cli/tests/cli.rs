use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndct_core::battery::{OcvCurve, Params, State};
use ndct_core::bayesopt::SearchBox;
use ndct_core::likelihood::{log_likelihood, LikelihoodConfig};
use ndct_core::simulator::{Dataset, NoiseVariances};
use serde_json::{json, Value};

fn ndct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndct"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, noise: (f64, f64)) -> PathBuf {
    let cfg = json!({
        "noise": { "r_v": noise.0, "r_t": noise.1 },
        "seed": 5,
        "datasets": [
            { "name": "hot", "profile": { "synth": "pulse", "duration_s": 300 }, "t_amb": 313.0 },
            { "name": "cold", "profile": { "synth": "random-walk", "duration_s": 300, "seed": 2 }, "t_amb": 283.0 },
            { "name": "room", "profile": { "synth": "random-walk", "duration_s": 300, "seed": 3 }, "t_amb": 298.0, "seed": 99 }
        ],
        "schedule": {
            "iterations_per_round": 20,
            "n_rounds": 1,
            "n_initial": 10,
            "tau": 8,
            "candidates": 256,
            "local_candidates": 64,
            "polish_evals": 10,
            "hyper_search": { "starts": 4, "local_searches": 1, "evals_per_search": 40 }
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn write_truth(dir: &Path) -> PathBuf {
    let path = dir.join("truth.json");
    std::fs::write(
        &path,
        serde_json::to_string(&Params::REFERENCE_CELL).unwrap(),
    )
    .unwrap();
    path
}

fn load_dataset(path: &Path, noise: NoiseVariances, t_amb: f64) -> Dataset {
    Dataset::read_csv(
        std::fs::File::open(path).unwrap(),
        noise,
        State::at_rest(1.0, t_amb),
    )
    .unwrap()
}

#[test]
fn generate_writes_datasets_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-4, 1e-3));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        ok(&ndct(&[
            "generate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    let manifest = read_json(&out_a.join("manifest.json"));
    let entries = manifest["datasets"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[0]["noise_seed"], 6);
    assert_eq!(entries[1]["noise_seed"], 7);
    assert_eq!(entries[2]["noise_seed"], 99);
    for name in ["hot", "cold", "room"] {
        let a = std::fs::read(out_a.join(format!("{name}.csv"))).unwrap();
        let b = std::fs::read(out_b.join(format!("{name}.csv"))).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        let (header, rows) = read_rows(&out_a.join(format!("{name}.csv")));
        assert_eq!(header, ["time_s", "current_A", "T_amb_K", "y_V", "y_T"]);
        assert_eq!(rows.len(), 300);
        assert_eq!(rows[0][0], 1.0);
        assert!(rows.iter().all(|r| r[1] <= 0.0 && r[1] >= -4.0));
    }
    let (_, hot) = read_rows(&out_a.join("hot.csv"));
    assert!(hot.iter().all(|r| r[2] == 313.0));
}

#[test]
fn different_seed_changes_noise_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-4, 1e-3));
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    ok(&ndct(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]));
    ok(&ndct(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "6",
    ]));
    let (_, a) = read_rows(&out_a.join("hot.csv"));
    let (_, b) = read_rows(&out_b.join("hot.csv"));
    assert!(a.iter().zip(&b).all(|(x, y)| x[1] == y[1]));
    assert!(a.iter().zip(&b).any(|(x, y)| x[3] != y[3]));
    // the explicitly seeded dataset is unaffected by the master seed
    assert_eq!(
        std::fs::read(out_a.join("room.csv")).unwrap(),
        std::fs::read(out_b.join("room.csv")).unwrap()
    );
}

#[test]
fn missing_profile_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "datasets": [{ "name": "udds", "profile": { "path": "nowhere/udds.csv" }, "t_amb": 298.0 }]
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = ndct(&["generate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nowhere/udds.csv"), "{err}");
}

#[test]
fn malformed_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, r#"{ "schedule": { "n_rounds": "four" } }"#).unwrap();
    let out = ndct(&["generate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = ndct(&[
        "generate",
        "--config",
        dir.path().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identify_writes_result_trace_and_regions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-4, 1e-3));
    let out = dir.path().join("run");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    ok(&ndct(&["generate", "--config", cfg_s, "--out", out_s]));
    ok(&ndct(&["identify", "--config", cfg_s, "--out", out_s]));

    let result = read_json(&out.join("result.json"));
    let theta: Vec<f64> = Params::NAMES
        .iter()
        .map(|n| result["theta_hat"][n].as_f64().unwrap())
        .collect();
    let search_box = SearchBox::cell_default();
    assert!(theta.iter().all(|v| v.is_finite()));
    assert!(search_box.contains(&theta));
    assert_eq!(result["evaluations"], 20);
    assert_eq!(result["seed"], 5);

    let (header, rows) = read_rows(&out.join("trace.csv"));
    assert_eq!(header.len(), 2 + 10 + 2);
    assert_eq!(&header[..3], ["iteration", "round", "C_b"]);
    assert_eq!(rows.len(), 20);
    let inc = col(&header, "incumbent_L");
    assert!(rows.windows(2).all(|w| w[1][inc] >= w[0][inc]));
    let best = rows
        .iter()
        .map(|r| r[col(&header, "L")])
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(rows[19][inc], best);
    assert_eq!(result["log_likelihood"].as_f64().unwrap(), best);

    let (_, regions) = read_rows(&out.join("regions.csv"));
    assert_eq!(regions.len(), 1);
}

#[test]
fn shrinking_adds_one_region_per_round_unless_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-4, 1e-3));
    let data = dir.path().join("data");
    let (cfg_s, data_s) = (cfg.to_str().unwrap(), data.to_str().unwrap());
    ok(&ndct(&["generate", "--config", cfg_s, "--out", data_s]));
    let manifest = data.join("manifest.json");
    let manifest_s = manifest.to_str().unwrap();

    let shrink = dir.path().join("shrink");
    ok(&ndct(&[
        "identify",
        "--config",
        cfg_s,
        "--out",
        shrink.to_str().unwrap(),
        "--data",
        manifest_s,
        "--rounds",
        "3",
    ]));
    let (header, regions) = read_rows(&shrink.join("regions.csv"));
    assert_eq!(regions.len(), 3);
    assert_eq!(header[0], "round");
    assert!(header.contains(&"A_9_9".to_string()) && header.contains(&"hi_kappa2".to_string()));
    let (lo, hi) = (col(&header, "lo_R_o"), col(&header, "hi_R_o"));
    assert!(regions[2][hi] - regions[2][lo] < regions[0][hi] - regions[0][lo]);

    let fixed = dir.path().join("fixed");
    ok(&ndct(&[
        "identify",
        "--config",
        cfg_s,
        "--out",
        fixed.to_str().unwrap(),
        "--data",
        manifest_s,
        "--rounds",
        "3",
        "--no-shrink",
    ]));
    let (_, regions) = read_rows(&fixed.join("regions.csv"));
    assert_eq!(regions.len(), 1);
    let (_, trace) = read_rows(&fixed.join("trace.csv"));
    assert_eq!(trace.len(), 60);
}

#[test]
fn evaluate_at_truth_matches_the_likelihood() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-4, 1e-3));
    let out = dir.path().join("data");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    ok(&ndct(&["generate", "--config", cfg_s, "--out", out_s]));
    let truth = write_truth(dir.path());
    let eval = dir.path().join("eval");
    let manifest = out.join("manifest.json");
    ok(&ndct(&[
        "evaluate",
        "--config",
        cfg_s,
        "--out",
        eval.to_str().unwrap(),
        "--theta",
        truth.to_str().unwrap(),
        "--data",
        manifest.to_str().unwrap(),
    ]));
    let summary = read_json(&eval.join("summary.json"));

    let noise = NoiseVariances {
        r_v: 1e-4,
        r_t: 1e-3,
    };
    let data: Vec<Dataset> = [("hot", 313.0), ("cold", 283.0), ("room", 298.0)]
        .iter()
        .map(|(n, t)| load_dataset(&out.join(format!("{n}.csv")), noise, *t))
        .collect();
    let l = log_likelihood(
        &Params::REFERENCE_CELL,
        &OcvCurve::nca_default(),
        &data,
        &LikelihoodConfig::default(),
    )
    .unwrap();
    assert_eq!(summary["log_likelihood"].as_f64().unwrap(), l);
    assert!(summary["max_abs_voltage_error"].as_f64().unwrap() <= 5.0 * 1e-4f64.sqrt());
    assert!(summary["max_abs_temperature_error"].as_f64().unwrap() <= 5.0 * 1e-3f64.sqrt());

    let (header, rows) = read_rows(&eval.join("hot_prediction.csv"));
    assert_eq!(
        header,
        [
            "time_s",
            "current_A",
            "T_amb_K",
            "y_V",
            "y_T",
            "V_pred",
            "T_pred",
            "err_V",
            "err_T"
        ]
    );
    assert_eq!(rows.len(), 300);
    for r in &rows {
        assert!((r[3] - r[5] - r[7]).abs() < 1e-12);
    }
}

#[test]
fn evaluate_on_noiseless_data_has_no_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-24, 1e-24));
    let out = dir.path().join("data");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    ok(&ndct(&["generate", "--config", cfg_s, "--out", out_s]));
    let truth = write_truth(dir.path());
    let eval = dir.path().join("eval");
    // a bare CSV is accepted in place of the manifest
    ok(&ndct(&[
        "evaluate",
        "--config",
        cfg_s,
        "--out",
        eval.to_str().unwrap(),
        "--theta",
        truth.to_str().unwrap(),
        "--data",
        out.join("cold.csv").to_str().unwrap(),
    ]));
    let summary = read_json(&eval.join("summary.json"));
    assert!(summary["max_abs_voltage_error"].as_f64().unwrap() < 1e-9);
    assert!(summary["max_abs_temperature_error"].as_f64().unwrap() < 1e-9);
}

#[test]
fn evaluate_accepts_an_identify_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), (1e-4, 1e-3));
    let out = dir.path().join("run");
    let (cfg_s, out_s) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    ok(&ndct(&["generate", "--config", cfg_s, "--out", out_s]));
    ok(&ndct(&[
        "identify",
        "--config",
        cfg_s,
        "--out",
        out_s,
        "--iterations",
        "12",
    ]));
    let eval = dir.path().join("eval");
    ok(&ndct(&[
        "evaluate",
        "--config",
        cfg_s,
        "--out",
        eval.to_str().unwrap(),
        "--theta",
        out.join("result.json").to_str().unwrap(),
        "--data",
        out.join("manifest.json").to_str().unwrap(),
    ]));
    let result = read_json(&out.join("result.json"));
    let summary = read_json(&eval.join("summary.json"));
    let rel = (summary["log_likelihood"].as_f64().unwrap()
        / result["log_likelihood"].as_f64().unwrap()
        - 1.0)
        .abs();
    // identification integrates with fewer substeps than evaluation
    assert!(rel < 1e-3, "{rel}");
}

#[test]
fn simulate_writes_consistent_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_truth(dir.path());
    let out = dir.path().join("traj.csv");
    ok(&ndct(&[
        "simulate",
        "--theta",
        truth.to_str().unwrap(),
        "--synth",
        "pulse",
        "--duration",
        "180",
        "--t-amb",
        "298",
        "--out",
        out.to_str().unwrap(),
    ]));
    let (header, rows) = read_rows(&out);
    assert_eq!(header, ["time_s", "V_b", "V_s", "T_c", "T_s", "SoC", "V"]);
    assert_eq!(rows.len(), 181);
    assert_eq!(rows[0][..5], [0.0, 1.0, 1.0, 298.0, 298.0]);
    let p = Params::REFERENCE_CELL;
    for r in &rows {
        let soc = (p.c_b * r[1] + p.c_s * r[2]) / (p.c_b + p.c_s);
        assert!((r[5] - soc).abs() < 1e-12);
    }
    // 60 s discharge at 4 A removes 240 C of charge
    let charge_lost = (1.0 - rows[60][5]) * (p.c_b + p.c_s);
    assert!((charge_lost - 240.0).abs() < 1e-6, "{charge_lost}");
    // the second block is a rest, so charge is conserved through it
    assert!((rows[120][5] - rows[60][5]).abs() < 1e-12);
    assert!(rows[60][3] > 298.0);
}

#[test]
fn simulate_rest_at_ambient_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_truth(dir.path());
    let profile = dir.path().join("profile.csv");
    // scaled to [0, 1e-300] A, numerically no current at all
    std::fs::write(&profile, "time_s,value\n0,0\n59,1\n").unwrap();
    let out = dir.path().join("sim");
    ok(&ndct(&[
        "simulate",
        "--theta",
        truth.to_str().unwrap(),
        "--profile",
        profile.to_str().unwrap(),
        "--scale-max",
        "1e-300",
        "--x0",
        "0.6,0.6,290,290",
        "--t-amb",
        "290",
        "--out",
        out.to_str().unwrap(),
    ]));
    let (_, rows) = read_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 61);
    for r in &rows {
        assert_eq!(r[1..5], [0.6, 0.6, 290.0, 290.0]);
    }
}

#[test]
fn simulate_needs_a_profile() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_truth(dir.path());
    let out = ndct(&[
        "simulate",
        "--theta",
        truth.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
