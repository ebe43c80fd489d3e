use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "name": "tiny",
  "model": {
    "id": "random_walk_break",
    "fixed": {"d1": 0.4, "d2": 0.5, "sigma1": 1, "sigma2": 2, "tau": 140},
    "free": [{"name": "d1", "bounds": [0, 1], "true": 0.4}, {"name": "d2", "bounds": [0, 1], "true": 0.5}]
  },
  "data": {"t_emp": 200},
  "simulation": {"replications": 4, "t_sim": 200},
  "method": {"use": "kde", "mdn": {"lag": 2, "hidden": [8], "components": 2, "train": {"epochs": 1}}},
  "mcmc": {"iterations": 12, "set_size": 4, "burn_in": 4, "restarts": 2},
  "report": {"deltas": [{"name": "delta_d", "after": "d2", "before": "d1"}]},
  "seeds": {"master": 5}
}"#;

fn simest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simest")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_ok(args: &[&str]) -> Output {
    let out = simest(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn missing_bounds_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &TINY.replace(r#""bounds": [0, 1], "true": 0.5"#, r#""true": 0.5"#));
    let out = simest(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bounds") && msg.contains("line"), "{msg}");
}

#[test]
fn unknown_model_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &TINY.replace(r#""tau": 140"#, r#""tau": 140, "tau2": 1"#));
    let out = simest(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    }
    let fa = files(&a);
    assert_eq!(fa, files(&b));
    let series = String::from_utf8(fa.iter().find(|f| f.0 == "series.csv").unwrap().1.clone()).unwrap();
    assert_eq!(series.lines().count(), 201);
    let meta: serde_json::Value = serde_json::from_slice(&fa.iter().find(|f| f.0 == "series.csv.meta.json").unwrap().1).unwrap();
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(meta["seeds"]["master"], 5);
}

#[test]
fn shipped_set_one_config_gives_a_thousand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/bh_set1.json");
    run_ok(&["simulate", "--config", cfg, "--out", dir.path().to_str().unwrap()]);
    let text = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(text.lines().count(), 1001);
}

#[test]
fn every_shipped_config_parses() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(&root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            simest_cli::config::RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
    for suite in ["full.json", "desk.json"] {
        let s = simest_cli::commands::Suite::load(&root.join("suites").join(suite)).unwrap();
        for e in &s.experiments {
            assert!(e.exists(), "{}", e.display());
        }
    }
}

#[test]
fn estimate_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["estimate", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    }
    assert_eq!(files(&a), files(&b));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    for key in ["mu_posterior", "sigma_posterior", "sigma_sampling", "LS"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    assert!(summary["LS"].as_f64().unwrap().is_finite());
    let trace = std::fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(trace.starts_with("restart,s,accepted,n,d1,d2,log_post\n"));
    assert_eq!(trace.lines().count(), 1 + 2 * 12);
    let post = std::fs::read_to_string(a.join("posterior.csv")).unwrap();
    assert_eq!(post.lines().count(), 1 + 2 * 8 * 4);

    // a different seed changes the outputs
    let c = dir.path().join("c");
    run_ok(&["estimate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(std::fs::read(a.join("posterior.csv")).unwrap(), std::fs::read(c.join("posterior.csv")).unwrap());
}

#[test]
fn mdn_estimate_via_method_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY);
    let out = dir.path().join("m");
    run_ok(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--method", "mdn", "--jobs", "1"]);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["method"], "mdn");
    assert!(summary["deltas"]["delta_d"]["posterior"].is_number());
}

#[test]
fn lag_scan_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY);
    let out = dir.path().join("l");
    let o = run_ok(&["lag-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--lags", "1,2"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("TV(L=1, L=2)"));
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.starts_with("L,y,density\n"));
    assert_eq!(curves.lines().count(), 1 + 2 * 2001);
    let tv = std::fs::read_to_string(out.join("distances.csv")).unwrap();
    assert_eq!(tv.lines().count(), 2);
}

#[test]
fn benchmark_single_pair_and_precomputed_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TINY.replace(r#""epochs": 1"#, r#""epochs": 1, "batch_size": 64"#);
    write(dir.path(), "c.json", &cfg);
    let suite = write(dir.path(), "suite.json", r#"{"name": "one", "experiments": ["c.json"]}"#);
    let out = dir.path().join("bench");
    run_ok(&["benchmark", "--config", suite.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let pairs = std::fs::read_to_string(out.join("pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 2, "{pairs}");
    assert!(pairs.starts_with("experiment,LS_mdn,LS_kde,status\n"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let table = std::fs::read_to_string(out.join("table_tiny.csv")).unwrap();
    assert!(table.starts_with("method,statistic,d1,d2,delta_d,LS\n"));
    assert_eq!(table.lines().count(), 1 + 1 + 2 * 4);

    // precomputed mode reads the summaries; removing the traces proves nothing reran
    std::fs::remove_file(out.join("tiny/mdn/trace.csv")).unwrap();
    std::fs::remove_file(out.join("tiny/kde/trace.csv")).unwrap();
    let again = dir.path().join("again");
    std::fs::create_dir_all(&again).unwrap();
    run_ok(&["benchmark", "--config", suite.to_str().unwrap(), "--out", out.to_str().unwrap(), "--precomputed"]);
    assert!(!out.join("tiny/mdn/trace.csv").exists());
    assert_eq!(std::fs::read_to_string(out.join("pairs.csv")).unwrap(), pairs);

    let missing = simest(&["benchmark", "--config", suite.to_str().unwrap(), "--out", again.to_str().unwrap(), "--precomputed"]);
    assert_eq!(missing.status.code(), Some(1));
    let pairs = std::fs::read_to_string(again.join("pairs.csv")).unwrap();
    assert!(pairs.contains("failed"));
}
