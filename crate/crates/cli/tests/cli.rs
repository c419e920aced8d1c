use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mpcorr(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mpcorr"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("MPCORR_THREADS", t),
        None => cmd.env_remove("MPCORR_THREADS"),
    };
    cmd.output().expect("spawn mpcorr")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let mut args = vec![
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mpcorr(&args, threads)
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const COSAMP: &str = r#"{"schema_version": 1, "experiment": "cosamp", "parameters": {"trials": 4, "backend": "mp_calibrated"}, "seed": 3}"#;

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "experiment": "spectrum-scan", "parameters": {"snr_db": 3.0}, "seed": 9, "threads": 2}"#,
    );
    let mut seen = Vec::new();
    for (k, threads) in [Some("1"), Some("3"), None].into_iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let o = run(&config, &out, &[], threads);
        assert!(o.status.success(), "{}", stderr(&o));
        seen.push(files(&out));
    }
    assert!(seen[0].contains_key("spectrum.csv") && seen[0].contains_key("manifest.json"));
    assert!(seen.iter().all(|s| *s == seen[0]));
}

#[test]
fn manifest_echoes_config_and_lists_files() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", COSAMP);
    let out = dir.path().join("out");
    assert!(run(&config, &out, &[], None).status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"], "cosamp");
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(manifest["config"]["parameters"]["trials"], 4);
    assert_eq!(manifest["resolved_parameters"]["bins"], 256);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    let listed: Vec<String> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let on_disk: Vec<String> = files(&out).into_keys().collect();
    assert_eq!(listed, on_disk);
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("exact supports"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", COSAMP);
    let same = write_config(&dir, "d.json", &COSAMP.replace("\"seed\": 3", "\"seed\": 8"));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(run(&config, &a, &["--seed", "8"], None).status.success());
    assert!(run(&same, &b, &[], None).status.success());
    assert!(run(&config, &c, &[], None).status.success());
    assert_eq!(files(&a), files(&b));
    assert_ne!(files(&a)["estimate.csv"], files(&c)["estimate.csv"]);
}

fn assert_config_error(text: &str, needle: &str) {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", text);
    let out = dir.path().join("out");
    let o = run(&config, &out, &[], None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains(needle), "expected {needle:?} in {}", stderr(&o));
    assert!(!out.exists(), "no files may be written on a config error");
}

#[test]
fn unknown_experiment_is_rejected() {
    assert_config_error(r#"{"schema_version": 1, "experiment": "fft"}"#, "unknown name");
}

#[test]
fn unknown_parameter_is_rejected() {
    assert_config_error(
        r#"{"schema_version": 1, "experiment": "spg-scaling", "parameters": {"lenghts": [64]}}"#,
        "lenghts",
    );
}

#[test]
fn wrong_parameter_type_names_the_field() {
    assert_config_error(
        r#"{"schema_version": 1, "experiment": "transient-tradeoff", "parameters": {"t_reads_tau": [0.1, "late"]}}"#,
        "t_reads_tau[1]",
    );
}

#[test]
fn out_of_range_parameter_is_rejected() {
    assert_config_error(
        r#"{"schema_version": 1, "experiment": "cosamp", "parameters": {"sparsity": 80}}"#,
        "sparsity",
    );
    assert_config_error(
        r#"{"schema_version": 1, "experiment": "dynamics-rc", "parameters": {"steps_per_tau": 5}}"#,
        "steps_per_tau",
    );
}

#[test]
fn malformed_json_is_rejected() {
    assert_config_error(r#"{"schema_version": 1, "experiment": "#, "config");
    assert_config_error(r#"{"schema_version": 3, "experiment": "mp-demo"}"#, "schema_version");
}

#[test]
fn bad_thread_override_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", COSAMP);
    let out = dir.path().join("out");
    let o = run(&config, &out, &[], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let o = mpcorr(&["run", "--config", "/nonexistent/c.json"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(mpcorr(&["run"], None).status.code(), Some(2));
    assert_eq!(mpcorr(&["verify", "--suite", "slow"], None).status.code(), Some(2));
    assert_eq!(mpcorr(&["frobnicate"], None).status.code(), Some(2));
}

#[test]
fn list_experiments_names_every_experiment() {
    let o = mpcorr(&["list-experiments"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "mp-demo",
        "maxent-check",
        "spg-scaling",
        "dynamics-rc",
        "dynamics-rlc",
        "transient-tradeoff",
        "calibration",
        "spectrum-scan",
        "cosamp",
        "code-comm",
        "energy-report",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn spg_scaling_writes_gain_table() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "experiment": "spg-scaling", "parameters": {"lengths": [64, 256], "train": 200, "test": 400}, "seed": 7}"#,
    );
    let out = dir.path().join("out");
    assert!(run(&config, &out, &[], None).status.success());
    let csv = std::fs::read_to_string(out.join("spg.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("n,spg_mp_db,spg_mac_db"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let gain = |r: &Vec<&str>| r[1].parse::<f64>().unwrap();
    // Four times the length is about 6 dB more gain.
    assert!((gain(&rows[1]) - gain(&rows[0]) - 6.0).abs() < 1.5);
}

#[test]
fn energy_report_reproduces_formula() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "experiment": "energy-report"}"#,
    );
    let out = dir.path().join("out");
    assert!(run(&config, &out, &[], None).status.success());
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("tops_per_watt.json")).unwrap()).unwrap();
    let core = report[0]["tops_w_core"].as_f64().unwrap();
    assert!((core - 2940.0).abs() <= 1.0, "{core}");
}
