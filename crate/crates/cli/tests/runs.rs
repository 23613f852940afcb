use std::fs;
use std::path::Path;
use std::process::Command;

use fockwatch_cli::config::{Experiment, Preset, RunConfig};
use fockwatch_cli::experiments;
use fockwatch_cli::manifest::{RunManifest, MANIFEST_NAME};
use fockwatch_cli::report::report;

fn fast(experiment: Experiment, dir: &Path, workers: usize) -> RunConfig {
    RunConfig { seed: 99, workers, experiment, output_dir: dir.to_path_buf(), ..RunConfig::preset(Preset::Fast) }
}

#[test]
fn manifest_lists_every_output_with_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let m = experiments::run(&fast(Experiment::FockFluorescence, dir.path(), 1)).unwrap();
    assert_eq!(m, RunManifest::read(dir.path()).unwrap());
    assert!(m.output("fluorescence.csv").is_some());
    assert!(m.output("config.toml").is_some());
    assert!(m.verify(dir.path()).is_empty());
    assert!(!dir.path().join(format!("{MANIFEST_NAME}.partial")).exists());
}

#[test]
fn report_flags_tampering_and_missing_manifests() {
    let root = tempfile::tempdir().unwrap();
    let good = root.path().join("good");
    let bad = root.path().join("bad");
    let cut = root.path().join("cut");
    for d in [&good, &bad, &cut] {
        experiments::run(&fast(Experiment::FockFluorescence, d, 1)).unwrap();
    }
    assert!(report(&[good.clone()]).ok());

    let mut text = fs::read_to_string(bad.join("fluorescence.csv")).unwrap();
    text.push_str("0,0,0,0,0,0,0\n");
    fs::write(bad.join("fluorescence.csv"), text).unwrap();
    fs::remove_file(cut.join(MANIFEST_NAME)).unwrap();

    let r = report(&[root.path().to_path_buf()]);
    assert!(!r.ok());
    assert_eq!(r.runs.len(), 3);
    let by_dir = |d: &Path| r.runs.iter().find(|s| s.dir == d.display().to_string()).unwrap();
    assert!(by_dir(&good).problems.is_empty());
    assert!(by_dir(&bad).problems.iter().any(|p| p.contains("integrity error in fluorescence.csv")));
    assert!(!by_dir(&cut).complete);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    for e in [Experiment::Rates, Experiment::ConfidenceTime] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = experiments::run(&fast(e, a.path(), 1)).unwrap();
        let mb = experiments::run(&fast(e, b.path(), 3)).unwrap();
        for (x, y) in ma.outputs.iter().zip(&mb.outputs) {
            if x.path.ends_with(".csv") {
                assert_eq!(x, y, "{} differs for {}", x.path, e.name());
            }
        }
    }
}

#[test]
fn rate_table_is_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let c = fast(Experiment::Rates, dir.path(), 0);
    experiments::run(&c).unwrap();
    let r = report(&[dir.path().to_path_buf()]);
    assert!(r.ok());
    assert_eq!(r.rates.len(), c.rates.thetas_over_pi.len());
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["rates"].as_array().unwrap().len(), r.rates.len());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fockwatch");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[params]\neta = 1.3\n").unwrap();

    let out = Command::new(bin).args(["validate", "--config"]).arg(&bad).env_remove("FOCKWATCH_SEED").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.eta"));

    let out = Command::new(bin).args(["validate", "--preset", "fast", "--seed", "4"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed = 4"));

    let run_dir = dir.path().join("run");
    let out = Command::new(bin)
        .args(["run", "--preset", "fast", "--experiment", "dephasing", "--output-dir"])
        .arg(&run_dir)
        .env("FOCKWATCH_SEED", "8")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = Command::new(bin).arg("report").arg(&run_dir).output().unwrap();
    assert!(out.status.success());
    fs::remove_file(run_dir.join(MANIFEST_NAME)).unwrap();
    let out = Command::new(bin).arg("report").arg(&run_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
