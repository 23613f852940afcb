//! Evaluates every acceptance criterion on the `paper` preset and prints one
//! line per criterion. Fails if any criterion outside `KNOWN_UNATTAINABLE` fails.
//!
//! `FOCKWATCH_ACCEPTANCE_ONLY=3,5` restricts the run to some criteria.

use std::process::ExitCode;

use fockwatch_cli::acceptance::{run_acceptance, KNOWN_UNATTAINABLE};
use fockwatch_cli::config::{validate_config_with, Overrides, Preset};

const SEED: u64 = 20260101;

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let overrides = Overrides { seed: Some(SEED), workers: Some(0), output_dir: Some(dir.path().to_path_buf()), preset: Some(Preset::Paper) };
    let config = validate_config_with("", &overrides).expect("paper preset is valid");
    let only: Vec<u8> = std::env::var("FOCKWATCH_ACCEPTANCE_ONLY")
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let run = match run_acceptance(&config, &only) {
        Ok(run) => run,
        Err(e) => {
            println!("acceptance run failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut unexpected = Vec::new();
    for c in &run.criteria {
        let note = if !c.passed && KNOWN_UNATTAINABLE.contains(&c.id) { "  (known unattainable, not counted)" } else { "" };
        println!("{}{note}", c.line());
        if !c.passed && !KNOWN_UNATTAINABLE.contains(&c.id) {
            unexpected.push(c.id);
        }
    }
    let passed = run.criteria.iter().filter(|c| c.passed).count();
    println!("acceptance: {passed}/{} criteria passed", run.criteria.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
