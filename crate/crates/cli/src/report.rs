//! Summaries over finished runs: completeness, checksums, rate table and
//! acceptance verdicts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acceptance::{Criterion, ACCEPTANCE_CSV};
use crate::manifest::{RunManifest, CONFIG_NAME, MANIFEST_NAME};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub dir: String,
    pub experiment: Option<String>,
    pub complete: bool,
    /// Missing manifest, unreadable files or checksum mismatches.
    pub problems: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub theta: f64,
    pub gamma_m: f64,
    pub gamma_m_stderr: f64,
    pub gamma_m_tc: f64,
    pub het_eta: f64,
    pub het_one: f64,
    pub gamma_d_bound: f64,
    pub accessible_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunStatus>,
    pub rates: Vec<RateEntry>,
    pub acceptance: Vec<Criterion>,
}

impl Report {
    /// Every run complete with intact outputs.
    pub fn ok(&self) -> bool {
        !self.runs.is_empty() && self.runs.iter().all(|r| r.complete && r.problems.is_empty())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "runs");
        for r in &self.runs {
            let state = match (r.complete, r.problems.is_empty()) {
                (true, true) => "complete",
                (true, false) => "CORRUPT",
                _ => "INCOMPLETE",
            };
            let _ = writeln!(s, "  {:<11} {:<18} {}", state, r.experiment.as_deref().unwrap_or("?"), r.dir);
            for p in &r.problems {
                let _ = writeln!(s, "      {p}");
            }
        }
        if !self.rates.is_empty() {
            let _ = writeln!(s, "\nmeasurement rate vs kick angle (1/us)");
            let _ = writeln!(s, "  {:>8} {:>9} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}", "theta/pi", "gamma_m", "stderr", "G_m*T_c", "het(eta)", "het(1)", "I_acc", "Gamma_d");
            for r in &self.rates {
                let _ = writeln!(
                    s,
                    "  {:>8.3} {:>9.4} {:>8.4} {:>8.1} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                    r.theta / std::f64::consts::PI,
                    r.gamma_m,
                    r.gamma_m_stderr,
                    r.gamma_m_tc,
                    r.het_eta,
                    r.het_one,
                    r.accessible_rate,
                    r.gamma_d_bound
                );
            }
        }
        if !self.acceptance.is_empty() {
            let _ = writeln!(s, "\nacceptance");
            for c in &self.acceptance {
                let _ = writeln!(s, "  {}", c.line());
            }
        }
        s
    }
}

fn is_run_dir(dir: &Path) -> bool {
    dir.join(MANIFEST_NAME).exists() || dir.join(CONFIG_NAME).exists()
}

/// Run directories under `path`: itself if it is one, else its immediate children that are.
fn run_dirs(path: &Path) -> Vec<PathBuf> {
    if is_run_dir(path) {
        return vec![path.to_path_buf()];
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir() && is_run_dir(p)).collect())
        .unwrap_or_default();
    out.sort();
    if out.is_empty() {
        out.push(path.to_path_buf());
    }
    out
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Checks every run under `paths` and gathers their tables.
pub fn report(paths: &[PathBuf]) -> Report {
    let mut runs = Vec::new();
    let mut rates = Vec::new();
    let mut acceptance = Vec::new();
    for dir in paths.iter().flat_map(|p| run_dirs(p)) {
        let mut status = RunStatus { dir: dir.display().to_string(), experiment: None, complete: false, problems: Vec::new() };
        match RunManifest::read(&dir) {
            Err(_) if !dir.join(MANIFEST_NAME).exists() => status.problems.push("no manifest: run incomplete".into()),
            Err(e) => status.problems.push(e.to_string()),
            Ok(m) => {
                status.complete = true;
                status.experiment = Some(m.experiment.clone());
                for (file, why) in m.verify(&dir) {
                    status.problems.push(format!("integrity error in {file}: {why}"));
                }
                if status.problems.is_empty() {
                    if m.output("rates.csv").is_some() {
                        match read_csv::<RateEntry>(&dir.join("rates.csv")) {
                            Ok(rows) => rates.extend(rows),
                            Err(e) => status.problems.push(format!("rates.csv: {e}")),
                        }
                    }
                    if m.output(ACCEPTANCE_CSV).is_some() {
                        match read_csv::<Criterion>(&dir.join(ACCEPTANCE_CSV)) {
                            Ok(rows) => acceptance.extend(rows),
                            Err(e) => status.problems.push(format!("{ACCEPTANCE_CSV}: {e}")),
                        }
                    }
                }
            }
        }
        runs.push(status);
    }
    Report { runs, rates, acceptance }
}
