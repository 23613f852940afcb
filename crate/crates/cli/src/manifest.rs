//! Output files with checksums, and the manifest that marks a run complete.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{CliError, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CONFIG_NAME: &str = "config.toml";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: String,
    /// SHA-256 of the canonical config text.
    pub config_hash: String,
    pub code_version: String,
    pub integrator: String,
    pub seed: u64,
    pub workers: usize,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }

    /// Output files whose contents no longer match their checksum, with the reason.
    pub fn verify(&self, dir: &Path) -> Vec<(String, String)> {
        let mut bad = Vec::new();
        for f in &self.outputs {
            match fs::read(dir.join(&f.path)) {
                Ok(bytes) => {
                    let got = sha256_hex(&bytes);
                    if got != f.sha256 {
                        bad.push((f.path.clone(), format!("checksum {got} differs from recorded {}", f.sha256)));
                    }
                }
                Err(e) => bad.push((f.path.clone(), e.to_string())),
            }
        }
        bad
    }

    pub fn output(&self, name: &str) -> Option<&OutputFile> {
        self.outputs.iter().find(|f| f.path == name)
    }
}

/// Writes the files of one run and remembers their checksums. Each file has a
/// single writer; the manifest goes last, through a rename.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<OutputFile>,
    timings: Vec<StageTiming>,
}

impl OutputSet {
    /// Prepares `dir`, removing any previous manifest so an interrupted run leaves none.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let manifest = dir.join(MANIFEST_NAME);
        if manifest.exists() {
            fs::remove_file(&manifest).map_err(|e| CliError::io(&manifest, e))?;
        }
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), timings: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if self.files.iter().any(|f| f.path == name) {
            return Err(CliError::Format(format!("output {name} written twice")));
        }
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(OutputFile { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// One CSV row per item, header from the field names.
    pub fn csv<S: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = S>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.1} s");
        self.timings.push(StageTiming { stage: stage.to_string(), seconds });
        Ok(out)
    }

    /// Writes the manifest (temp file, then rename) and returns it.
    pub fn finish(self, config: &RunConfig, experiment: &str, integrator: &str) -> Result<RunManifest> {
        let manifest = RunManifest {
            schema_version: config.schema_version,
            experiment: experiment.to_string(),
            config_hash: sha256_hex(config.to_toml().as_bytes()),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            integrator: integrator.to_string(),
            seed: config.seed,
            workers: config.worker_count(),
            timings: self.timings,
            outputs: self.files,
        };
        let tmp = self.dir.join(format!("{MANIFEST_NAME}.partial"));
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Format(e.to_string()))? + "\n";
        fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        let path = self.dir.join(MANIFEST_NAME);
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
