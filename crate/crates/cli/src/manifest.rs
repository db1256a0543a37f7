use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::settings::Settings;

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.csv";
pub const REPORTS: &str = "reports.jsonl";
pub const CONFIG: &str = "config.toml";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    /// SHA-256 of the resolved config as written to `config.toml`.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub versions: serde_json::Value,
    pub rng: serde_json::Value,
    /// Command line that reproduces this run from the output directory.
    pub rerun: String,
    pub status: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Output directory of one command plus the bookkeeping for its manifest.
pub struct Run {
    pub command: &'static str,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub settings: Settings,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &'static str, argv: Vec<String>, seed: Option<u64>, out: PathBuf, settings: Settings) -> Result<Self> {
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Self {
            command,
            argv,
            seed,
            out,
            settings,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn input(&mut self, path: impl AsRef<Path>) {
        self.inputs.push(path.as_ref().to_path_buf());
    }

    /// Registers an artifact written by the command and returns its path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        if !self.outputs.contains(&p) {
            self.outputs.push(p.clone());
        }
        p
    }

    pub fn write_results<S: Serialize>(&mut self, rows: &[S]) -> Result<()> {
        let path = self.output(RESULTS);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn write_reports<S: Serialize>(&mut self, reports: &[S]) -> Result<()> {
        let path = self.output(REPORTS);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for r in reports {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Writes `config.toml` and `manifest.json`; called last, also on check failures.
    pub fn finish(mut self, status: &str) -> Result<()> {
        let config_text = self.settings.to_toml();
        let config_path = self.output(CONFIG);
        std::fs::write(&config_path, &config_text).map_err(|e| Error::io(&config_path, e))?;
        let seed = self.seed.map(|s| format!(" --seed {s}")).unwrap_or_default();
        let version = env!("CARGO_PKG_VERSION");
        let manifest = Manifest {
            command: self.command.to_string(),
            argv: self.argv.clone(),
            seed: self.seed,
            config_hash: sha256_hex(config_text.as_bytes()),
            config: serde_json::to_value(&self.settings)?,
            inputs: self.inputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?,
            versions: serde_json::json!({
                "sdm-suite": version,
                "sdm-core": version,
                "sdm-nn": version,
                "sdm-gan": version,
            }),
            rng: serde_json::json!({
                "algorithm": "ChaCha8",
                "trainer_streams": sdm_gan::trainer::RNG_STREAMS,
            }),
            rerun: format!("sdm {} --config {}{seed} --out {}", self.command, config_path.display(), self.out.display()),
            status: status.to_string(),
        };
        let path = self.path(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}
