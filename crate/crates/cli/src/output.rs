//! Errors, run manifests and atomic artifact writes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use bellman_core::Error as CoreError;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or input data.
    Config(String),
    /// A checked property failed; `witness` describes the offending case.
    Invariant { message: String, witness: serde_json::Value },
    /// A solver diverged or left its stability region.
    Numeric(String),
    /// A plot table lacks a required column.
    MissingColumn(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingColumn(_) | CliError::Io(_) => 2,
            CliError::Invariant { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn invariant(message: impl Into<String>, witness: impl Serialize) -> Self {
        CliError::Invariant { message: message.into(), witness: serde_json::to_value(witness).unwrap_or_default() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Invariant { message, .. } => write!(f, "invariant violation: {message}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::MissingColumn(c) => write!(f, "missing column `{c}`"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::AxiomViolation { axiom, ref witness } => {
                CliError::invariant(e.to_string(), serde_json::json!({ "axiom": axiom.to_string(), "witness": witness }))
            }
            CoreError::NonConvergence { .. } | CoreError::NonFiniteState { .. } | CoreError::CflViolation { .. } => {
                CliError::Numeric(e.to_string())
            }
            CoreError::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Named artifact contents, kept in memory until the run finishes.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn json(&mut self, name: impl Into<String>, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    fn digests(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|(n, b)| (n.clone(), hex(&Sha256::digest(b)))).collect()
    }

    /// Writes every artifact to a temporary file in `dir`, then renames them
    /// all into place. Nothing is renamed unless every write succeeded.
    pub fn commit(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::Builder::new().prefix(".bellman-").tempfile_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, dir.join(name)));
        }
        let mut out = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| CliError::Io(e.error))?;
            out.push(path);
        }
        Ok(out)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance of one run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub kind: String,
    /// SHA-256 of the canonical JSON form of the resolved arguments.
    pub config_hash: String,
    pub code_version: String,
    pub wall_time_seconds: f64,
    pub seed: Option<u64>,
    /// Fitted constants: `c_d`, `C_d`, `C_K`, `L` when the run produced them.
    pub constants: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub status: String,
    /// SHA-256 of every other artifact.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(kind: &str, config: &serde_json::Value, seed: Option<u64>) -> Self {
        let canonical = serde_json::to_vec(config).unwrap_or_default();
        Self {
            kind: kind.to_string(),
            config_hash: hex(&Sha256::digest(&canonical)),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: 0.0,
            seed,
            constants: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            status: "ok".into(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn seal(&mut self, artifacts: &Artifacts) {
        self.artifacts = artifacts.digests();
    }
}

/// Output of a command: artifacts plus the manifest entries it fills in.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub constants: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    /// Set when a checked property failed; the artifacts are still written.
    pub violation: Option<CliError>,
    /// One-line summary printed on success.
    pub summary: String,
}

impl Outcome {
    pub fn constant(&mut self, key: &str, value: f64) {
        self.constants.insert(key.into(), value);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.into(), value);
    }

    pub fn fail(&mut self, message: impl Into<String>, witness: impl Serialize) {
        self.violation = Some(CliError::invariant(message, witness));
    }
}
