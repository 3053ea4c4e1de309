//! Experiment configuration files.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! kind = "value"
//! seed = 7
//!
//! [coefficients]
//! key = "bangbang"
//! set = { sigma = 0.3 }
//!
//! [params]
//! mu = "mu0.json"
//! particles = 20000
//! thresholds = [-0.5, 0.0, 0.5]
//!
//! [output]
//! dir = "out/value"
//! ```
//!
//! `[params]` holds the command-line flags of the kind without the leading
//! dashes; every omitted flag takes the value from [`crate::defaults`].
//! Relative file paths are resolved against the directory of the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::output::{CliError, CliResult};

/// Kinds accepted in the `kind` field.
pub const KINDS: [&str; 16] = [
    "w2",
    "bound",
    "rate",
    "calibrate",
    "gauge-check",
    "bp",
    "simulate",
    "value",
    "eps-gap",
    "dpp-check",
    "lip-check",
    "ito-check",
    "hjb-solve",
    "chaos",
    "residual",
    "plot",
];

/// Kinds whose results depend on random draws.
pub const STOCHASTIC: [&str; 9] = ["rate", "calibrate", "simulate", "value", "eps-gap", "dpp-check", "lip-check", "ito-check", "chaos"];

/// Parameters naming input files.
const PATH_KEYS: [&str; 9] = ["mu", "nu", "pairs", "spec", "g", "candidates", "table", "anchor", "grid"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    pub seed: Option<u64>,
    pub coefficients: Option<CoefficientSection>,
    #[serde(default)]
    pub params: toml::Table,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub key: String,
    #[serde(default)]
    pub set: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> CliResult<()> {
        if !KINDS.contains(&self.kind.as_str()) {
            return Err(CliError::Config(format!("unknown experiment kind `{}`", self.kind)));
        }
        let stochastic = STOCHASTIC.contains(&self.kind.as_str()) || (self.kind == "w2" && self.params.contains_key("rho"));
        if stochastic && self.seed.is_none() {
            return Err(CliError::Config(format!("kind `{}` needs a seed", self.kind)));
        }
        for key in ["seed", "coeffs", "set", "out-dir", "out_dir"] {
            if self.params.contains_key(key) {
                return Err(CliError::Config(format!("`{key}` belongs outside [params]")));
            }
        }
        Ok(())
    }

    /// Command-line arguments equivalent to this configuration, with paths
    /// resolved against `base`.
    pub fn to_args(&self, base: &Path) -> CliResult<Vec<OsString>> {
        let mut args: Vec<OsString> = vec!["bellman".into()];
        if let Some(dir) = self.output.as_ref().and_then(|o| o.dir.as_ref()) {
            args.push("--out-dir".into());
            args.push(base.join(dir).into_os_string());
        }
        args.push(self.kind.clone().into());
        if let Some(seed) = self.seed {
            args.push("--seed".into());
            args.push(seed.to_string().into());
        }
        if let Some(c) = &self.coefficients {
            args.push("--coeffs".into());
            args.push(c.key.clone().into());
            for (k, v) in &c.set {
                args.push("--set".into());
                args.push(format!("{k}={}", scalar(k, v)?).into());
            }
        }
        for (k, v) in &self.params {
            let flag = format!("--{}", k.replace('_', "-"));
            match v {
                toml::Value::Boolean(true) => args.push(flag.into()),
                toml::Value::Boolean(false) => {}
                toml::Value::Array(items) => {
                    let parts: CliResult<Vec<String>> = items.iter().map(|i| scalar(k, i)).collect();
                    args.push(flag.into());
                    args.push(parts?.join(",").into());
                }
                toml::Value::String(s) if self.is_path(k) => {
                    args.push(flag.into());
                    args.push(base.join(s).into_os_string());
                }
                other => {
                    args.push(flag.into());
                    args.push(scalar(k, other)?.into());
                }
            }
        }
        Ok(args)
    }

    fn is_path(&self, key: &str) -> bool {
        PATH_KEYS.contains(&key) && !(key == "grid" && self.kind == "hjb-solve")
    }
}

fn scalar(key: &str, v: &toml::Value) -> CliResult<String> {
    match v {
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(format!("{f:?}")),
        toml::Value::String(s) => Ok(s.clone()),
        _ => Err(CliError::Config(format!("`{key}` must be a number, a string or a list of them"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn args_from_config() {
        let cfg = ExperimentConfig::parse(
            "kind = \"value\"\nseed = 3\n[coefficients]\nkey = \"bangbang\"\nset = { sigma = 0.3 }\n[params]\nmu = \"m.json\"\nthresholds = [-0.5, 0.5]\n",
        )
        .unwrap();
        let args: Vec<String> = cfg.to_args(Path::new("/cfg")).unwrap().into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(
            args,
            ["bellman", "value", "--seed", "3", "--coeffs", "bangbang", "--set", "sigma=0.3", "--mu", "/cfg/m.json", "--thresholds", "-0.5,0.5"]
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("kind = \"nope\"").is_err());
        assert!(ExperimentConfig::parse("kind = \"value\"").is_err());
        assert!(ExperimentConfig::parse("kind = \"w2\"\n[params]\nrho = 0.1").is_err());
        assert!(ExperimentConfig::parse("kind = \"w2\"\nextra = 1").is_err());
        assert!(ExperimentConfig::parse("kind = ").is_err());
        assert!(ExperimentConfig::parse("kind = \"w2\"").is_ok());
    }
}
