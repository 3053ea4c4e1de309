//! Command-line driver: experiment configuration, dispatch to the library,
//! run manifests and plot data.

pub mod cli;
pub mod commands;
pub mod config;
pub mod defaults;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use cli::{Cli, Command};
use config::ExperimentConfig;
use output::{Artifacts, CliError, CliResult, RunManifest};

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match resolve(cli).and_then(|(cmd, dir)| run(&cmd, &dir)) {
        Ok(paths) => {
            let mut out = std::io::stdout().lock();
            for p in paths {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Invariant { witness, .. } = &e {
                eprintln!("{}", serde_json::to_string_pretty(witness).unwrap_or_default());
            }
            e.exit_code()
        }
    }
}

/// Expands `run <config>` into the command it describes and picks the
/// output directory: flag, then configuration, then environment, then `.`.
fn resolve(cli: Cli) -> CliResult<(Command, PathBuf)> {
    let (cmd, dir) = match cli.command {
        Command::Run(r) => {
            let cfg = ExperimentConfig::load(&r.config)?;
            let base = r.config.parent().map(Path::to_path_buf).unwrap_or_default();
            let inner = Cli::try_parse_from(cfg.to_args(&base)?).map_err(|e| CliError::Config(e.to_string()))?;
            (inner.command, cli.out_dir.or(inner.out_dir))
        }
        other => (other, cli.out_dir),
    };
    let dir = dir
        .or_else(|| std::env::var_os(defaults::OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(defaults::OUT_DIR));
    Ok((cmd, dir))
}

/// Runs one command and writes its artifacts and manifest into `dir`.
///
/// Configuration and numeric errors write nothing. A failed invariant
/// writes the artifacts, the manifest and `witness.json`, then reports the
/// violation.
pub fn run(cmd: &Command, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let config = serde_json::to_value(cmd).map_err(|e| CliError::Config(e.to_string()))?;
    let mut manifest = RunManifest::new(cmd.name(), &config, cmd.seed());
    let started = Instant::now();
    let result = commands::execute(cmd);
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    let outcome = match result {
        Ok(o) => o,
        Err(e @ CliError::Invariant { .. }) => {
            let CliError::Invariant { witness, .. } = &e else { unreachable!() };
            let mut arts = Artifacts::default();
            arts.json("witness.json", witness)?;
            manifest.status = "violation".into();
            manifest.seal(&arts);
            arts.json("manifest.json", &manifest)?;
            arts.commit(dir)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let mut arts = outcome.artifacts;
    manifest.constants = outcome.constants;
    manifest.tolerances = outcome.tolerances;
    if let Some(CliError::Invariant { witness, .. }) = &outcome.violation {
        arts.json("witness.json", witness)?;
        manifest.status = "violation".into();
    }
    manifest.seal(&arts);
    arts.json("manifest.json", &manifest)?;
    let paths = arts.commit(dir)?;
    if let Some(v) = outcome.violation {
        return Err(v);
    }
    if !outcome.summary.is_empty() {
        println!("{}: {}", cmd.name(), outcome.summary);
    }
    Ok(paths)
}
