//! Scenario runner: a TOML file in, JSON/CSV artifacts and a manifest out.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{load_config, parse_config, Kind, ScenarioConfig};
pub use error::CliError;
pub use run::{Check, Outcome};

use output::{sha256_hex, RunManifest, MANIFEST_FILE};

pub const ECHO_FILE: &str = "config.echo.toml";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct RunResult {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub failed: Vec<Check>,
    pub manifest: RunManifest,
}

pub fn default_out_dir(kind: Kind) -> PathBuf {
    Path::new("out").join(kind.as_str())
}

/// Loads the config, runs it under the thread budget and writes the
/// artifacts plus the manifest. Scientific failures still write
/// everything and come back as exit code 2.
pub fn execute(kind: Kind, opts: &RunOptions) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let mut cfg = load_config(&opts.config)?;
    if cfg.kind != kind {
        return Err(CliError::invalid(
            "kind",
            format!("config declares {} but the subcommand is {kind}", cfg.kind),
        ));
    }
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    let threads = match opts.threads {
        Some(0) => return Err(CliError::invalid("--threads", "must be at least 1")),
        Some(n) => n,
        None => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let echo = config::echo(&cfg)?;
    let mut outcome = pool.install(|| run::run(&cfg))?;
    outcome.artifacts.text(ECHO_FILE, echo.clone());

    let out_dir = opts.out_dir.clone().unwrap_or_else(|| default_out_dir(kind));
    let outputs = outcome.artifacts.write_all(&out_dir)?;
    let failed: Vec<Check> = outcome.failed().into_iter().cloned().collect();
    let exit_code = if failed.is_empty() { 0 } else { 2 };
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind,
        seed: cfg.seed,
        threads,
        exit_code,
        failed_checks: failed.iter().map(|c| c.name.clone()).collect(),
        config_sha256: sha256_hex(echo.as_bytes()),
        config: echo,
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(RunResult {
        exit_code,
        out_dir,
        failed,
        manifest,
    })
}
