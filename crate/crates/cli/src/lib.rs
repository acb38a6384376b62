//! Config-driven experiment runner.
//!
//! `run` parses a JSON configuration, executes the experiment and writes its
//! artifacts to the output directory:
//!
//! - the experiment's CSV tables,
//! - `summary.json`: results with provenance (kind, seed, config hash),
//! - `manifest.json`: the resolved configuration, hash, seed, versions,
//!   thread count and wall time.
//!
//! Only the manifest carries timestamps, so reruns with the same config and
//! seed reproduce every other file byte for byte.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;
use sphere_equilibria::export::write_atomic;

use crate::config::parse_config;
use crate::error::{CliError, CliResult};
use crate::report::json_bytes;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub strict: bool,
}

/// What a run wrote.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub unknown_keys: Vec<String>,
    pub unsaturated: usize,
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    let path = dir.join(name);
    write_atomic(&path, bytes).map_err(CliError::from)?;
    Ok(path)
}

/// Execute one configuration. With `strict`, unsaturated Monte Carlo
/// instances are excluded from averages and, after the artifacts are written,
/// reported as [`CliError::Unsaturated`].
pub fn run(opts: &RunOptions) -> CliResult<RunReport> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let parsed = parse_config(&opts.config, opts.strict)?;
    let mut config = parsed.config;
    if let Some(seed) = opts.seed {
        config.set_seed(seed);
    }
    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads);
    if threads == 0 {
        return Err(CliError::config("threads", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config("threads", e.to_string()))?;
    let output = pool.install(|| experiments::execute(&config, opts.strict))?;

    let hash = config.hash();
    let summary = json!({
        "kind": config.kind(),
        "seed": config.seed(),
        "config_hash": hash,
        "core_version": sphere_equilibria::VERSION,
        "results": output.summary,
    });
    let mut files = Vec::new();
    for a in &output.artifacts {
        files.push(write(&opts.out_dir, &a.name, &a.bytes)?);
    }
    files.push(write(&opts.out_dir, "summary.json", &json_bytes(&summary))?);
    let mut names: Vec<&str> = output.artifacts.iter().map(|a| a.name.as_str()).collect();
    names.push("summary.json");
    let manifest = json!({
        "tool": "sphere-eq",
        "tool_version": VERSION,
        "core_version": sphere_equilibria::VERSION,
        "kind": config.kind(),
        "config": config,
        "config_hash": hash,
        "config_path": opts.config.display().to_string(),
        "seed": config.seed(),
        "threads": threads,
        "strict": opts.strict,
        "unknown_keys": parsed.unknown_keys,
        "unsaturated_instances": output.unsaturated,
        "artifacts": names,
        "started_unix": started_unix,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    files.push(write(&opts.out_dir, "manifest.json", &json_bytes(&manifest))?);
    if opts.strict && output.unsaturated > 0 {
        return Err(CliError::Unsaturated {
            instances: output.unsaturated,
        });
    }
    Ok(RunReport {
        files,
        unknown_keys: parsed.unknown_keys,
        unsaturated: output.unsaturated,
    })
}
