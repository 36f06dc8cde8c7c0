//! Batch front end for `eulertop`: config loading, the `simulate`, `verify`,
//! `derive` and `sweep` commands, and their file output.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a run that was
//! stopped by a guard or a check that failed.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{derive, simulate, sweep, verify};
pub use config::{load, ConfigError, Loaded, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        1
    }
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Load a config and apply `overrides`; the result is what the effective
/// config file records.
pub fn load_with(path: &Path, overrides: &Overrides) -> Result<Loaded, ConfigError> {
    let mut loaded = load(path)?;
    let cfg = &mut loaded.config;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output.dir = out.clone();
    }
    if let (Some(w), Some(sweep)) = (overrides.workers, cfg.sweep.as_mut()) {
        sweep.workers = w;
    }
    Ok(loaded)
}

/// Parse a comma-separated list of numbers; an empty string is an empty list.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: `{s}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(
            parse_values("1, 0.1,0.01,0").unwrap(),
            vec![1.0, 0.1, 0.01, 0.0]
        );
        assert!(parse_values("").unwrap().is_empty());
        assert!(parse_values("1,x").is_err());
    }
}
