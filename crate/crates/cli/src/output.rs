//! CSV emission and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Round-trip safe rendering: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Accumulates CSV text; nothing touches the disk until [`Csv::write`].
#[derive(Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn with_header<S: AsRef<str>>(columns: &[S]) -> Self {
        let mut csv = Self::default();
        csv.row(columns);
        csv
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, &self.text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_owned(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

/// What was run, with which configuration, by which build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: crate::Task,
    pub seed: u64,
    pub code_version: String,
    pub config: RunConfig,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(task: crate::Task, config: &RunConfig, outputs: Vec<PathBuf>) -> Self {
        Self {
            task,
            seed: config.seed,
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: config.clone(),
            outputs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| ConfigError::Manifest {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        if manifest.seed != manifest.config.seed {
            return Err(ConfigError::Manifest {
                path: path.to_owned(),
                reason: format!(
                    "seed {} disagrees with config seed {}",
                    manifest.seed, manifest.config.seed
                ),
            });
        }
        if manifest.code_version != env!("CARGO_PKG_VERSION") {
            log::warn!(
                "manifest written by version {}, running {}",
                manifest.code_version,
                env!("CARGO_PKG_VERSION")
            );
        }
        Ok(manifest)
    }
}

/// One-line summary used on stdout.
pub fn summary_line(label: &str, s: &incomedyn::Summary) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{label} = {:.3} ± {:.3} (n = {})",
        s.mean, s.spread, s.count
    );
    out
}
