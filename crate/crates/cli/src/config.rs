//! Run configuration: defaults, a flat `key = value` file, and overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use incomedyn::ensemble::EnsembleOptions;
use incomedyn::{
    ConservationMode, Execution, IncomeLadder, Model, NoiseSampling, SimulationConfig, Spread,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("bad manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub delta_r: f64,
    pub s_unit: f64,
    pub gamma: f64,
    pub dt: f64,
    pub steps: usize,
    pub realizations: usize,
    pub mu0: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub mu_points: usize,
    pub conserve_income: bool,
    pub positivity_eps: f64,
    pub seed: u64,
    pub stride: usize,
    pub burn_in: usize,
    pub sampling: NoiseSampling,
    pub spread: Spread,
    pub execution: Execution,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        Self {
            n: 10,
            delta_r: 10.0,
            s_unit: 1.0,
            gamma: sim.gamma,
            dt: sim.dt,
            steps: sim.steps,
            realizations: 50,
            mu0: 27.0,
            mu_lo: 20.4,
            mu_hi: 31.5,
            mu_points: 100,
            conserve_income: false,
            positivity_eps: sim.positivity_eps,
            seed: 0,
            stride: 1,
            burn_in: 0,
            sampling: NoiseSampling::Truncate,
            spread: Spread::StandardError,
            execution: Execution::Parallel,
            output_dir: PathBuf::from("out"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "n",
    "delta_r",
    "s_unit",
    "gamma",
    "dt",
    "steps",
    "realizations",
    "mu0",
    "mu_lo",
    "mu_hi",
    "mu_points",
    "conserve_income",
    "positivity_eps",
    "seed",
    "stride",
    "burn_in",
    "sampling",
    "spread",
    "execution",
    "output_dir",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_owned(),
            value: value.to_owned(),
            reason: "expected true or false".into(),
        }),
    }
}

fn parse_execution(key: &str, value: &str) -> Result<Execution, ConfigError> {
    match value {
        "parallel" => Ok(Execution::Parallel),
        "sequential" => Ok(Execution::Sequential),
        _ => Err(ConfigError::BadValue {
            key: key.to_owned(),
            value: value.to_owned(),
            reason: "expected parallel or sequential".into(),
        }),
    }
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "n" => self.n = parse(key, v)?,
            "delta_r" => self.delta_r = parse(key, v)?,
            "s_unit" => self.s_unit = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "dt" => self.dt = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "realizations" => self.realizations = parse(key, v)?,
            "mu0" | "mu" => self.mu0 = parse(key, v)?,
            "mu_lo" => self.mu_lo = parse(key, v)?,
            "mu_hi" => self.mu_hi = parse(key, v)?,
            "mu_points" => self.mu_points = parse(key, v)?,
            "conserve_income" => self.conserve_income = parse_bool(key, v)?,
            "positivity_eps" => self.positivity_eps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "stride" | "sample_stride" => self.stride = parse(key, v)?,
            "burn_in" => self.burn_in = parse(key, v)?,
            "sampling" => self.sampling = parse(key, v)?,
            "spread" => self.spread = parse(key, v)?,
            "execution" => self.execution = parse_execution(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: path.to_owned(),
                line: idx + 1,
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        self.apply_text(&text, path)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn ladder(&self) -> Result<IncomeLadder, ConfigError> {
        IncomeLadder::new(self.n, self.delta_r, self.s_unit).map_err(model_error)
    }

    pub fn model(&self) -> Result<Model, ConfigError> {
        Model::new(self.ladder()?).map_err(model_error)
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            gamma: self.gamma,
            dt: self.dt,
            steps: self.steps,
            mode: if self.conserve_income {
                ConservationMode::PopulationAndIncome
            } else {
                ConservationMode::Population
            },
            positivity_eps: self.positivity_eps,
            seed: self.seed,
            stride: self.stride,
            sampling: self.sampling,
        }
    }

    pub fn ensemble_options(&self) -> EnsembleOptions {
        EnsembleOptions {
            realizations: self.realizations,
            burn_in: self.burn_in,
            spread: self.spread,
            execution: self.execution,
        }
    }

    pub fn mu_grid(&self) -> Vec<f64> {
        incomedyn::ensemble::uniform_grid(self.mu_lo, self.mu_hi, self.mu_points)
    }

    /// Checks every constraint the model and integrator impose.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ladder = self.ladder()?;
        self.simulation().validate(self.n).map_err(model_error)?;
        let income = |key: &str, mu: f64| {
            ladder.check_income(mu).map_err(|e| ConfigError::Invalid {
                key: key.to_owned(),
                reason: e.to_string(),
            })
        };
        income("mu0", self.mu0)?;
        income("mu_lo", self.mu_lo)?;
        income("mu_hi", self.mu_hi)?;
        if self.mu_lo > self.mu_hi {
            return Err(invalid("mu_lo", "must not exceed mu_hi"));
        }
        if self.mu_points == 0 {
            return Err(invalid("mu_points", "need at least one point"));
        }
        if self.realizations < 2 {
            return Err(invalid("realizations", "need at least two"));
        }
        if self.burn_in + 2 > self.steps / self.stride {
            return Err(invalid(
                "burn_in",
                "leaves fewer than two samples per trajectory",
            ));
        }
        Ok(())
    }
}

fn invalid(key: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        reason: reason.to_owned(),
    }
}

/// Maps a library parameter error onto the config key it concerns.
fn model_error(e: incomedyn::Error) -> ConfigError {
    let key = match &e {
        incomedyn::Error::InvalidParameter { name, .. } => (*name).to_owned(),
        _ => "model".to_owned(),
    };
    ConfigError::Invalid {
        key,
        reason: e.to_string(),
    }
}
