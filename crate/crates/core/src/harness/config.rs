//! Experiment configuration.
//!
//! The file format is line oriented:
//!
//! ```text
//! # comment
//! key = value
//! ```
//!
//! Keys are dotted identifiers, values run to the end of the line with
//! surrounding whitespace trimmed, and `#` starts a comment only at the
//! beginning of a line. Blank lines are ignored. Every key may appear at most
//! once and unknown keys are rejected. Keys for sections that are not
//! selected (e.g. `optimizer.sgd.alpha` when `optimizer = kova`) are accepted
//! and ignored, so one file can drive sweeps over the selector keys.
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `env` | `chain`, `random` | `chain` |
//! | `env.chain.n` | integer >= 2 | `5` |
//! | `env.chain.slip` | `[0, 0.5)` | `0` |
//! | `env.random.seed` | integer | `0` |
//! | `env.random.states` | integer >= 1 | `6` |
//! | `env.random.actions` | integer >= 1 | `2` |
//! | `gamma` | `(0, 1)` | `0.9` |
//! | `policy` | `uniform`, `random` | `uniform` |
//! | `policy.seed` | integer | `0` |
//! | `model` | `tabular`, `mlp` | `tabular` |
//! | `model.hidden` | comma-separated widths | `16` |
//! | `model.init_scale` | >= 0 | `0.1` |
//! | `target` | `kstep`, `gae` | `kstep` |
//! | `target.k` | integer >= 1 | `5` |
//! | `target.lambda` | `[0, 1]` | `0.95` |
//! | `target.noise` | `sampled`, `expected` | `sampled` |
//! | `optimizer` | `kova`, `sgd` | `kova` |
//! | `optimizer.kova.alpha` | `(0, 1]` | `1` |
//! | `optimizer.kova.p0` | >= 0 | `1` |
//! | `optimizer.kova.eta` | `[0, 1)`, 0 disables fading memory | `0` |
//! | `optimizer.kova.obs_noise` | `batch-size`, `max-ratio` | `batch-size` |
//! | `optimizer.kova.epsilon` | >= 0 | `1e-8` |
//! | `optimizer.kova.jitter` | >= 0 | `1e-9` |
//! | `optimizer.sgd.alpha` | > 0 | `0.1` |
//! | `batch_size` | integer >= 1 | `32` |
//! | `iterations` | integer >= 0 | `500` |
//! | `seed` | integer | `0` |
//! | `output` | path | `metrics.csv` |
//! | `rollout.episodes` | integer >= 1 | `4` |
//! | `rollout.length` | integer >= 1 | `16` |
//! | `rollout.capacity` | integer >= 1 | `2048` |
//! | `metrics.wall_clock` | `true`, `false` | `false` |
//!
//! `target.noise = expected` replaces each sampled label by its expectation
//! under the MDP model given the anchor state, which removes label noise
//! while keeping the bootstrap through the frozen target parameters.
//! `metrics.wall_clock = false` leaves the `wall_ms` column blank so that
//! output files are reproducible byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::optimizer::{EvolutionNoise, KovaConfig, NoiseModel, ObservationNoise};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}

const KNOWN_KEYS: &[&str] = &[
    "env",
    "env.chain.n",
    "env.chain.slip",
    "env.random.seed",
    "env.random.states",
    "env.random.actions",
    "gamma",
    "policy",
    "policy.seed",
    "model",
    "model.hidden",
    "model.init_scale",
    "target",
    "target.k",
    "target.lambda",
    "target.noise",
    "optimizer",
    "optimizer.kova.alpha",
    "optimizer.kova.p0",
    "optimizer.kova.eta",
    "optimizer.kova.obs_noise",
    "optimizer.kova.epsilon",
    "optimizer.kova.jitter",
    "optimizer.sgd.alpha",
    "batch_size",
    "iterations",
    "seed",
    "output",
    "rollout.episodes",
    "rollout.length",
    "rollout.capacity",
    "metrics.wall_clock",
];

/// Parsed but not yet interpreted `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let valid_key = !key.is_empty()
                && key.split('.').all(|part| {
                    !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                });
            if !valid_key {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("malformed key `{key}`"),
                });
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Overrides (or adds) one key.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        if let Some(unknown) = self
            .entries
            .keys()
            .find(|k| !KNOWN_KEYS.contains(&k.as_str()))
        {
            return Err(ConfigError::UnknownKey(unknown.clone()));
        }
        ExperimentConfig::from_raw(self)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    fn choice<'a>(
        &'a self,
        key: &str,
        default: &'a str,
        allowed: &[&str],
    ) -> Result<&'a str, ConfigError> {
        let v = self.get(key).unwrap_or(default);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                reason: format!("expected one of {}", allowed.join(", ")),
            })
        }
    }
}

fn invalid(key: &str, value: impl ToString, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvConfig {
    Chain {
        n: usize,
        slip: f64,
    },
    Random {
        seed: u64,
        n_states: usize,
        n_actions: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyConfig {
    Uniform,
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    /// Linear model on one-hot states.
    Tabular,
    Mlp {
        hidden: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetConfig {
    KStep { k: usize },
    Gae { lambda: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetNoise {
    Sampled,
    Expected,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerConfig {
    Kova(KovaConfig),
    Sgd { alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutConfig {
    /// Fresh rollouts added to the store each iteration.
    pub episodes: usize,
    pub length: usize,
    /// Trajectory-store capacity in transitions.
    pub capacity: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub gamma: f64,
    pub policy: PolicyConfig,
    pub model: ModelConfig,
    pub init_scale: f64,
    pub target: TargetConfig,
    pub target_noise: TargetNoise,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub rollout: RolloutConfig,
    pub wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RawConfig::default().build().expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        RawConfig::from_file(path)?.build()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        RawConfig::parse(text)?.build()
    }

    fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let env = match raw.choice("env", "chain", &["chain", "random"])? {
            "chain" => {
                let n = raw.parsed("env.chain.n", 5usize)?;
                if n < 2 {
                    return Err(invalid("env.chain.n", n, "chain needs at least 2 states"));
                }
                let slip = raw.parsed("env.chain.slip", 0.0f64)?;
                if !(0.0..0.5).contains(&slip) {
                    return Err(invalid("env.chain.slip", slip, "must lie in [0, 0.5)"));
                }
                EnvConfig::Chain { n, slip }
            }
            _ => {
                let n_states = raw.parsed("env.random.states", 6usize)?;
                let n_actions = raw.parsed("env.random.actions", 2usize)?;
                if n_states == 0 || n_actions == 0 {
                    return Err(invalid(
                        "env.random",
                        format!("{n_states}x{n_actions}"),
                        "counts must be positive",
                    ));
                }
                EnvConfig::Random {
                    seed: raw.parsed("env.random.seed", 0u64)?,
                    n_states,
                    n_actions,
                }
            }
        };

        let gamma = raw.parsed("gamma", 0.9f64)?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("gamma", gamma, "must lie in (0, 1)"));
        }

        let policy = match raw.choice("policy", "uniform", &["uniform", "random"])? {
            "uniform" => PolicyConfig::Uniform,
            _ => PolicyConfig::Random {
                seed: raw.parsed("policy.seed", 0u64)?,
            },
        };

        let model = match raw.choice("model", "tabular", &["tabular", "mlp"])? {
            "tabular" => ModelConfig::Tabular,
            _ => {
                let text = raw.get("model.hidden").unwrap_or("16");
                let hidden = text
                    .split(',')
                    .map(|w| w.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid("model.hidden", text, &e.to_string()))?;
                if hidden.contains(&0) {
                    return Err(invalid("model.hidden", text, "widths must be positive"));
                }
                ModelConfig::Mlp { hidden }
            }
        };
        let init_scale = raw.parsed("model.init_scale", 0.1f64)?;
        if !(init_scale >= 0.0 && init_scale.is_finite()) {
            return Err(invalid(
                "model.init_scale",
                init_scale,
                "must be finite and non-negative",
            ));
        }

        let target = match raw.choice("target", "kstep", &["kstep", "gae"])? {
            "kstep" => {
                let k = raw.parsed("target.k", 5usize)?;
                if k == 0 {
                    return Err(invalid("target.k", k, "must be at least 1"));
                }
                TargetConfig::KStep { k }
            }
            _ => {
                let lambda = raw.parsed("target.lambda", 0.95f64)?;
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(invalid("target.lambda", lambda, "must lie in [0, 1]"));
                }
                TargetConfig::Gae { lambda }
            }
        };
        let target_noise = match raw.choice("target.noise", "sampled", &["sampled", "expected"])? {
            "sampled" => TargetNoise::Sampled,
            _ => TargetNoise::Expected,
        };

        let optimizer = match raw.choice("optimizer", "kova", &["kova", "sgd"])? {
            "kova" => {
                let eta = raw.parsed("optimizer.kova.eta", 0.0f64)?;
                let evolution = if eta == 0.0 {
                    EvolutionNoise::Zero
                } else {
                    EvolutionNoise::FadingMemory { eta }
                };
                let observation = match raw.choice(
                    "optimizer.kova.obs_noise",
                    "batch-size",
                    &["batch-size", "max-ratio"],
                )? {
                    "batch-size" => ObservationNoise::BatchSize,
                    _ => ObservationNoise::MaxRatio {
                        epsilon: raw
                            .parsed("optimizer.kova.epsilon", crate::optimizer::DEFAULT_EPSILON)?,
                    },
                };
                let cfg = KovaConfig {
                    learning_rate: raw.parsed("optimizer.kova.alpha", 1.0f64)?,
                    initial_cov_scale: raw.parsed("optimizer.kova.p0", 1.0f64)?,
                    noise: NoiseModel {
                        evolution,
                        observation,
                    },
                    jitter: raw
                        .parsed("optimizer.kova.jitter", crate::optimizer::DEFAULT_JITTER)?,
                };
                cfg.validate()
                    .map_err(|e| invalid("optimizer.kova", "", &e.to_string()))?;
                OptimizerConfig::Kova(cfg)
            }
            _ => {
                let alpha = raw.parsed("optimizer.sgd.alpha", 0.1f64)?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid("optimizer.sgd.alpha", alpha, "must be positive"));
                }
                OptimizerConfig::Sgd { alpha }
            }
        };

        let batch_size = raw.parsed("batch_size", 32usize)?;
        if batch_size == 0 {
            return Err(invalid("batch_size", batch_size, "must be at least 1"));
        }
        let rollout = RolloutConfig {
            episodes: raw.parsed("rollout.episodes", 4usize)?,
            length: raw.parsed("rollout.length", 16usize)?,
            capacity: raw.parsed("rollout.capacity", 2048usize)?,
        };
        if rollout.episodes == 0 || rollout.length == 0 || rollout.capacity == 0 {
            return Err(invalid(
                "rollout",
                "0",
                "episodes, length and capacity must be positive",
            ));
        }

        Ok(Self {
            env,
            gamma,
            policy,
            model,
            init_scale,
            target,
            target_noise,
            optimizer,
            batch_size,
            iterations: raw.parsed("iterations", 500usize)?,
            seed: raw.parsed("seed", 0u64)?,
            output: PathBuf::from(raw.get("output").unwrap_or("metrics.csv")),
            rollout,
            wall_clock: raw.parsed("metrics.wall_clock", false)?,
        })
    }
}
