//! Pipeline configuration: a flat `key = value` file, with command-line
//! overrides applied through the same [`PipelineConfig::set`] entry point.

use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use thiserror::Error;

use crate::clustering::{DistanceMode, FcmConfig};
use crate::logparse::{CleaningRules, Dialect};
use crate::validity::SweepConfig;
use crate::weighting::{WeightConfig, WeightError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("cannot read config `{path}`: {reason}")]
    Read { path: String, reason: String },
    #[error(transparent)]
    Thresholds(#[from] WeightError),
    #[error("{0}")]
    Invalid(String),
}

/// Which artifact files a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub sessions: bool,
    pub vocabulary: bool,
    pub cleaning: bool,
    pub weights: bool,
    pub reduction: bool,
    pub matrices: bool,
    pub histogram: bool,
    pub clusters: bool,
    pub sweep: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags {
            sessions: true,
            vocabulary: true,
            cleaning: true,
            weights: true,
            reduction: true,
            matrices: true,
            histogram: true,
            clusters: true,
            sweep: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    /// `None` probes the first line.
    pub dialect: Option<Dialect>,
    pub cleaning: CleaningRules,
    pub session_timeout_minutes: i64,
    pub alpha1: usize,
    pub alpha2: usize,
    pub beta1: usize,
    pub beta2: usize,
    pub q: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Single cluster count for `cluster`; `None` sweeps.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: Option<usize>,
    pub membership_floor: f64,
    pub threads: usize,
    pub output_dir: PathBuf,
    pub emit: EmitFlags,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = WeightConfig::default();
        let f = FcmConfig::default();
        PipelineConfig {
            input: None,
            dialect: None,
            cleaning: CleaningRules::default(),
            session_timeout_minutes: 30,
            alpha1: w.alpha1(),
            alpha2: w.alpha2(),
            beta1: w.beta1(),
            beta2: w.beta2(),
            q: f.q,
            epsilon: f.epsilon,
            max_iter: f.max_iter,
            seed: f.seed,
            k: None,
            k_min: 2,
            k_max: None,
            membership_floor: 0.0,
            threads: 0,
            output_dir: PathBuf::from("out"),
            emit: EmitFlags::default(),
        }
    }
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { path: origin.to_string(), line: i + 1 })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            })
        }
        let flag = |v: &str| match v {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(ConfigError::BadValue { key: key.into(), value: v.into(), reason: "expected true/false".into() }),
        };
        let optional = |v: &str| !(v.is_empty() || v == "auto" || v == "none");

        match key.replace('-', "_").as_str() {
            "input" => self.input = Some(PathBuf::from(value)),
            "dialect" | "log_dialect" => {
                self.dialect = if optional(value) {
                    Some(value.parse().map_err(|reason| ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        reason,
                    })?)
                } else {
                    None
                }
            }
            "allowed_methods" => self.cleaning.allowed_methods = list(value),
            "allowed_statuses" => {
                self.cleaning.allowed_statuses =
                    list(value).iter().map(|s| num(key, s)).collect::<Result<_, _>>()?
            }
            "drop_extensions" => {
                self.cleaning.dropped_extensions = list(value).into_iter().map(|s| s.to_ascii_lowercase()).collect()
            }
            "robot_agents" => self.cleaning.robot_agents = list(value),
            "robots_txt_marks_host" => self.cleaning.robots_txt_marks_host = flag(value)?,
            "session_timeout_minutes" | "timeout_minutes" => self.session_timeout_minutes = num(key, value)?,
            "alpha1" => self.alpha1 = num(key, value)?,
            "alpha2" => self.alpha2 = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "q" => self.q = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "max_iter" => self.max_iter = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "k" => self.k = if optional(value) { Some(num(key, value)?) } else { None },
            "k_min" => self.k_min = num(key, value)?,
            "k_max" => self.k_max = if optional(value) { Some(num(key, value)?) } else { None },
            "membership_floor" => self.membership_floor = num(key, value)?,
            "threads" => self.threads = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "emit_sessions" => self.emit.sessions = flag(value)?,
            "emit_vocabulary" => self.emit.vocabulary = flag(value)?,
            "emit_cleaning" => self.emit.cleaning = flag(value)?,
            "emit_weights" => self.emit.weights = flag(value)?,
            "emit_reduction" => self.emit.reduction = flag(value)?,
            "emit_matrices" => self.emit.matrices = flag(value)?,
            "emit_histogram" => self.emit.histogram = flag(value)?,
            "emit_clusters" => self.emit.clusters = flag(value)?,
            "emit_sweep" => self.emit.sweep = flag(value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.weight_config()?;
        self.fcm_config(DistanceMode::Weighted)
            .with_c(self.k.unwrap_or(2).max(1))
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.session_timeout_minutes <= 0 {
            return Err(ConfigError::Invalid("session_timeout_minutes must be positive".into()));
        }
        if self.k_min < 2 {
            return Err(ConfigError::Invalid("k_min must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.membership_floor) {
            return Err(ConfigError::Invalid("membership_floor must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn session_timeout(&self) -> TimeDelta {
        TimeDelta::minutes(self.session_timeout_minutes)
    }

    pub fn weight_config(&self) -> Result<WeightConfig, WeightError> {
        WeightConfig::new(self.alpha1, self.alpha2, self.beta1, self.beta2)
    }

    pub fn fcm_config(&self, mode: DistanceMode) -> FcmConfig {
        FcmConfig { c: self.k.unwrap_or(2), q: self.q, epsilon: self.epsilon, max_iter: self.max_iter, seed: self.seed, mode }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig { k_min: self.k_min, k_max: self.k_max, threads: self.threads }
    }
}
