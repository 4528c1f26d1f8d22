//! Experiment configuration.
//!
//! Configs are flat UTF-8 `key = value` files; `#` starts a comment. Keys use
//! underscores (`train_frac`) and may also be written with dashes, which is
//! how they appear as CLI flags (`--train-frac`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::SplitSpec;
use crate::icp::check_epsilon;
use crate::models::{Lambdas, DEFAULT_INFILLER_K, DEFAULT_LAMBDAS, DEFAULT_TAGGER_K, DEFAULT_VOCAB_CAP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },

    #[error("unknown key {0:?}")]
    UnknownKey(String),

    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Pos,
    Mlm,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Ok(Task::Pos),
            "mlm" => Ok(Task::Mlm),
            other => Err(format!("unknown task {other:?} (expected pos or mlm)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Pos => "pos",
            Task::Mlm => "mlm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerKind {
    Lexical,
    NGram,
    /// Pre-computed rows from a CPSF file.
    External(PathBuf),
}

impl ScorerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScorerKind::Lexical => "lexical",
            ScorerKind::NGram => "ngram",
            ScorerKind::External(_) => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub task: Task,
    pub scorer: ScorerKind,
    pub train_frac: f64,
    pub cal_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
    pub repetitions: usize,
    /// Significance levels for the metrics table; task defaults when `None`.
    pub epsilons: Option<Vec<f64>>,
    /// Number of interior points of the coverage-curve grid.
    pub grid_points: usize,
    pub output_dir: PathBuf,
    pub cal_sentence_cap: usize,
    pub test_sentence_cap: usize,
    pub k: Option<f64>,
    pub case_fold: bool,
    pub lambdas: Lambdas,
    pub vocab_cap: usize,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            task: Task::Pos,
            scorer: ScorerKind::Lexical,
            train_frac: 0.8,
            cal_frac: 0.1,
            test_frac: 0.1,
            seed: 0,
            repetitions: 5,
            epsilons: None,
            grid_points: 99,
            output_dir: PathBuf::from("out"),
            cal_sentence_cap: 1300,
            test_sentence_cap: 1000,
            k: None,
            case_fold: true,
            lambdas: DEFAULT_LAMBDAS,
            vocab_cap: DEFAULT_VOCAB_CAP,
            threads: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".into(),
        }),
    }
}

/// Parses a comma-separated list of significance levels.
pub fn parse_epsilons(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let e: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
            check_epsilon(e).map_err(|e| e.to_string())?;
            Ok(e)
        })
        .collect()
}

impl ExperimentConfig {
    /// Every recognized key.
    pub const KEYS: &'static [&'static str] = &[
        "corpus",
        "task",
        "scorer",
        "scores",
        "train_frac",
        "cal_frac",
        "test_frac",
        "seed",
        "repetitions",
        "epsilons",
        "grid_points",
        "output_dir",
        "cal_sentence_cap",
        "test_sentence_cap",
        "k",
        "case_fold",
        "lambda_unigram",
        "lambda_left",
        "lambda_right",
        "vocab_cap",
        "threads",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "task" => {
                self.task = value.parse().map_err(|reason| ConfigError::BadValue {
                    key: key.clone(),
                    value: value.into(),
                    reason,
                })?
            }
            "scorer" => {
                self.scorer = match value.to_ascii_lowercase().as_str() {
                    "lexical" | "builtin-lexical" => ScorerKind::Lexical,
                    "ngram" | "builtin-ngram" => ScorerKind::NGram,
                    _ => match value.strip_prefix("external:") {
                        Some(path) => ScorerKind::External(PathBuf::from(path)),
                        None => {
                            return Err(ConfigError::BadValue {
                                key,
                                value: value.into(),
                                reason: "expected lexical, ngram or external:<path>".into(),
                            })
                        }
                    },
                }
            }
            "scores" => self.scorer = ScorerKind::External(PathBuf::from(value)),
            "train_frac" => self.train_frac = parse(&key, value)?,
            "cal_frac" => self.cal_frac = parse(&key, value)?,
            "test_frac" => self.test_frac = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "repetitions" => self.repetitions = parse(&key, value)?,
            "epsilons" => {
                self.epsilons = Some(parse_epsilons(value).map_err(|reason| ConfigError::BadValue {
                    key: key.clone(),
                    value: value.into(),
                    reason,
                })?)
            }
            "grid_points" => self.grid_points = parse(&key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "cal_sentence_cap" => self.cal_sentence_cap = parse(&key, value)?,
            "test_sentence_cap" => self.test_sentence_cap = parse(&key, value)?,
            "k" => self.k = Some(parse(&key, value)?),
            "case_fold" => self.case_fold = parse_bool(&key, value)?,
            "lambda_unigram" => self.lambdas.unigram = parse(&key, value)?,
            "lambda_left" => self.lambdas.left = parse(&key, value)?,
            "lambda_right" => self.lambdas.right = parse(&key, value)?,
            "vocab_cap" => self.vocab_cap = parse(&key, value)?,
            "threads" => self.threads = parse(&key, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Parses `key = value` lines into `(key, value)` pairs.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    /// Defaults, then the file's settings, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        if let Some(path) = file {
            for (k, v) in Self::parse_pairs(&std::fs::read_to_string(path)?)? {
                config.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.repetitions == 0 {
            return invalid("repetitions must be >= 1".into());
        }
        if self.cal_sentence_cap == 0 || self.test_sentence_cap == 0 {
            return invalid("sentence caps must be >= 1".into());
        }
        if self.vocab_cap == 0 {
            return invalid("vocab_cap must be >= 1".into());
        }
        if let Some(k) = self.k {
            if !(k.is_finite() && k >= 0.0) {
                return invalid(format!("smoothing constant {k} must be >= 0"));
            }
        }
        self.split_spec(0).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Lambdas::new(self.lambdas.unigram, self.lambdas.left, self.lambdas.right).map_err(ConfigError::Invalid)?;
        match (&self.scorer, self.task) {
            (ScorerKind::Lexical, Task::Mlm) => invalid("the lexical scorer only supports the pos task".into()),
            (ScorerKind::NGram, Task::Pos) => invalid("the ngram scorer only supports the mlm task".into()),
            (ScorerKind::Lexical | ScorerKind::NGram, _) if self.corpus.is_none() => {
                invalid("builtin scorers need a corpus".into())
            }
            _ => Ok(()),
        }
    }

    pub fn split_spec(&self, repetition: usize) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            cal_frac: self.cal_frac,
            test_frac: self.test_frac,
            seed: self.repetition_seed(repetition),
        }
    }

    /// Seed of repetition `r`: `seed + r`.
    pub fn repetition_seed(&self, repetition: usize) -> u64 {
        self.seed.wrapping_add(repetition as u64)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        match (&self.epsilons, self.task) {
            (Some(e), _) => e.clone(),
            (None, Task::Pos) => vec![0.001, 0.01, 0.05],
            (None, Task::Mlm) => vec![0.05, 0.1, 0.2, 0.25],
        }
    }

    pub fn smoothing(&self) -> f64 {
        self.k.unwrap_or(match self.task {
            Task::Pos => DEFAULT_TAGGER_K,
            Task::Mlm => DEFAULT_INFILLER_K,
        })
    }
}
