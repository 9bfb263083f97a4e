//! Experiment configuration files.
//!
//! The format is a flat `key = value` text file with one `[section]` per
//! subsystem (`stream`, `experiment`, `memory`, `ga`, `classifier`).
//! Values are bare tokens; lines starting with `#` are comments. Every
//! key is validated and unknown keys are rejected, so typos surface as
//! errors naming the offending `section.key`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use genex_core::classifier::{ClassifierSpec, ForestParams, LogisticParams};
use genex_core::harness::{
    ExperimentConfig, FitnessSplit, GaSettings, RetrainPolicy, StreamSpec,
};
use genex_core::memory::UpdateStrategy;

/// A configuration defect, pointing at the key that caused it when one is
/// known.
#[derive(Debug)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.key {
            Some(key) => write!(f, "config error at `{key}`: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: Some(key.to_string()),
        message: message.into(),
    }
}

/// Raw `section.key -> value` table with consumption tracking.
struct Table {
    values: BTreeMap<String, String>,
    taken: std::collections::HashSet<String>,
}

impl Table {
    fn parse(text: &str) -> Result<Table, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !matches!(name, "stream" | "experiment" | "memory" | "ga" | "classifier") {
                    return Err(ConfigError {
                        key: Some(name.to_string()),
                        message: format!("unknown section on line {}", idx + 1),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    key: None,
                    message: format!("line {} is not `key = value`: `{line}`", idx + 1),
                });
            };
            let Some(section) = &section else {
                return Err(ConfigError {
                    key: Some(key.trim().to_string()),
                    message: format!("key on line {} appears before any [section]", idx + 1),
                });
            };
            let full = format!("{section}.{}", key.trim());
            if values
                .insert(full.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(err(&full, "duplicate key"));
            }
        }
        Ok(Table {
            values,
            taken: Default::default(),
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.taken.insert(key.to_string());
        self.values.get(key).cloned()
    }

    fn parse_as<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| err(key, format!("expected {what}, got `{raw}` ({e})"))),
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_as(key, what)?
            .ok_or_else(|| err(key, "missing required key"))
    }

    fn or_default<T: std::str::FromStr>(
        &mut self,
        key: &str,
        what: &str,
        default: T,
    ) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse_as(key, what)?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), ConfigError> {
        for key in self.values.keys() {
            if !self.taken.contains(key) {
                return Err(err(key, "unknown key"));
            }
        }
        Ok(())
    }
}

fn parse_stream(table: &mut Table) -> Result<StreamSpec, ConfigError> {
    let kind: String = table.required("stream.kind", "`file` or `synthetic`")?;
    match kind.as_str() {
        "file" => {
            let path: String = table.required("stream.path", "a file path")?;
            Ok(StreamSpec::File(PathBuf::from(path)))
        }
        "synthetic" => Ok(StreamSpec::Synthetic {
            students: table.or_default("stream.students", "an integer", 363)?,
            weeks: table.or_default("stream.weeks", "an integer", 39)?,
            fail_ratio: table.or_default("stream.fail_ratio", "a real in (0,1)", 97.0 / 363.0)?,
            drift: table.or_default("stream.drift", "a real", 0.1)?,
            seed: table.or_default("stream.seed", "an integer", 7)?,
        }),
        other => Err(err(
            "stream.kind",
            format!("expected `file` or `synthetic`, got `{other}`"),
        )),
    }
}

fn parse_strategies(table: &mut Table) -> Result<Vec<UpdateStrategy>, ConfigError> {
    match table.take("experiment.strategies") {
        None => Ok(UpdateStrategy::ALL.to_vec()),
        Some(raw) => raw
            .split(',')
            .map(|token| {
                token
                    .trim()
                    .parse::<UpdateStrategy>()
                    .map_err(|e| err("experiment.strategies", e))
            })
            .collect(),
    }
}

fn parse_classifier(table: &mut Table) -> Result<ClassifierSpec, ConfigError> {
    let kind: String = table.or_default(
        "classifier.kind",
        "`logistic_regression` or `random_forest`",
        "logistic_regression".to_string(),
    )?;
    match kind.as_str() {
        "logistic_regression" => {
            let defaults = LogisticParams::default();
            Ok(ClassifierSpec::LogisticRegression(LogisticParams {
                learning_rate: table.or_default(
                    "classifier.learning_rate",
                    "a positive real",
                    defaults.learning_rate,
                )?,
                epochs: table.or_default("classifier.epochs", "an integer", defaults.epochs)?,
                l2: table.or_default("classifier.l2", "a nonnegative real", defaults.l2)?,
            }))
        }
        "random_forest" => {
            let defaults = ForestParams::default();
            Ok(ClassifierSpec::RandomForest(ForestParams {
                n_trees: table.or_default("classifier.trees", "an integer", defaults.n_trees)?,
                max_depth: table.or_default(
                    "classifier.max_depth",
                    "an integer",
                    defaults.max_depth,
                )?,
                min_leaf: table.or_default("classifier.min_leaf", "an integer", defaults.min_leaf)?,
            }))
        }
        other => Err(err(
            "classifier.kind",
            format!("expected `logistic_regression` or `random_forest`, got `{other}`"),
        )),
    }
}

/// Parses and validates a configuration file.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut table = Table::parse(text)?;

    let stream = parse_stream(&mut table)?;
    let strategies = parse_strategies(&mut table)?;
    let master_seed: u64 = table.required("experiment.master_seed", "an integer seed")?;
    let runs = table.or_default("experiment.runs", "an integer", 10)?;
    let forgetting = table.or_default("experiment.forgetting", "a nonnegative real", 0.01)?;
    let retrain_policy: RetrainPolicy = table.or_default(
        "experiment.retrain_policy",
        "`threshold` or `always`",
        RetrainPolicy::Threshold,
    )?;
    let test_fraction = table.or_default("experiment.test_fraction", "a real in (0, 0.5]", 0.3)?;
    let fitness_split: FitnessSplit = table.or_default(
        "experiment.fitness_split",
        "`per_update` or `global`",
        FitnessSplit::PerUpdate,
    )?;

    let e_size = table.or_default("memory.e_size", "an integer", 80)?;

    let ga_defaults = GaSettings::default();
    let size_p = table.or_default("ga.size_p", "an integer", ga_defaults.size_p)?;
    let ga = GaSettings {
        size_p,
        iterations: table.or_default("ga.iterations", "an integer", ga_defaults.iterations)?,
        mutation_prob: table.or_default(
            "ga.mutation_prob",
            "a real in [0,1]",
            ga_defaults.mutation_prob,
        )?,
        elite_count: table.or_default("ga.elite_count", "an integer", ga_defaults.elite_count)?,
        parent_count: table.or_default(
            "ga.parent_count",
            "an even integer",
            ((size_p / 2) & !1usize).max(2),
        )?,
        retry_cap: table.or_default("ga.retry_cap", "an integer", ga_defaults.retry_cap)?,
        optimum_accuracy: table.or_default(
            "ga.optimum_accuracy",
            "a real",
            ga_defaults.optimum_accuracy,
        )?,
        optimum_loss: table.or_default("ga.optimum_loss", "a real", ga_defaults.optimum_loss)?,
    };

    let classifier = parse_classifier(&mut table)?;
    table.finish()?;

    let config = ExperimentConfig {
        stream,
        strategies,
        runs,
        forgetting,
        retrain_policy,
        e_size,
        ga,
        classifier,
        test_fraction,
        fitness_split,
        master_seed,
    };
    config.validate().map_err(|e| ConfigError {
        key: None,
        message: e.to_string(),
    })?;
    Ok(config)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_str(&text)
}
