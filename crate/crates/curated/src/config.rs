//! The single TOML configuration file. Every key has a default; command-line
//! flags override individual values after loading.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use curated_core::annotation::BREAK_THRESHOLD_SECS;
use curated_core::pipeline::{ExtractConfig, DEFAULT_THRESHOLD};
use curated_core::workflow::{WorkflowConfig, DOCS_PER_INDICATOR, SESSION_BUDGET_SECS};
use curated_core::TrainConfig;
use serde::Deserialize;
use thiserror::Error;

use crate::formats::{read_text, FormatError};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error(transparent)]
    Read(#[from] FormatError),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub server: ServerSection,
    pub workflow: WorkflowSection,
    pub training: TrainingSection,
    pub extraction: ExtractionSection,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    /// Optional entity-span sidecar.
    pub entities: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: SocketAddr,
    pub log_dir: PathBuf,
    /// Result limit when a search request gives none.
    pub search_limit: usize,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            log_dir: PathBuf::from("logs"),
            search_limit: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowSection {
    pub docs_per_indicator: u32,
    pub break_threshold_secs: f64,
    pub session_budget_secs: f64,
}

impl Default for WorkflowSection {
    fn default() -> Self {
        WorkflowSection {
            docs_per_indicator: DOCS_PER_INDICATOR,
            break_threshold_secs: BREAK_THRESHOLD_SECS,
            session_budget_secs: SESSION_BUDGET_SECS,
        }
    }
}

impl WorkflowSection {
    pub fn workflow_config(&self) -> WorkflowConfig {
        WorkflowConfig {
            docs_per_indicator: self.docs_per_indicator,
            break_threshold: self.break_threshold_secs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub tolerance: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainingSection {
            l2_lambda: d.l2_lambda,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            tolerance: d.tolerance,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            l2_lambda: self.l2_lambda,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    pub threshold: f64,
    pub argument_threshold: f64,
    pub ontology: Option<PathBuf>,
    /// Inference rule file; absent means no rules.
    pub rules: Option<PathBuf>,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        ExtractionSection {
            threshold: DEFAULT_THRESHOLD,
            argument_threshold: DEFAULT_THRESHOLD,
            ontology: None,
            rules: None,
        }
    }
}

impl ExtractionSection {
    /// Thresholds plus the parsed rule file.
    pub fn extract_config(&self) -> Result<ExtractConfig, ConfigFileError> {
        let rules = match &self.rules {
            None => Vec::new(),
            Some(path) => curated_core::pipeline::parse_rules(&read_text(path)?).map_err(|e| ConfigFileError::Invalid {
                path: path.clone(),
                message: e.to_string(),
            })?,
        };
        Ok(ExtractConfig {
            trigger_threshold: self.threshold,
            argument_threshold: self.argument_threshold,
            rules,
        })
    }
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Config, ConfigFileError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigFileError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|message| ConfigFileError::Invalid {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigFileError> {
        Config::parse(&read_text(path)?, path)
    }

    /// Loads `path` if given, else the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Config, ConfigFileError> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1], got {v}"))
            }
        };
        unit("extraction.threshold", self.extraction.threshold)?;
        unit("extraction.argument_threshold", self.extraction.argument_threshold)?;
        if !(self.workflow.break_threshold_secs > 0.0) {
            return Err("workflow.break_threshold_secs must be positive".into());
        }
        if self.workflow.docs_per_indicator == 0 {
            return Err("workflow.docs_per_indicator must be positive".into());
        }
        if !(self.training.learning_rate > 0.0) || !(self.training.l2_lambda >= 0.0) {
            return Err("training.learning_rate must be positive and training.l2_lambda non-negative".into());
        }
        Ok(())
    }
}
