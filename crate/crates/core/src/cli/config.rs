use crate::dataset::{FAMILY_A, FAMILY_B, REGRESSION_LABEL};
use crate::pipeline::{AblationKnob, FinetuneConfig, SweepConfig};
use crate::pretrain::PretrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Bad configuration, with the dotted path of the offending key.
#[derive(Debug, thiserror::Error)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    A,
    B,
}

impl Family {
    pub fn library(self) -> &'static [&'static str] {
        match self {
            Family::A => FAMILY_A,
            Family::B => FAMILY_B,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Family::A => "syn",
            Family::B => "synb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// JSONL dataset; when absent a synthetic set is generated.
    pub path: Option<PathBuf>,
    pub synthetic_count: usize,
    pub family: Family,
    pub seed: u64,
    /// Label column used by finetuning.
    pub label: String,
    /// Label budget of the `finetune` command as a share of the dataset.
    pub label_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic_count: 2000,
            family: Family::A,
            seed: 0,
            label: REGRESSION_LABEL.to_string(),
            label_fraction: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub knob: AblationKnob,
    /// Empty means the knob's standard grid.
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
    pub label_fraction: f64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            knob: AblationKnob::ContextFrac,
            values: Vec::new(),
            seeds: vec![0, 1, 2],
            label_fraction: 0.004,
        }
    }
}

/// Everything a command needs; serialized into every run directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Run seed: splits, pretraining, finetuning subsets.
    pub seed: u64,
    pub data: DataConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub sweep: SweepConfig,
    pub ablation: AblationConfig,
}

fn with_path<T: DeserializeOwned, E: std::fmt::Display>(
    result: Result<T, serde_path_to_error::Error<E>>,
) -> Result<T, ConfigError> {
    result.map_err(|err| {
        let mut key = err.path().to_string();
        let message = err.inner().to_string();
        // unknown keys are reported at their parent; name the key itself
        if let Some(rest) = message.strip_prefix("unknown field `") {
            if let Some(field) = rest.split('`').next() {
                if key == "." || key.is_empty() {
                    key = field.to_string();
                } else if key.rsplit('.').next() != Some(field) {
                    key = format!("{key}.{field}");
                }
            }
        }
        ConfigError::new(key, message)
    })
}

impl RunConfig {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        if text.trim_start().starts_with('{') {
            let mut de = serde_json::Deserializer::from_str(text);
            with_path(serde_path_to_error::deserialize(&mut de))
        } else {
            let de = toml::Deserializer::new(text);
            with_path(serde_path_to_error::deserialize(de))
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Range checks across all sections.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn scoped(section: &'static str) -> impl Fn((String, String)) -> ConfigError {
            move |(k, m)| ConfigError::new(format!("{section}.{k}"), m)
        }
        self.pretrain.validate().map_err(scoped("pretrain"))?;
        self.finetune.validate().map_err(scoped("finetune"))?;
        self.sweep.validate().map_err(scoped("sweep"))?;
        if self.data.path.is_none() && self.data.synthetic_count == 0 {
            return Err(ConfigError::new("data.synthetic_count", "must be ≥ 1"));
        }
        if !(self.data.label_fraction > 0.0 && self.data.label_fraction <= 0.8) {
            return Err(ConfigError::new("data.label_fraction", "must lie in (0, 0.8]"));
        }
        if !(self.ablation.label_fraction > 0.0 && self.ablation.label_fraction <= 0.8) {
            return Err(ConfigError::new("ablation.label_fraction", "must lie in (0, 0.8]"));
        }
        if self.ablation.seeds.is_empty() {
            return Err(ConfigError::new("ablation.seeds", "at least one seed is required"));
        }
        for v in &self.ablation.values {
            self.ablation
                .knob
                .parse_value(v)
                .map_err(|m| ConfigError::new("ablation.values", m))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("[pretrain]\nctx_frac = 0.5\n").unwrap_err();
        assert_eq!(err.key, "pretrain.ctx_frac");
        let err = RunConfig::parse("ctx_frac = 0.5\n").unwrap_err();
        assert_eq!(err.key, "ctx_frac");
        let err = RunConfig::parse(r#"{"pretrain": {"ctx_frac": 0.5}}"#).unwrap_err();
        assert_eq!(err.key, "pretrain.ctx_frac");
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg =
            RunConfig::parse("seed = 4\n[pretrain]\ncontext_frac = 0.8\n[pretrain.encoder]\nhidden = 16\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.pretrain.context_frac, 0.8);
        assert_eq!(cfg.pretrain.encoder.hidden, 16);
        assert_eq!(cfg.pretrain.encoder.depth, 3);
        assert_eq!(cfg.finetune, FinetuneConfig::default());
    }

    #[test]
    fn range_errors_name_the_key() {
        let mut cfg = RunConfig::default();
        cfg.pretrain.context_frac = 1.5;
        assert_eq!(cfg.validate().unwrap_err().key, "pretrain.context_frac");
        let mut cfg = RunConfig::default();
        cfg.sweep.fractions = vec![0.9];
        assert_eq!(cfg.validate().unwrap_err().key, "sweep.fractions");
    }

    #[test]
    fn wrong_type_reports_path() {
        let err = RunConfig::parse("[finetune]\nepochs = \"many\"\n").unwrap_err();
        assert_eq!(err.key, "finetune.epochs");
    }
}
