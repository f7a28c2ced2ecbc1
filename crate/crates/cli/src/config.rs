use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use screenwise_core::eval::GuidelineRules;
use screenwise_core::model::Schema;
use screenwise_core::policy::PolicyConfig;
use screenwise_core::risk::RiskParameters;
use screenwise_core::synth::GeneratorConfig;

use crate::CliError;

pub const CONFIG_ENV: &str = "SCREENWISE_CONFIG";

/// Grids and sizes used by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Empty means the policy eta alone.
    pub etas: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sizes: vec![1000, 2000, 5000, 10_000, 20_000],
            etas: vec![],
            train_size: 5000,
            test_size: 20_000,
        }
    }
}

/// The single experiment file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub policy: PolicyConfig,
    pub generator: Option<GeneratorConfig>,
    pub schema: Option<Schema>,
    pub risk: Option<RiskParameters>,
    pub guideline: Option<GuidelineRules>,
    pub sweep: SweepConfig,
}

impl FileConfig {
    pub fn schema(&self) -> Schema {
        self.schema.clone().unwrap_or_default()
    }

    pub fn risk(&self) -> RiskParameters {
        self.risk.clone().unwrap_or_default()
    }

    pub fn guideline(&self) -> GuidelineRules {
        self.guideline.clone().unwrap_or_default()
    }
}

/// Loads `--config`, else the file named by the environment, else defaults.
pub fn load(flag: Option<&Path>) -> Result<FileConfig, CliError> {
    let path: Option<PathBuf> = match flag {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
    };
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Flag values that override the policy section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyOverrides {
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub strict: bool,
}

impl PolicyOverrides {
    pub fn apply(&self, mut cfg: PolicyConfig) -> Result<PolicyConfig, CliError> {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.gamma {
            cfg.costs.gamma = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if self.strict {
            cfg.strict = true;
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_default() {
        let file: FileConfig = serde_json::from_str(r#"{"policy": {"eta": 0.2, "beta": 0.5}}"#).unwrap();
        assert_eq!(file.policy.delta, 0.05);
        let o = PolicyOverrides {
            eta: Some(0.15),
            strict: true,
            ..Default::default()
        };
        let cfg = o.apply(file.policy).unwrap();
        assert_eq!((cfg.eta, cfg.beta, cfg.delta, cfg.strict), (0.15, 0.5, 0.05, true));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"polcy": {}}"#).is_err());
        assert!(serde_json::from_str::<FileConfig>(r#"{"policy": {"etaa": 0.1}}"#).is_err());
    }

    #[test]
    fn out_of_range_override_is_a_config_error() {
        let o = PolicyOverrides {
            delta: Some(1.5),
            ..Default::default()
        };
        assert!(matches!(o.apply(PolicyConfig::default()), Err(CliError::Config(_))));
    }
}
