//! Partitioned screening policies: offline construction, partition matching,
//! sequential execution and the on-disk format.

mod build;
mod file;
mod session;

use serde::{Deserialize, Serialize};

use crate::cluster::{assign, Centroid, Metric};
use crate::error::{ClusterError, ConfigError};
use crate::model::{CostConfig, Schema, Test};
use crate::risk::RiskParameters;
use crate::tree::{count_hypotheses, sample_complexity, DecisionTree, FnBudget, GrowParams, StrictLimits, TreeStats};

pub use build::build_policy;
pub use file::{from_json, load_policy, save_policy, to_json, POLICY_VERSION};
pub use session::{Diagnosis, HistoryEntry, Session, SessionStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Largest tolerable false-negative rate.
    pub eta: f64,
    /// One minus the confidence level.
    pub delta: f64,
    /// Weight of the feature distance against the risk gap.
    pub beta: f64,
    pub horizon_years: u32,
    /// Relative-improvement threshold of the 2-means loop.
    pub precision: f64,
    pub epsilon: f64,
    pub epsilon_cost: f64,
    /// Adds the uniform-convergence slack and minimum partition size.
    pub strict: bool,
    pub min_samples: usize,
    pub seed: u64,
    pub costs: CostConfig,
    pub tests: Vec<Test>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            delta: 0.05,
            beta: 0.75,
            horizon_years: 5,
            precision: crate::cluster::DEFAULT_PRECISION,
            epsilon: 0.1,
            epsilon_cost: 0.1,
            strict: false,
            min_samples: 10,
            seed: 0,
            costs: CostConfig::default(),
            tests: Test::ALL.to_vec(),
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::Policy(format!("{name} = {v} must lie in (0, 1)")))
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(ConfigError::Policy(format!("eta = {} must lie in (0, 1]", self.eta)));
        }
        open_unit("delta", self.delta)?;
        open_unit("epsilon", self.epsilon)?;
        open_unit("epsilon_cost", self.epsilon_cost)?;
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(ConfigError::Policy(format!("beta = {} must lie in [0, 1]", self.beta)));
        }
        if !(self.precision > 0.0) {
            return Err(ConfigError::Policy("precision must be positive".into()));
        }
        if self.horizon_years == 0 {
            return Err(ConfigError::Policy("horizon must be at least one year".into()));
        }
        if self.min_samples == 0 {
            return Err(ConfigError::Policy("min_samples must be at least 1".into()));
        }
        if self.tests.is_empty() {
            return Err(ConfigError::Policy("at least one test is required".into()));
        }
        for (i, t) in self.tests.iter().enumerate() {
            if self.tests[..i].contains(t) {
                return Err(ConfigError::Policy(format!("test {t} listed twice")));
            }
        }
        self.costs.validate()
    }

    pub fn hypotheses(&self) -> Result<u128, ConfigError> {
        count_hypotheses(self.tests.len() as u32).map_err(|e| ConfigError::Policy(e.to_string()))
    }

    pub fn sample_complexity(&self) -> Result<u64, ConfigError> {
        sample_complexity(self.epsilon, self.epsilon_cost, self.delta, self.hypotheses()?)
            .map_err(|e| ConfigError::Policy(e.to_string()))
    }

    /// Tree-induction parameters implied by this configuration.
    pub fn grow_params(&self) -> Result<GrowParams, ConfigError> {
        let strict = if self.strict {
            Some(StrictLimits {
                hypotheses: self.hypotheses()?,
                sample_complexity: self.sample_complexity()?,
            })
        } else {
            None
        };
        Ok(GrowParams {
            eta: self.eta,
            delta: self.delta,
            costs: self.costs,
            tests: self.tests.clone(),
            min_samples: self.min_samples,
            strict,
            prune: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub id: usize,
    pub centroid: Vec<f64>,
    /// Training records assigned to this partition.
    pub m_j: u64,
    pub budget: FnBudget,
    pub stats: TreeStats,
    pub tree: DecisionTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub samples: u64,
    pub hypotheses: u128,
    pub sample_complexity: u64,
    pub personalization_bound: u64,
    pub split_attempts: u64,
    pub splits_accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedPolicy {
    pub version: u32,
    pub config: PolicyConfig,
    pub schema_fingerprint: String,
    pub risk_fingerprint: String,
    pub schema: Schema,
    pub risk: RiskParameters,
    pub partitions: Vec<Partition>,
    pub diagnostics: BuildDiagnostics,
}

impl PartitionedPolicy {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn centroids(&self) -> Vec<Centroid> {
        self.partitions
            .iter()
            .map(|p| Centroid {
                position: p.centroid.clone(),
                members: p.m_j as usize,
            })
            .collect()
    }

    pub fn metric(&self) -> Metric<'_, RiskParameters> {
        Metric::new(self.config.beta, &self.risk, self.config.horizon_years)
    }

    /// Risk of a normalized feature vector at the policy's horizon.
    pub fn risk_of(&self, features: &[f64]) -> f64 {
        self.metric().risk(features)
    }
}

/// Partition id of the centroid nearest to `features`.
pub fn match_partition(features: &[f64], policy: &PartitionedPolicy) -> Result<usize, ClusterError> {
    let idx = assign(features, &policy.centroids(), policy.metric())?;
    Ok(policy.partitions[idx].id)
}
