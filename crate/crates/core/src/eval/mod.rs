//! Held-out evaluation, Monte Carlo trials, parameter sweeps and baselines.

mod guideline;
mod trials;

use serde::{Deserialize, Serialize};

use crate::error::ClusterError;
use crate::model::{Label, TrainingRecord};
use crate::policy::{match_partition, PartitionedPolicy};
use crate::risk::RiskModel;
use crate::tree::{DecisionTree, TreeStats};

pub use guideline::{baseline_guideline, GuidelineReport, GuidelineRule, GuidelineRules};
pub use trials::{
    baseline_single_tree, compare_with_single_tree, confidence_trial, curve_csv, sweep_beta, sweep_m, test_seed, BaselineComparison,
    BetaPoint, BetaSweep, ConfidenceTrial, FprPair, MPoint, TrialRun, TrialSettings,
};

/// Running tallies from which [`TreeStats`] are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub positives: u64,
    pub negatives: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub cost: f64,
    pub excluded: u64,
}

impl Tally {
    pub fn record(&mut self, truth: Label, predicted: Label, cost: f64) {
        self.cost += cost;
        match truth {
            Label::Positive => {
                self.positives += 1;
                if predicted == Label::Negative {
                    self.false_negatives += 1;
                }
            }
            Label::Negative => {
                self.negatives += 1;
                if predicted == Label::Positive {
                    self.false_positives += 1;
                }
            }
        }
    }

    pub fn stats(&self, gamma: f64) -> TreeStats {
        TreeStats::from_tallies(
            self.positives,
            self.negatives,
            self.false_negatives,
            self.false_positives,
            self.cost,
            self.excluded,
            gamma,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub id: usize,
    pub stats: TreeStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub partition_count: usize,
    pub partitions: Vec<PartitionReport>,
    pub overall: TreeStats,
}

/// Per-record outcome of running a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Routed {
    pub partition: usize,
    /// `None` when the record lacks an outcome its tree asks for.
    pub outcome: Option<(Label, f64)>,
}

pub fn route(policy: &PartitionedPolicy, record: &TrainingRecord) -> Result<Routed, ClusterError> {
    let partition = match_partition(&record.personal, policy)?;
    let tree: &DecisionTree = &policy.partitions[partition].tree;
    let outcome = tree
        .classify(&record.screening, &policy.config.costs)
        .ok()
        .map(|c| (c.label, c.cost));
    Ok(Routed { partition, outcome })
}

/// Routes every record to its partition and tallies error rates and costs per
/// partition and overall.
pub fn evaluate_policy(policy: &PartitionedPolicy, records: &[TrainingRecord]) -> Result<PolicyReport, ClusterError> {
    let gamma = policy.config.costs.gamma;
    let mut per = vec![Tally::default(); policy.len()];
    let mut overall = Tally::default();
    for r in records {
        let routed = route(policy, r)?;
        match routed.outcome {
            Some((label, cost)) => {
                per[routed.partition].record(r.label, label, cost);
                overall.record(r.label, label, cost);
            }
            None => {
                per[routed.partition].excluded += 1;
                overall.excluded += 1;
            }
        }
    }
    Ok(PolicyReport {
        partition_count: policy.len(),
        partitions: per
            .iter()
            .enumerate()
            .map(|(id, t)| PartitionReport { id, stats: t.stats(gamma) })
            .collect(),
        overall: overall.stats(gamma),
    })
}

/// Quantile group (0-based) of each value by rank; ties keep input order.
pub fn risk_groups(values: &[f64], groups: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * groups / values.len().max(1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileCost {
    pub group: usize,
    pub min_risk: f64,
    pub max_risk: f64,
    pub records: u64,
    pub mean_cost: f64,
}

/// Mean cost per risk group, from per-record `(risk, cost)` pairs where a
/// `None` cost marks a skipped record.
pub fn group_costs(risks: &[f64], costs: &[Option<f64>], groups: usize) -> Vec<QuintileCost> {
    let idx = risk_groups(risks, groups);
    let mut out: Vec<QuintileCost> = (0..groups)
        .map(|group| QuintileCost {
            group,
            min_risk: f64::INFINITY,
            max_risk: f64::NEG_INFINITY,
            records: 0,
            mean_cost: 0.0,
        })
        .collect();
    for ((&g, &risk), cost) in idx.iter().zip(risks).zip(costs) {
        let q = &mut out[g];
        q.min_risk = q.min_risk.min(risk);
        q.max_risk = q.max_risk.max(risk);
        if let Some(c) = cost {
            q.records += 1;
            q.mean_cost += c;
        }
    }
    for q in &mut out {
        if q.records > 0 {
            q.mean_cost /= q.records as f64;
        }
        if q.min_risk > q.max_risk {
            q.min_risk = 0.0;
            q.max_risk = 0.0;
        }
    }
    out
}

/// Mean session cost of the policy across risk quantile groups of the
/// evaluation data's own risk distribution.
pub fn cost_vs_risk(policy: &PartitionedPolicy, records: &[TrainingRecord], groups: usize) -> Result<Vec<QuintileCost>, ClusterError> {
    let metric = policy.metric();
    let risks: Vec<f64> = records.iter().map(|r| metric.model.risk(&r.personal, metric.horizon_years)).collect();
    let mut costs = Vec::with_capacity(records.len());
    for r in records {
        costs.push(route(policy, r)?.outcome.map(|(_, c)| c));
    }
    Ok(group_costs(&risks, &costs, groups))
}

/// Machine-readable summary of a policy on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Where the evaluation data came from.
    pub provenance: String,
    pub records: u64,
    pub policy: PolicyReport,
    pub cost_by_risk: Vec<QuintileCost>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guideline: Option<GuidelineReport>,
}

pub fn evaluation_report(
    policy: &PartitionedPolicy,
    records: &[TrainingRecord],
    provenance: &str,
    guideline: Option<&GuidelineRules>,
) -> Result<EvaluationReport, crate::error::PolicyError> {
    let guideline = match guideline {
        Some(rules) => Some(baseline_guideline(rules, records, policy)?),
        None => None,
    };
    Ok(EvaluationReport {
        provenance: provenance.to_string(),
        records: records.len() as u64,
        policy: evaluate_policy(policy, records)?,
        cost_by_risk: cost_vs_risk(policy, records, 5)?,
        guideline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_by_rank() {
        let g = risk_groups(&[0.5, 0.1, 0.9, 0.3, 0.7], 5);
        assert_eq!(g, vec![2, 0, 4, 1, 3]);
        let g = risk_groups(&[1.0; 10], 5);
        assert_eq!(g, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn group_costs_average_and_skip() {
        let q = group_costs(&[0.1, 0.2, 0.3, 0.4], &[Some(0.1), Some(0.3), None, Some(0.8)], 2);
        assert_eq!(q[0].records, 2);
        assert!((q[0].mean_cost - 0.2).abs() < 1e-12);
        assert_eq!(q[1].records, 1);
        assert!((q[1].mean_cost - 0.8).abs() < 1e-12);
        assert_eq!((q[1].min_risk, q[1].max_risk), (0.3, 0.4));
    }

    #[test]
    fn tally_conventions() {
        let mut t = Tally::default();
        t.record(Label::Negative, Label::Positive, 0.1);
        let s = t.stats(0.5);
        assert_eq!((s.fnr, s.fpr), (0.0, 1.0));
    }
}
