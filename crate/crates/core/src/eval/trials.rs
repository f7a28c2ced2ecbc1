use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_policy, Tally};
use crate::error::{PolicyError, TreeError};
use crate::model::{CostConfig, Schema, Test, TrainingRecord};
use crate::policy::{build_policy, match_partition, PartitionedPolicy, PolicyConfig};
use crate::risk::RiskParameters;
use crate::synth::{generate, GeneratorConfig};
use crate::tree::{baseline_tree, evaluate_tree, DecisionTree, TreeStats};

/// Everything a seeded train/test run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings {
    pub generator: GeneratorConfig,
    pub policy: PolicyConfig,
    pub schema: Schema,
    pub risk: RiskParameters,
    pub train_size: usize,
    pub test_size: usize,
}

impl TrialSettings {
    pub fn new(generator: GeneratorConfig, policy: PolicyConfig, train_size: usize) -> Self {
        Self {
            generator,
            policy,
            schema: Schema::default(),
            risk: RiskParameters::default(),
            train_size,
            test_size: 20_000,
        }
    }

    pub fn train(&self, seed: u64) -> Result<Vec<TrainingRecord>, PolicyError> {
        let cfg = GeneratorConfig {
            size: self.train_size,
            ..self.generator.clone()
        };
        Ok(generate(&cfg, seed)?)
    }

    pub fn test(&self, seed: u64) -> Result<Vec<TrainingRecord>, PolicyError> {
        let cfg = GeneratorConfig {
            size: self.test_size,
            ..self.generator.clone()
        };
        Ok(generate(&cfg, test_seed(seed))?)
    }

    /// Builds a policy on the training draw for `seed`; `None` when no
    /// feasible policy exists.
    pub fn build(&self, seed: u64, policy: &PolicyConfig) -> Result<Option<(PartitionedPolicy, Vec<TrainingRecord>)>, PolicyError> {
        let train = self.train(seed)?;
        let cfg = PolicyConfig { seed, ..policy.clone() };
        match build_policy(&train, &self.schema, &self.risk, &cfg) {
            Ok(p) => Ok(Some((p, train))),
            Err(PolicyError::PolicyInfeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Seed of the held-out draw paired with a training seed.
pub fn test_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRun {
    pub seed: u64,
    pub feasible: bool,
    pub partitions: usize,
    /// Largest held-out FNR over partitions with at least one positive.
    pub max_fnr: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTrial {
    pub runs: usize,
    pub violations: usize,
    /// Runs where no feasible policy existed; never counted as violations.
    pub infeasible: usize,
    pub fraction: f64,
    pub details: Vec<TrialRun>,
}

/// Repeats train/build/test for seeds `base_seed + 1 ..= base_seed + runs`
/// and counts runs where any partition's held-out FNR exceeds eta.
pub fn confidence_trial(settings: &TrialSettings, runs: usize, base_seed: u64) -> Result<ConfidenceTrial, PolicyError> {
    let eta = settings.policy.eta;
    let seeds: Vec<u64> = (1..=runs as u64).map(|r| base_seed + r).collect();
    let details: Vec<Result<TrialRun, PolicyError>> = seeds
        .par_iter()
        .map(|&seed| {
            let Some((policy, _)) = settings.build(seed, &settings.policy)? else {
                return Ok(TrialRun {
                    seed,
                    feasible: false,
                    partitions: 0,
                    max_fnr: 0.0,
                    violated: false,
                });
            };
            let test = settings.test(seed)?;
            let report = evaluate_policy(&policy, &test)?;
            let max_fnr = report
                .partitions
                .iter()
                .filter(|p| p.stats.positives > 0)
                .map(|p| p.stats.fnr)
                .fold(0.0, f64::max);
            Ok(TrialRun {
                seed,
                feasible: true,
                partitions: policy.len(),
                max_fnr,
                violated: max_fnr > eta,
            })
        })
        .collect();
    let details = details.into_iter().collect::<Result<Vec<_>, _>>()?;
    let violations = details.iter().filter(|d| d.violated).count();
    let infeasible = details.iter().filter(|d| !d.feasible).count();
    Ok(ConfidenceTrial {
        runs,
        violations,
        infeasible,
        fraction: if runs == 0 { 0.0 } else { violations as f64 / runs as f64 },
        details,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub mean_fnr: f64,
    pub mean_fpr: f64,
    pub mean_cost: f64,
    pub mean_partitions: f64,
    pub feasible_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweep {
    pub points: Vec<BetaPoint>,
    /// Lowest mean FPR among points whose mean FNR is within eta; ties go
    /// to the smaller beta.
    pub selected: Option<f64>,
}

pub fn sweep_beta(settings: &TrialSettings, grid: &[f64], seeds: &[u64]) -> Result<BetaSweep, PolicyError> {
    let mut points = Vec::with_capacity(grid.len());
    for &beta in grid {
        if !(0.0..=1.0).contains(&beta) {
            return Err(crate::error::ConfigError::Policy(format!("beta {beta} outside [0, 1]")).into());
        }
        let cfg = PolicyConfig {
            beta,
            ..settings.policy.clone()
        };
        let runs: Vec<Result<Option<(TreeStats, usize)>, PolicyError>> = seeds
            .par_iter()
            .map(|&seed| {
                let Some((policy, _)) = settings.build(seed, &cfg)? else {
                    return Ok(None);
                };
                let report = evaluate_policy(&policy, &settings.test(seed)?)?;
                Ok(Some((report.overall, policy.len())))
            })
            .collect();
        let runs: Vec<(TreeStats, usize)> = runs.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten().collect();
        let n = runs.len().max(1) as f64;
        points.push(BetaPoint {
            beta,
            mean_fnr: runs.iter().map(|r| r.0.fnr).sum::<f64>() / n,
            mean_fpr: runs.iter().map(|r| r.0.fpr).sum::<f64>() / n,
            mean_cost: runs.iter().map(|r| r.0.mean_cost).sum::<f64>() / n,
            mean_partitions: runs.iter().map(|r| r.1 as f64).sum::<f64>() / n,
            feasible_runs: runs.len(),
        });
    }
    let eta = settings.policy.eta;
    let mut selected: Option<&BetaPoint> = None;
    for p in points.iter().filter(|p| p.feasible_runs > 0 && p.mean_fnr <= eta) {
        let better = match selected {
            None => true,
            Some(s) => p.mean_fpr < s.mean_fpr || (p.mean_fpr == s.mean_fpr && p.beta < s.beta),
        };
        if better {
            selected = Some(p);
        }
    }
    let selected = selected.map(|p| p.beta);
    Ok(BetaSweep { points, selected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MPoint {
    pub eta: f64,
    pub m: usize,
    pub runs: usize,
    /// Infeasible runs contribute zero partitions.
    pub mean_partitions: f64,
    pub std_error: f64,
    pub infeasible_runs: usize,
    pub max_partitions: usize,
    pub personalization_bound: u64,
}

/// Mean partition count per training size and eta.
pub fn sweep_m(settings: &TrialSettings, sizes: &[usize], etas: &[f64], seeds: &[u64]) -> Result<Vec<MPoint>, PolicyError> {
    let mut out = Vec::new();
    for &eta in etas {
        for &m in sizes {
            let cfg = PolicyConfig {
                eta,
                ..settings.policy.clone()
            };
            let local = TrialSettings {
                train_size: m,
                ..settings.clone()
            };
            let counts: Vec<Result<(usize, u64), PolicyError>> = seeds
                .par_iter()
                .map(|&seed| {
                    Ok(match local.build(seed, &cfg)? {
                        Some((p, _)) => (p.len(), p.diagnostics.personalization_bound),
                        None => (0, 0),
                    })
                })
                .collect();
            let counts = counts.into_iter().collect::<Result<Vec<_>, _>>()?;
            let n = counts.len();
            let mean = counts.iter().map(|c| c.0 as f64).sum::<f64>() / n.max(1) as f64;
            let var = if n > 1 {
                counts.iter().map(|c| (c.0 as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let bound = crate::tree::personalization_bound(m as u64, cfg.sample_complexity()?);
            out.push(MPoint {
                eta,
                m,
                runs: n,
                mean_partitions: mean,
                std_error: (var / n.max(1) as f64).sqrt(),
                infeasible_runs: counts.iter().filter(|c| c.0 == 0).count(),
                max_partitions: counts.iter().map(|c| c.0).max().unwrap_or(0),
                personalization_bound: bound,
            });
        }
    }
    Ok(out)
}

/// One population-wide tree grown on information gain alone.
pub fn baseline_single_tree(
    records: &[TrainingRecord],
    costs: &CostConfig,
    tests: &[Test],
    min_samples: usize,
    delta: f64,
) -> Result<(DecisionTree, TreeStats), TreeError> {
    let refs: Vec<&TrainingRecord> = records.iter().collect();
    let tree = baseline_tree(&refs, tests, min_samples, delta)?;
    let stats = evaluate_tree(&tree, &refs, costs);
    Ok((tree, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprPair {
    pub partition: usize,
    pub policy_fpr: f64,
    pub baseline_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub policy: TreeStats,
    pub baseline: TreeStats,
    pub partitions: Vec<FprPair>,
}

/// Evaluates the policy and a single tree on the same records, split by the
/// policy's partitions.
pub fn compare_with_single_tree(
    policy: &PartitionedPolicy,
    baseline: &DecisionTree,
    records: &[TrainingRecord],
) -> Result<BaselineComparison, PolicyError> {
    let costs = &policy.config.costs;
    let mut base = vec![Tally::default(); policy.len()];
    let mut base_all = Tally::default();
    for r in records {
        let j = match_partition(&r.personal, policy)?;
        match baseline.classify(&r.screening, costs) {
            Ok(c) => {
                base[j].record(r.label, c.label, c.cost);
                base_all.record(r.label, c.label, c.cost);
            }
            Err(_) => {
                base[j].excluded += 1;
                base_all.excluded += 1;
            }
        }
    }
    let report = evaluate_policy(policy, records)?;
    Ok(BaselineComparison {
        policy: report.overall,
        baseline: base_all.stats(costs.gamma),
        partitions: report
            .partitions
            .iter()
            .zip(&base)
            .map(|(p, b)| FprPair {
                partition: p.id,
                policy_fpr: p.stats.fpr,
                baseline_fpr: b.stats(costs.gamma).fpr,
            })
            .collect(),
    })
}

/// Renders rows as CSV with a header taken from the field names.
pub fn curve_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
