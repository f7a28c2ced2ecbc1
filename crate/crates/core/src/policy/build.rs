use log::debug;
use rayon::prelude::*;

use super::{BuildDiagnostics, Partition, PartitionedPolicy, PolicyConfig, POLICY_VERSION};
use crate::cluster::{assign_all, split, Metric};
use crate::error::{PolicyError, SchemaMismatch};
use crate::model::{Schema, TrainingRecord};
use crate::risk::RiskParameters;
use crate::tree::{evaluate_tree, grow_tree, personalization_bound, DecisionTree, FnBudget, Node, GrowParams, Induction};

struct Working {
    /// Creation order; final ids are ranks in this order.
    serial: usize,
    centroid: Vec<f64>,
    centroid_risk: f64,
    members: Vec<usize>,
    tree: DecisionTree,
    budget: FnBudget,
    active: bool,
}

fn mean(points: &[&[f64]], members: &[usize]) -> Vec<f64> {
    let d = points[members[0]].len();
    let mut out = vec![0.0; d];
    for &i in members {
        for (o, x) in out.iter_mut().zip(points[i]) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= members.len() as f64;
    }
    out
}

fn grow(records: &[TrainingRecord], members: &[usize], params: &GrowParams) -> Result<Induction, PolicyError> {
    let refs: Vec<&TrainingRecord> = members.iter().map(|&i| &records[i]).collect();
    Ok(grow_tree(&refs, params)?)
}

/// Builds a partitioned policy by repeated binary splitting. A split of one
/// partition is kept only if every partition whose membership it changes
/// still has at least `min_samples` records and a feasible tree; otherwise
/// the partition is frozen with the tree it already has.
pub fn build_policy(
    records: &[TrainingRecord],
    schema: &Schema,
    risk: &RiskParameters,
    config: &PolicyConfig,
) -> Result<PartitionedPolicy, PolicyError> {
    config.validate()?;
    schema.validate()?;
    risk.validate(schema.len())?;
    if records.is_empty() {
        return Err(PolicyError::EmptyTrainingSet);
    }
    if let Some(r) = records.iter().find(|r| r.personal.len() != schema.len()) {
        return Err(SchemaMismatch {
            left: r.personal.len(),
            right: schema.len(),
        }
        .into());
    }
    let params = config.grow_params()?;
    let hypotheses = config.hypotheses()?;
    let nstar = config.sample_complexity()?;
    let metric = Metric::new(config.beta, risk, config.horizon_years);

    let points: Vec<&[f64]> = records.iter().map(|r| r.personal.as_slice()).collect();
    let risks: Vec<f64> = points.iter().map(|p| metric.risk(p)).collect();

    let all: Vec<usize> = (0..records.len()).collect();
    let (tree, budget) = match grow(records, &all, &params)? {
        Induction::Feasible { tree, budget } => (tree, budget),
        Induction::Infeasible(v) => return Err(PolicyError::PolicyInfeasible(v.reason)),
    };
    let centroid = mean(&points, &all);
    let mut parts = vec![Working {
        serial: 0,
        centroid_risk: metric.risk(&centroid),
        centroid,
        members: all,
        tree,
        budget,
        active: true,
    }];
    let mut next_serial = 1;
    let mut attempts = 0;
    let mut accepted = 0;

    while let Some(pos) = parts.iter().enumerate().filter(|(_, p)| p.active).min_by_key(|(_, p)| p.serial).map(|(i, _)| i) {
        parts[pos].active = false;
        let members = &parts[pos].members;
        if members.len() < 2 * config.min_samples.max(1) {
            continue;
        }
        if let Node::Leaf { label, counts } = &parts[pos].tree.root {
            if counts.errors(*label) == 0 {
                // error-free bare leaf
                continue;
            }
        }
        attempts += 1;
        let sub: Vec<&[f64]> = members.iter().map(|&i| points[i]).collect();
        let result = split(&sub, metric, config.precision)?;
        if result.degenerate {
            debug!("partition {} is degenerate under the metric", parts[pos].serial);
            continue;
        }

        // candidate layout: survivors in current order, then the two children
        let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(parts.len() + 1);
        let mut centroid_risks = Vec::with_capacity(parts.len() + 1);
        for (i, p) in parts.iter().enumerate() {
            if i != pos {
                centroids.push(p.centroid.clone());
                centroid_risks.push(p.centroid_risk);
            }
        }
        for c in &result.centroids {
            centroid_risks.push(metric.risk(&c.position));
            centroids.push(c.position.clone());
        }
        let labels = assign_all(&points, &risks, &centroids, &centroid_risks, config.beta);
        let mut new_members: Vec<Vec<usize>> = vec![Vec::new(); centroids.len()];
        for (i, &l) in labels.iter().enumerate() {
            new_members[l].push(i);
        }
        let survivors: Vec<usize> = (0..parts.len()).filter(|&i| i != pos).collect();
        let mut changed: Vec<usize> = Vec::new();
        for (slot, &orig) in survivors.iter().enumerate() {
            if new_members[slot] != parts[orig].members {
                changed.push(slot);
            }
        }
        changed.push(centroids.len() - 2);
        changed.push(centroids.len() - 1);

        let too_small = changed.iter().any(|&slot| new_members[slot].len() < config.min_samples.max(1));
        if too_small {
            debug!("split of partition {} rejected: a partition falls below min_samples", parts[pos].serial);
            continue;
        }
        let regrown: Vec<Result<Induction, PolicyError>> =
            changed.par_iter().map(|&slot| grow(records, &new_members[slot], &params)).collect();
        let mut trees = Vec::with_capacity(changed.len());
        let mut feasible = true;
        for r in regrown {
            match r? {
                Induction::Feasible { tree, budget } => trees.push((tree, budget)),
                Induction::Infeasible(v) => {
                    debug!("split of partition {} rejected: {}", parts[pos].serial, v.reason);
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }

        accepted += 1;
        let parent = parts.remove(pos);
        debug!("partition {} split into {} and {}", parent.serial, next_serial, next_serial + 1);
        let mut children = Vec::with_capacity(2);
        for c in &result.centroids {
            children.push(Working {
                serial: next_serial,
                centroid_risk: metric.risk(&c.position),
                centroid: c.position.clone(),
                members: Vec::new(),
                tree: DecisionTree::leaf(crate::model::Label::Positive),
                budget: parent.budget,
                active: true,
            });
            next_serial += 1;
        }
        parts.extend(children);
        for (slot, members) in new_members.into_iter().enumerate() {
            parts[slot].members = members;
        }
        for (&slot, (tree, budget)) in changed.iter().zip(trees) {
            parts[slot].tree = tree;
            parts[slot].budget = budget;
        }
    }

    parts.sort_by_key(|p| p.serial);
    let partitions = parts
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            let refs: Vec<&TrainingRecord> = p.members.iter().map(|&i| &records[i]).collect();
            Partition {
                id,
                stats: evaluate_tree(&p.tree, &refs, &config.costs),
                centroid: p.centroid,
                m_j: p.members.len() as u64,
                budget: p.budget,
                tree: p.tree,
            }
        })
        .collect();
    Ok(PartitionedPolicy {
        version: POLICY_VERSION,
        config: config.clone(),
        schema_fingerprint: schema.fingerprint(),
        risk_fingerprint: risk.fingerprint(),
        schema: schema.clone(),
        risk: risk.clone(),
        partitions,
        diagnostics: BuildDiagnostics {
            samples: records.len() as u64,
            hypotheses,
            sample_complexity: nstar,
            personalization_bound: personalization_bound(records.len() as u64, nstar),
            split_attempts: attempts,
            splits_accepted: accepted,
        },
    })
}
