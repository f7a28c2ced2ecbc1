use std::fs;
use std::path::Path;

use super::PartitionedPolicy;
use crate::error::{PolicyFileError, TreeError};
use crate::tree::fn_budget;

pub const POLICY_VERSION: u32 = 1;

pub fn to_json(policy: &PartitionedPolicy) -> String {
    let mut s = serde_json::to_string_pretty(policy).expect("policy serializes");
    s.push('\n');
    s
}

pub fn save_policy(policy: &PartitionedPolicy, path: &Path) -> Result<(), PolicyFileError> {
    fs::write(path, to_json(policy))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PartitionedPolicy, PolicyFileError> {
    from_json(&fs::read_to_string(path)?)
}

/// Parses a policy and checks fingerprints, structure and every partition's
/// training false-negative bound against its stored counts.
pub fn from_json(text: &str) -> Result<PartitionedPolicy, PolicyFileError> {
    let policy: PartitionedPolicy = serde_json::from_str(text)?;
    if policy.version != POLICY_VERSION {
        return Err(PolicyFileError::Version(policy.version));
    }
    for (stored, computed) in [
        (&policy.schema_fingerprint, policy.schema.fingerprint()),
        (&policy.risk_fingerprint, policy.risk.fingerprint()),
    ] {
        if *stored != computed {
            return Err(PolicyFileError::Fingerprint {
                stored: stored.clone(),
                computed,
            });
        }
    }
    policy.config.validate()?;
    policy.schema.validate()?;
    policy.risk.validate(policy.schema.len())?;
    if policy.partitions.is_empty() {
        return Err(PolicyFileError::BoundViolated {
            id: 0,
            reason: "policy has no partitions".into(),
        });
    }
    let params = policy.config.grow_params()?;
    for (i, p) in policy.partitions.iter().enumerate() {
        let violated = |reason: String| PolicyFileError::BoundViolated { id: p.id, reason };
        if p.id != i {
            return Err(violated(format!("expected id {i}")));
        }
        if p.centroid.len() != policy.schema.len() {
            return Err(violated("centroid length differs from the schema".into()));
        }
        p.tree.validate().map_err(violated)?;
        let counts = p.tree.root.counts();
        if counts.total() != p.m_j {
            return Err(violated(format!("root covers {} records but m_j is {}", counts.total(), p.m_j)));
        }
        let budget = fn_budget(p.m_j, counts.positives, &params)
            .map_err(|e: TreeError| violated(e.to_string()))?
            .map_err(|v| violated(v.reason))?;
        let fneg = p.tree.root.false_negatives();
        if fneg > budget.max_false_negatives {
            return Err(violated(format!(
                "{fneg} training false negatives exceed the allowed {}",
                budget.max_false_negatives
            )));
        }
    }
    Ok(policy)
}
