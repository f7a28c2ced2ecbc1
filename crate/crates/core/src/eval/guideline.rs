//! Age- and risk-tiered screening rules used as a one-size-fits-all
//! comparison. The bundled rules are an illustrative stand-in, not a
//! clinical guideline.

use serde::{Deserialize, Serialize};

use super::{group_costs, QuintileCost, Tally};
use crate::error::ConfigError;
use crate::model::{Bucket, Label, TrainingRecord, Test};
use crate::policy::PartitionedPolicy;
use crate::risk::RiskModel;
use crate::tree::TreeStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidelineRule {
    pub name: String,
    pub min_age: f64,
    pub max_age: f64,
    /// Applies only when the patient's risk is at least this value.
    #[serde(default)]
    pub risk_at_least: f64,
    pub tests: Vec<Test>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidelineRules {
    pub version: u32,
    pub rules: Vec<GuidelineRule>,
}

const DEFAULT_RULES: &str = include_str!("../../data/guideline.json");

impl Default for GuidelineRules {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_RULES).expect("bundled guideline is valid")
    }
}

impl GuidelineRules {
    /// Every age from 18 to 100 must be matched by some rule regardless of
    /// risk.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for rule in &self.rules {
            if !(rule.min_age <= rule.max_age) {
                return Err(ConfigError::Guideline(format!("rule `{}` has an empty age range", rule.name)));
            }
            for (i, t) in rule.tests.iter().enumerate() {
                if rule.tests[..i].contains(t) {
                    return Err(ConfigError::Guideline(format!("rule `{}` lists {t} twice", rule.name)));
                }
            }
        }
        for age in 18..=100 {
            let age = age as f64;
            let covered = self
                .rules
                .iter()
                .any(|r| r.min_age <= age && age <= r.max_age && r.risk_at_least <= 0.0);
            if !covered {
                return Err(ConfigError::Guideline(format!("no rule covers age {age} at every risk level")));
            }
        }
        Ok(())
    }

    /// First rule matching the age and risk.
    pub fn select(&self, age: f64, risk: f64) -> Option<&GuidelineRule> {
        self.rules
            .iter()
            .find(|r| r.min_age <= age && age <= r.max_age && risk >= r.risk_at_least)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineReport {
    pub stats: TreeStats,
    pub cost_by_risk: Vec<QuintileCost>,
}

fn age_of(record: &TrainingRecord, policy: &PartitionedPolicy) -> Option<f64> {
    let i = policy.schema.position("age")?;
    record
        .raw
        .get(i)
        .and_then(|t| t.trim().parse::<f64>().ok())
        .or_else(|| policy.schema.features[i].denormalize(record.personal[i]))
}

/// Applies the rules to each record: the prescribed tests are all taken, and
/// the decision is positive iff any of them lands in the top bucket.
/// Records missing a prescribed outcome are skipped.
pub fn baseline_guideline(
    rules: &GuidelineRules,
    records: &[TrainingRecord],
    policy: &PartitionedPolicy,
) -> Result<GuidelineReport, ConfigError> {
    rules.validate()?;
    let metric = policy.metric();
    let costs = &policy.config.costs;
    let mut tally = Tally::default();
    let mut risks = Vec::with_capacity(records.len());
    let mut per_record = Vec::with_capacity(records.len());
    for r in records {
        let risk = metric.model.risk(&r.personal, metric.horizon_years);
        risks.push(risk);
        let age = age_of(r, policy).ok_or_else(|| ConfigError::Guideline("schema has no usable age feature".into()))?;
        let tests: &[Test] = rules.select(age, risk).map_or(&[], |rule| &rule.tests);
        let mut positive = false;
        let mut complete = true;
        for t in tests {
            match r.screening.get(*t) {
                Some(score) => positive |= score.bucket() == Bucket::B3,
                None => complete = false,
            }
        }
        if !complete {
            tally.excluded += 1;
            per_record.push(None);
            continue;
        }
        let cost: f64 = tests.iter().map(|t| costs.cost(*t)).sum();
        tally.record(r.label, Label::from_bool(positive), cost);
        per_record.push(Some(cost));
    }
    Ok(GuidelineReport {
        stats: tally.stats(costs.gamma),
        cost_by_risk: group_costs(&risks, &per_record, 5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules(tests: Vec<Test>) -> GuidelineRules {
        GuidelineRules {
            version: 1,
            rules: vec![GuidelineRule {
                name: "all".into(),
                min_age: 0.0,
                max_age: 120.0,
                risk_at_least: 0.0,
                tests,
            }],
        }
    }

    #[test]
    fn bundled_rules_cover_all_ages() {
        GuidelineRules::default().validate().unwrap();
    }

    #[test]
    fn gaps_are_rejected() {
        let mut r = rules(vec![]);
        r.rules[0].min_age = 30.0;
        assert!(r.validate().is_err());
        let mut r = rules(vec![]);
        r.rules[0].risk_at_least = 0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn first_match_wins() {
        let mut r = rules(vec![Test::Mammogram]);
        r.rules.insert(
            0,
            GuidelineRule {
                name: "high".into(),
                min_age: 0.0,
                max_age: 120.0,
                risk_at_least: 0.2,
                tests: vec![Test::Mri],
            },
        );
        assert_eq!(r.select(50.0, 0.3).unwrap().name, "high");
        assert_eq!(r.select(50.0, 0.1).unwrap().name, "all");
    }
}
