use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::{anyhow, Context};
use serde_json::Value;

use screenwise_core::model::{normalize_features, BiRads, FeatureVector, Schema};
use screenwise_core::policy::{Diagnosis, PartitionedPolicy, Session, SessionStatus};

fn read_line(input: &mut dyn BufRead) -> anyhow::Result<Option<String>> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}

fn token(name: &str, value: &Value) -> anyhow::Result<String> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(anyhow!("feature `{name}` must be a string or number")),
    }
}

/// Features from a JSON object of raw values.
pub fn features_from_json(text: &str, schema: &Schema) -> anyhow::Result<FeatureVector> {
    let raw: BTreeMap<String, Value> = serde_json::from_str(text).context("features file")?;
    let raw = raw
        .iter()
        .map(|(k, v)| Ok((k.clone(), token(k, v)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(normalize_features(raw.iter().map(|(k, v)| (k.as_str(), v.as_str())), schema)?)
}

/// Prompts for each feature in schema order. A blank answer takes the
/// default where there is one; bad answers are asked again.
pub fn prompt_features(schema: &Schema, input: &mut dyn BufRead, out: &mut dyn Write) -> anyhow::Result<FeatureVector> {
    let mut values = Vec::with_capacity(schema.len());
    for spec in &schema.features {
        loop {
            match &spec.default {
                Some(d) => write!(out, "{} [{d}]: ", spec.name)?,
                None => write!(out, "{}: ", spec.name)?,
            }
            out.flush()?;
            let line = read_line(input)?.ok_or_else(|| anyhow!("input ended while reading `{}`", spec.name))?;
            let raw = match (&spec.default, line.is_empty()) {
                (Some(d), true) => d.clone(),
                (None, true) => {
                    writeln!(out, "  a value is required")?;
                    continue;
                }
                (_, false) => line,
            };
            match spec.normalize(&raw) {
                Ok(v) => {
                    values.push(v);
                    break;
                }
                Err(e) => writeln!(out, "  {e}")?,
            }
        }
    }
    Ok(FeatureVector(values))
}

fn interval_line(d: &Diagnosis, confidence: f64) -> String {
    format!(
        "{} (label {}), error {:.4}, {:.0}% interval [{:.4}, {:.4}] over {} records",
        d.label.recommendation(),
        u8::from(d.label),
        d.error,
        confidence * 100.0,
        d.lower,
        d.upper,
        d.samples
    )
}

/// Runs one screening session on the terminal.
pub fn run_session(
    policy: &PartitionedPolicy,
    features: FeatureVector,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> anyhow::Result<Session> {
    let confidence = 1.0 - policy.config.delta;
    let mut session = Session::start(policy, "terminal", features)?;
    writeln!(out, "partition {}", session.partition)?;
    while let SessionStatus::AwaitingOutcome { test } = session.status {
        writeln!(out, "recommend {test}")?;
        writeln!(out, "  interim: {}", interval_line(&session.diagnosis, confidence))?;
        let score = loop {
            write!(out, "{test} BI-RADS: ")?;
            out.flush()?;
            let line = read_line(input)?.ok_or_else(|| anyhow!("input ended before the session finished"))?;
            match line.parse::<BiRads>() {
                Ok(s) => break s,
                Err(e) => writeln!(out, "  {e}; expected one of 1, 2, 3, 4A, 4B, 4C, 5, 6")?,
            }
        };
        session.advance(policy, test, score)?;
    }
    if let SessionStatus::Final { label } = session.status {
        writeln!(out, "Final({}): {}", u8::from(label), label.recommendation())?;
    }
    writeln!(out, "  diagnosis: {}", interval_line(&session.diagnosis, confidence))?;
    writeln!(out, "cost {}", session.cost)?;
    Ok(session)
}
