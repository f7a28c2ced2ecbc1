//! Domain types shared by every other module: BI-RADS scores and their
//! three-way bucketing, screening tests, personal-feature schemas,
//! labeled records and test costs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, NormalizeError};

/// A radiological assessment score. BI-RADS 0 ("incomplete") is not part of
/// the score set and has no representation here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BiRads {
    One,
    Two,
    Three,
    FourA,
    FourB,
    FourC,
    Five,
    Six,
}

impl BiRads {
    pub const ALL: [BiRads; 8] = [
        BiRads::One,
        BiRads::Two,
        BiRads::Three,
        BiRads::FourA,
        BiRads::FourB,
        BiRads::FourC,
        BiRads::Five,
        BiRads::Six,
    ];

    /// Numeric level; the three level-4 subcategories share level 4.
    pub fn level(self) -> u8 {
        match self {
            BiRads::One => 1,
            BiRads::Two => 2,
            BiRads::Three => 3,
            BiRads::FourA | BiRads::FourB | BiRads::FourC => 4,
            BiRads::Five => 5,
            BiRads::Six => 6,
        }
    }

    pub fn bucket(self) -> Bucket {
        birads_bucket(self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiRads::One => "1",
            BiRads::Two => "2",
            BiRads::Three => "3",
            BiRads::FourA => "4A",
            BiRads::FourB => "4B",
            BiRads::FourC => "4C",
            BiRads::Five => "5",
            BiRads::Six => "6",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BiRads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a BI-RADS score (expected one of 1, 2, 3, 4A, 4B, 4C, 5, 6)")]
pub struct ParseBiRadsError(pub String);

impl FromStr for BiRads {
    type Err = ParseBiRadsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1" => Ok(BiRads::One),
            "2" => Ok(BiRads::Two),
            "3" => Ok(BiRads::Three),
            "4A" => Ok(BiRads::FourA),
            "4B" => Ok(BiRads::FourB),
            "4C" => Ok(BiRads::FourC),
            "5" => Ok(BiRads::Five),
            "6" => Ok(BiRads::Six),
            _ => Err(ParseBiRadsError(s.to_string())),
        }
    }
}

impl Serialize for BiRads {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for BiRads {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Edge label of a tree node: probably negative, suspicious, probably malignant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    B1,
    B2,
    B3,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::B1, Bucket::B2, Bucket::B3];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// B1 below level 3, B2 for levels 3 and 4, B3 above level 4.
pub fn birads_bucket(score: BiRads) -> Bucket {
    match score.level() {
        0..=2 => Bucket::B1,
        3 | 4 => Bucket::B2,
        _ => Bucket::B3,
    }
}

/// Screening modality. Declaration order (MG, US, MRI) is the fixed
/// tie-break order used during tree induction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Test {
    #[serde(rename = "MG")]
    Mammogram,
    #[serde(rename = "US")]
    Ultrasound,
    #[serde(rename = "MRI")]
    Mri,
}

impl Test {
    pub const ALL: [Test; 3] = [Test::Mammogram, Test::Ultrasound, Test::Mri];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Test::Mammogram => "MG",
            Test::Ultrasound => "US",
            Test::Mri => "MRI",
        }
    }
}

impl fmt::Display for Test {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Test {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MG" | "MAMMOGRAM" => Ok(Test::Mammogram),
            "US" | "ULTRASOUND" => Ok(Test::Ultrasound),
            "MRI" => Ok(Test::Mri),
            other => Err(format!("unknown screening test `{other}`")),
        }
    }
}

/// Diagnosis label. `Positive` means malignant (recommend biopsy); `Negative`
/// means regular followup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn recommendation(self) -> &'static str {
        match self {
            Label::Negative => "regular followup",
            Label::Positive => "biopsy",
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(format!("label {other} outside {{0,1}}")),
        }
    }
}

/// Per-test observation slots. A slot moves from missing to observed once
/// and never back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreeningObservation {
    slots: [Option<BiRads>; 3],
}

impl ScreeningObservation {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn complete(mg: BiRads, us: BiRads, mri: BiRads) -> Self {
        Self {
            slots: [Some(mg), Some(us), Some(mri)],
        }
    }

    pub fn get(&self, test: Test) -> Option<BiRads> {
        self.slots[test.index()]
    }

    /// Records an outcome. Returns `false` (and leaves the slot untouched)
    /// when the slot was already observed.
    pub fn observe(&mut self, test: Test, score: BiRads) -> bool {
        let slot = &mut self.slots[test.index()];
        if slot.is_some() {
            return false;
        }
        *slot = Some(score);
        true
    }

    pub fn observed_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed_count() == Test::ALL.len()
    }
}

/// Normalized personal features, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Linear rescaling of `[min, max]` onto `[0, 1]`, clamped.
    Numeric { min: f64, max: f64 },
    /// Ordered levels mapped evenly onto `[0, 1]`. Tokens are matched
    /// case-insensitively with an optional `Category` prefix.
    Ordinal { levels: Vec<String> },
    /// Explicit token to value table (lower-case keys).
    Categorical { mapping: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

impl FeatureSpec {
    pub fn normalize(&self, raw: &str) -> Result<f64, NormalizeError> {
        let raw = raw.trim();
        match &self.kind {
            FeatureKind::Numeric { min, max } => {
                let value: f64 = raw.parse().map_err(|_| NormalizeError::NonNumericValue {
                    name: self.name.clone(),
                    value: raw.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(NormalizeError::NonNumericValue {
                        name: self.name.clone(),
                        value: raw.to_string(),
                    });
                }
                Ok(((value - min) / (max - min)).clamp(0.0, 1.0))
            }
            FeatureKind::Ordinal { levels } => {
                let token = ordinal_token(raw);
                let pos = levels
                    .iter()
                    .position(|l| ordinal_token(l) == token)
                    .ok_or_else(|| NormalizeError::UnknownCategory {
                        name: self.name.clone(),
                        value: raw.to_string(),
                    })?;
                if levels.len() == 1 {
                    Ok(0.0)
                } else {
                    Ok(pos as f64 / (levels.len() - 1) as f64)
                }
            }
            FeatureKind::Categorical { mapping } => mapping
                .get(&raw.to_ascii_lowercase())
                .copied()
                .ok_or_else(|| NormalizeError::UnknownCategory {
                    name: self.name.clone(),
                    value: raw.to_string(),
                }),
        }
    }

    /// Maps a normalized value back onto the raw numeric scale. Only
    /// meaningful for numeric features.
    pub fn denormalize(&self, value: f64) -> Option<f64> {
        match &self.kind {
            FeatureKind::Numeric { min, max } => Some(min + value * (max - min)),
            _ => None,
        }
    }
}

fn ordinal_token(raw: &str) -> String {
    let lower = raw.trim().to_ascii_lowercase();
    lower
        .strip_prefix("category")
        .map(|rest| rest.trim().to_string())
        .unwrap_or(lower)
}

/// Ordered personal-feature schema. Feature ranges live here rather than
/// being fitted to data, so a policy trained on one dataset applies to any
/// other that shares the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    /// Columns ingested and carried through but never used as features.
    #[serde(default)]
    pub passthrough: Vec<String>,
}

const DEFAULT_SCHEMA: &str = include_str!("../data/schema.json");

impl Default for Schema {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }
}

impl Schema {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.features.is_empty() {
            return Err(ConfigError::Schema("no features".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.features {
            if !seen.insert(spec.name.as_str()) {
                return Err(ConfigError::Schema(format!("duplicate feature `{}`", spec.name)));
            }
            match &spec.kind {
                FeatureKind::Numeric { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min < max) {
                        return Err(ConfigError::Schema(format!(
                            "feature `{}` needs finite min < max",
                            spec.name
                        )));
                    }
                }
                FeatureKind::Ordinal { levels } if levels.is_empty() => {
                    return Err(ConfigError::Schema(format!("feature `{}` has no levels", spec.name)));
                }
                FeatureKind::Categorical { mapping } => {
                    if mapping.values().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(ConfigError::Schema(format!(
                            "feature `{}` maps a category outside [0, 1]",
                            spec.name
                        )));
                    }
                }
                _ => {}
            }
            if let Some(default) = &spec.default {
                spec.normalize(default)
                    .map_err(|e| ConfigError::Schema(format!("bad default: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        fingerprint_json(self)
    }
}

pub(crate) fn fingerprint_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

/// Normalizes one record's named raw values against the schema.
///
/// Names listed as passthrough are ignored; any other name the schema does
/// not know is rejected. Absent features fall back to the schema default.
pub fn normalize_features<'a, I>(raw: I, schema: &Schema) -> Result<FeatureVector, NormalizeError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut values: Vec<Option<&str>> = vec![None; schema.len()];
    for (name, value) in raw {
        match schema.position(name) {
            Some(i) => values[i] = Some(value),
            None if schema.passthrough.iter().any(|p| p == name) => {}
            None => return Err(NormalizeError::UnknownFeature(name.to_string())),
        }
    }
    let mut out = Vec::with_capacity(schema.len());
    for (spec, value) in schema.features.iter().zip(values) {
        let value = match value {
            Some(v) if !v.trim().is_empty() => v,
            _ => spec
                .default
                .as_deref()
                .ok_or_else(|| NormalizeError::MissingFeature(spec.name.clone()))?,
        };
        out.push(spec.normalize(value)?);
    }
    Ok(FeatureVector(out))
}

/// One labeled screening record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub id: String,
    /// Raw tokens as ingested, aligned with the schema's features.
    pub raw: Vec<String>,
    /// Passthrough columns (ethnicity, gender) in schema order.
    pub passthrough: Vec<String>,
    pub personal: FeatureVector,
    pub screening: ScreeningObservation,
    pub label: Label,
}

impl TrainingRecord {
    /// A record with no observed tests carries personal features only.
    pub fn is_features_only(&self) -> bool {
        self.screening.observed_count() == 0
    }
}

/// Normalized per-test monetary costs (summing to one) and the weight
/// `gamma` that trades false positives against monetary cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    #[serde(rename = "MG")]
    pub mammogram: f64,
    #[serde(rename = "US")]
    pub ultrasound: f64,
    #[serde(rename = "MRI")]
    pub mri: f64,
    pub gamma: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            mammogram: 0.1,
            ultrasound: 0.2,
            mri: 0.7,
            gamma: 0.5,
        }
    }
}

impl CostConfig {
    /// Normalizes raw monetary costs by their total.
    pub fn from_monetary(mg: f64, us: f64, mri: f64, gamma: f64) -> Result<Self, ConfigError> {
        let total = mg + us + mri;
        if !(total > 0.0) || mg < 0.0 || us < 0.0 || mri < 0.0 {
            return Err(ConfigError::Costs("monetary costs must be nonnegative with a positive total".into()));
        }
        let cfg = Self {
            mammogram: mg / total,
            ultrasound: us / total,
            mri: mri / total,
            gamma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cost(&self, test: Test) -> f64 {
        match test {
            Test::Mammogram => self.mammogram,
            Test::Ultrasound => self.ultrasound,
            Test::Mri => self.mri,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let costs = [self.mammogram, self.ultrasound, self.mri];
        if costs.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(ConfigError::Costs("each normalized cost must lie in [0, 1]".into()));
        }
        let total: f64 = costs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Costs(format!("normalized costs sum to {total}, expected 1")));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::Costs(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        Ok(())
    }
}
