//! Seeded synthetic screening records and CSV ingestion.
//!
//! Personal features come from a mixture of latent patient groups, labels
//! from the risk surrogate scaled to a target prevalence, and BI-RADS scores
//! from label- and density-conditioned tables. Every number lives in a JSON
//! config; the shipped tables are illustrative, not clinical estimates.

mod csv_io;

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{normalize_features, BiRads, Label, Schema, ScreeningObservation, Test, TrainingRecord};
use crate::risk::RiskParameters;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, Dataset, Rejection, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentCluster {
    pub name: String,
    pub weight: f64,
    pub age: Gaussian,
    /// Probabilities of density categories 1..=4.
    pub density: Vec<f64>,
    /// Probabilities of 0..=3 affected first-degree relatives.
    pub family_history: Vec<f64>,
    pub age_menarche: Gaussian,
    pub age_first_birth: Gaussian,
    /// Probabilities of 0..=4 previous biopsies.
    pub num_biopsies: Vec<f64>,
    pub hormonal_history: BTreeMap<String, f64>,
}

/// Distributions over the eight BI-RADS scores, in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTable {
    pub negative: Vec<f64>,
    pub positive: Vec<f64>,
}

/// One score table per density category for each test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiradsTables {
    #[serde(rename = "MG")]
    pub mammogram: Vec<ScoreTable>,
    #[serde(rename = "US")]
    pub ultrasound: Vec<ScoreTable>,
    #[serde(rename = "MRI")]
    pub mri: Vec<ScoreTable>,
}

impl BiradsTables {
    pub fn get(&self, test: Test) -> &[ScoreTable] {
        match test {
            Test::Mammogram => &self.mammogram,
            Test::Ultrasound => &self.ultrasound,
            Test::Mri => &self.mri,
        }
    }
}

/// Probability that each test's outcome is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRates {
    #[serde(rename = "MG")]
    pub mammogram: f64,
    #[serde(rename = "US")]
    pub ultrasound: f64,
    #[serde(rename = "MRI")]
    pub mri: f64,
}

impl ObservationRates {
    pub fn get(&self, test: Test) -> f64 {
        match test {
            Test::Mammogram => self.mammogram,
            Test::Ultrasound => self.ultrasound,
            Test::Mri => self.mri,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub version: u32,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
    pub prevalence: f64,
    pub ethnicity: BTreeMap<String, f64>,
    pub clusters: Vec<LatentCluster>,
    pub birads: BiradsTables,
    /// Per-test observation rates; absent means every test is recorded.
    #[serde(default)]
    pub observed: Option<ObservationRates>,
    /// Risk model that drives labels; absent means the engine's default.
    #[serde(default)]
    pub label_risk: Option<RiskParameters>,
}

const DEFAULT_GENERATOR: &str = include_str!("../../data/generator.json");
const TABLE_V_GENERATOR: &str = include_str!("../../data/generator_table_v.json");
const MISSPECIFIED_GENERATOR: &str = include_str!("../../data/generator_misspecified.json");

impl Default for GeneratorConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_GENERATOR).expect("bundled generator config is valid")
    }
}

fn check_distribution(what: &str, p: &[f64], len: usize) -> Result<(), ConfigError> {
    if p.len() != len {
        return Err(ConfigError::Generator(format!("{what}: expected {len} probabilities, got {}", p.len())));
    }
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(ConfigError::Generator(format!("{what}: probabilities must lie in [0, 1]")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ConfigError::Generator(format!("{what}: probabilities sum to {total}")));
    }
    Ok(())
}

fn check_gaussian(what: &str, g: &Gaussian) -> Result<(), ConfigError> {
    if g.mean.is_finite() && g.sd.is_finite() && g.sd >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Generator(format!("{what}: needs a finite mean and sd >= 0")))
    }
}

impl GeneratorConfig {
    /// The default population with per-test observation rates of a
    /// mammography-dominated registry.
    pub fn table_v() -> Self {
        serde_json::from_str(TABLE_V_GENERATOR).expect("bundled generator config is valid")
    }

    /// The default population with labels drawn from a risk model that
    /// differs from the engine's.
    pub fn misspecified() -> Self {
        serde_json::from_str(MISSPECIFIED_GENERATOR).expect("bundled generator config is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != 1 {
            return Err(ConfigError::Generator(format!("unsupported version {}", self.version)));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(ConfigError::Generator(format!("prevalence {} outside (0, 1)", self.prevalence)));
        }
        if self.clusters.is_empty() {
            return Err(ConfigError::Generator("at least one latent cluster is required".into()));
        }
        let eth: Vec<f64> = self.ethnicity.values().copied().collect();
        check_distribution("ethnicity", &eth, eth.len().max(1))?;
        let schema = Schema::default();
        for c in &self.clusters {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(ConfigError::Generator(format!("cluster `{}` needs a positive weight", c.name)));
            }
            check_gaussian(&format!("{}.age", c.name), &c.age)?;
            check_gaussian(&format!("{}.age_menarche", c.name), &c.age_menarche)?;
            check_gaussian(&format!("{}.age_first_birth", c.name), &c.age_first_birth)?;
            check_distribution(&format!("{}.density", c.name), &c.density, 4)?;
            check_distribution(&format!("{}.family_history", c.name), &c.family_history, 4)?;
            check_distribution(&format!("{}.num_biopsies", c.name), &c.num_biopsies, 5)?;
            let h: Vec<f64> = c.hormonal_history.values().copied().collect();
            check_distribution(&format!("{}.hormonal_history", c.name), &h, h.len().max(1))?;
            let spec = schema.position("hormonal_history").map(|i| &schema.features[i]);
            for token in c.hormonal_history.keys() {
                if spec.is_some_and(|s| s.normalize(token).is_err()) {
                    return Err(ConfigError::Generator(format!("unknown hormonal history `{token}`")));
                }
            }
        }
        for test in Test::ALL {
            let tables = self.birads.get(test);
            if tables.len() != 4 {
                return Err(ConfigError::Generator(format!("{test}: expected one table per density category")));
            }
            for (d, t) in tables.iter().enumerate() {
                check_distribution(&format!("{test} density {} negative", d + 1), &t.negative, 8)?;
                check_distribution(&format!("{test} density {} positive", d + 1), &t.positive, 8)?;
            }
        }
        if let Some(rates) = &self.observed {
            for test in Test::ALL {
                if !(0.0..=1.0).contains(&rates.get(test)) {
                    return Err(ConfigError::Generator(format!("{test}: observation rate outside [0, 1]")));
                }
            }
        }
        if let Some(r) = &self.label_risk {
            r.validate(schema.len())?;
        }
        Ok(())
    }
}

fn weighted(p: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(p).expect("validated distribution")
}

fn draw_rounded<R: Rng>(g: &Gaussian, lo: f64, hi: f64, rng: &mut R) -> i64 {
    let x = Normal::new(g.mean, g.sd).expect("validated gaussian").sample(rng);
    x.clamp(lo, hi).round() as i64
}

/// Scale `k` with `mean(min(1, k * g)) = target`.
fn prevalence_scale(risks: &[f64], target: f64) -> f64 {
    let mean = |k: f64| risks.iter().map(|g| (k * g).min(1.0)).sum::<f64>() / risks.len() as f64;
    let mut hi = 1.0;
    while mean(hi) < target && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draws `config.size` records. Identical configs and seeds give identical
/// records.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Vec<TrainingRecord>, ConfigError> {
    config.validate()?;
    let schema = Schema::default();
    let label_risk = config.label_risk.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cluster_pick = weighted(&config.clusters.iter().map(|c| c.weight).collect::<Vec<_>>());
    let ethnicities: Vec<(&String, f64)> = config.ethnicity.iter().map(|(k, v)| (k, *v)).collect();
    let ethnicity_pick = weighted(&ethnicities.iter().map(|(_, v)| *v).collect::<Vec<_>>());

    let mut drafts = Vec::with_capacity(config.size);
    for i in 0..config.size {
        let c = &config.clusters[cluster_pick.sample(&mut rng)];
        let age = draw_rounded(&c.age, 25.0, 80.0, &mut rng);
        let density = weighted(&c.density).sample(&mut rng) + 1;
        let family = weighted(&c.family_history).sample(&mut rng);
        let menarche = draw_rounded(&c.age_menarche, 9.0, 17.0, &mut rng);
        let first_birth = draw_rounded(&c.age_first_birth, 15.0, 45.0, &mut rng);
        let biopsies = weighted(&c.num_biopsies).sample(&mut rng);
        let hormones: Vec<(&String, f64)> = c.hormonal_history.iter().map(|(k, v)| (k, *v)).collect();
        let hormonal = hormones[weighted(&hormones.iter().map(|(_, v)| *v).collect::<Vec<_>>()).sample(&mut rng)].0;
        let ethnicity = ethnicities[ethnicity_pick.sample(&mut rng)].0;

        let raw = vec![
            age.to_string(),
            density.to_string(),
            family.to_string(),
            menarche.to_string(),
            first_birth.to_string(),
            biopsies.to_string(),
            hormonal.clone(),
        ];
        let names = schema.names();
        let personal = normalize_features(names.iter().copied().zip(raw.iter().map(String::as_str)), &schema)
            .map_err(|e| ConfigError::Generator(format!("generated record does not fit the schema: {e}")))?;
        drafts.push((format!("P{:06}", i + 1), raw, vec![ethnicity.clone(), "F".to_string()], personal, density));
    }

    let risks: Vec<f64> = drafts.iter().map(|d| label_risk.assess(&d.3)).collect();
    let scale = prevalence_scale(&risks, config.prevalence);

    let mut records = Vec::with_capacity(drafts.len());
    for ((id, raw, passthrough, personal, density), g) in drafts.into_iter().zip(risks) {
        let label = Label::from_bool(rng.random::<f64>() < (scale * g).min(1.0));
        let mut screening = ScreeningObservation::empty();
        for test in Test::ALL {
            let table = &config.birads.get(test)[density - 1];
            let p = if label.is_positive() { &table.positive } else { &table.negative };
            let score = BiRads::ALL[weighted(p).sample(&mut rng)];
            let seen = config.observed.is_none_or(|o| rng.random::<f64>() < o.get(test));
            if seen {
                screening.observe(test, score);
            }
        }
        records.push(TrainingRecord {
            id,
            raw,
            passthrough,
            personal,
            screening,
            label,
        });
    }
    Ok(records)
}
