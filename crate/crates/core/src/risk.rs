//! Absolute-risk assessment and the risk-blended patient distance.
//!
//! The default model is a logistic surrogate: an annual hazard
//! `h0 * logistic(intercept + w . x)` compounded over the horizon as
//! `1 - (1 - p)^tau`. Any other model can be used through [`RiskModel`].

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SchemaMismatch};

/// Maps a normalized personal-feature vector and a horizon in years to the
/// probability of developing cancer within that horizon.
pub trait RiskModel {
    fn risk(&self, features: &[f64], horizon_years: u32) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskParameters {
    /// Name of the model the parameter block belongs to.
    #[serde(default = "default_model_name")]
    pub model: String,
    pub baseline_hazard: f64,
    pub intercept: f64,
    /// Log-odds weights aligned with the schema's features.
    pub coefficients: Vec<f64>,
    pub horizon_years: u32,
}

fn default_model_name() -> String {
    "logistic-surrogate".to_string()
}

const DEFAULT_RISK: &str = include_str!("../data/risk.json");

impl Default for RiskParameters {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_RISK).expect("bundled risk parameters are valid")
    }
}

impl RiskParameters {
    pub fn validate(&self, feature_count: usize) -> Result<(), ConfigError> {
        if !(self.baseline_hazard > 0.0 && self.baseline_hazard <= 0.2) {
            return Err(ConfigError::Risk(format!(
                "baseline hazard {} outside (0, 0.2]",
                self.baseline_hazard
            )));
        }
        if !self.intercept.is_finite() || self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ConfigError::Risk("coefficients must be finite".into()));
        }
        if self.coefficients.len() != feature_count {
            return Err(ConfigError::Risk(format!(
                "{} coefficients for {} features",
                self.coefficients.len(),
                feature_count
            )));
        }
        if self.horizon_years == 0 {
            return Err(ConfigError::Risk("horizon must be at least one year".into()));
        }
        Ok(())
    }

    /// A model whose risk ignores every feature.
    pub fn constant(feature_count: usize) -> Self {
        Self {
            coefficients: vec![0.0; feature_count],
            ..Self::default()
        }
    }

    pub fn annual_probability(&self, features: &[f64]) -> f64 {
        let score = self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>();
        self.baseline_hazard * logistic(score)
    }

    /// Risk at the configured horizon.
    pub fn assess(&self, features: &[f64]) -> f64 {
        self.risk(features, self.horizon_years)
    }

    pub fn fingerprint(&self) -> String {
        crate::model::fingerprint_json(self)
    }
}

impl RiskModel for RiskParameters {
    fn risk(&self, features: &[f64], horizon_years: u32) -> f64 {
        assess_risk(features, horizon_years, self)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `G(x, tau) = 1 - (1 - p_annual(x))^tau`.
pub fn assess_risk(features: &[f64], horizon_years: u32, params: &RiskParameters) -> f64 {
    if horizon_years == 0 {
        return 0.0;
    }
    let p = params.annual_probability(features);
    // 1 - (1-p)^t computed without cancellation for small p
    let g = -((horizon_years as f64) * (-p).ln_1p()).exp_m1();
    g.clamp(0.0, 1.0)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Blends feature-space distance with the gap between precomputed risks:
/// `beta * |a - b| + (1 - beta) * |risk_a - risk_b|`.
pub fn blended_distance(a: &[f64], risk_a: f64, b: &[f64], risk_b: f64, beta: f64) -> f64 {
    let feature_part = if beta > 0.0 { beta * euclidean(a, b) } else { 0.0 };
    let risk_part = if beta < 1.0 {
        (1.0 - beta) * (risk_a - risk_b).abs()
    } else {
        0.0
    };
    feature_part + risk_part
}

/// The patient distance under a given risk model and horizon.
pub fn distance<R: RiskModel + ?Sized>(
    a: &[f64],
    b: &[f64],
    beta: f64,
    model: &R,
    horizon_years: u32,
) -> Result<f64, SchemaMismatch> {
    if a.len() != b.len() {
        return Err(SchemaMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ra = model.risk(a, horizon_years);
    let rb = model.risk(b, horizon_years);
    Ok(blended_distance(a, ra, b, rb, beta))
}
