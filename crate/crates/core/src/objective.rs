//! Class-weighted token cross-entropy and the combined fine/coarse objective.

use std::collections::HashMap;

use thiserror::Error;

use crate::labelspace::BioLabel;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("{dists} distributions for {labels} gold labels")]
    LengthMismatch { dists: usize, labels: usize },
    #[error("distribution {index} has {got} entries, vocabulary has {expected}")]
    WidthMismatch { index: usize, got: usize, expected: usize },
    #[error("gold label {0} is not in the vocabulary")]
    UnknownLabel(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("weights must be non-negative")]
    NegativeWeight,
}

/// A probability vector over a BIO vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution(Vec<f64>);

impl TokenDistribution {
    /// Entries must be non-negative and sum to 1 within 1e-9.
    pub fn new(probabilities: Vec<f64>) -> Result<Self, ObjectiveError> {
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ObjectiveError::InvalidDistribution("negative or non-finite entry".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ObjectiveError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self(probabilities))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub outside: f64,
    pub entity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            outside: 0.1,
            entity: 1.0,
        }
    }
}

impl LossWeights {
    fn for_label(&self, label: &BioLabel) -> f64 {
        if label.is_outside() {
            self.outside
        } else {
            self.entity
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOptions {
    /// Probabilities below this floor are raised to it before taking the log.
    /// `None` lets a zero probability produce `+inf`.
    pub clamp_floor: Option<f64>,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            clamp_floor: Some(1e-12),
        }
    }
}

/// Mean over tokens of `w(gold) * -ln p(gold)`, where `w` is `weights.outside`
/// for `O` and `weights.entity` otherwise. The sum is divided by the token
/// count, not by the sum of weights. An empty sequence has loss 0.
pub fn weighted_cross_entropy(
    dists: &[TokenDistribution],
    gold: &[BioLabel],
    vocabulary: &[BioLabel],
    weights: LossWeights,
    options: LossOptions,
) -> Result<f64, ObjectiveError> {
    if weights.outside < 0.0 || weights.entity < 0.0 {
        return Err(ObjectiveError::NegativeWeight);
    }
    if dists.len() != gold.len() {
        return Err(ObjectiveError::LengthMismatch {
            dists: dists.len(),
            labels: gold.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let index: HashMap<&BioLabel, usize> = vocabulary.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let mut total = 0.0;
    for (i, (dist, label)) in dists.iter().zip(gold).enumerate() {
        if dist.0.len() != vocabulary.len() {
            return Err(ObjectiveError::WidthMismatch {
                index: i,
                got: dist.0.len(),
                expected: vocabulary.len(),
            });
        }
        let k = *index
            .get(label)
            .ok_or_else(|| ObjectiveError::UnknownLabel(label.to_string()))?;
        let mut p = dist.0[k];
        if let Some(floor) = options.clamp_floor {
            p = p.max(floor);
        }
        let w = weights.for_label(label);
        if w != 0.0 {
            total += w * -p.ln();
        }
    }
    Ok(total / gold.len() as f64)
}

/// `fine_loss + coarse_weight * coarse_loss`.
pub fn combined_loss(fine_loss: f64, coarse_loss: f64, coarse_weight: f64) -> Result<f64, ObjectiveError> {
    if coarse_weight < 0.0 {
        return Err(ObjectiveError::NegativeWeight);
    }
    if coarse_weight == 0.0 {
        return Ok(fine_loss);
    }
    Ok(fine_loss + coarse_weight * coarse_loss)
}

pub const DEFAULT_COARSE_WEIGHT: f64 = 0.3;
