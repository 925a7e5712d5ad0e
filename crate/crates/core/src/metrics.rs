//! Multiple-choice accuracy and mean relative accuracy (MRA) for counts.
//!
//! MRA averages, over a ladder of confidence thresholds θ, the indicator
//! `|pred - gold| / gold < 1 - θ`. Thresholds are held in basis points and
//! the comparison is done in integers, so boundary cases such as a 5%
//! error at θ = 0.95 are decided exactly rather than by float rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("prediction and gold lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no items to score")]
    Empty,
    #[error("gold count must be >= 1")]
    ZeroGold,
    #[error("invalid MRA thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `rel_err < 1 - θ`
    Strict,
    /// `rel_err <= 1 - θ`
    NonStrict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MraConfig {
    thresholds_bp: Vec<u32>,
    comparison: Comparison,
}

impl Default for MraConfig {
    /// θ ∈ {0.50, 0.55, ..., 0.95}, strict comparison.
    fn default() -> Self {
        Self {
            thresholds_bp: (0..10).map(|i| 5000 + 500 * i).collect(),
            comparison: Comparison::Strict,
        }
    }
}

impl MraConfig {
    /// Thresholds in basis points (`5000` is θ = 0.50).
    pub fn new(thresholds_bp: Vec<u32>, comparison: Comparison) -> Result<Self, MetricError> {
        if thresholds_bp.is_empty() {
            return Err(MetricError::InvalidThresholds("empty".into()));
        }
        if thresholds_bp.iter().any(|&t| t == 0 || t >= 10_000) {
            return Err(MetricError::InvalidThresholds(
                "thresholds must lie strictly between 0 and 1".into(),
            ));
        }
        if thresholds_bp.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricError::InvalidThresholds(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            thresholds_bp,
            comparison,
        })
    }

    pub fn with_comparison(mut self, comparison: Comparison) -> Self {
        self.comparison = comparison;
        self
    }

    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        self.thresholds_bp.iter().map(|&t| f64::from(t) / 10_000.0)
    }

    pub fn comparison(&self) -> Comparison {
        self.comparison
    }

    fn passes(&self, pred: u64, gold: u64) -> u64 {
        let err = u128::from(pred.abs_diff(gold)) * 10_000;
        let gold = u128::from(gold);
        self.thresholds_bp
            .iter()
            .filter(|&&t| {
                let bound = u128::from(10_000 - t) * gold;
                match self.comparison {
                    Comparison::Strict => err < bound,
                    Comparison::NonStrict => err <= bound,
                }
            })
            .count() as u64
    }
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mra(pred: u64, gold: u64, cfg: &MraConfig) -> Result<f64, MetricError> {
    if gold == 0 {
        return Err(MetricError::ZeroGold);
    }
    Ok(cfg.passes(pred, gold) as f64 / cfg.thresholds_bp.len() as f64)
}

/// Mean of per-pair MRA. Computed from the integer pass count so that the
/// result is the correctly rounded ratio.
pub fn mean_mra(pairs: &[(u64, u64)], cfg: &MraConfig) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut passed = 0u64;
    for &(pred, gold) in pairs {
        if gold == 0 {
            return Err(MetricError::ZeroGold);
        }
        passed += cfg.passes(pred, gold);
    }
    Ok(passed as f64 / (pairs.len() * cfg.thresholds_bp.len()) as f64)
}

/// Rounds a fractional count half-up; negatives clamp to zero.
pub fn round_count(x: f64) -> u64 {
    if x.is_nan() || x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as u64
    }
}
