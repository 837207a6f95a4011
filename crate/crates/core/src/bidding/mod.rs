//! Bids from multipliers, the uniform multiplier update, and the non-uniform
//! best response (curves → lower hulls → greedy frontier selection).

pub mod curve;
pub mod greedy;
pub mod hull;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::{
    best_response, curve_from_responses, evaluate_partition_curve, fill_raw, partition_curve, reference_multiplier, slack_scale, BestResponse,
    Discretization, MarketView, QueryResponse,
};
pub use greedy::{greedy_select, Selection};
pub use hull::{lower_convex_hull, CurvePoint};

#[derive(Debug, Error, PartialEq)]
pub enum BiddingError {
    #[error("multiplier must be positive, got {0}")]
    NonPositiveMultiplier(f64),
    #[error("step size must be in (0, 1], got {0}")]
    BadStep(f64),
    #[error("level {level} exceeds hierarchy depth {depth}")]
    LevelTooDeep { level: usize, depth: usize },
}

/// `κ · v / τ`.
#[inline]
pub fn bid_of(kappa: f64, value: f64, tau: f64) -> f64 {
    kappa * value / tau
}

/// Clamps for the uniform multiplier update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniformUpdate {
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Factor applied when a bidder neither won value nor spent anything.
    pub growth: f64,
}

impl Default for UniformUpdate {
    fn default() -> Self {
        UniformUpdate { ratio_min: 0.25, ratio_max: 4.0, growth: 2.0 }
    }
}

impl UniformUpdate {
    /// `κ · clamp(value / spend)^η`; stationary exactly when value equals spend.
    pub fn apply(&self, kappa: f64, value: f64, spend: f64, eta: f64) -> Result<f64, BiddingError> {
        if !(kappa > 0.0) {
            return Err(BiddingError::NonPositiveMultiplier(kappa));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(BiddingError::BadStep(eta));
        }
        let ratio = if spend > 0.0 {
            (value / spend).clamp(self.ratio_min, self.ratio_max)
        } else if value > 0.0 {
            self.ratio_max
        } else {
            self.growth
        };
        Ok(kappa * ratio.powf(eta))
    }
}

pub fn uniform_update(kappa: f64, value: f64, spend: f64, eta: f64) -> Result<f64, BiddingError> {
    UniformUpdate::default().apply(kappa, value, spend, eta)
}

/// `η_t = (t + offset)^(−power)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EtaSchedule {
    pub offset: f64,
    pub power: f64,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule { offset: 2.0, power: 0.5 }
    }
}

impl EtaSchedule {
    pub fn eta(&self, t: usize) -> f64 {
        (t as f64 + self.offset).powf(-self.power).min(1.0)
    }
}

/// Multipliers per advertiser and partition at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidProfile {
    pub level: usize,
    pub kappas: Vec<Vec<f64>>,
}

impl BidProfile {
    pub fn uniform(advertisers: usize, partitions: usize, level: usize, kappa: f64) -> BidProfile {
        BidProfile { level, kappas: vec![vec![kappa; partitions]; advertisers] }
    }

    pub fn kappa(&self, advertiser: usize, partition: usize) -> f64 {
        self.kappas[advertiser][partition]
    }
}
