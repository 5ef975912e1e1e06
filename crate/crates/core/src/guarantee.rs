//! Guarantee-ratio policies and the agent on-boarding gate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpr::{FeatureVector, GprModel, GprError};
use crate::ledger::Secs;
use crate::routing::{sdt, RoadNetwork};

#[derive(Debug, Error)]
pub enum GuaranteeError {
    #[error("total active time must be positive")]
    NoActiveTime,
    #[error("rating must be in 1..=5, got {0}")]
    BadRating(u8),
    #[error("agent active time must be positive")]
    EmptyShift,
    #[error("prediction failed: {0}")]
    Prediction(#[from] GprError),
}

/// How the per-agent guarantee ratio is chosen at login.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GuaranteeMode {
    /// The same ratio for every agent.
    Fixed { g: f64 },
    /// Per-agent ratio from the work prediction model: g_v = W_hat / A_v.
    Dynamic,
    /// Rating-scaled ratio around the calibrated mean.
    RatingBased { omega: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteePolicy {
    #[serde(flatten)]
    pub mode: GuaranteeMode,
    /// Turn away agents whose predicted work cannot meet the guarantee.
    #[serde(default)]
    pub rejection_enabled: bool,
    /// Ratio the rejection test compares against; defaults to the fixed g
    /// when the mode carries one.
    #[serde(default)]
    pub baseline_g: Option<f64>,
}

impl GuaranteePolicy {
    pub fn fixed(g: f64) -> Self {
        GuaranteePolicy {
            mode: GuaranteeMode::Fixed { g },
            rejection_enabled: false,
            baseline_g: None,
        }
    }

    /// Does any branch need the prediction model?
    pub fn needs_model(&self) -> bool {
        self.rejection_enabled || matches!(self.mode, GuaranteeMode::Dynamic)
    }

    pub fn resolved_baseline_g(&self) -> f64 {
        self.baseline_g.unwrap_or(match self.mode {
            GuaranteeMode::Fixed { g } => g,
            GuaranteeMode::RatingBased { omega } => omega,
            GuaranteeMode::Dynamic => 0.0,
        })
    }
}

/// Cost-optimal fixed guarantee: the system-wide ratio of total work to
/// total active time, clamped to [0, 1].
pub fn optimal_fixed_g(total_work_h: f64, total_active_h: f64) -> Result<f64, GuaranteeError> {
    if total_active_h <= 0.0 {
        return Err(GuaranteeError::NoActiveTime);
    }
    Ok((total_work_h / total_active_h).clamp(0.0, 1.0))
}

/// Per-agent dynamic guarantee: predicted work over announced active time,
/// clamped to the feasible range.
pub fn dynamic_g(
    model: &GprModel,
    features: &FeatureVector,
    active_hours: f64,
) -> Result<f64, GuaranteeError> {
    if active_hours <= 0.0 {
        return Err(GuaranteeError::EmptyShift);
    }
    let (predicted_work_h, _) = model.predict_features(features)?;
    Ok((predicted_work_h.max(0.0) / active_hours).clamp(0.0, 1.0))
}

/// Rating-scaled guarantee: g_v = (1 + 0.1 * (rating - 3)) * omega,
/// clamped to [0, 1]. Top-rated agents get 20% above the mean, bottom-rated
/// 20% below.
pub fn rating_based_g(rating: u8, omega: f64) -> Result<f64, GuaranteeError> {
    if !(1..=5).contains(&rating) {
        return Err(GuaranteeError::BadRating(rating));
    }
    let g = (1.0 + 0.1 * (rating as f64 - 3.0)) * omega;
    Ok(g.clamp(0.0, 1.0))
}

/// On-boarding gate: turn the agent away when the predicted work cannot
/// meet the guarantee. The boundary is kept (strict inequality).
pub fn should_reject(predicted_work_h: f64, baseline_g: f64, active_h: f64) -> bool {
    predicted_work_h < baseline_g * active_h
}

/// Quick-start approximation of the system ratio when no calibration run is
/// available: per-order ideal service time over total announced active time.
pub fn analytic_omega(
    orders: &[crate::ledger::Order],
    sessions_active_secs: Secs,
    net: &RoadNetwork,
) -> f64 {
    if sessions_active_secs <= 0 {
        return 0.0;
    }
    let work: Secs = orders.iter().filter_map(|o| sdt(o, net).ok()).sum();
    (work as f64 / sessions_active_secs as f64).clamp(0.0, 1.0)
}
