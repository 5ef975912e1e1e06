//! Domain types and the per-agent work/active-time ledger.
//!
//! All simulation time is integer seconds. Money is `f64` pay units and
//! hours enter only at the pay boundary ([`handout`], [`platform_cost`]),
//! which avoids drift from repeated unit conversion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// External node identifier in a road network.
pub type NodeId = u32;
/// Absolute timestamp, seconds.
pub type Ts = i64;
/// Duration, seconds.
pub type Secs = i64;

pub const SECS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("accrual interval must be nonnegative, got {0} s")]
    NegativeInterval(Secs),
    #[error("guarantee ratio must be positive for wage-coupled pay, got {0}")]
    NonPositiveGuarantee(f64),
}

/// A customer order: placed at `placed_at`, picked up at `restaurant_node`
/// once food is ready (`placed_at + prep_time`), dropped at `customer_node`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub placed_at: Ts,
    pub restaurant_node: NodeId,
    pub customer_node: NodeId,
    /// Food preparation time, seconds. Runs in parallel with the first mile.
    pub prep_time: Secs,
}

impl Order {
    /// Food is ready for pickup at this instant.
    pub fn ready_at(&self) -> Ts {
        self.placed_at + self.prep_time
    }
}

/// One agent shift: the agent announces the interval it plans to stay
/// logged in when joining the platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSession {
    pub id: u64,
    pub login_at: Ts,
    pub logoff_at: Ts,
    pub login_node: NodeId,
    /// Maximum simultaneous undelivered orders.
    pub capacity: u32,
    /// Service rating 1..=5; 3 when the workload carries none.
    pub rating: u8,
}

impl AgentSession {
    /// Announced active time for the whole shift, seconds.
    pub fn announced_active_secs(&self) -> Secs {
        self.logoff_at - self.login_at
    }

    pub fn announced_active_hours(&self) -> f64 {
        self.announced_active_secs() as f64 / SECS_PER_HOUR
    }
}

/// Running work/active-time account for one agent.
///
/// `work_time` counts seconds spent servicing orders (traveling for or
/// waiting on assigned orders); `active_time` counts logged-in seconds.
/// Work accrued after logoff while finishing carried orders goes through
/// [`AgentLedger::accrue_overtime_work`] and is the one place `work_time`
/// may exceed `active_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentLedger {
    pub work_time: Secs,
    pub active_time: Secs,
    /// Guaranteed fraction of active time that is work, in [0, 1].
    pub guarantee_ratio: f64,
    /// Meters traveled while servicing.
    pub distance_traveled: f64,
    /// False when the on-boarding gate turned the agent away.
    pub accepted: bool,
}

impl AgentLedger {
    pub fn new(guarantee_ratio: f64) -> Self {
        AgentLedger {
            work_time: 0,
            active_time: 0,
            guarantee_ratio: guarantee_ratio.clamp(0.0, 1.0),
            distance_traveled: 0.0,
            accepted: true,
        }
    }

    pub fn rejected() -> Self {
        AgentLedger {
            accepted: false,
            ..AgentLedger::new(0.0)
        }
    }

    /// Advance the ledger by `interval` seconds of logged-in time.
    /// Work accrues only while servicing.
    pub fn accrue(&mut self, interval: Secs, servicing: bool) -> Result<(), LedgerError> {
        if interval < 0 {
            return Err(LedgerError::NegativeInterval(interval));
        }
        self.active_time += interval;
        if servicing {
            self.work_time += interval;
        }
        Ok(())
    }

    /// Work done after logoff while finishing already-carried orders.
    /// Does not count toward active time.
    pub fn accrue_overtime_work(&mut self, interval: Secs) -> Result<(), LedgerError> {
        if interval < 0 {
            return Err(LedgerError::NegativeInterval(interval));
        }
        self.work_time += interval;
        Ok(())
    }

    pub fn add_distance(&mut self, meters: f64) {
        self.distance_traveled += meters;
    }

    /// Promised work so far: G = g * A, in seconds.
    pub fn guarantee_secs(&self) -> f64 {
        self.guarantee_ratio * self.active_time as f64
    }

    pub fn work_hours(&self) -> f64 {
        self.work_time as f64 / SECS_PER_HOUR
    }

    pub fn active_hours(&self) -> f64 {
        self.active_time as f64 / SECS_PER_HOUR
    }
}

/// Pay parameters shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Pay per hour worked, p.
    pub pay_rate: f64,
    /// Legal minimum hourly wage.
    pub min_wage: f64,
    /// Emission factor for the CO2 metric.
    pub co2_grams_per_km: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            pay_rate: 120.0,
            min_wage: 60.0,
            co2_grams_per_km: 120.0,
        }
    }
}

/// Money paid for the unmet part of the work guarantee at shift end:
/// H = p * max(0, G - W).
pub fn handout(ledger: &AgentLedger, cm: &CostModel) -> f64 {
    let unmet_secs = (ledger.guarantee_secs() - ledger.work_time as f64).max(0.0);
    cm.pay_rate * unmet_secs / SECS_PER_HOUR
}

/// Work payment for the shift: P = p * W.
pub fn work_payment(ledger: &AgentLedger, cm: &CostModel) -> f64 {
    cm.pay_rate * ledger.work_hours()
}

/// Total platform cost: work payments plus handouts over all ledgers.
pub fn platform_cost<'a, I>(ledgers: I, cm: &CostModel) -> f64
where
    I: IntoIterator<Item = &'a AgentLedger>,
{
    ledgers
        .into_iter()
        .map(|l| work_payment(l, cm) + handout(l, cm))
        .sum()
}

/// Wage-coupled hourly pay: p(g) = P_min / g, so that p(g) * g = P_min.
pub fn pay_rate_for_guarantee(g: f64, min_wage: f64) -> Result<f64, LedgerError> {
    if g <= 0.0 {
        return Err(LedgerError::NonPositiveGuarantee(g));
    }
    Ok(min_wage / g)
}
