//! Post-run metrics: delivery times, SLA violations, Gini scores, work,
//! CO2 and window-runtime statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimReport;
use crate::ledger::{handout, work_payment, CostModel, Secs, SECS_PER_HOUR};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gini input must be nonempty")]
    Empty,
    #[error("gini input must be nonnegative, got {0}")]
    Negative(f64),
}

/// Gini score via the mean absolute pairwise difference:
/// sum_ij |x_i - x_j| / (2 n^2 mean). All-zero input is 0 by convention.
pub fn gini(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for &x in values {
        if x < 0.0 {
            return Err(MetricsError::Negative(x));
        }
        sum += x;
    }
    if sum == 0.0 {
        return Ok(0.0);
    }
    let n = values.len() as f64;
    let mean = sum / n;
    let mut abs_diff = 0.0;
    for &a in values {
        for &b in values {
            abs_diff += (a - b).abs();
        }
    }
    Ok(abs_diff / (2.0 * n * n * mean))
}

/// One row per metric of the performance table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_delivery_time_s: f64,
    pub sla_violation_pct: f64,
    /// Gini over (work pay + handout) / active hour per agent.
    pub gini_income_per_active: f64,
    /// Gini over work pay alone per active hour, for comparison.
    pub gini_work_pay_per_active: f64,
    /// Gini over min(W, G) / A per agent: work counted only up to the
    /// guarantee, normalized by active time.
    pub gini_work_for_min_wage: f64,
    pub avg_work_per_agent_h: f64,
    pub co2_kg: f64,
    pub avg_window_runtime_s: f64,
    pub max_window_runtime_s: f64,
    pub overflow_pct: f64,
    pub orders_delivered: usize,
    pub orders_undelivered: usize,
    pub agents_counted: usize,
}

/// Compute the full metric table from a finalized report.
pub fn compute_metrics(report: &SimReport, cm: &CostModel, sla: Secs) -> MetricsReport {
    let delivered: Vec<Secs> = report
        .orders
        .iter()
        .filter_map(|o| o.delivered_at.map(|d| d - o.placed_at))
        .collect();
    let avg_delivery = if delivered.is_empty() {
        0.0
    } else {
        delivered.iter().sum::<Secs>() as f64 / delivered.len() as f64
    };
    let violations = delivered.iter().filter(|&&d| d > sla).count();
    let sla_violation_pct = if delivered.is_empty() {
        0.0
    } else {
        100.0 * violations as f64 / delivered.len() as f64
    };

    let mut income_per_active = Vec::new();
    let mut work_pay_per_active = Vec::new();
    let mut work_for_min_wage = Vec::new();
    let mut total_work_h = 0.0;
    let mut total_km = 0.0;
    for a in &report.agents {
        if !a.ledger.accepted || a.ledger.active_time <= 0 {
            continue;
        }
        let active_h = a.ledger.active_hours();
        let pay = work_payment(&a.ledger, cm);
        let h = handout(&a.ledger, cm);
        income_per_active.push((pay + h) / active_h);
        work_pay_per_active.push(pay / active_h);
        let counted_work = (a.ledger.work_time as f64).min(a.ledger.guarantee_secs());
        work_for_min_wage.push(counted_work / (active_h * SECS_PER_HOUR));
        total_work_h += a.ledger.work_hours();
        total_km += a.ledger.distance_traveled / 1000.0;
    }
    let agents_counted = income_per_active.len();
    let gini_or_zero = |v: &[f64]| if v.is_empty() { 0.0 } else { gini(v).unwrap_or(0.0) };

    let runtimes: Vec<f64> = report.windows.iter().map(|w| w.runtime_s).collect();
    let overflown = report.windows.iter().filter(|w| w.overflown).count();

    MetricsReport {
        avg_delivery_time_s: avg_delivery,
        sla_violation_pct,
        gini_income_per_active: gini_or_zero(&income_per_active),
        gini_work_pay_per_active: gini_or_zero(&work_pay_per_active),
        gini_work_for_min_wage: gini_or_zero(&work_for_min_wage),
        avg_work_per_agent_h: if agents_counted == 0 {
            0.0
        } else {
            total_work_h / agents_counted as f64
        },
        co2_kg: total_km * cm.co2_grams_per_km / 1000.0,
        avg_window_runtime_s: if runtimes.is_empty() {
            0.0
        } else {
            runtimes.iter().sum::<f64>() / runtimes.len() as f64
        },
        max_window_runtime_s: runtimes.iter().copied().fold(0.0, f64::max),
        overflow_pct: if report.windows.is_empty() {
            0.0
        } else {
            100.0 * overflown as f64 / report.windows.len() as f64
        },
        orders_delivered: delivered.len(),
        orders_undelivered: report.orders.len() - delivered.len(),
        agents_counted,
    }
}
