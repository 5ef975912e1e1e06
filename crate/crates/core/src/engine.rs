//! The discrete-window dispatch loop: order ingestion, agent log-in/off,
//! on-boarding rejection, guarantee assignment, batching, bipartite
//! matching, route execution and ledger accrual.
//!
//! Time advances in fixed windows. At each boundary the engine first
//! activates agents that logged in during the window (running prediction,
//! rejection and guarantee branches), then simulates the physical world up
//! to the boundary at exact event times, then batches and matches pending
//! orders. Route execution follows planned timestamps, so a run is a pure
//! function of the workload and config.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batching::{batch_orders, Batch, BatchParams};
use crate::gpr::{FeatureVector, GprError, GprModel};
use crate::guarantee::{
    dynamic_g, rating_based_g, should_reject, GuaranteeError, GuaranteeMode, GuaranteePolicy,
};
use crate::ledger::{
    handout, work_payment, AgentLedger, AgentSession, CostModel, NodeId, Order, Secs, Ts,
};
use crate::matching::{evaluate_pair, guarantee_weight, min_cost_assignment, CostMatrix, INFEASIBLE};
use crate::routing::{plan_route, sdt, PlanContext, RoadNetwork, RoutePlan, RoutingError, StopAction, SECS_PER_DAY};
use crate::workload::{validate, Workload, WorkloadError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("routing: {0}")]
    Routing(#[from] RoutingError),
    #[error("prediction: {0}")]
    Gpr(#[from] GprError),
    #[error("guarantee: {0}")]
    Guarantee(#[from] GuaranteeError),
}

/// Which edge weight drives the matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchObjective {
    /// Guarantee-aware weight plus lambda times the delivery-time weight.
    GuaranteeAware,
    /// Delivery-time weight only (the baseline matcher).
    DeliveryTimeOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Matching window, seconds.
    pub window_seconds: Secs,
    /// Service level agreement, seconds.
    pub sla_seconds: Secs,
    /// Mixing factor between the guarantee and delivery-time weights.
    pub lambda: f64,
    pub objective: MatchObjective,
    pub policy: GuaranteePolicy,
    pub cost: CostModel,
    /// Set the pay rate to min_wage / g at run start (fixed positive g).
    pub couple_pay_to_guarantee: bool,
    pub seed: u64,
    pub batch: BatchParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window_seconds: 180,
            sla_seconds: 2700,
            lambda: 1.0,
            objective: MatchObjective::GuaranteeAware,
            policy: GuaranteePolicy::fixed(0.0),
            cost: CostModel::default(),
            couple_pay_to_guarantee: false,
            seed: 0,
            batch: BatchParams::default(),
        }
    }
}

impl SimConfig {
    /// Cost model with the pay rate optionally coupled to the guarantee.
    pub fn resolved_cost(&self) -> CostModel {
        let mut cm = self.cost;
        if self.couple_pay_to_guarantee {
            let g = match self.policy.mode {
                GuaranteeMode::Fixed { g } => g,
                GuaranteeMode::RatingBased { omega } => omega,
                GuaranteeMode::Dynamic => self.policy.resolved_baseline_g(),
            };
            if g > 0.0 {
                cm.pay_rate = cm.min_wage / g;
            }
        }
        cm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Delivered,
    Pending,
    Undeliverable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderRecord {
    pub id: u64,
    pub placed_at: Ts,
    pub restaurant_node: NodeId,
    pub customer_node: NodeId,
    pub prep_s: Secs,
    pub sdt_s: Option<Secs>,
    pub status: OrderStatus,
    pub assigned_at: Option<Ts>,
    pub assigned_window: Option<usize>,
    pub agent: Option<u64>,
    pub picked_at: Option<Ts>,
    pub delivered_at: Option<Ts>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentRecord {
    pub session: AgentSession,
    pub ledger: AgentLedger,
    pub features: FeatureVector,
    pub predicted_work_h: Option<f64>,
    pub work_pay: f64,
    pub handout: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowRecord {
    pub index: usize,
    pub t: Ts,
    pub new_orders: usize,
    pub pending_orders: usize,
    pub batches: usize,
    pub agents_in_shift: usize,
    pub assigned_orders: usize,
    /// Dispatch computation wall time (prediction, batching, matching),
    /// exclusive of world simulation and I/O.
    pub runtime_s: f64,
    pub overflown: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Login { t: Ts, agent: u64 },
    GuaranteeSet { t: Ts, agent: u64, g: f64 },
    Reject { t: Ts, agent: u64, predicted_work_h: f64 },
    Assign { t: Ts, agent: u64, orders: Vec<u64> },
    Pickup { t: Ts, agent: u64, order: u64 },
    Deliver { t: Ts, agent: u64, order: u64 },
    Work { agent: u64, from: Ts, to: Ts, overtime: bool },
    Logoff { t: Ts, agent: u64 },
    HandoutPaid { t: Ts, agent: u64, amount: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimSummary {
    pub platform_cost: f64,
    pub total_work_pay: f64,
    pub total_handouts: f64,
    pub total_work_h: f64,
    pub total_active_h: f64,
    pub omega_realized: f64,
    pub pay_rate: f64,
    pub min_wage: f64,
    pub orders_total: usize,
    pub orders_delivered: usize,
    pub orders_pending: usize,
    pub orders_undeliverable: usize,
    pub agents_total: usize,
    pub agents_rejected: usize,
    pub avg_delivery_time_s: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub orders: Vec<OrderRecord>,
    pub agents: Vec<AgentRecord>,
    pub windows: Vec<WindowRecord>,
    pub events: Vec<SimEvent>,
    pub warnings: Vec<String>,
    pub summary: SimSummary,
}

#[derive(Debug, Clone)]
struct ExecStop {
    node: NodeId,
    /// `None` marks a committed transit leg kept across a re-plan.
    action: Option<StopAction>,
    arrival: Ts,
    done: Ts,
    leg_meters: f64,
    arrived: bool,
}

struct ActiveAgent {
    session: AgentSession,
    ledger: AgentLedger,
    features: FeatureVector,
    predicted_work_h: Option<f64>,
    node: NodeId,
    at: Ts,
    accrued_to: Ts,
    plan: VecDeque<ExecStop>,
    carried: Vec<Order>,
    pending: Vec<Order>,
    finalized: bool,
}

impl ActiveAgent {
    fn new(session: AgentSession, g: f64, features: FeatureVector, predicted: Option<f64>) -> Self {
        ActiveAgent {
            node: session.login_node,
            at: session.login_at,
            accrued_to: session.login_at,
            session,
            ledger: AgentLedger::new(g),
            features,
            predicted_work_h: predicted,
            plan: VecDeque::new(),
            carried: Vec::new(),
            pending: Vec::new(),
            finalized: false,
        }
    }

    fn has_undelivered(&self) -> bool {
        !self.carried.is_empty() || !self.pending.is_empty()
    }

    fn in_shift(&self, t: Ts) -> bool {
        !self.finalized && self.session.logoff_at > t
    }

    /// Where and when the remaining route can be re-planned from: the next
    /// arrival node when mid-leg, otherwise the current position now.
    fn plan_origin(&self, now: Ts) -> (NodeId, Ts) {
        match self.plan.front() {
            // Mid-leg: commit the travel, plan from the arrival.
            Some(f) if !f.arrived && f.arrival > now => (f.node, f.arrival),
            // Waiting at a stop: already there, free from now.
            Some(f) => (f.node, now),
            None => (self.node, now),
        }
    }

    fn set_plan(&mut self, plan: RoutePlan) {
        let mut stops = VecDeque::with_capacity(plan.stops.len() + 1);
        if let Some(front) = self.plan.front() {
            if !front.arrived {
                // Keep the committed leg so distance and timing stay intact.
                stops.push_back(ExecStop {
                    node: front.node,
                    action: None,
                    arrival: front.arrival,
                    done: front.arrival,
                    leg_meters: front.leg_meters,
                    arrived: false,
                });
            }
        }
        for s in plan.stops {
            stops.push_back(ExecStop {
                node: s.node,
                action: Some(s.action),
                arrival: s.arrival,
                done: s.done,
                leg_meters: s.leg_meters,
                arrived: false,
            });
        }
        self.plan = stops;
    }

    fn assign_batch(&mut self, batch: &Batch, now: Ts, net: &RoadNetwork) -> Result<Ts, RoutingError> {
        let (node, at) = self.plan_origin(now);
        let carried = self.carried.clone();
        let pending = self.pending.clone();
        let ctx = PlanContext {
            node,
            at,
            capacity: self.session.capacity,
            carried: &carried,
            pending: &pending,
        };
        let plan = plan_route(net, &ctx, &batch.orders)?;
        let completion = plan.completion_time;
        self.pending.extend(batch.orders.iter().copied());
        self.set_plan(plan);
        Ok(completion)
    }

    /// Advance the world for this agent to `until`: accrue active/work
    /// time, attribute leg distances, perform due stops.
    fn execute_to(
        &mut self,
        until: Ts,
        events: &mut Vec<SimEvent>,
        orders_out: &mut BTreeMap<u64, OrderRecord>,
    ) {
        let from = self.accrued_to;
        if until <= from {
            return;
        }
        let (login, logoff) = (self.session.login_at, self.session.logoff_at);
        let work_to = if self.has_undelivered() {
            self.plan
                .back()
                .map(|s| s.done)
                .unwrap_or(from)
                .clamp(from, until)
        } else {
            from
        };
        let active_from = from.max(login);
        let active_to = until.min(logoff).max(active_from);
        let active_len = active_to - active_from;
        let work_in_shift_to = work_to.min(logoff).max(from);
        let work_in_shift = work_in_shift_to - from;
        let overtime = (work_to - logoff.max(from)).max(0);
        self.ledger.accrue(work_in_shift, true).expect("nonnegative span");
        self.ledger
            .accrue(active_len - work_in_shift, false)
            .expect("nonnegative span");
        if work_in_shift > 0 {
            events.push(SimEvent::Work {
                agent: self.session.id,
                from,
                to: work_in_shift_to,
                overtime: false,
            });
        }
        if overtime > 0 {
            self.ledger.accrue_overtime_work(overtime).expect("nonnegative span");
            events.push(SimEvent::Work {
                agent: self.session.id,
                from: logoff.max(from),
                to: work_to,
                overtime: true,
            });
        }

        while let Some(front) = self.plan.front_mut() {
            if !front.arrived && front.arrival <= until {
                front.arrived = true;
                self.ledger.add_distance(front.leg_meters);
            }
            if front.done > until {
                break;
            }
            let (node, done, action) = (front.node, front.done, front.action);
            self.plan.pop_front();
            self.node = node;
            self.at = done;
            match action {
                Some(StopAction::Pickup(oid)) => {
                    if let Some(pos) = self.pending.iter().position(|o| o.id == oid) {
                        let order = self.pending.remove(pos);
                        self.carried.push(order);
                    }
                    events.push(SimEvent::Pickup {
                        t: done,
                        agent: self.session.id,
                        order: oid,
                    });
                    if let Some(rec) = orders_out.get_mut(&oid) {
                        rec.picked_at = Some(done);
                    }
                }
                Some(StopAction::Drop(oid)) => {
                    self.carried.retain(|o| o.id != oid);
                    events.push(SimEvent::Deliver {
                        t: done,
                        agent: self.session.id,
                        order: oid,
                    });
                    if let Some(rec) = orders_out.get_mut(&oid) {
                        rec.delivered_at = Some(done);
                        rec.status = OrderStatus::Delivered;
                    }
                }
                None => {}
            }
        }
        self.accrued_to = until;
    }
}

/// Run the full simulation over the workload.
///
/// Deterministic given (workload, config); the model is consulted only when
/// the policy needs predictions.
pub fn run_simulation(
    workload: &Workload,
    cfg: &SimConfig,
    model: Option<&GprModel>,
) -> Result<SimReport, EngineError> {
    if cfg.window_seconds <= 0 {
        return Err(EngineError::Config("window_seconds must be positive".into()));
    }
    if cfg.sla_seconds <= 0 {
        return Err(EngineError::Config("sla_seconds must be positive".into()));
    }
    if cfg.policy.needs_model() && model.is_none() {
        return Err(EngineError::Config(
            "policy requires a prediction model but none was provided".into(),
        ));
    }
    if let GuaranteeMode::Fixed { g } = cfg.policy.mode {
        if !(0.0..=1.0).contains(&g) {
            return Err(EngineError::Config(format!(
                "fixed guarantee ratio must be in [0, 1], got {g}"
            )));
        }
    }
    let net = &workload.net;
    let validated = validate(net, &workload.orders, &workload.agents)?;
    let cost_model = cfg.resolved_cost();

    let mut order_records: BTreeMap<u64, OrderRecord> = BTreeMap::new();
    for o in &workload.orders {
        order_records.insert(
            o.id,
            OrderRecord {
                id: o.id,
                placed_at: o.placed_at,
                restaurant_node: o.restaurant_node,
                customer_node: o.customer_node,
                prep_s: o.prep_time,
                sdt_s: None,
                status: OrderStatus::Undeliverable,
                assigned_at: None,
                assigned_window: None,
                agent: None,
                picked_at: None,
                delivered_at: None,
            },
        );
    }
    let mut orders: Vec<Order> = validated.orders;
    orders.sort_by_key(|o| (o.placed_at, o.id));
    for o in &orders {
        let rec = order_records.get_mut(&o.id).expect("record exists");
        rec.status = OrderStatus::Pending;
        rec.sdt_s = sdt(o, net).ok();
    }
    let mut sessions: Vec<AgentSession> = workload.agents.clone();
    sessions.sort_by_key(|a| (a.login_at, a.id));
    for s in &sessions {
        if !(1..=5).contains(&s.rating) {
            return Err(EngineError::Config(format!(
                "agent {} rating {} outside 1..=5",
                s.id, s.rating
            )));
        }
    }

    let mut events: Vec<SimEvent> = Vec::new();
    let mut windows: Vec<WindowRecord> = Vec::new();
    let mut active: BTreeMap<u64, ActiveAgent> = BTreeMap::new();
    let mut finished: Vec<AgentRecord> = Vec::new();
    let mut pending_pool: BTreeMap<u64, Order> = BTreeMap::new();

    if orders.is_empty() && sessions.is_empty() {
        let summary = SimSummary {
            pay_rate: cost_model.pay_rate,
            min_wage: cost_model.min_wage,
            orders_total: workload.orders.len(),
            orders_undeliverable: workload.orders.len() - orders.len(),
            ..SimSummary::default()
        };
        return Ok(SimReport {
            orders: order_records.into_values().collect(),
            agents: Vec::new(),
            windows,
            events,
            warnings: validated.warnings,
            summary,
        });
    }

    let delta = cfg.window_seconds;
    let first_event = orders
        .first()
        .map(|o| o.placed_at)
        .into_iter()
        .chain(sessions.first().map(|s| s.login_at))
        .min()
        .expect("nonempty");
    let horizon = sessions
        .iter()
        .map(|s| s.logoff_at)
        .chain(orders.last().map(|o| o.placed_at + delta))
        .max()
        .expect("nonempty");
    let t0 = first_event.div_euclid(delta) * delta;

    let mut order_cursor = 0usize;
    let mut session_cursor = 0usize;
    let mut prev = t0;
    let mut window_index = 0usize;
    let baseline_g = cfg.policy.resolved_baseline_g();

    loop {
        let still_working = active.values().any(|a| a.has_undelivered());
        if prev >= horizon && !still_working {
            break;
        }
        if prev > horizon + SECS_PER_DAY {
            // Safety valve; plans are bounded so this is unreachable.
            break;
        }
        let t = prev + delta;

        // New orders placed up to this boundary.
        let mut new_orders = 0usize;
        while order_cursor < orders.len() && orders[order_cursor].placed_at <= t {
            let o = orders[order_cursor];
            pending_pool.insert(o.id, o);
            order_cursor += 1;
            new_orders += 1;
        }

        let dispatch_timer = Instant::now();

        // Logins: prediction, rejection gate and guarantee assignment.
        while session_cursor < sessions.len() && sessions[session_cursor].login_at <= t {
            let session = sessions[session_cursor];
            session_cursor += 1;
            let in_shift_count = active.values().filter(|a| a.in_shift(t)).count();
            let (lat, lon) = net.coord(session.login_node).unwrap_or((0.0, 0.0));
            let features = FeatureVector {
                login_sod: session.login_at.rem_euclid(SECS_PER_DAY) as f64,
                logoff_sod: session.logoff_at.rem_euclid(SECS_PER_DAY) as f64,
                login_lat: lat,
                login_lon: lon,
                active_agents: in_shift_count as f64,
                orders_per_window: new_orders as f64,
            };
            let predicted = if cfg.policy.needs_model() {
                let m = model.expect("checked above");
                Some(m.predict_features(&features)?.0)
            } else {
                None
            };
            if cfg.policy.rejection_enabled {
                let pred = predicted.expect("rejection requires prediction");
                if should_reject(pred, baseline_g, session.announced_active_hours()) {
                    events.push(SimEvent::Reject {
                        t,
                        agent: session.id,
                        predicted_work_h: pred,
                    });
                    finished.push(AgentRecord {
                        session,
                        ledger: AgentLedger::rejected(),
                        features,
                        predicted_work_h: predicted,
                        work_pay: 0.0,
                        handout: 0.0,
                    });
                    continue;
                }
            }
            let g = match cfg.policy.mode {
                GuaranteeMode::Fixed { g } => g,
                GuaranteeMode::Dynamic => {
                    let m = model.expect("checked above");
                    dynamic_g(m, &features, session.announced_active_hours())?
                }
                GuaranteeMode::RatingBased { omega } => rating_based_g(session.rating, omega)?,
            };
            events.push(SimEvent::Login {
                t: session.login_at,
                agent: session.id,
            });
            events.push(SimEvent::GuaranteeSet {
                t: session.login_at,
                agent: session.id,
                g,
            });
            active.insert(session.id, ActiveAgent::new(session, g, features, predicted));
        }
        let login_elapsed = dispatch_timer.elapsed().as_secs_f64();

        // World simulation to the boundary, then shift-end settlement.
        for agent in active.values_mut() {
            agent.execute_to(t, &mut events, &mut order_records);
        }
        let mut to_finalize: Vec<u64> = active
            .iter()
            .filter(|(_, a)| !a.finalized && a.session.logoff_at <= t && !a.has_undelivered())
            .map(|(id, _)| *id)
            .collect();
        to_finalize.sort_unstable();
        for id in to_finalize {
            let agent = active.get_mut(&id).expect("present");
            agent.finalized = true;
            debug_assert_eq!(
                agent.ledger.active_time,
                agent.session.announced_active_secs()
            );
            let h = handout(&agent.ledger, &cost_model);
            events.push(SimEvent::Logoff {
                t: agent.session.logoff_at,
                agent: id,
            });
            events.push(SimEvent::HandoutPaid {
                t: agent.session.logoff_at,
                agent: id,
                amount: h,
            });
        }

        // Batching and matching.
        let match_timer = Instant::now();
        let pending_orders: Vec<Order> = pending_pool.values().copied().collect();
        let eligible: Vec<u64> = active
            .iter()
            .filter(|(_, a)| a.in_shift(t))
            .map(|(id, _)| *id)
            .collect();
        let mut batches: Vec<Batch> = Vec::new();
        let mut assigned_orders = 0usize;
        if !pending_orders.is_empty() && !eligible.is_empty() {
            batches = batch_orders(&pending_orders, net, t, &cfg.batch);
            let matrix = build_matrix(&batches, &eligible, &active, net, cfg, t);
            let pairs = min_cost_assignment(&matrix);
            for (bi, ci) in pairs {
                let batch = &batches[bi];
                let agent_id = eligible[ci];
                let agent = active.get_mut(&agent_id).expect("eligible agent");
                agent
                    .assign_batch(batch, t, net)
                    .expect("scored pair must re-plan");
                events.push(SimEvent::Assign {
                    t,
                    agent: agent_id,
                    orders: batch.order_ids(),
                });
                for o in &batch.orders {
                    pending_pool.remove(&o.id);
                    let rec = order_records.get_mut(&o.id).expect("record exists");
                    rec.assigned_at = Some(t);
                    rec.assigned_window = Some(window_index);
                    rec.agent = Some(agent_id);
                    assigned_orders += 1;
                }
            }
        }
        let runtime_s = login_elapsed + match_timer.elapsed().as_secs_f64();

        windows.push(WindowRecord {
            index: window_index,
            t,
            new_orders,
            pending_orders: pending_pool.len(),
            batches: batches.len(),
            agents_in_shift: eligible.len(),
            assigned_orders,
            runtime_s,
            overflown: runtime_s > delta as f64,
        });
        window_index += 1;
        prev = t;
    }

    // Settle any agent still open (only possible via the safety valve).
    let mut leftovers: Vec<u64> = active
        .iter()
        .filter(|(_, a)| !a.finalized)
        .map(|(id, _)| *id)
        .collect();
    leftovers.sort_unstable();
    for id in leftovers {
        let agent = active.get_mut(&id).expect("present");
        let end = agent
            .plan
            .back()
            .map(|s| s.done)
            .unwrap_or(agent.session.logoff_at)
            .max(agent.session.logoff_at);
        agent.execute_to(end, &mut events, &mut order_records);
        agent.finalized = true;
        let h = handout(&agent.ledger, &cost_model);
        events.push(SimEvent::Logoff {
            t: agent.session.logoff_at,
            agent: id,
        });
        events.push(SimEvent::HandoutPaid {
            t: agent.session.logoff_at,
            agent: id,
            amount: h,
        });
    }

    for (_, agent) in active {
        let work_pay = work_payment(&agent.ledger, &cost_model);
        let h = handout(&agent.ledger, &cost_model);
        finished.push(AgentRecord {
            session: agent.session,
            ledger: agent.ledger,
            features: agent.features,
            predicted_work_h: agent.predicted_work_h,
            work_pay,
            handout: h,
        });
    }
    finished.sort_by_key(|a| a.session.id);

    let order_list: Vec<OrderRecord> = order_records.into_values().collect();
    let summary = build_summary(&order_list, &finished, &windows, &cost_model);
    Ok(SimReport {
        orders: order_list,
        agents: finished,
        windows,
        events,
        warnings: validated.warnings,
        summary,
    })
}

fn build_matrix(
    batches: &[Batch],
    eligible: &[u64],
    active: &BTreeMap<u64, ActiveAgent>,
    net: &RoadNetwork,
    cfg: &SimConfig,
    now: Ts,
) -> CostMatrix {
    let mut matrix = CostMatrix::new(batches.len(), eligible.len());
    for (ci, agent_id) in eligible.iter().enumerate() {
        let agent = &active[agent_id];
        let (node, at) = agent.plan_origin(now);
        let ctx = PlanContext {
            node,
            at,
            capacity: agent.session.capacity,
            carried: &agent.carried,
            pending: &agent.pending,
        };
        let Ok(baseline) = plan_route(net, &ctx, &[]) else {
            continue; // column stays infeasible
        };
        let work_secs = agent.ledger.work_time as f64;
        let guarantee_secs = agent.ledger.guarantee_secs();
        for (ri, batch) in batches.iter().enumerate() {
            let eval = evaluate_pair(&ctx, &batch.orders, &baseline, net, cfg.sla_seconds);
            if !eval.feasible {
                continue;
            }
            let weight = match cfg.objective {
                MatchObjective::DeliveryTimeOnly => eval.xdt_weight,
                MatchObjective::GuaranteeAware => {
                    let gw = guarantee_weight(work_secs, guarantee_secs, eval.extra_work as f64);
                    gw + cfg.lambda * eval.xdt_weight
                }
            };
            if weight.is_finite() {
                matrix.set(ri, ci, weight);
            } else {
                matrix.set(ri, ci, INFEASIBLE);
            }
        }
    }
    matrix
}

fn build_summary(
    orders: &[OrderRecord],
    agents: &[AgentRecord],
    windows: &[WindowRecord],
    cm: &CostModel,
) -> SimSummary {
    let mut s = SimSummary {
        pay_rate: cm.pay_rate,
        min_wage: cm.min_wage,
        orders_total: orders.len(),
        agents_total: agents.len(),
        windows: windows.len(),
        ..SimSummary::default()
    };
    let mut delivery_sum = 0i64;
    for o in orders {
        match o.status {
            OrderStatus::Delivered => {
                s.orders_delivered += 1;
                delivery_sum += o.delivered_at.expect("delivered") - o.placed_at;
            }
            OrderStatus::Pending => s.orders_pending += 1,
            OrderStatus::Undeliverable => s.orders_undeliverable += 1,
        }
    }
    if s.orders_delivered > 0 {
        s.avg_delivery_time_s = delivery_sum as f64 / s.orders_delivered as f64;
    }
    for a in agents {
        if !a.ledger.accepted {
            s.agents_rejected += 1;
            continue;
        }
        s.total_work_pay += a.work_pay;
        s.total_handouts += a.handout;
        s.total_work_h += a.ledger.work_hours();
        s.total_active_h += a.ledger.active_hours();
    }
    s.platform_cost = s.total_work_pay + s.total_handouts;
    if s.total_active_h > 0.0 {
        s.omega_realized = s.total_work_h / s.total_active_h;
    }
    s
}

impl SimReport {
    pub fn orders_csv(&self) -> String {
        let mut out = String::from(
            "id,placed_at,restaurant_node,customer_node,prep_s,sdt_s,status,assigned_at,assigned_window,agent,picked_at,delivered_at\n",
        );
        let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
        for o in &self.orders {
            let status = match o.status {
                OrderStatus::Delivered => "delivered",
                OrderStatus::Pending => "pending",
                OrderStatus::Undeliverable => "undeliverable",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                o.id,
                o.placed_at,
                o.restaurant_node,
                o.customer_node,
                o.prep_s,
                opt(o.sdt_s),
                status,
                opt(o.assigned_at),
                o.assigned_window.map(|w| w.to_string()).unwrap_or_default(),
                o.agent.map(|a| a.to_string()).unwrap_or_default(),
                opt(o.picked_at),
                opt(o.delivered_at),
            );
        }
        out
    }

    pub fn agents_csv(&self) -> String {
        let mut out = String::from(
            "id,login_at,logoff_at,login_node,capacity,rating,accepted,g,active_s,work_s,distance_m,work_pay,handout,predicted_work_h,login_sod,logoff_sod,login_lat,login_lon,active_agents,orders_per_window\n",
        );
        for a in &self.agents {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                a.session.id,
                a.session.login_at,
                a.session.logoff_at,
                a.session.login_node,
                a.session.capacity,
                a.session.rating,
                a.ledger.accepted,
                a.ledger.guarantee_ratio,
                a.ledger.active_time,
                a.ledger.work_time,
                a.ledger.distance_traveled,
                a.work_pay,
                a.handout,
                a.predicted_work_h.map(|v| v.to_string()).unwrap_or_default(),
                a.features.login_sod,
                a.features.logoff_sod,
                a.features.login_lat,
                a.features.login_lon,
                a.features.active_agents,
                a.features.orders_per_window,
            );
        }
        out
    }

    pub fn windows_csv(&self) -> String {
        let mut out = String::from(
            "index,t,new_orders,pending_orders,batches,agents_in_shift,assigned_orders,runtime_s,overflown\n",
        );
        for w in &self.windows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                w.index,
                w.t,
                w.new_orders,
                w.pending_orders,
                w.batches,
                w.agents_in_shift,
                w.assigned_orders,
                w.runtime_s,
                w.overflown,
            );
        }
        out
    }

    pub fn events_json(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("events serialize")
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::EdgeSpec;

    fn line_net() -> RoadNetwork {
        // 0 - 1 - 2 - 3, 300 m apart at 10 m/s (30 s per hop).
        let mut edges = Vec::new();
        for i in 0..3u32 {
            edges.push(EdgeSpec { src: i, dst: i + 1, length_m: 300.0, speeds: vec![10.0] });
            edges.push(EdgeSpec { src: i + 1, dst: i, length_m: 300.0, speeds: vec![10.0] });
        }
        RoadNetwork::new(
            vec![(0, 0.0, 0.0), (1, 0.0, 0.003), (2, 0.0, 0.006), (3, 0.0, 0.009)],
            edges,
            1,
        )
        .unwrap()
    }

    fn order(id: u64, placed: Ts, rest: NodeId, cust: NodeId, prep: Secs) -> Order {
        Order { id, placed_at: placed, restaurant_node: rest, customer_node: cust, prep_time: prep }
    }

    fn session(id: u64, login: Ts, logoff: Ts, node: NodeId) -> AgentSession {
        AgentSession { id, login_at: login, logoff_at: logoff, login_node: node, capacity: 3, rating: 3 }
    }

    #[test]
    fn empty_workload_gives_zero_cost() {
        let w = Workload { net: line_net(), orders: vec![], agents: vec![] };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        assert_eq!(report.summary.platform_cost, 0.0);
        assert_eq!(report.summary.orders_total, 0);
        assert!(report.orders.is_empty() && report.agents.is_empty());
    }

    #[test]
    fn no_agents_means_orders_stay_pending() {
        let w = Workload {
            net: line_net(),
            orders: vec![order(1, 100, 0, 2, 60)],
            agents: vec![],
        };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        assert_eq!(report.summary.orders_pending, 1);
        assert_eq!(report.summary.orders_delivered, 0);
    }

    #[test]
    fn single_feasible_order_is_assigned_and_delivered() {
        let w = Workload {
            net: line_net(),
            orders: vec![order(1, 100, 1, 3, 120)],
            agents: vec![session(0, 0, 7200, 0)],
        };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        assert_eq!(report.summary.orders_delivered, 1);
        let o = &report.orders[0];
        assert_eq!(o.status, OrderStatus::Delivered);
        assert_eq!(o.agent, Some(0));
        // Realized delivery time respects the per-order lower bound.
        let realized = o.delivered_at.unwrap() - o.placed_at;
        assert!(realized >= o.sdt_s.unwrap());
        // Work accrued and is below active time.
        let a = &report.agents[0];
        assert!(a.ledger.work_time > 0);
        assert!(a.ledger.work_time <= a.ledger.active_time);
        assert!(a.ledger.distance_traveled > 0.0);
    }

    #[test]
    fn guarantee_mode_prefers_agent_with_larger_unmet_guarantee() {
        // Two idle agents at the same node; agent 0 logged in much earlier,
        // so its accrued guarantee G - W is larger. With weights
        // max(W + w - G, 0) sized to stay positive for agent 1 only,
        // agent 0 must win the order.
        let net = line_net();
        let w = Workload {
            net,
            orders: vec![order(1, 7300, 1, 2, 0)],
            agents: vec![
                session(0, 0, 14400, 1),    // by 7380: A ~ 2h03m, G ~ 1h01m
                session(1, 6600, 14400, 1), // by 7380: A ~ 13m, G ~ 6.5m
            ],
        };
        let cfg = SimConfig {
            policy: GuaranteePolicy::fixed(0.5),
            lambda: 1.0,
            ..SimConfig::default()
        };
        let report = run_simulation(&w, &cfg, None).unwrap();
        // Hand-computed: w_v^b equal for both (same node), XDT equal;
        // e(0) = max(0 + w - G0, 0) = 0, e(1) = w - G1 > 0.
        assert_eq!(report.orders[0].agent, Some(0));
    }

    #[test]
    fn same_seed_same_report_bytes() {
        let net = line_net();
        let orders: Vec<Order> = (0..20)
            .map(|i| order(i, 100 + i as i64 * 120, (i % 3) as u32, ((i + 1) % 4) as u32, 90))
            .collect();
        let agents: Vec<AgentSession> =
            (0..4).map(|i| session(i, 0, 20_000, (i % 4) as u32)).collect();
        let w = Workload { net: line_net(), orders: orders.clone(), agents: agents.clone() };
        let _ = net;
        let cfg = SimConfig {
            policy: GuaranteePolicy::fixed(0.3),
            ..SimConfig::default()
        };
        let r1 = run_simulation(&w, &cfg, None).unwrap();
        let w2 = Workload { net: line_net(), orders, agents };
        let r2 = run_simulation(&w2, &cfg, None).unwrap();
        assert_eq!(r1.orders_csv(), r2.orders_csv());
        assert_eq!(r1.agents_csv(), r2.agents_csv());
        assert_eq!(r1.summary_json(), r2.summary_json());
    }

    #[test]
    fn idle_agent_accrues_only_active_time() {
        let w = Workload {
            net: line_net(),
            orders: vec![],
            agents: vec![session(0, 0, 3600, 1)],
        };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        let a = &report.agents[0];
        assert_eq!(a.ledger.active_time, 3600);
        assert_eq!(a.ledger.work_time, 0);
        assert_eq!(a.ledger.distance_traveled, 0.0);
    }

    #[test]
    fn work_accrues_by_servicing_fraction_within_window() {
        // Agent idle at node 1 picks up there (prep 0), drops at node 2:
        // 30 s of work starting at the assignment boundary.
        let w = Workload {
            net: line_net(),
            orders: vec![order(1, 10, 1, 2, 0)],
            agents: vec![session(0, 0, 3600, 1)],
        };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        let a = &report.agents[0];
        // Assigned at the first boundary (t=180); pickup instant, 30 s to
        // drop. Work = 30 s exactly; active = full hour.
        assert_eq!(a.ledger.work_time, 30);
        assert_eq!(a.ledger.active_time, 3600);
        let o = &report.orders[0];
        assert_eq!(o.delivered_at.unwrap(), 210);
    }

    #[test]
    fn carryover_when_no_feasible_agent_then_assigned() {
        // Agent logs in after a few windows; the early order waits in the
        // pool and is assigned right after login, still within SLA.
        let w = Workload {
            net: line_net(),
            orders: vec![order(1, 0, 0, 1, 0)],
            agents: vec![session(0, 1000, 9000, 0)],
        };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        let o = &report.orders[0];
        assert_eq!(o.status, OrderStatus::Delivered);
        assert!(o.assigned_at.unwrap() >= 1000);
    }

    #[test]
    fn order_outside_sla_for_everyone_stays_pending() {
        // The only agent logs in after the order's SLA horizon has passed;
        // the feasibility gate keeps the order unassigned forever.
        let w = Workload {
            net: line_net(),
            orders: vec![order(1, 0, 0, 1, 0)],
            agents: vec![session(0, 5000, 12_000, 0)],
        };
        let report = run_simulation(&w, &SimConfig::default(), None).unwrap();
        assert_eq!(report.orders[0].status, OrderStatus::Pending);
        assert_eq!(report.summary.orders_pending, 1);
    }

    #[test]
    fn accounting_identity_against_event_log() {
        let orders: Vec<Order> = (0..30)
            .map(|i| order(i, 50 + i as i64 * 200, (i % 4) as u32, ((i + 2) % 4) as u32, 100))
            .collect();
        let agents: Vec<AgentSession> = (0..5)
            .map(|i| session(i, (i as i64) * 400, 15_000 + (i as i64) * 500, (i % 4) as u32))
            .collect();
        let w = Workload { net: line_net(), orders, agents };
        let cfg = SimConfig {
            policy: GuaranteePolicy::fixed(0.4),
            ..SimConfig::default()
        };
        let report = run_simulation(&w, &cfg, None).unwrap();
        let cm = cfg.resolved_cost();
        let recomputed = recompute_cost_from_events(&report, &cm);
        let rel = (recomputed - report.summary.platform_cost).abs()
            / report.summary.platform_cost.max(1e-12);
        assert!(rel <= 1e-6, "cost {} vs events {}", report.summary.platform_cost, recomputed);
    }

    /// Independent recomputation of the platform cost from the event log.
    pub fn recompute_cost_from_events(report: &SimReport, cm: &CostModel) -> f64 {
        use crate::ledger::SECS_PER_HOUR;
        use std::collections::HashMap;
        let mut login: HashMap<u64, Ts> = HashMap::new();
        let mut logoff: HashMap<u64, Ts> = HashMap::new();
        let mut g: HashMap<u64, f64> = HashMap::new();
        let mut work: HashMap<u64, i64> = HashMap::new();
        for e in &report.events {
            match e {
                SimEvent::Login { t, agent } => {
                    login.insert(*agent, *t);
                }
                SimEvent::Logoff { t, agent } => {
                    logoff.insert(*agent, *t);
                }
                SimEvent::GuaranteeSet { agent, g: gv, .. } => {
                    g.insert(*agent, *gv);
                }
                SimEvent::Work { agent, from, to, .. } => {
                    *work.entry(*agent).or_insert(0) += to - from;
                }
                _ => {}
            }
        }
        let mut total = 0.0;
        for (agent, login_t) in &login {
            let a = (logoff[agent] - login_t) as f64;
            let w = *work.get(agent).unwrap_or(&0) as f64;
            let guarantee = g[agent] * a;
            total += cm.pay_rate * w / SECS_PER_HOUR
                + cm.pay_rate * (guarantee - w).max(0.0) / SECS_PER_HOUR;
        }
        total
    }
}
