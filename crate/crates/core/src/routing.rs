//! Road network, shortest travel times, and route planning.
//!
//! Travel times are integer seconds. Speeds are time-of-day dependent in
//! coarse buckets; a query freezes the bucket of its departure instant so
//! Dijkstra labels stay consistent.

use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::ledger::{NodeId, Order, Secs, Ts};

pub const SECS_PER_DAY: i64 = 86_400;
/// Route planning enumerates stop interleavings exhaustively; the order
/// count is capped so the search stays trivially small.
pub const MAX_PLAN_ORDERS: usize = 4;

const UNREACHABLE: Secs = Secs::MAX;
/// Travel-time fields are memoized per (source, bucket); the map is cleared
/// wholesale past this size to bound memory on long runs.
const TRAVEL_CACHE_CAP: usize = 8_192;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge references unknown node {0}")]
    UnknownEdgeNode(NodeId),
    #[error("edge {src}->{dst} has nonpositive speed {speed} in bucket {bucket}")]
    BadSpeed {
        src: NodeId,
        dst: NodeId,
        bucket: usize,
        speed: f64,
    },
    #[error("edge {src}->{dst} has nonpositive length {length}")]
    BadLength { src: NodeId, dst: NodeId, length: f64 },
    #[error("edge {src}->{dst} carries {got} speed buckets, network has {want}")]
    BucketMismatch { src: NodeId, dst: NodeId, got: usize, want: usize },
    #[error("bucket count must divide a day, got {0}")]
    BadBucketCount(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no route from node {src} to node {dst}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("plan needs {got} orders but agent capacity is {capacity}")]
    CapacityExceeded { got: usize, capacity: u32 },
    #[error("plan needs {0} orders, exhaustive planner caps at {MAX_PLAN_ORDERS}")]
    TooManyOrders(usize),
    #[error("no feasible stop interleaving")]
    NoFeasiblePlan,
}

/// Input description of one directed edge.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub length_m: f64,
    /// Speed in m/s per time-of-day bucket.
    pub speeds: Vec<f64>,
}

#[derive(Clone)]
struct Edge {
    dst: u32,
    length_m: f64,
    /// Speed per bucket, m/s, kept for serialization.
    speeds: Vec<f64>,
    /// Travel seconds per bucket, precomputed as ceil(length / speed).
    secs: Vec<Secs>,
}

struct TravelField {
    time: Vec<Secs>,
    dist: Vec<f64>,
}

/// Weighted directed road graph with per-bucket speeds.
///
/// Immutable after construction; the travel-time memo behind a lock is the
/// only interior state, so the network is shareable across threads.
pub struct RoadNetwork {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, u32>,
    coords: Vec<(f64, f64)>,
    adj: Vec<Vec<Edge>>,
    bucket_count: usize,
    bucket_secs: i64,
    serviced: Vec<bool>,
    cache: RwLock<HashMap<(u32, u32), Arc<TravelField>>>,
}

impl RoadNetwork {
    pub fn new(
        nodes: Vec<(NodeId, f64, f64)>,
        edges: Vec<EdgeSpec>,
        bucket_count: usize,
    ) -> Result<Self, NetworkError> {
        if nodes.is_empty() {
            return Err(NetworkError::Empty);
        }
        if bucket_count == 0 || SECS_PER_DAY % bucket_count as i64 != 0 {
            return Err(NetworkError::BadBucketCount(bucket_count));
        }
        let mut sorted = nodes;
        sorted.sort_by_key(|(id, _, _)| *id);
        let mut index = HashMap::with_capacity(sorted.len());
        let mut ids = Vec::with_capacity(sorted.len());
        let mut coords = Vec::with_capacity(sorted.len());
        for (id, lat, lon) in &sorted {
            if index.insert(*id, ids.len() as u32).is_some() {
                return Err(NetworkError::DuplicateNode(*id));
            }
            ids.push(*id);
            coords.push((*lat, *lon));
        }
        let mut adj: Vec<Vec<Edge>> = vec![Vec::new(); ids.len()];
        for e in &edges {
            let si = *index.get(&e.src).ok_or(NetworkError::UnknownEdgeNode(e.src))?;
            index.get(&e.dst).ok_or(NetworkError::UnknownEdgeNode(e.dst))?;
            if e.length_m <= 0.0 {
                return Err(NetworkError::BadLength {
                    src: e.src,
                    dst: e.dst,
                    length: e.length_m,
                });
            }
            if e.speeds.len() != bucket_count {
                return Err(NetworkError::BucketMismatch {
                    src: e.src,
                    dst: e.dst,
                    got: e.speeds.len(),
                    want: bucket_count,
                });
            }
            let mut secs = Vec::with_capacity(bucket_count);
            for (b, &sp) in e.speeds.iter().enumerate() {
                if sp <= 0.0 {
                    return Err(NetworkError::BadSpeed {
                        src: e.src,
                        dst: e.dst,
                        bucket: b,
                        speed: sp,
                    });
                }
                secs.push((e.length_m / sp).ceil() as Secs);
            }
            adj[si as usize].push(Edge {
                dst: index[&e.dst],
                length_m: e.length_m,
                speeds: e.speeds.clone(),
                secs,
            });
        }
        for out in &mut adj {
            out.sort_by_key(|e| e.dst);
        }
        let serviced = largest_scc(&adj);
        Ok(RoadNetwork {
            ids,
            index,
            coords,
            adj,
            bucket_count,
            bucket_secs: SECS_PER_DAY / bucket_count as i64,
            serviced,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.index.contains_key(&node)
    }

    pub fn coord(&self, node: NodeId) -> Option<(f64, f64)> {
        self.index.get(&node).map(|&i| self.coords[i as usize])
    }

    /// True when the node lies on the largest strongly connected component.
    pub fn is_serviced(&self, node: NodeId) -> bool {
        self.index
            .get(&node)
            .map(|&i| self.serviced[i as usize])
            .unwrap_or(false)
    }

    /// Edges as input specs, for serialization.
    pub fn edge_specs(&self) -> Vec<EdgeSpec> {
        let mut out = Vec::new();
        for (si, edges) in self.adj.iter().enumerate() {
            for e in edges {
                out.push(EdgeSpec {
                    src: self.ids[si],
                    dst: self.ids[e.dst as usize],
                    length_m: e.length_m,
                    speeds: e.speeds.clone(),
                });
            }
        }
        out
    }

    fn bucket_of(&self, t: Ts) -> usize {
        (t.rem_euclid(SECS_PER_DAY) / self.bucket_secs) as usize
    }

    fn field(&self, src: u32, bucket: usize) -> Arc<TravelField> {
        let key = (src, bucket as u32);
        if let Some(f) = self.cache.read().unwrap().get(&key) {
            return Arc::clone(f);
        }
        let f = Arc::new(self.dijkstra_all(src, bucket));
        let mut w = self.cache.write().unwrap();
        if w.len() >= TRAVEL_CACHE_CAP {
            w.clear();
        }
        Arc::clone(w.entry(key).or_insert(f))
    }

    fn dijkstra_all(&self, src: u32, bucket: usize) -> TravelField {
        let n = self.adj.len();
        let mut time = vec![UNREACHABLE; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap: BinaryHeap<std::cmp::Reverse<(Secs, u64, u32)>> = BinaryHeap::new();
        time[src as usize] = 0;
        dist[src as usize] = 0.0;
        heap.push(std::cmp::Reverse((0, 0, src)));
        while let Some(std::cmp::Reverse((t, dbits, u))) = heap.pop() {
            if done[u as usize] {
                continue;
            }
            done[u as usize] = true;
            let d = f64::from_bits(dbits);
            for e in &self.adj[u as usize] {
                let v = e.dst as usize;
                if done[v] {
                    continue;
                }
                let nt = t + e.secs[bucket];
                let nd = d + e.length_m;
                // Relax on (time, distance) so tie-breaks are deterministic.
                if nt < time[v] || (nt == time[v] && nd < dist[v]) {
                    time[v] = nt;
                    dist[v] = nd;
                    heap.push(std::cmp::Reverse((nt, nd.to_bits(), e.dst)));
                }
            }
        }
        TravelField { time, dist }
    }

    /// Shortest travel time src -> dst departing at `depart`, using the
    /// speed bucket of the departure instant for the whole query.
    pub fn shortest_travel_time(
        &self,
        src: NodeId,
        dst: NodeId,
        depart: Ts,
    ) -> Result<Secs, RoutingError> {
        self.shortest_path(src, dst, depart).map(|(t, _)| t)
    }

    /// Shortest travel time plus the length in meters of that path.
    pub fn shortest_path(
        &self,
        src: NodeId,
        dst: NodeId,
        depart: Ts,
    ) -> Result<(Secs, f64), RoutingError> {
        let si = *self.index.get(&src).ok_or(RoutingError::UnknownNode(src))?;
        let di = *self.index.get(&dst).ok_or(RoutingError::UnknownNode(dst))?;
        if si == di {
            return Ok((0, 0.0));
        }
        let field = self.field(si, self.bucket_of(depart));
        let t = field.time[di as usize];
        if t == UNREACHABLE {
            return Err(RoutingError::Unreachable { src, dst });
        }
        Ok((t, field.dist[di as usize]))
    }
}

/// Largest strongly connected component, via Kosaraju.
fn largest_scc(adj: &[Vec<Edge>]) -> Vec<bool> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    // Iterative DFS for finish order.
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some(&mut (u, ref mut i)) = stack.last_mut() {
            if *i < adj[u].len() {
                let v = adj[u][*i].dst as usize;
                *i += 1;
                if !seen[v] {
                    seen[v] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }
    let mut radj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (u, edges) in adj.iter().enumerate() {
        for e in edges {
            radj[e.dst as usize].push(u as u32);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut ncomp = 0;
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = ncomp;
        while let Some(u) = stack.pop() {
            for &v in &radj[u] {
                if comp[v as usize] == usize::MAX {
                    comp[v as usize] = ncomp;
                    stack.push(v as usize);
                }
            }
        }
        ncomp += 1;
    }
    let mut sizes = vec![0usize; ncomp];
    for &c in &comp {
        sizes[c] += 1;
    }
    let best = sizes
        .iter()
        .enumerate()
        .max_by_key(|(_, &s)| s)
        .map(|(i, _)| i)
        .unwrap_or(0);
    comp.iter().map(|&c| c == best).collect()
}

/// One scheduled stop on an agent's route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopAction {
    Pickup(u64),
    Drop(u64),
}

impl StopAction {
    pub fn order_id(&self) -> u64 {
        match self {
            StopAction::Pickup(o) | StopAction::Drop(o) => *o,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedStop {
    pub node: NodeId,
    pub action: StopAction,
    /// Arrival instant at `node`.
    pub arrival: Ts,
    /// Completion instant; pickups wait here until food is ready.
    pub done: Ts,
    pub leg_secs: Secs,
    pub leg_meters: f64,
}

/// A planned stop sequence with absolute timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutePlan {
    pub stops: Vec<PlannedStop>,
    /// Completion of the last stop, or the plan origin time when empty.
    pub completion_time: Ts,
}

impl RoutePlan {
    /// Drop instant of the given order, if planned.
    pub fn drop_time(&self, order_id: u64) -> Option<Ts> {
        self.stops.iter().find_map(|s| match s.action {
            StopAction::Drop(o) if o == order_id => Some(s.done),
            _ => None,
        })
    }
}

/// Everything the planner needs to know about an agent at planning time.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    /// Node the agent is at (or will next arrive at).
    pub node: NodeId,
    /// Instant the agent is available at `node`.
    pub at: Ts,
    pub capacity: u32,
    /// Orders picked up and not yet dropped.
    pub carried: &'a [Order],
    /// Orders assigned and not yet picked up.
    pub pending: &'a [Order],
}

impl<'a> PlanContext<'a> {
    pub fn idle(node: NodeId, at: Ts, capacity: u32) -> Self {
        PlanContext {
            node,
            at,
            capacity,
            carried: &[],
            pending: &[],
        }
    }

    pub fn order_count(&self) -> usize {
        self.carried.len() + self.pending.len()
    }
}

struct PlanSearch<'n> {
    net: &'n RoadNetwork,
    orders: Vec<Order>,
    needs_pickup: Vec<bool>,
    capacity: usize,
    best_completion: Ts,
    best_seq: Vec<StopAction>,
    seq: Vec<StopAction>,
}

impl<'n> PlanSearch<'n> {
    fn travel(&self, from: NodeId, to: NodeId, depart: Ts) -> Option<Secs> {
        self.net.shortest_travel_time(from, to, depart).ok()
    }

    fn dfs(&mut self, node: NodeId, t: Ts, picked: u32, dropped: u32, load: usize) {
        let total = self.orders.len();
        if dropped.count_ones() as usize == total {
            if t < self.best_completion {
                self.best_completion = t;
                self.best_seq = self.seq.clone();
            }
            return;
        }
        if t >= self.best_completion {
            return;
        }
        for i in 0..total {
            let bit = 1u32 << i;
            if dropped & bit != 0 {
                continue;
            }
            let o = self.orders[i];
            if picked & bit != 0 {
                // Drop candidate.
                let Some(tt) = self.travel(node, o.customer_node, t) else {
                    continue;
                };
                let done = t + tt;
                self.seq.push(StopAction::Drop(o.id));
                self.dfs(o.customer_node, done, picked, dropped | bit, load - 1);
                self.seq.pop();
            } else if self.needs_pickup[i] && load < self.capacity {
                let Some(tt) = self.travel(node, o.restaurant_node, t) else {
                    continue;
                };
                let done = (t + tt).max(o.ready_at());
                self.seq.push(StopAction::Pickup(o.id));
                self.dfs(o.restaurant_node, done, picked | bit, dropped, load + 1);
                self.seq.pop();
            }
        }
    }
}

/// Minimum-completion-time stop sequence over all feasible interleavings of
/// the agent's existing stops and the extra batch. Exhaustive; capacity caps
/// the order count.
pub fn plan_route(
    net: &RoadNetwork,
    ctx: &PlanContext,
    extra: &[Order],
) -> Result<RoutePlan, RoutingError> {
    let total = ctx.order_count() + extra.len();
    if total > ctx.capacity as usize {
        return Err(RoutingError::CapacityExceeded {
            got: total,
            capacity: ctx.capacity,
        });
    }
    if total > MAX_PLAN_ORDERS {
        return Err(RoutingError::TooManyOrders(total));
    }
    if total == 0 {
        return Ok(RoutePlan {
            stops: Vec::new(),
            completion_time: ctx.at,
        });
    }
    let mut orders: Vec<(Order, bool)> = ctx
        .carried
        .iter()
        .map(|o| (*o, false))
        .chain(ctx.pending.iter().map(|o| (*o, true)))
        .chain(extra.iter().map(|o| (*o, true)))
        .collect();
    orders.sort_by_key(|(o, _)| o.id);
    let needs_pickup: Vec<bool> = orders.iter().map(|(_, p)| *p).collect();
    let picked_mask: u32 = orders
        .iter()
        .enumerate()
        .filter(|(_, (_, p))| !*p)
        .map(|(i, _)| 1u32 << i)
        .fold(0, |a, b| a | b);
    let mut search = PlanSearch {
        net,
        orders: orders.iter().map(|(o, _)| *o).collect(),
        needs_pickup,
        capacity: ctx.capacity as usize,
        best_completion: Ts::MAX,
        best_seq: Vec::new(),
        seq: Vec::with_capacity(2 * total),
    };
    search.dfs(ctx.node, ctx.at, picked_mask, 0, ctx.carried.len());
    if search.best_seq.is_empty() {
        return Err(RoutingError::NoFeasiblePlan);
    }
    materialize(net, ctx, &search.orders, &search.best_seq)
}

fn materialize(
    net: &RoadNetwork,
    ctx: &PlanContext,
    orders: &[Order],
    seq: &[StopAction],
) -> Result<RoutePlan, RoutingError> {
    let by_id: HashMap<u64, &Order> = orders.iter().map(|o| (o.id, o)).collect();
    let mut stops = Vec::with_capacity(seq.len());
    let mut node = ctx.node;
    let mut t = ctx.at;
    for action in seq {
        let o = by_id[&action.order_id()];
        let (target, ready) = match action {
            StopAction::Pickup(_) => (o.restaurant_node, Some(o.ready_at())),
            StopAction::Drop(_) => (o.customer_node, None),
        };
        let (leg_secs, leg_meters) = net.shortest_path(node, target, t)?;
        let arrival = t + leg_secs;
        let done = match ready {
            Some(r) => arrival.max(r),
            None => arrival,
        };
        stops.push(PlannedStop {
            node: target,
            action: *action,
            arrival,
            done,
            leg_secs,
            leg_meters,
        });
        node = target;
        t = done;
    }
    Ok(RoutePlan {
        completion_time: t,
        stops,
    })
}

/// Shortest delivery time of an order: prep time plus the shortest
/// restaurant-to-customer travel time at placement.
pub fn sdt(order: &Order, net: &RoadNetwork) -> Result<Secs, RoutingError> {
    let t = net.shortest_travel_time(order.restaurant_node, order.customer_node, order.placed_at)?;
    Ok(order.prep_time + t)
}

/// Expected delivery time of `order` if assigned to the agent now: the drop
/// instant in the re-planned route, measured from order placement.
pub fn edt(
    order: &Order,
    ctx: &PlanContext,
    net: &RoadNetwork,
) -> Result<Secs, RoutingError> {
    let plan = plan_route(net, ctx, std::slice::from_ref(order))?;
    let drop = plan.drop_time(order.id).ok_or(RoutingError::NoFeasiblePlan)?;
    Ok(drop - order.placed_at)
}

/// Excess delivery time: EDT - SDT, floored at zero.
pub fn xdt(
    order: &Order,
    ctx: &PlanContext,
    net: &RoadNetwork,
) -> Result<Secs, RoutingError> {
    let e = edt(order, ctx, net)?;
    let s = sdt(order, net)?;
    Ok((e - s).max(0))
}

/// Extra work the agent does to deliver `batch`: the completion-time delta
/// between the plans with and without it, floored at zero.
pub fn extra_work(
    ctx: &PlanContext,
    batch: &[Order],
    net: &RoadNetwork,
) -> Result<Secs, RoutingError> {
    if batch.is_empty() {
        return Ok(0);
    }
    let with = plan_route(net, ctx, batch)?;
    let without = plan_route(net, ctx, &[])?;
    Ok((with.completion_time - without.completion_time).max(0))
}
