//! Group co-deliverable orders into batches before matching.
//!
//! Greedy savings merge: candidate pairs are scored by the route time saved
//! when one ideal agent serves both batches; the best pair merges while the
//! per-order excess-delivery-time bound holds. The whole heuristic sits
//! behind [`batch_orders`] so it can be swapped out.

use serde::{Deserialize, Serialize};

use crate::ledger::{NodeId, Order, Secs, Ts};
use crate::routing::{plan_route, sdt, PlanContext, RoadNetwork, RoutePlan};

/// A set of orders served by one agent on one combined route.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Nonempty, sorted by order id.
    pub orders: Vec<Order>,
    /// First pickup node of the batch's ideal route.
    pub anchor_restaurant: NodeId,
}

impl Batch {
    pub fn order_ids(&self) -> Vec<u64> {
        self.orders.iter().map(|o| o.id).collect()
    }

    fn min_id(&self) -> u64 {
        self.orders.first().map(|o| o.id).unwrap_or(u64::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchParams {
    /// Orders per batch cap; 1 disables batching.
    pub max_batch_size: usize,
    /// Bound on any order's excess delivery time inside a batch, for a
    /// hypothetical ideal agent, seconds.
    pub max_batch_xdt: Secs,
}

impl Default for BatchParams {
    fn default() -> Self {
        BatchParams {
            max_batch_size: 2,
            max_batch_xdt: 600,
        }
    }
}

/// Ideal-agent route for a candidate batch: an unburdened agent standing at
/// the earliest order's restaurant at `now`.
fn ideal_route(orders: &[Order], net: &RoadNetwork, now: Ts) -> Option<RoutePlan> {
    let start = orders
        .iter()
        .min_by_key(|o| (o.placed_at, o.id))
        .map(|o| o.restaurant_node)?;
    let ctx = PlanContext::idle(start, now, orders.len() as u32);
    plan_route(net, &ctx, orders).ok()
}

/// True when every order in the merged route stays within the XDT bound.
fn xdt_bound_holds(plan: &RoutePlan, orders: &[Order], net: &RoadNetwork, bound: Secs) -> bool {
    orders.iter().all(|o| {
        let (Some(drop), Ok(s)) = (plan.drop_time(o.id), sdt(o, net)) else {
            return false;
        };
        (drop - o.placed_at) - s <= bound
    })
}

/// Partition `orders` into batches. Every order appears in exactly one
/// batch; singleton fallback is always valid. Deterministic given order ids.
pub fn batch_orders(
    orders: &[Order],
    net: &RoadNetwork,
    now: Ts,
    params: &BatchParams,
) -> Vec<Batch> {
    let mut batches: Vec<Batch> = orders
        .iter()
        .map(|o| Batch {
            orders: vec![*o],
            anchor_restaurant: o.restaurant_node,
        })
        .collect();
    batches.sort_by_key(|b| b.min_id());
    if params.max_batch_size <= 1 {
        return batches;
    }
    // Cache the current route time of each batch; merged candidates are
    // evaluated fresh each round since the pool shrinks.
    loop {
        let times: Vec<Option<Secs>> = batches
            .iter()
            .map(|b| ideal_route(&b.orders, net, now).map(|p| p.completion_time - now))
            .collect();
        let mut best: Option<(Secs, usize, usize, Batch)> = None;
        for i in 0..batches.len() {
            for j in (i + 1)..batches.len() {
                if batches[i].orders.len() + batches[j].orders.len() > params.max_batch_size {
                    continue;
                }
                let (Some(ti), Some(tj)) = (times[i], times[j]) else {
                    continue;
                };
                let mut merged: Vec<Order> = batches[i]
                    .orders
                    .iter()
                    .chain(batches[j].orders.iter())
                    .copied()
                    .collect();
                merged.sort_by_key(|o| o.id);
                let Some(plan) = ideal_route(&merged, net, now) else {
                    continue;
                };
                if !xdt_bound_holds(&plan, &merged, net, params.max_batch_xdt) {
                    continue;
                }
                let savings = ti + tj - (plan.completion_time - now);
                if savings <= 0 {
                    continue;
                }
                let anchor = plan
                    .stops
                    .first()
                    .map(|s| s.node)
                    .unwrap_or(batches[i].anchor_restaurant);
                let candidate = Batch {
                    orders: merged,
                    anchor_restaurant: anchor,
                };
                let better = match &best {
                    None => true,
                    Some((s, bi, bj, _)) => {
                        savings > *s || (savings == *s && (i, j) < (*bi, *bj))
                    }
                };
                if better {
                    best = Some((savings, i, j, candidate));
                }
            }
        }
        match best {
            Some((_, i, j, merged)) => {
                batches.remove(j);
                batches.remove(i);
                batches.push(merged);
                batches.sort_by_key(|b| b.min_id());
            }
            None => break,
        }
    }
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::EdgeSpec;

    fn order(id: u64, placed: Ts, rest: NodeId, cust: NodeId, prep: Secs) -> Order {
        Order {
            id,
            placed_at: placed,
            restaurant_node: rest,
            customer_node: cust,
            prep_time: prep,
        }
    }

    /// Line of nodes 0-1-2-3-4, 200 m between neighbors at 10 m/s, plus a
    /// far-off node 9 connected through a 10 km link.
    fn line_net() -> RoadNetwork {
        let mut edges = Vec::new();
        for i in 0..4u32 {
            edges.push(EdgeSpec { src: i, dst: i + 1, length_m: 200.0, speeds: vec![10.0] });
            edges.push(EdgeSpec { src: i + 1, dst: i, length_m: 200.0, speeds: vec![10.0] });
        }
        edges.push(EdgeSpec { src: 4, dst: 9, length_m: 10_000.0, speeds: vec![10.0] });
        edges.push(EdgeSpec { src: 9, dst: 4, length_m: 10_000.0, speeds: vec![10.0] });
        let nodes = vec![
            (0, 0.0, 0.0),
            (1, 0.0, 0.002),
            (2, 0.0, 0.004),
            (3, 0.0, 0.006),
            (4, 0.0, 0.008),
            (9, 0.0, 0.1),
        ];
        RoadNetwork::new(nodes, edges, 1).unwrap()
    }

    #[test]
    fn single_order_is_a_singleton_batch() {
        let net = line_net();
        let orders = [order(1, 0, 0, 2, 60)];
        let out = batch_orders(&orders, &net, 0, &BatchParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].orders, orders.to_vec());
        assert_eq!(out[0].anchor_restaurant, 0);
    }

    #[test]
    fn nearby_customers_same_restaurant_merge() {
        let net = line_net();
        // Same restaurant, customers one hop apart: merged route saves a
        // whole return trip and XDT stays tiny.
        let orders = [order(1, 0, 0, 2, 300), order(2, 10, 0, 3, 300)];
        let out = batch_orders(&orders, &net, 20, &BatchParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].orders.len(), 2);
    }

    #[test]
    fn distant_restaurants_stay_separate() {
        let net = line_net();
        // 10 km apart; merging blows the XDT bound for one of the orders.
        let orders = [order(1, 0, 0, 1, 60), order(2, 0, 9, 9, 60)];
        let out = batch_orders(&orders, &net, 0, &BatchParams::default());
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|b| b.orders.len() == 1));
    }

    #[test]
    fn output_is_a_partition() {
        let net = line_net();
        let orders: Vec<Order> = (0..6)
            .map(|i| order(i, i as i64 * 5, (i % 5) as u32, ((i + 2) % 5) as u32, 120))
            .collect();
        let out = batch_orders(&orders, &net, 40, &BatchParams::default());
        let mut seen: Vec<u64> = out.iter().flat_map(|b| b.order_ids()).collect();
        seen.sort_unstable();
        let mut want: Vec<u64> = orders.iter().map(|o| o.id).collect();
        want.sort_unstable();
        assert_eq!(seen, want);
    }

    #[test]
    fn size_one_cap_is_identity_partition() {
        let net = line_net();
        let orders: Vec<Order> = (0..4).map(|i| order(i, 0, 0, 2, 60)).collect();
        let params = BatchParams {
            max_batch_size: 1,
            ..BatchParams::default()
        };
        let out = batch_orders(&orders, &net, 0, &params);
        assert_eq!(out.len(), 4);
        for (b, o) in out.iter().zip(orders.iter()) {
            assert_eq!(b.orders, vec![*o]);
        }
    }

    #[test]
    fn deterministic_given_order_ids() {
        let net = line_net();
        let orders: Vec<Order> = (0..6)
            .map(|i| order(i, i as i64, (i % 5) as u32, ((i * 2 + 1) % 5) as u32, 90))
            .collect();
        let a = batch_orders(&orders, &net, 10, &BatchParams::default());
        let b = batch_orders(&orders, &net, 10, &BatchParams::default());
        assert_eq!(a, b);
    }
}
