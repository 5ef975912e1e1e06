//! Per-window weighted bipartite matching between order batches and agents.
//!
//! Edge weights combine the guarantee-aware term (extra work beyond the
//! agent's work guarantee) with the delivery-time term (sum of excess
//! delivery times). The assignment is solved with the Hungarian method on a
//! square matrix padded with zero-cost dummies; infeasible cells carry a
//! large sentinel surrogate so they are never chosen unless forced, and
//! forced picks are discarded afterwards.
//!
//! Among equal-cost optima the result is canonicalized to the
//! lexicographically smallest assignment by (row, column): any perfect
//! matching inside the tight subgraph of the final dual potentials is
//! optimal, so the canonical pick is found by greedy augmentation there.

use crate::ledger::{Order, Secs};
use crate::routing::{plan_route, sdt, PlanContext, RoadNetwork, RoutePlan, StopAction};

/// Sentinel weight for an infeasible (batch, agent) pair.
pub const INFEASIBLE: f64 = f64::INFINITY;

/// Rectangular cost matrix, rows = batches, cols = agents.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    weights: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        CostMatrix {
            rows,
            cols,
            weights: vec![INFEASIBLE; rows * cols],
        }
    }

    pub fn set(&mut self, row: usize, col: usize, w: f64) {
        self.weights[row * self.cols + col] = w;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    fn max_finite(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .filter(|w| w.is_finite())
            .fold(0.0, f64::max)
    }

    /// Surrogate weight for infeasible cells: larger than any possible
    /// total over finite edges, so an optimal solution only uses one when
    /// forced.
    pub fn big_m(&self) -> f64 {
        (self.rows as f64 + 1.0) * self.max_finite().max(1.0) + 1.0
    }
}

/// Guarantee-aware edge weight: extra work beyond the agent's unmet work
/// guarantee. Work below the guarantee is free to the platform (it would be
/// paid out anyway), so only the overshoot is priced.
pub fn guarantee_weight(work_secs: f64, guarantee_secs: f64, extra_work_secs: f64) -> f64 {
    if guarantee_secs > work_secs {
        (work_secs + extra_work_secs - guarantee_secs).max(0.0)
    } else {
        extra_work_secs
    }
}

/// Combined edge weight: guarantee term plus `lambda` times the
/// delivery-time term, both in seconds.
pub fn combined_weight(guarantee_w: f64, xdt_w: f64, lambda: f64) -> f64 {
    guarantee_w + lambda * xdt_w
}

/// Everything the matcher needs to know about one (agent, batch) cell.
#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub feasible: bool,
    /// Extra completion time to absorb the batch, w_v^b, seconds.
    pub extra_work: Secs,
    /// Delivery-time weight: new orders' XDT plus the change in carried
    /// orders' XDT under the re-planned route, floored at zero.
    pub xdt_weight: f64,
}

/// Score one (agent, batch) pair. `baseline` is the agent's optimal plan
/// without the batch (computed once per agent per window).
pub fn evaluate_pair(
    ctx: &PlanContext,
    batch: &[Order],
    baseline: &RoutePlan,
    net: &RoadNetwork,
    sla: Secs,
) -> PairEvaluation {
    let infeasible = PairEvaluation {
        feasible: false,
        extra_work: 0,
        xdt_weight: INFEASIBLE,
    };
    if ctx.order_count() + batch.len() > ctx.capacity as usize {
        return infeasible;
    }
    let Ok(with) = plan_route(net, ctx, batch) else {
        return infeasible;
    };
    // Every order in the combined plan, carried and new, must stay within
    // the service level agreement.
    for stop in &with.stops {
        if let StopAction::Drop(oid) = stop.action {
            let placed = find_order(ctx, batch, oid).map(|o| o.placed_at);
            let Some(placed) = placed else {
                return infeasible;
            };
            if stop.done - placed > sla {
                return infeasible;
            }
        }
    }
    let extra = (with.completion_time - baseline.completion_time).max(0);
    let mut xdt_sum = 0.0;
    for o in batch {
        let (Some(drop), Ok(s)) = (with.drop_time(o.id), sdt(o, net)) else {
            return infeasible;
        };
        xdt_sum += ((drop - o.placed_at - s).max(0)) as f64;
    }
    for o in ctx.carried.iter().chain(ctx.pending.iter()) {
        if let (Some(after), Some(before)) = (with.drop_time(o.id), baseline.drop_time(o.id)) {
            xdt_sum += (after - before) as f64;
        }
    }
    PairEvaluation {
        feasible: true,
        extra_work: extra,
        xdt_weight: xdt_sum.max(0.0),
    }
}

fn find_order<'a>(ctx: &PlanContext<'a>, batch: &'a [Order], id: u64) -> Option<&'a Order> {
    ctx.carried
        .iter()
        .chain(ctx.pending.iter())
        .chain(batch.iter())
        .find(|o| o.id == id)
}

/// Capacity and SLA feasibility of assigning `batch` to the agent.
pub fn feasible(
    ctx: &PlanContext,
    batch: &[Order],
    net: &RoadNetwork,
    sla: Secs,
) -> bool {
    let baseline = match plan_route(net, ctx, &[]) {
        Ok(p) => p,
        Err(_) => return false,
    };
    evaluate_pair(ctx, batch, &baseline, net, sla).feasible
}

/// Maximum-cardinality, minimum-weight assignment over the finite cells.
/// Pairs whose only option was the infeasible sentinel are dropped; ties
/// between equal-cost optima break toward ascending (row, col).
pub fn min_cost_assignment(m: &CostMatrix) -> Vec<(usize, usize)> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    let n = m.rows.max(m.cols);
    let big_m = m.big_m();
    let cost = |r: usize, c: usize| -> f64 {
        if r < m.rows && c < m.cols {
            let w = m.get(r, c);
            if w.is_finite() {
                w
            } else {
                big_m
            }
        } else {
            0.0
        }
    };
    let (mut row_to_col, u, v) = hungarian_square(n, &cost);
    // Tight edges of the optimal duals; any perfect matching inside this
    // subgraph attains the optimum.
    let eps = 1e-4;
    let mut tight: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (r, u_r) in u.iter().enumerate() {
        let mut cols: Vec<usize> = (0..n)
            .filter(|&c| (cost(r, c) - u_r - v[c]).abs() <= eps)
            .collect();
        if !cols.contains(&row_to_col[r]) {
            cols.push(row_to_col[r]);
            cols.sort_unstable();
        }
        tight.push(cols);
    }
    lex_canonicalize(m.rows, n, &tight, &mut row_to_col);
    let mut out = Vec::new();
    for (r, &c) in row_to_col.iter().enumerate().take(m.rows) {
        if c < m.cols && m.get(r, c).is_finite() {
            out.push((r, c));
        }
    }
    out
}

/// Classic O(n^3) Hungarian method on a square matrix, returning the
/// row-to-column assignment plus the final dual potentials (u, v), which
/// satisfy u[r] + v[c] <= cost(r, c) with equality on matched edges.
fn hungarian_square(
    n: usize,
    cost: &dyn Fn(usize, usize) -> f64,
) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0_usize; n + 1]; // p[j] = row (1-based) matched to col j
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for (j, &row) in p.iter().enumerate().skip(1) {
        if row != 0 {
            row_to_col[row - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites `row_to_col` into the lexicographically smallest perfect
/// matching of the tight subgraph, fixing real rows in index order. Dummy
/// rows (>= `real_rows`) keep whatever columns remain.
fn lex_canonicalize(
    real_rows: usize,
    n: usize,
    tight: &[Vec<usize>],
    row_to_col: &mut Vec<usize>,
) {
    let mut col_to_row = vec![usize::MAX; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    // Fixed rows need no marker: their columns are fixed, and augmenting
    // paths can only reach a row through its matched column.
    let mut fixed_col = vec![false; n];
    for r in 0..real_rows.min(n) {
        let current = row_to_col[r];
        for &c in &tight[r] {
            if fixed_col[c] {
                continue;
            }
            if c >= current {
                break; // candidates are sorted; nothing smaller remains
            }
            // Tentatively give c to r and reroute c's current owner.
            let owner = col_to_row[c];
            let freed = row_to_col[r];
            row_to_col[r] = c;
            col_to_row[c] = r;
            col_to_row[freed] = usize::MAX;
            let mut visited = vec![false; n];
            visited[c] = true;
            if augment(owner, tight, row_to_col, &mut col_to_row, &fixed_col, &mut visited) {
                break;
            }
            // Revert.
            row_to_col[r] = freed;
            col_to_row[freed] = r;
            col_to_row[c] = owner;
        }
        fixed_col[row_to_col[r]] = true;
    }
}

fn augment(
    row: usize,
    tight: &[Vec<usize>],
    row_to_col: &mut Vec<usize>,
    col_to_row: &mut Vec<usize>,
    fixed_col: &[bool],
    visited: &mut Vec<bool>,
) -> bool {
    for &c in &tight[row] {
        if fixed_col[c] || visited[c] {
            continue;
        }
        visited[c] = true;
        let owner = col_to_row[c];
        if owner == usize::MAX
            || augment(owner, tight, row_to_col, col_to_row, fixed_col, visited)
        {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{NodeId, Ts};
    use crate::routing::EdgeSpec;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn guarantee_weight_cases() {
        // Under guarantee with room: max(7200 + 3600 - 14400, 0) = 0
        assert_eq!(guarantee_weight(7200.0, 14400.0, 3600.0), 0.0);
        // Under guarantee, overshoot: max(10800 - 9000, 0) = 1800
        assert_eq!(guarantee_weight(7200.0, 9000.0, 3600.0), 1800.0);
        // Guarantee already met: plain extra work
        assert_eq!(guarantee_weight(7200.0, 3600.0, 3600.0), 3600.0);
        // Continuity at G == W: both branches give w
        assert_eq!(guarantee_weight(5000.0, 5000.0, 700.0), 700.0);
        let just_above = guarantee_weight(5000.0, 5000.0 + 1e-9, 700.0);
        assert!((just_above - 700.0).abs() < 1e-6);
    }

    #[test]
    fn guarantee_weight_monotone_in_work() {
        // Decreasing W never increases the weight.
        let g = 7000.0;
        let w_b = 900.0;
        let mut prev = f64::NEG_INFINITY;
        for w in (0..20).map(|i| i as f64 * 500.0) {
            let e = guarantee_weight(w, g, w_b);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn combined_weight_mixing() {
        assert_eq!(combined_weight(100.0, 50.0, 0.0), 100.0);
        assert_eq!(combined_weight(0.0, 300.0, 1.0), 300.0);
        assert_eq!(combined_weight(100.0, 50.0, 2.0), 200.0);
    }

    fn two_node_net() -> RoadNetwork {
        RoadNetwork::new(
            vec![(0, 0.0, 0.0), (1, 0.0, 0.01)],
            vec![
                EdgeSpec { src: 0, dst: 1, length_m: 1000.0, speeds: vec![10.0] },
                EdgeSpec { src: 1, dst: 0, length_m: 1000.0, speeds: vec![10.0] },
            ],
            1,
        )
        .unwrap()
    }

    fn order(id: u64, placed: Ts, rest: NodeId, cust: NodeId, prep: Secs) -> Order {
        Order {
            id,
            placed_at: placed,
            restaurant_node: rest,
            customer_node: cust,
            prep_time: prep,
        }
    }

    #[test]
    fn xdt_weight_reduces_to_xdt_for_idle_unit_capacity_agent() {
        let net = two_node_net();
        let o = order(1, 0, 0, 1, 60);
        let ctx = PlanContext::idle(1, 30, 1);
        let baseline = plan_route(&net, &ctx, &[]).unwrap();
        let eval = evaluate_pair(&ctx, &[o], &baseline, &net, 2700);
        assert!(eval.feasible);
        let want = crate::routing::xdt(&o, &ctx, &net).unwrap() as f64;
        assert_eq!(eval.xdt_weight, want);
        // No carried orders: the delta term is empty.
    }

    #[test]
    fn evaluate_pair_gates() {
        let net = two_node_net();
        let ctx = PlanContext::idle(1, 0, 1);
        let baseline = plan_route(&net, &ctx, &[]).unwrap();
        // capacity gate
        let batch = [order(1, 0, 0, 1, 0), order(2, 0, 0, 1, 0)];
        assert!(!evaluate_pair(&ctx, &batch, &baseline, &net, 2700).feasible);
        // SLA gate: delivery takes 200 s travel + waiting, SLA 100 s
        let one = [order(3, 0, 0, 1, 0)];
        assert!(!evaluate_pair(&ctx, &one, &baseline, &net, 100).feasible);
        assert!(evaluate_pair(&ctx, &one, &baseline, &net, 2700).feasible);
        assert!(feasible(&ctx, &one, &net, 2700));
        assert!(!feasible(&ctx, &one, &net, 100));
    }

    #[test]
    fn assignment_single_cell() {
        let mut m = CostMatrix::new(1, 1);
        m.set(0, 0, 42.0);
        assert_eq!(min_cost_assignment(&m), vec![(0, 0)]);
    }

    #[test]
    fn assignment_three_by_three_matches_enumeration() {
        let mut m = CostMatrix::new(3, 3);
        let w = [[8.0, 5.0, 9.0], [4.0, 2.0, 4.0], [7.0, 3.0, 8.0]];
        for r in 0..3 {
            for c in 0..3 {
                m.set(r, c, w[r][c]);
            }
        }
        let got = min_cost_assignment(&m);
        let total: f64 = got.iter().map(|&(r, c)| m.get(r, c)).sum();
        let (card, best) = brute_force(&m);
        assert_eq!(got.len(), card);
        assert_eq!(total, best);
    }

    #[test]
    fn infeasible_row_left_unassigned() {
        let mut m = CostMatrix::new(2, 2);
        m.set(0, 0, 5.0);
        m.set(0, 1, 7.0);
        // row 1 entirely infeasible
        let got = min_cost_assignment(&m);
        assert_eq!(got, vec![(0, 0)]);
    }

    /// Exhaustive max-cardinality/min-weight search over finite cells.
    fn brute_force(m: &CostMatrix) -> (usize, f64) {
        fn rec(
            m: &CostMatrix,
            r: usize,
            used: &mut Vec<bool>,
            card: usize,
            total: f64,
            best: &mut (usize, f64),
        ) {
            if r == m.rows {
                if card > best.0 || (card == best.0 && total < best.1) {
                    *best = (card, total);
                }
                return;
            }
            rec(m, r + 1, used, card, total, best);
            for c in 0..m.cols {
                if !used[c] && m.get(r, c).is_finite() {
                    used[c] = true;
                    rec(m, r + 1, used, card + 1, total + m.get(r, c), best);
                    used[c] = false;
                }
            }
        }
        let mut best = (0, f64::INFINITY);
        let mut used = vec![false; m.cols];
        rec(m, 0, &mut used, 0, 0.0, &mut best);
        if best.0 == 0 {
            best.1 = 0.0;
        }
        (best.0, best.1)
    }

    #[test]
    fn optimal_on_random_rectangular_matrices() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..60 {
            let rows = rng.gen_range(1..=5);
            let cols = rng.gen_range(1..=5);
            let mut m = CostMatrix::new(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    if rng.gen_bool(0.85) {
                        m.set(r, c, rng.gen_range(0..100) as f64);
                    }
                }
            }
            let got = min_cost_assignment(&m);
            let total: f64 = got.iter().map(|&(r, c)| m.get(r, c)).sum();
            let (card, best) = brute_force(&m);
            assert_eq!(got.len(), card, "cardinality mismatch");
            assert!(
                (total - best).abs() < 1e-9,
                "weight mismatch: got {total}, want {best}"
            );
            // No duplicate columns.
            let mut cols_used: Vec<usize> = got.iter().map(|&(_, c)| c).collect();
            cols_used.sort_unstable();
            cols_used.dedup();
            assert_eq!(cols_used.len(), got.len());
        }
    }

    #[test]
    fn deterministic_and_lexicographic_on_ties() {
        // All-equal weights: the lexicographic canonical pick is the diagonal.
        let mut m = CostMatrix::new(3, 3);
        for r in 0..3 {
            for c in 0..3 {
                m.set(r, c, 10.0);
            }
        }
        assert_eq!(min_cost_assignment(&m), vec![(0, 0), (1, 1), (2, 2)]);
        // Two optima: (0,0)+(1,1) and (0,1)+(1,0), both total 10.
        let mut m2 = CostMatrix::new(2, 2);
        m2.set(0, 0, 4.0);
        m2.set(0, 1, 6.0);
        m2.set(1, 0, 4.0);
        m2.set(1, 1, 6.0);
        assert_eq!(min_cost_assignment(&m2), vec![(0, 0), (1, 1)]);
        // Row-constant shifts keep the same canonical assignment.
        let mut m3 = CostMatrix::new(2, 2);
        m3.set(0, 0, 4.0 + 100.0);
        m3.set(0, 1, 6.0 + 100.0);
        m3.set(1, 0, 4.0 + 7.0);
        m3.set(1, 1, 6.0 + 7.0);
        assert_eq!(min_cost_assignment(&m3), vec![(0, 0), (1, 1)]);
    }
}
