//! Synthetic workload generation and file-based ingestion.
//!
//! A workload is a road network plus an order stream and agent sessions.
//! The generator builds a grid city with perturbed per-bucket speeds,
//! clustered restaurants, dispersed customers, an inhomogeneous Poisson
//! order process (thinning), and shift sessions weighted toward demand.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AgentSession, NodeId, Order, Secs, Ts};
use crate::routing::{EdgeSpec, NetworkError, RoadNetwork, SECS_PER_DAY};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{file}: missing required column '{column}'")]
    MissingColumn { file: String, column: String },
    #[error("{file} line {line}: {message}")]
    BadRecord {
        file: String,
        line: u64,
        message: String,
    },
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("workload config invalid: {0}")]
    BadConfig(String),
    #[error("agent {id} references unserviced node {node}")]
    AgentOffNetwork { id: u64, node: NodeId },
    #[error("agent {id} has logoff_at <= login_at")]
    EmptyShift { id: u64 },
    #[error("agent {id} has zero capacity")]
    ZeroCapacity { id: u64 },
}

/// In-memory workload: network, order stream, agent sessions.
pub struct Workload {
    pub net: RoadNetwork,
    pub orders: Vec<Order>,
    pub agents: Vec<AgentSession>,
}

/// Parameters for the synthetic generator. Intensities are orders per hour
/// for each of the 24 clock hours.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub grid_width: u32,
    pub grid_height: u32,
    /// Edge length between neighboring grid nodes, meters.
    pub cell_meters: f64,
    /// Base road speed, m/s.
    pub base_speed_mps: f64,
    /// Relative per-(edge, bucket) speed perturbation, in [0, 1).
    pub speed_jitter: f64,
    pub bucket_count: usize,
    pub restaurant_count: u32,
    /// Restaurants are placed around this many cluster centers.
    pub restaurant_clusters: u32,
    /// Cluster spread, in grid cells.
    pub cluster_radius_cells: f64,
    /// Orders per hour, 24 entries.
    pub hourly_intensity: Vec<f64>,
    pub prep_min_s: Secs,
    pub prep_max_s: Secs,
    /// Explicit session count; see [`WorkloadConfig::agents_for_ratio`].
    pub agent_count: u32,
    pub shift_mean_h: f64,
    pub shift_std_h: f64,
    pub shift_min_h: f64,
    pub shift_max_h: f64,
    pub capacity: u32,
    /// Sample ratings uniformly from 1..=5; otherwise every agent gets 3.
    pub random_ratings: bool,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        // Lunch and dinner peaks over a low daytime base.
        let mut intensity = vec![0.0; 24];
        for (h, v) in intensity.iter_mut().enumerate() {
            *v = match h {
                10 | 11 => 60.0,
                12 | 13 => 220.0,
                14..=17 => 80.0,
                18 => 140.0,
                19 | 20 => 260.0,
                21 => 120.0,
                22 => 40.0,
                _ => 0.0,
            };
        }
        WorkloadConfig {
            grid_width: 15,
            grid_height: 15,
            cell_meters: 220.0,
            base_speed_mps: 6.0,
            speed_jitter: 0.15,
            bucket_count: 24,
            restaurant_count: 40,
            restaurant_clusters: 5,
            cluster_radius_cells: 1.6,
            hourly_intensity: intensity,
            prep_min_s: 300,
            prep_max_s: 720,
            agent_count: 120,
            shift_mean_h: 6.0,
            shift_std_h: 1.5,
            shift_min_h: 2.0,
            shift_max_h: 10.0,
            capacity: 3,
            random_ratings: false,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    pub fn expected_orders(&self) -> f64 {
        self.hourly_intensity.iter().sum()
    }

    /// Session count that targets a work-to-active ratio: expected order
    /// work (estimated seconds per order) over total active hours.
    pub fn agents_for_ratio(&self, target_ratio: f64, est_service_s_per_order: f64) -> u32 {
        let work_h = self.expected_orders() * est_service_s_per_order / 3600.0;
        let active_h = work_h / target_ratio.max(1e-6);
        (active_h / self.shift_mean_h).ceil().max(1.0) as u32
    }

    /// Scale the intensity profile so the expected order count hits `n`.
    pub fn scale_to_orders(&mut self, n: f64) {
        let total = self.expected_orders();
        if total > 0.0 {
            let f = n / total;
            for v in &mut self.hourly_intensity {
                *v *= f;
            }
        }
    }
}

/// Generate a deterministic workload from the config.
pub fn generate(cfg: &WorkloadConfig) -> Result<Workload, WorkloadError> {
    if cfg.grid_width == 0 || cfg.grid_height == 0 {
        return Err(WorkloadError::BadConfig("grid has zero nodes".into()));
    }
    if cfg.hourly_intensity.len() != 24 {
        return Err(WorkloadError::BadConfig(format!(
            "hourly_intensity needs 24 entries, got {}",
            cfg.hourly_intensity.len()
        )));
    }
    if cfg.hourly_intensity.iter().any(|&v| v < 0.0) {
        return Err(WorkloadError::BadConfig("negative intensity".into()));
    }
    if cfg.prep_min_s < 0 || cfg.prep_max_s < cfg.prep_min_s {
        return Err(WorkloadError::BadConfig("bad prep time range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let net = grid_network(cfg, &mut rng)?;
    let node_at = |x: u32, y: u32| -> NodeId { y * cfg.grid_width + x };

    // Restaurant placement: clustered around a few centers.
    let mut restaurants: Vec<NodeId> = Vec::with_capacity(cfg.restaurant_count as usize);
    let centers: Vec<(f64, f64)> = (0..cfg.restaurant_clusters.max(1))
        .map(|_| {
            (
                rng.gen_range(0.0..cfg.grid_width as f64),
                rng.gen_range(0.0..cfg.grid_height as f64),
            )
        })
        .collect();
    for _ in 0..cfg.restaurant_count {
        let (cx, cy) = centers[rng.gen_range(0..centers.len())];
        let gauss = Normal::new(0.0, cfg.cluster_radius_cells.max(0.01)).unwrap();
        let x = (cx + gauss.sample(&mut rng)).round().clamp(0.0, cfg.grid_width as f64 - 1.0);
        let y = (cy + gauss.sample(&mut rng)).round().clamp(0.0, cfg.grid_height as f64 - 1.0);
        restaurants.push(node_at(x as u32, y as u32));
    }

    // Order stream: inhomogeneous Poisson via thinning.
    let lambda_max = cfg
        .hourly_intensity
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let mut orders = Vec::new();
    if lambda_max > 0.0 {
        let rate_per_sec = lambda_max / 3600.0;
        let mut t = 0.0f64;
        let mut id = 0u64;
        loop {
            // Exponential inter-arrival at the max rate.
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            t += -u.ln() / rate_per_sec;
            if t >= SECS_PER_DAY as f64 {
                break;
            }
            let hour = (t as i64 / 3600) as usize % 24;
            if rng.gen_range(0.0..1.0) < cfg.hourly_intensity[hour] / lambda_max {
                let placed = t as Ts;
                let restaurant = restaurants[rng.gen_range(0..restaurants.len())];
                let customer = node_at(
                    rng.gen_range(0..cfg.grid_width),
                    rng.gen_range(0..cfg.grid_height),
                );
                orders.push(Order {
                    id,
                    placed_at: placed,
                    restaurant_node: restaurant,
                    customer_node: customer,
                    prep_time: rng.gen_range(cfg.prep_min_s..=cfg.prep_max_s),
                });
                id += 1;
            }
        }
    }

    // Sessions: login hour weighted by smoothed demand so supply overlaps
    // the order stream; shifts clipped to the configured range.
    let weights = smooth_intensity(&cfg.hourly_intensity);
    let total_w: f64 = weights.iter().sum();
    let shift_dist = Normal::new(cfg.shift_mean_h, cfg.shift_std_h.max(1e-9)).unwrap();
    let mut agents = Vec::with_capacity(cfg.agent_count as usize);
    for id in 0..cfg.agent_count as u64 {
        let login_hour = if total_w > 0.0 {
            let mut pick = rng.gen_range(0.0..total_w);
            let mut h = 0usize;
            for (i, w) in weights.iter().enumerate() {
                if pick < *w {
                    h = i;
                    break;
                }
                pick -= w;
            }
            h
        } else {
            rng.gen_range(0..24)
        };
        let shift_h = shift_dist
            .sample(&mut rng)
            .clamp(cfg.shift_min_h, cfg.shift_max_h);
        let shift_s = (shift_h * 3600.0).round() as Secs;
        // Bias the login earlier so part of the shift covers the sampled
        // demand hour rather than trailing it.
        let offset = rng.gen_range(0..3600);
        let login = (login_hour as i64 * 3600 + offset - shift_s / 3) .max(0);
        agents.push(AgentSession {
            id,
            login_at: login,
            logoff_at: login + shift_s,
            login_node: node_at(
                rng.gen_range(0..cfg.grid_width),
                rng.gen_range(0..cfg.grid_height),
            ),
            capacity: cfg.capacity.max(1),
            rating: if cfg.random_ratings {
                rng.gen_range(1..=5)
            } else {
                3
            },
        });
    }

    Ok(Workload { net, orders, agents })
}

fn smooth_intensity(intensity: &[f64]) -> Vec<f64> {
    (0..24)
        .map(|h| {
            let prev = intensity[(h + 23) % 24];
            let next = intensity[(h + 1) % 24];
            0.25 * prev + 0.5 * intensity[h] + 0.25 * next
        })
        .collect()
}

fn grid_network(cfg: &WorkloadConfig, rng: &mut ChaCha8Rng) -> Result<RoadNetwork, WorkloadError> {
    let (w, h) = (cfg.grid_width, cfg.grid_height);
    // Roughly convert meters to degrees around the equator for coordinates.
    let deg_per_m = 1.0 / 111_320.0;
    let mut nodes = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            nodes.push((
                y * w + x,
                12.97 + y as f64 * cfg.cell_meters * deg_per_m,
                77.59 + x as f64 * cfg.cell_meters * deg_per_m,
            ));
        }
    }
    let mut edges = Vec::new();
    let mut link = |a: NodeId, b: NodeId, rng: &mut ChaCha8Rng| {
        let speeds: Vec<f64> = (0..cfg.bucket_count)
            .map(|_| {
                let jitter = rng.gen_range(-cfg.speed_jitter..=cfg.speed_jitter);
                (cfg.base_speed_mps * (1.0 + jitter)).max(0.5)
            })
            .collect();
        // Both directions share the bucket profile.
        edges.push(EdgeSpec {
            src: a,
            dst: b,
            length_m: cfg.cell_meters,
            speeds: speeds.clone(),
        });
        edges.push(EdgeSpec {
            src: b,
            dst: a,
            length_m: cfg.cell_meters,
            speeds,
        });
    };
    for y in 0..h {
        for x in 0..w {
            let n = y * w + x;
            if x + 1 < w {
                link(n, n + 1, rng);
            }
            if y + 1 < h {
                link(n, n + w, rng);
            }
        }
    }
    Ok(RoadNetwork::new(nodes, edges, cfg.bucket_count)?)
}

/// Validation outcome: orders that survive plus human-readable warnings for
/// the dropped ones.
pub struct ValidatedOrders {
    pub orders: Vec<Order>,
    pub warnings: Vec<String>,
}

/// Engine-side load validation. Agents on unserviced nodes are hard errors;
/// undeliverable orders are dropped here with a warning so the matching
/// matrix stays total.
pub fn validate(
    net: &RoadNetwork,
    orders: &[Order],
    agents: &[AgentSession],
) -> Result<ValidatedOrders, WorkloadError> {
    for a in agents {
        if a.logoff_at <= a.login_at {
            return Err(WorkloadError::EmptyShift { id: a.id });
        }
        if a.capacity == 0 {
            return Err(WorkloadError::ZeroCapacity { id: a.id });
        }
        if !net.is_serviced(a.login_node) {
            return Err(WorkloadError::AgentOffNetwork {
                id: a.id,
                node: a.login_node,
            });
        }
    }
    let mut kept = Vec::with_capacity(orders.len());
    let mut warnings = Vec::new();
    for o in orders {
        if o.prep_time < 0 {
            warnings.push(format!("order {}: negative prep time, dropped", o.id));
            continue;
        }
        if !net.is_serviced(o.restaurant_node) || !net.is_serviced(o.customer_node) {
            warnings.push(format!(
                "order {}: unreachable endpoint ({} -> {}), dropped",
                o.id, o.restaurant_node, o.customer_node
            ));
            continue;
        }
        kept.push(*o);
    }
    Ok(ValidatedOrders {
        orders: kept,
        warnings,
    })
}

// --- CSV formats -----------------------------------------------------------
//
// nodes.csv  : id,lat,lon
// edges.csv  : src,dst,length_m,speed_0,...,speed_{B-1}
// orders.csv : id,placed_at,restaurant_node,customer_node,prep_s
// agents.csv : id,login_at,logoff_at,login_node,capacity,rating

fn require_headers(
    file: &str,
    headers: &csv::StringRecord,
    required: &[&str],
) -> Result<(), WorkloadError> {
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(WorkloadError::MissingColumn {
                file: file.to_string(),
                column: col.to_string(),
            });
        }
    }
    Ok(())
}

fn field<'r, T: std::str::FromStr>(
    file: &str,
    record: &'r csv::StringRecord,
    headers: &csv::StringRecord,
    col: &str,
) -> Result<T, WorkloadError> {
    let idx = headers.iter().position(|h| h == col).ok_or_else(|| {
        WorkloadError::MissingColumn {
            file: file.to_string(),
            column: col.to_string(),
        }
    })?;
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    let raw = record.get(idx).ok_or_else(|| WorkloadError::BadRecord {
        file: file.to_string(),
        line,
        message: format!("missing value for '{col}'"),
    })?;
    raw.trim().parse().map_err(|_| WorkloadError::BadRecord {
        file: file.to_string(),
        line,
        message: format!("cannot parse '{raw}' for '{col}'"),
    })
}

pub fn save_network<W: Write>(net: &RoadNetwork, nodes_out: W, edges_out: W) -> Result<(), WorkloadError> {
    let mut nw = csv::Writer::from_writer(nodes_out);
    nw.write_record(["id", "lat", "lon"])?;
    for &id in net.node_ids() {
        let (lat, lon) = net.coord(id).expect("listed node");
        nw.write_record(&[id.to_string(), lat.to_string(), lon.to_string()])?;
    }
    nw.flush()?;
    let mut ew = csv::Writer::from_writer(edges_out);
    let mut header = vec!["src".to_string(), "dst".to_string(), "length_m".to_string()];
    for b in 0..net.bucket_count() {
        header.push(format!("speed_{b}"));
    }
    ew.write_record(&header)?;
    for e in net.edge_specs() {
        let mut rec = vec![e.src.to_string(), e.dst.to_string(), e.length_m.to_string()];
        rec.extend(e.speeds.iter().map(|s| s.to_string()));
        ew.write_record(&rec)?;
    }
    ew.flush()?;
    Ok(())
}

pub fn load_network<R: Read>(nodes_in: R, edges_in: R) -> Result<RoadNetwork, WorkloadError> {
    let mut nr = csv::Reader::from_reader(nodes_in);
    let nh = nr.headers()?.clone();
    require_headers("nodes", &nh, &["id", "lat", "lon"])?;
    let mut nodes = Vec::new();
    for rec in nr.records() {
        let rec = rec?;
        nodes.push((
            field("nodes", &rec, &nh, "id")?,
            field("nodes", &rec, &nh, "lat")?,
            field("nodes", &rec, &nh, "lon")?,
        ));
    }
    let mut er = csv::Reader::from_reader(edges_in);
    let eh = er.headers()?.clone();
    require_headers("edges", &eh, &["src", "dst", "length_m", "speed_0"])?;
    let bucket_count = eh.iter().filter(|h| h.starts_with("speed_")).count();
    let mut edges = Vec::new();
    for rec in er.records() {
        let rec = rec?;
        let mut speeds = Vec::with_capacity(bucket_count);
        for b in 0..bucket_count {
            speeds.push(field("edges", &rec, &eh, &format!("speed_{b}"))?);
        }
        edges.push(EdgeSpec {
            src: field("edges", &rec, &eh, "src")?,
            dst: field("edges", &rec, &eh, "dst")?,
            length_m: field("edges", &rec, &eh, "length_m")?,
            speeds,
        });
    }
    Ok(RoadNetwork::new(nodes, edges, bucket_count)?)
}

pub fn save_orders<W: Write>(orders: &[Order], out: W) -> Result<(), WorkloadError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "placed_at", "restaurant_node", "customer_node", "prep_s"])?;
    for o in orders {
        w.write_record(&[
            o.id.to_string(),
            o.placed_at.to_string(),
            o.restaurant_node.to_string(),
            o.customer_node.to_string(),
            o.prep_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_orders<R: Read>(input: R) -> Result<Vec<Order>, WorkloadError> {
    let mut r = csv::Reader::from_reader(input);
    let h = r.headers()?.clone();
    require_headers(
        "orders",
        &h,
        &["id", "placed_at", "restaurant_node", "customer_node", "prep_s"],
    )?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(Order {
            id: field("orders", &rec, &h, "id")?,
            placed_at: field("orders", &rec, &h, "placed_at")?,
            restaurant_node: field("orders", &rec, &h, "restaurant_node")?,
            customer_node: field("orders", &rec, &h, "customer_node")?,
            prep_time: field("orders", &rec, &h, "prep_s")?,
        });
    }
    Ok(out)
}

pub fn save_agents<W: Write>(agents: &[AgentSession], out: W) -> Result<(), WorkloadError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "login_at", "logoff_at", "login_node", "capacity", "rating"])?;
    for a in agents {
        w.write_record(&[
            a.id.to_string(),
            a.login_at.to_string(),
            a.logoff_at.to_string(),
            a.login_node.to_string(),
            a.capacity.to_string(),
            a.rating.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_agents<R: Read>(input: R) -> Result<Vec<AgentSession>, WorkloadError> {
    let mut r = csv::Reader::from_reader(input);
    let h = r.headers()?.clone();
    require_headers(
        "agents",
        &h,
        &["id", "login_at", "logoff_at", "login_node", "capacity", "rating"],
    )?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(AgentSession {
            id: field("agents", &rec, &h, "id")?,
            login_at: field("agents", &rec, &h, "login_at")?,
            logoff_at: field("agents", &rec, &h, "logoff_at")?,
            login_node: field("agents", &rec, &h, "login_node")?,
            capacity: field("agents", &rec, &h, "capacity")?,
            rating: field("agents", &rec, &h, "rating")?,
        });
    }
    Ok(out)
}

/// Write all four workload files into a directory.
pub fn save_workload_dir(w: &Workload, dir: &Path) -> Result<(), WorkloadError> {
    std::fs::create_dir_all(dir)?;
    save_network(
        &w.net,
        std::fs::File::create(dir.join("nodes.csv"))?,
        std::fs::File::create(dir.join("edges.csv"))?,
    )?;
    save_orders(&w.orders, std::fs::File::create(dir.join("orders.csv"))?)?;
    save_agents(&w.agents, std::fs::File::create(dir.join("agents.csv"))?)?;
    Ok(())
}

/// Load the four workload files from a directory.
pub fn load_workload_dir(dir: &Path) -> Result<Workload, WorkloadError> {
    let net = load_network(
        std::fs::File::open(dir.join("nodes.csv"))?,
        std::fs::File::open(dir.join("edges.csv"))?,
    )?;
    let orders = load_orders(std::fs::File::open(dir.join("orders.csv"))?)?;
    let agents = load_agents(std::fs::File::open(dir.join("agents.csv"))?)?;
    Ok(Workload { net, orders, agents })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = WorkloadConfig {
            agent_count: 20,
            ..WorkloadConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.orders, b.orders);
        assert_eq!(a.agents, b.agents);
        assert_eq!(a.net.node_count(), b.net.node_count());
    }

    #[test]
    fn zero_intensity_means_zero_orders() {
        let cfg = WorkloadConfig {
            hourly_intensity: vec![0.0; 24],
            ..WorkloadConfig::default()
        };
        let w = generate(&cfg).unwrap();
        assert!(w.orders.is_empty());
    }

    #[test]
    fn doubled_intensity_roughly_doubles_orders() {
        // Poisson totals over 10 seeds: the doubled mean should sit within
        // 3 sigma of twice the base mean.
        let mut base_total = 0.0;
        let mut doubled_total = 0.0;
        for seed in 0..10 {
            let mut cfg = WorkloadConfig {
                seed,
                agent_count: 1,
                ..WorkloadConfig::default()
            };
            base_total += generate(&cfg).unwrap().orders.len() as f64;
            for v in &mut cfg.hourly_intensity {
                *v *= 2.0;
            }
            doubled_total += generate(&cfg).unwrap().orders.len() as f64;
        }
        let expect = 2.0 * base_total;
        let sigma = expect.sqrt();
        assert!(
            (doubled_total - expect).abs() < 3.0 * sigma,
            "doubled {doubled_total} vs 2x base {expect}"
        );
    }

    #[test]
    fn generated_workload_passes_validation() {
        let cfg = WorkloadConfig::default();
        let w = generate(&cfg).unwrap();
        let v = validate(&w.net, &w.orders, &w.agents).unwrap();
        assert_eq!(v.orders.len(), w.orders.len());
        assert!(v.warnings.is_empty());
    }

    #[test]
    fn csv_round_trips_exactly() {
        let cfg = WorkloadConfig {
            grid_width: 4,
            grid_height: 3,
            agent_count: 7,
            random_ratings: true,
            ..WorkloadConfig::default()
        };
        let w = generate(&cfg).unwrap();

        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        save_network(&w.net, &mut nodes, &mut edges).unwrap();
        let net2 = load_network(nodes.as_slice(), edges.as_slice()).unwrap();
        assert_eq!(w.net.node_ids(), net2.node_ids());
        assert_eq!(w.net.node_count(), net2.node_count());
        // Edge-for-edge identical specs.
        let e1 = w.net.edge_specs();
        let e2 = net2.edge_specs();
        assert_eq!(e1.len(), e2.len());
        for (a, b) in e1.iter().zip(e2.iter()) {
            assert_eq!((a.src, a.dst), (b.src, b.dst));
            assert_eq!(a.length_m, b.length_m);
            assert_eq!(a.speeds, b.speeds);
        }

        let mut obuf = Vec::new();
        save_orders(&w.orders, &mut obuf).unwrap();
        assert_eq!(load_orders(obuf.as_slice()).unwrap(), w.orders);

        let mut abuf = Vec::new();
        save_agents(&w.agents, &mut abuf).unwrap();
        assert_eq!(load_agents(abuf.as_slice()).unwrap(), w.agents);
    }

    #[test]
    fn crlf_input_parses_identically() {
        let lf = "id,placed_at,restaurant_node,customer_node,prep_s\n1,100,2,3,60\n";
        let crlf = lf.replace('\n', "\r\n");
        assert_eq!(
            load_orders(lf.as_bytes()).unwrap(),
            load_orders(crlf.as_bytes()).unwrap()
        );
    }

    #[test]
    fn missing_column_is_named() {
        let bad = "id,placed_at,restaurant_node,customer_node\n1,100,2,3\n";
        match load_orders(bad.as_bytes()) {
            Err(WorkloadError::MissingColumn { column, .. }) => assert_eq!(column, "prep_s"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line_number() {
        let bad = "id,placed_at,restaurant_node,customer_node,prep_s\n1,100,2,3,oops\n";
        match load_orders(bad.as_bytes()) {
            Err(WorkloadError::BadRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected BadRecord, got {other:?}"),
        }
    }

    #[test]
    fn impossible_config_is_an_error() {
        let cfg = WorkloadConfig {
            grid_width: 0,
            ..WorkloadConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }
}
