//! Virtual network requests and the Poisson arrival workload.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload config: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualNode {
    pub id: usize,
    pub cpu: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualLink {
    pub id: usize,
    pub endpoints: (usize, usize),
    pub bandwidth_gbps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualNetworkRequest {
    pub id: u64,
    pub nodes: Vec<VirtualNode>,
    pub links: Vec<VirtualLink>,
    pub arrival_time: f64,
    pub holding_time: f64,
}

impl VirtualNetworkRequest {
    /// Positive demands, a simple graph, and at least one node.
    pub fn is_valid(&self) -> bool {
        let n = self.nodes.len();
        let mut pairs = std::collections::BTreeSet::new();
        n > 0
            && self.nodes.iter().enumerate().all(|(i, v)| v.id == i && v.cpu > 0)
            && self.links.iter().enumerate().all(|(i, l)| {
                let (a, b) = l.endpoints;
                l.id == i && a != b && a < n && b < n && l.bandwidth_gbps > 0.0 && pairs.insert((a.min(b), a.max(b)))
            })
    }

    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.nodes.len());
        for l in &self.links {
            uf.union(l.endpoints.0, l.endpoints.1);
        }
        (1..self.nodes.len()).all(|i| uf.find(i) == uf.find(0))
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.0[hi] = lo;
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub link_probability: f64,
    pub min_cpu: u32,
    pub max_cpu: u32,
    pub min_bandwidth_gbps: f64,
    pub max_bandwidth_gbps: f64,
    /// Bandwidth demands are drawn uniformly from `min + step * k`.
    pub bandwidth_step_gbps: f64,
    /// Join disconnected draws into one component.
    pub connected: bool,
    /// lambda, requests per second.
    pub arrival_rate: f64,
    /// 1 / mu, seconds.
    pub mean_holding: f64,
    pub requests: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            min_nodes: 2,
            max_nodes: 5,
            link_probability: 0.5,
            min_cpu: 7,
            max_cpu: 10,
            min_bandwidth_gbps: 25.0,
            max_bandwidth_gbps: 250.0,
            bandwidth_step_gbps: 1.0,
            connected: true,
            arrival_rate: 1.0,
            mean_holding: 1.0,
            requests: 11_000,
            warmup: 1_000,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    /// Sets lambda so that lambda / mu equals `erlangs`, keeping the mean holding time.
    pub fn with_load(mut self, erlangs: f64) -> Self {
        self.arrival_rate = erlangs / self.mean_holding;
        self
    }

    pub fn offered_load(&self) -> f64 {
        self.arrival_rate * self.mean_holding
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Invalid(m.to_string()));
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return bad("node-count range is empty");
        }
        if !(0.0..=1.0).contains(&self.link_probability) {
            return bad("link probability must lie in [0, 1]");
        }
        if self.min_cpu == 0 || self.min_cpu > self.max_cpu {
            return bad("cpu range must be non-empty and positive");
        }
        if !(self.min_bandwidth_gbps > 0.0) || self.min_bandwidth_gbps > self.max_bandwidth_gbps {
            return bad("bandwidth range must be non-empty and positive");
        }
        if !(self.bandwidth_step_gbps > 0.0) {
            return bad("bandwidth step must be positive");
        }
        if !(self.arrival_rate > 0.0) || !(self.mean_holding > 0.0) {
            return bad("arrival rate and holding time must be positive");
        }
        if self.warmup >= self.requests {
            return bad("warm-up must be smaller than the request count");
        }
        Ok(())
    }

    fn bandwidth_levels(&self) -> u64 {
        ((self.max_bandwidth_gbps - self.min_bandwidth_gbps) / self.bandwidth_step_gbps + 1e-9).floor() as u64
    }
}

/// Independent random streams, one per purpose, derived from one seed.
#[derive(Debug, Clone)]
pub struct WorkloadStreams {
    pub structure: ChaCha8Rng,
    pub demands: ChaCha8Rng,
    pub arrivals: ChaCha8Rng,
    pub holding: ChaCha8Rng,
}

/// A ChaCha stream keyed by `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl WorkloadStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            structure: stream(seed, 1),
            demands: stream(seed, 2),
            arrivals: stream(seed, 3),
            holding: stream(seed, 4),
        }
    }
}

/// Draws one request: Erdős–Rényi links over a uniform node count, with
/// disconnected samples joined by one extra link per missing component when
/// `connected` is set.
/// Arrival and holding times are left at zero.
pub fn generate_vnr(streams: &mut WorkloadStreams, config: &WorkloadConfig, id: u64) -> VirtualNetworkRequest {
    let n = streams.structure.random_range(config.min_nodes..=config.max_nodes);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if streams.structure.random_bool(config.link_probability) {
                pairs.push((a, b));
            }
        }
    }
    let mut uf = UnionFind::new(n);
    for &(a, b) in &pairs {
        uf.union(a, b);
    }
    // Join each component to the one holding node 0 through its lowest node.
    for v in 1..n {
        if config.connected && uf.find(v) != uf.find(0) && uf.find(v) == v {
            let anchor = streams.structure.random_range(0..v);
            let anchor = if uf.find(anchor) == uf.find(0) { anchor } else { 0 };
            uf.union(anchor, v);
            pairs.push((anchor.min(v), anchor.max(v)));
        }
    }
    let nodes = (0..n)
        .map(|id| VirtualNode { id, cpu: streams.demands.random_range(config.min_cpu..=config.max_cpu) })
        .collect();
    let levels = config.bandwidth_levels();
    let links = pairs
        .into_iter()
        .enumerate()
        .map(|(id, endpoints)| {
            let k = streams.demands.random_range(0..=levels);
            VirtualLink {
                id,
                endpoints,
                bandwidth_gbps: config.min_bandwidth_gbps + config.bandwidth_step_gbps * k as f64,
            }
        })
        .collect();
    VirtualNetworkRequest { id, nodes, links, arrival_time: 0.0, holding_time: 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    // Departures sort first so simultaneous arrivals see the freed resources.
    Departure,
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Index into [`Workload::requests`].
    pub request: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub requests: Vec<VirtualNetworkRequest>,
    pub events: Vec<WorkloadEvent>,
    pub offered_load: f64,
}

/// Poisson arrivals with exponential holding times, events sorted by time.
pub fn generate_workload(config: &WorkloadConfig) -> Result<Workload, WorkloadError> {
    config.validate()?;
    let mut streams = WorkloadStreams::new(config.seed);
    let inter = Exp::new(config.arrival_rate).map_err(|e| WorkloadError::Invalid(e.to_string()))?;
    let hold = Exp::new(1.0 / config.mean_holding).map_err(|e| WorkloadError::Invalid(e.to_string()))?;
    let mut t = 0.0;
    let mut requests = Vec::with_capacity(config.requests);
    for i in 0..config.requests {
        t += inter.sample(&mut streams.arrivals);
        let mut r = generate_vnr(&mut streams, config, i as u64);
        r.arrival_time = t;
        // Exp can return exactly zero; keep departures strictly later.
        r.holding_time = hold.sample(&mut streams.holding).max(f64::MIN_POSITIVE);
        requests.push(r);
    }
    Ok(Workload { events: events_for(&requests), requests, offered_load: config.offered_load() })
}

fn events_for(requests: &[VirtualNetworkRequest]) -> Vec<WorkloadEvent> {
    let mut events: Vec<WorkloadEvent> = requests
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            [
                WorkloadEvent { time: r.arrival_time, kind: EventKind::Arrival, request: i },
                WorkloadEvent { time: r.arrival_time + r.holding_time, kind: EventKind::Departure, request: i },
            ]
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.kind.cmp(&b.kind)).then(a.request.cmp(&b.request)));
    events
}

/// Dumps requests in a line-oriented text form:
///
/// ```text
/// vnr <id> <arrival> <holding>
/// node <id> <cpu>
/// link <id> <a> <b> <gbps>
/// ```
///
/// Floats use the shortest representation that round-trips.
pub fn dump_workload(w: &Workload) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "load {:?}", w.offered_load);
    for r in &w.requests {
        let _ = writeln!(out, "vnr {} {:?} {:?}", r.id, r.arrival_time, r.holding_time);
        for n in &r.nodes {
            let _ = writeln!(out, "node {} {}", n.id, n.cpu);
        }
        for l in &r.links {
            let _ = writeln!(out, "link {} {} {} {:?}", l.id, l.endpoints.0, l.endpoints.1, l.bandwidth_gbps);
        }
    }
    out
}

pub fn load_workload(text: &str) -> Result<Workload, WorkloadError> {
    let mut requests: Vec<VirtualNetworkRequest> = Vec::new();
    let mut offered_load = 0.0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |m: &str| WorkloadError::Parse { line: line_no, msg: m.to_string() };
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| err("bad integer"));
        match f.as_slice() {
            [] => {}
            ["load", x] => offered_load = num(x)?,
            ["vnr", id, a, h] => requests.push(VirtualNetworkRequest {
                id: int(id)? as u64,
                nodes: Vec::new(),
                links: Vec::new(),
                arrival_time: num(a)?,
                holding_time: num(h)?,
            }),
            ["node", id, cpu] => {
                let r = requests.last_mut().ok_or_else(|| err("node before vnr"))?;
                r.nodes.push(VirtualNode { id: int(id)?, cpu: int(cpu)? as u32 });
            }
            ["link", id, a, b, bw] => {
                let r = requests.last_mut().ok_or_else(|| err("link before vnr"))?;
                r.links.push(VirtualLink { id: int(id)?, endpoints: (int(a)?, int(b)?), bandwidth_gbps: num(bw)? });
            }
            _ => return Err(err("unrecognised line")),
        }
    }
    if let Some(bad) = requests.iter().find(|r| !r.is_valid()) {
        return Err(WorkloadError::Invalid(format!("request {} is malformed", bad.id)));
    }
    Ok(Workload { events: events_for(&requests), requests, offered_load })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_two_nodes_full_probability() {
        let cfg = WorkloadConfig { min_nodes: 2, max_nodes: 2, link_probability: 1.0, ..Default::default() };
        let mut s = WorkloadStreams::new(9);
        let r = generate_vnr(&mut s, &cfg, 0);
        assert_eq!(r.nodes.len(), 2);
        assert_eq!(r.links.len(), 1);
        assert!((7..=10).contains(&r.nodes[0].cpu));
        assert!((25.0..=250.0).contains(&r.links[0].bandwidth_gbps));
    }

    #[test]
    fn same_seed_same_request() {
        let cfg = WorkloadConfig::default();
        let a = generate_vnr(&mut WorkloadStreams::new(5), &cfg, 0);
        let b = generate_vnr(&mut WorkloadStreams::new(5), &cfg, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn node_count_histogram_is_uniform() {
        // Pearson chi-square with 3 degrees of freedom; 16.27 is the 0.001 quantile.
        let cfg = WorkloadConfig::default();
        let mut s = WorkloadStreams::new(2024);
        let mut hist = [0usize; 4];
        let n = 10_000;
        for i in 0..n {
            let r = generate_vnr(&mut s, &cfg, i);
            hist[r.nodes.len() - 2] += 1;
            assert!(r.is_valid() && r.is_connected());
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, hist = {hist:?}");
        for &o in &hist {
            assert!((o as f64 - expected).abs() < 3.0 * (n as f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn workload_shape_and_rates() {
        let cfg =
            WorkloadConfig { requests: 10_000, warmup: 0, arrival_rate: 1.0, mean_holding: 1.0, ..Default::default() };
        let w = generate_workload(&cfg).unwrap();
        assert_eq!(w.events.len(), 2 * cfg.requests);
        assert!(w.events.windows(2).all(|e| e[0].time <= e[1].time));
        let last = w.requests.last().unwrap().arrival_time;
        let mean_gap = last / cfg.requests as f64;
        assert!((mean_gap - 1.0).abs() < 0.05, "mean inter-arrival {mean_gap}");
        for r in &w.requests {
            assert!(r.arrival_time + r.holding_time > r.arrival_time);
        }
        // Offered load: total holding over the horizon.
        let cfg = cfg.with_load(40.0);
        let w = generate_workload(&cfg).unwrap();
        let horizon = w.requests.last().unwrap().arrival_time;
        let busy: f64 = w.requests.iter().map(|r| r.holding_time).sum();
        assert!((busy / horizon - 40.0).abs() < 4.0);
        assert_eq!(w.offered_load, 40.0);
    }

    #[test]
    fn config_validation() {
        assert!(WorkloadConfig { warmup: 11_000, ..Default::default() }.validate().is_err());
        assert!(WorkloadConfig { min_nodes: 6, ..Default::default() }.validate().is_err());
        assert!(WorkloadConfig { arrival_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(WorkloadConfig::default().validate().is_ok());
    }

    #[test]
    fn dump_round_trips() {
        let cfg = WorkloadConfig { requests: 200, warmup: 10, ..Default::default() };
        let w = generate_workload(&cfg).unwrap();
        let text = dump_workload(&w);
        assert_eq!(load_workload(&text).unwrap(), w);
        assert!(matches!(load_workload("node 0 3\n"), Err(WorkloadError::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn demands_within_ranges(seed in any::<u64>()) {
            let cfg = WorkloadConfig { requests: 50, warmup: 1, seed, ..Default::default() };
            let w = generate_workload(&cfg).unwrap();
            for r in &w.requests {
                prop_assert!(r.is_valid());
                prop_assert!(r.is_connected());
                prop_assert!((2..=5).contains(&r.nodes.len()));
                for n in &r.nodes { prop_assert!((7..=10).contains(&n.cpu)); }
                for l in &r.links {
                    prop_assert!((25.0..=250.0).contains(&l.bandwidth_gbps));
                    prop_assert_eq!(l.bandwidth_gbps.fract(), 0.0);
                }
            }
            prop_assert_eq!(dump_workload(&generate_workload(&cfg).unwrap()), dump_workload(&w));
        }
    }
}
