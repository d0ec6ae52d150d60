//! Survivable embedding of virtual network requests on a slotted substrate.
//!
//! | scheme | node mapping | link mapping            | slot policy |
//! |--------|--------------|-------------------------|-------------|
//! | APSS   | anchor       | adaptive split          | least cost  |
//! | APC    | anchor       | fixed split             | least cost  |
//! | APF    | anchor       | fixed split             | first fit   |
//! | MPF    | maxmapping   | fixed split             | first fit   |
//! | MDF    | maxmapping   | fixed split with K = 2  | first fit   |
//!
//! Every failed attempt releases what it took, so a blocked request leaves
//! the substrate exactly as it found it.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::resources::{LeaseId, ResourceError};
use crate::routing::{shortest_path, Metric, SubstratePath};
use crate::spectrum::{allocate_window, choose_fsw, max_window, slots_required, FsPolicy, ModulationTable, SlotWindow};
use crate::topology::{LinkCapacity, NodeId, SubstrateNetwork};
use crate::vn::{VirtualLink, VirtualNetworkRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Apss,
    Apc,
    Apf,
    Mpf,
    Mdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodePolicy {
    Anchor,
    MaxMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitPolicy {
    Adaptive,
    Fixed,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Apss, Scheme::Apc, Scheme::Apf, Scheme::Mpf, Scheme::Mdf];

    pub fn node_policy(self) -> NodePolicy {
        match self {
            Scheme::Apss | Scheme::Apc | Scheme::Apf => NodePolicy::Anchor,
            Scheme::Mpf | Scheme::Mdf => NodePolicy::MaxMapping,
        }
    }

    pub fn split_policy(self) -> SplitPolicy {
        match self {
            Scheme::Apss => SplitPolicy::Adaptive,
            _ => SplitPolicy::Fixed,
        }
    }

    pub fn fs_policy(self) -> FsPolicy {
        match self {
            Scheme::Apss | Scheme::Apc => FsPolicy::LeastCost,
            Scheme::Apf | Scheme::Mpf | Scheme::Mdf => FsPolicy::FirstFit,
        }
    }

    pub fn default_k(self) -> usize {
        match self {
            Scheme::Apss => 4,
            Scheme::Mdf => 2,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Apss => "APSS",
            Scheme::Apc => "APC",
            Scheme::Apf => "APF",
            Scheme::Mpf => "MPF",
            Scheme::Mdf => "MDF",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = EmbeddingConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "apss" => Ok(Scheme::Apss),
            "apc" => Ok(Scheme::Apc),
            "apf" => Ok(Scheme::Apf),
            "mpf" => Ok(Scheme::Mpf),
            "mdf" => Ok(Scheme::Mdf),
            _ => Err(EmbeddingConfigError::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmbeddingConfigError {
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("K must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("MDF is dedicated protection and requires K = 2, got {0}")]
    MdfNeedsTwo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Maximum paths per virtual link, backup included.
    pub k: usize,
    /// Anchor radius in hops.
    pub h: u32,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, k: usize, h: u32) -> Result<Self, EmbeddingConfigError> {
        if k < 2 {
            return Err(EmbeddingConfigError::KTooSmall(k));
        }
        if scheme == Scheme::Mdf && k != 2 {
            return Err(EmbeddingConfigError::MdfNeedsTwo(k));
        }
        Ok(Self { scheme, k, h })
    }

    /// The scheme with its default K and H = 1.
    pub fn standard(scheme: Scheme) -> Self {
        Self { scheme, k: scheme.default_k(), h: 1 }
    }

    pub fn label(&self) -> String {
        match self.scheme {
            Scheme::Apss | Scheme::Mdf => self.scheme.name().to_string(),
            _ => format!("{}(K={})", self.scheme.name(), self.k),
        }
    }
}

/// A window placed on the substrate together with the lease holding it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedWindow {
    pub window: SlotWindow,
    pub lease: LeaseId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkEmbedding {
    pub vlink: usize,
    pub demand_gbps: f64,
    pub working: Vec<PlacedWindow>,
    pub backup: PlacedWindow,
}

impl LinkEmbedding {
    pub fn paths(&self) -> impl Iterator<Item = &SubstratePath> {
        self.working.iter().chain(std::iter::once(&self.backup)).map(|p| &p.window.path)
    }

    pub fn leases(&self) -> impl Iterator<Item = LeaseId> + '_ {
        self.working.iter().chain(std::iter::once(&self.backup)).map(|p| p.lease)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMapping {
    /// Substrate host per virtual node id.
    pub hosts: Vec<NodeId>,
    pub leases: Vec<LeaseId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub vnr_id: u64,
    pub scheme: SchemeConfig,
    pub anchor: Option<NodeId>,
    pub nodes: NodeMapping,
    pub links: Vec<LinkEmbedding>,
}

impl EmbeddingRecord {
    pub fn leases(&self) -> Vec<LeaseId> {
        let mut out = self.nodes.leases.clone();
        for l in &self.links {
            out.extend(l.leases());
        }
        out
    }
}

/// Why a mapping step failed. Failures are ordinary values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFailure {
    TooFewCandidates,
    InsufficientCpu,
    NoPath,
    DemandNotCovered,
    NoBackup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocked {
    /// The failure of the last attempt.
    pub last_failure: MapFailure,
}

fn sort_virtual_nodes(vnr: &VirtualNetworkRequest) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vnr.nodes.len()).collect();
    order.sort_by(|&a, &b| vnr.nodes[b].cpu.cmp(&vnr.nodes[a].cpu).then(a.cmp(&b)));
    order
}

fn sort_virtual_links(vnr: &VirtualNetworkRequest) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vnr.links.len()).collect();
    order.sort_by(|&a, &b| vnr.links[b].bandwidth_gbps.total_cmp(&vnr.links[a].bandwidth_gbps).then(a.cmp(&b)));
    order
}

fn sort_by_available_cpu(net: &SubstrateNetwork, nodes: &mut [NodeId]) {
    nodes.sort_by(|&a, &b| net.nodes[b].cpu_available.cmp(&net.nodes[a].cpu_available).then(a.cmp(&b)));
}

/// Pairs demand-sorted virtual nodes with capacity-sorted candidates, one
/// to one. Nothing is kept on failure.
fn greedy_pairing(
    net: &mut SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    mut candidates: Vec<NodeId>,
) -> Result<NodeMapping, MapFailure> {
    if candidates.len() < vnr.nodes.len() {
        return Err(MapFailure::TooFewCandidates);
    }
    sort_by_available_cpu(net, &mut candidates);
    let mut hosts = vec![usize::MAX; vnr.nodes.len()];
    let mut leases = Vec::with_capacity(vnr.nodes.len());
    for (v, &s) in sort_virtual_nodes(vnr).iter().zip(&candidates) {
        match net.reserve_cpu(s, vnr.nodes[*v].cpu) {
            Ok(lease) => {
                hosts[*v] = s;
                leases.push(lease);
            }
            Err(_) => {
                net.release_all(&leases).expect("leases just issued");
                return Err(MapFailure::InsufficientCpu);
            }
        }
    }
    Ok(NodeMapping { hosts, leases })
}

/// Maps virtual nodes onto the anchor and the nodes within `h` hops of it.
pub fn node_map_ans(
    net: &mut SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    anchor: NodeId,
    h: u32,
) -> Result<NodeMapping, MapFailure> {
    let candidates = (0..net.node_count()).filter(|&n| net.hop_distance(anchor, n) <= h).collect();
    greedy_pairing(net, vnr, candidates)
}

/// Maps virtual nodes greedily over the whole substrate.
pub fn node_map_maxmapping(net: &mut SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<NodeMapping, MapFailure> {
    let candidates = (0..net.node_count()).collect();
    greedy_pairing(net, vnr, candidates)
}

/// Links that can still host a non-empty window.
fn routable_links(net: &SubstrateNetwork, guard: usize) -> Vec<bool> {
    net.links
        .iter()
        .map(|l| match &l.capacity {
            LinkCapacity::Slotted(g) => g.max_free_run() > guard,
            LinkCapacity::Scalar { .. } => false,
        })
        .collect()
}

struct PathCursor {
    usable: Vec<bool>,
    source: NodeId,
    target: NodeId,
}

impl PathCursor {
    fn new(net: &SubstrateNetwork, endpoints: (NodeId, NodeId), guard: usize) -> Self {
        Self { usable: routable_links(net, guard), source: endpoints.0, target: endpoints.1 }
    }

    /// Next link-disjoint shortest path; its links are excluded afterwards.
    fn next(&mut self, net: &SubstrateNetwork) -> Option<SubstratePath> {
        let p = shortest_path(net, self.source, self.target, Metric::Km, |l| self.usable[l.id])?;
        for &l in &p.links {
            self.usable[l] = false;
        }
        Some(p)
    }
}

fn place(
    net: &mut SubstrateNetwork,
    path: SubstratePath,
    start: usize,
    width: usize,
    modulation: crate::spectrum::Modulation,
    carried_gbps: f64,
) -> PlacedWindow {
    let window = SlotWindow { path, start, width, modulation, carried_gbps };
    let lease = allocate_window(net, &window).expect("chosen window is free on every path link");
    PlacedWindow { window, lease }
}

fn rollback(net: &mut SubstrateNetwork, placed: &[PlacedWindow]) {
    let leases: Vec<LeaseId> = placed.iter().map(|p| p.lease).collect();
    net.release_all(&leases).expect("leases just issued");
}

/// Sizes and reserves a window for `gbps` on `path`, or `None` if the path
/// cannot host it.
fn place_full(
    net: &mut SubstrateNetwork,
    table: &ModulationTable,
    path: SubstratePath,
    gbps: f64,
    policy: FsPolicy,
) -> Option<PlacedWindow> {
    let req = slots_required(table, gbps, path.length_km).ok()?;
    let start = choose_fsw(net, &path, req.slots, policy)?;
    let carried = req.carried(req.slots, table.guard_slots);
    Some(place(net, path, start, req.slots, req.modulation, carried))
}

/// Adaptive path splitting: fill up to K-1 disjoint working paths with as
/// much of the residual demand as each can carry, then protect with one
/// backup sized for the largest working share.
pub fn link_map_aps(
    net: &mut SubstrateNetwork,
    table: &ModulationTable,
    vlink: &VirtualLink,
    endpoints: (NodeId, NodeId),
    k: usize,
    policy: FsPolicy,
) -> Result<LinkEmbedding, MapFailure> {
    let guard = table.guard_slots;
    let mut cursor = PathCursor::new(net, endpoints, guard);
    let mut working: Vec<PlacedWindow> = Vec::new();
    let mut residual = vlink.bandwidth_gbps;

    for _attempt in 1..k {
        let Some(path) = cursor.next(net) else {
            rollback(net, &working);
            return Err(MapFailure::NoPath);
        };
        // Paths beyond every modulation's reach, or without room for more
        // than a guard band, are skipped but use up the attempt.
        let Ok(req) = slots_required(table, residual, path.length_km) else {
            continue;
        };
        let width = req.slots.min(max_window(net, &path));
        if width <= guard {
            continue;
        }
        let start = choose_fsw(net, &path, width, policy).expect("max window admits this width");
        let carried = req.carried(width, guard);
        working.push(place(net, path, start, width, req.modulation, carried));
        residual -= carried;
        if residual <= 0.0 {
            break;
        }
    }
    if residual > 0.0 {
        rollback(net, &working);
        return Err(MapFailure::DemandNotCovered);
    }

    let backup_gbps = working.iter().map(|w| w.window.carried_gbps).fold(0.0, f64::max);
    let backup = cursor.next(net).and_then(|path| {
        let req = slots_required(table, backup_gbps, path.length_km).ok()?;
        if req.slots > max_window(net, &path) {
            return None;
        }
        place_full(net, table, path, backup_gbps, policy)
    });
    match backup {
        Some(backup) => Ok(LinkEmbedding { vlink: vlink.id, demand_gbps: vlink.bandwidth_gbps, working, backup }),
        None => {
            rollback(net, &working);
            Err(MapFailure::NoBackup)
        }
    }
}

/// Fixed splitting: an even share of the demand on each of K-1 disjoint
/// working paths plus a share-sized backup on the K-th.
pub fn link_map_fixed(
    net: &mut SubstrateNetwork,
    table: &ModulationTable,
    vlink: &VirtualLink,
    endpoints: (NodeId, NodeId),
    k: usize,
    policy: FsPolicy,
) -> Result<LinkEmbedding, MapFailure> {
    let share = vlink.bandwidth_gbps / (k - 1) as f64;
    let mut cursor = PathCursor::new(net, endpoints, table.guard_slots);
    let mut placed: Vec<PlacedWindow> = Vec::with_capacity(k);
    for i in 0..k {
        let Some(path) = cursor.next(net) else {
            rollback(net, &placed);
            return Err(if i + 1 == k { MapFailure::NoBackup } else { MapFailure::NoPath });
        };
        match place_full(net, table, path, share, policy) {
            Some(p) => placed.push(p),
            None => {
                rollback(net, &placed);
                return Err(if i + 1 == k { MapFailure::NoBackup } else { MapFailure::DemandNotCovered });
            }
        }
    }
    let backup = placed.pop().expect("k >= 2 windows placed");
    Ok(LinkEmbedding { vlink: vlink.id, demand_gbps: vlink.bandwidth_gbps, working: placed, backup })
}

fn map_links(
    net: &mut SubstrateNetwork,
    table: &ModulationTable,
    vnr: &VirtualNetworkRequest,
    hosts: &[NodeId],
    cfg: &SchemeConfig,
) -> Result<Vec<LinkEmbedding>, MapFailure> {
    let mut done: Vec<LinkEmbedding> = Vec::with_capacity(vnr.links.len());
    for li in sort_virtual_links(vnr) {
        let vl = &vnr.links[li];
        let ends = (hosts[vl.endpoints.0], hosts[vl.endpoints.1]);
        let policy = cfg.scheme.fs_policy();
        let res = match cfg.scheme.split_policy() {
            SplitPolicy::Adaptive => link_map_aps(net, table, vl, ends, cfg.k, policy),
            SplitPolicy::Fixed => link_map_fixed(net, table, vl, ends, cfg.k, policy),
        };
        match res {
            Ok(le) => done.push(le),
            Err(f) => {
                let leases: Vec<LeaseId> = done.iter().flat_map(|l| l.leases()).collect();
                net.release_all(&leases).expect("leases just issued");
                return Err(f);
            }
        }
    }
    done.sort_by_key(|l| l.vlink);
    Ok(done)
}

/// Two-stage embedding. Anchor schemes retry with each substrate node as
/// anchor, in descending order of available CPU; maxmapping schemes try
/// once.
pub fn embed(
    net: &mut SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    cfg: &SchemeConfig,
    table: &ModulationTable,
) -> Result<EmbeddingRecord, Blocked> {
    let attempt = |net: &mut SubstrateNetwork, nodes: NodeMapping, anchor: Option<NodeId>| match map_links(
        net,
        table,
        vnr,
        &nodes.hosts,
        cfg,
    ) {
        Ok(links) => Ok(EmbeddingRecord { vnr_id: vnr.id, scheme: *cfg, anchor, nodes, links }),
        Err(f) => {
            net.release_all(&nodes.leases).expect("leases just issued");
            Err(f)
        }
    };
    match cfg.scheme.node_policy() {
        NodePolicy::MaxMapping => {
            let nodes = node_map_maxmapping(net, vnr).map_err(|f| Blocked { last_failure: f })?;
            attempt(net, nodes, None).map_err(|f| Blocked { last_failure: f })
        }
        NodePolicy::Anchor => {
            let mut anchors: Vec<NodeId> = (0..net.node_count()).collect();
            sort_by_available_cpu(net, &mut anchors);
            let mut last = MapFailure::TooFewCandidates;
            for anchor in anchors {
                let nodes = match node_map_ans(net, vnr, anchor, cfg.h) {
                    Ok(n) => n,
                    Err(f) => {
                        last = f;
                        continue;
                    }
                };
                match attempt(net, nodes, Some(anchor)) {
                    Ok(rec) => return Ok(rec),
                    Err(f) => last = f,
                }
            }
            Err(Blocked { last_failure: last })
        }
    }
}

/// Returns every CPU and slot lease of the record, all or nothing.
pub fn release_embedding(net: &mut SubstrateNetwork, record: &EmbeddingRecord) -> Result<(), ResourceError> {
    net.release_all(&record.leases())
}

/// Surviving bandwidth of a virtual link when substrate link `failed` is cut:
/// intact working paths plus the backup if it is intact.
pub fn surviving_gbps(le: &LinkEmbedding, failed: usize) -> f64 {
    let working: f64 =
        le.working.iter().filter(|w| !w.window.path.links.contains(&failed)).map(|w| w.window.carried_gbps).sum();
    let backup = if le.backup.window.path.links.contains(&failed) { 0.0 } else { le.backup.window.carried_gbps };
    let all_working: f64 = le.working.iter().map(|w| w.window.carried_gbps).sum();
    // Without a failure on a working path the backup idles; the demand is met
    // by the working set alone.
    if working == all_working {
        working
    } else {
        working + backup
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SlotGrid;
    use crate::topology::{CapacityMode, SubstrateLink, SubstrateNode};
    use crate::vn::VirtualNode;

    fn vnr(cpus: &[u32], links: &[(usize, usize, f64)]) -> VirtualNetworkRequest {
        VirtualNetworkRequest {
            id: 7,
            nodes: cpus.iter().enumerate().map(|(id, &cpu)| VirtualNode { id, cpu }).collect(),
            links: links
                .iter()
                .enumerate()
                .map(|(id, &(a, b, bw))| VirtualLink { id, endpoints: (a, b), bandwidth_gbps: bw })
                .collect(),
            arrival_time: 0.0,
            holding_time: 1.0,
        }
    }

    fn net(cpus: &[u32], links: &[(usize, usize, f64, &[usize])], slots: usize) -> SubstrateNetwork {
        let nodes =
            cpus.iter().enumerate().map(|(id, &c)| SubstrateNode { id, cpu_capacity: c, cpu_available: c }).collect();
        let links = links
            .iter()
            .enumerate()
            .map(|(id, &(u, v, km, busy))| SubstrateLink {
                id,
                endpoints: (u, v),
                length_km: km,
                capacity: LinkCapacity::Slotted(SlotGrid::with_busy(slots, busy)),
            })
            .collect();
        SubstrateNetwork::new("t", CapacityMode::Slotted, nodes, links).unwrap()
    }

    /// 4-cycle 0-1-2-3-0 with CPUs 50, 40, 30, 20.
    fn toy_cycle() -> SubstrateNetwork {
        net(&[50, 40, 30, 20], &[(0, 1, 100.0, &[]), (1, 2, 100.0, &[]), (2, 3, 100.0, &[]), (3, 0, 100.0, &[])], 32)
    }

    #[test]
    fn anchor_mapping_examples() {
        let mut n = toy_cycle();
        let m = node_map_ans(&mut n, &vnr(&[35, 25], &[]), 0, 1).unwrap();
        assert_eq!(m.hosts, vec![0, 1]);
        assert_eq!((n.nodes[0].cpu_available, n.nodes[1].cpu_available), (15, 15));

        let mut n = toy_cycle();
        let before = n.resource_state();
        assert_eq!(node_map_ans(&mut n, &vnr(&[45, 42], &[]), 0, 1), Err(MapFailure::InsufficientCpu));
        assert_eq!(n.resource_state(), before);
        assert_eq!(node_map_ans(&mut n, &vnr(&[1, 1, 1, 1], &[]), 0, 1), Err(MapFailure::TooFewCandidates));
    }

    #[test]
    fn maxmapping_examples() {
        let mut n = toy_cycle();
        assert_eq!(node_map_maxmapping(&mut n, &vnr(&[35, 25], &[])).unwrap().hosts, vec![0, 1]);
        // node 2 carries 100 CPU and is two hops from node 0
        let mut n =
            net(&[50, 40, 100, 20], &[(0, 1, 1.0, &[]), (1, 2, 1.0, &[]), (2, 3, 1.0, &[]), (3, 0, 1.0, &[])], 8);
        assert_eq!(node_map_maxmapping(&mut n, &vnr(&[35, 25], &[])).unwrap().hosts[0], 2);
        assert_eq!(node_map_maxmapping(&mut n, &vnr(&[101], &[])), Err(MapFailure::InsufficientCpu));
    }

    /// s=0, t=4; three disjoint two-hop routes with the given total lengths.
    fn three_routes(lengths: [f64; 3], busy: [&[usize]; 3], slots: usize) -> SubstrateNetwork {
        let l = |i: usize| lengths[i] / 2.0;
        net(
            &[100; 5],
            &[
                (0, 1, l(0), busy[0]),
                (1, 4, l(0), busy[0]),
                (0, 2, l(1), busy[1]),
                (2, 4, l(1), busy[1]),
                (0, 3, l(2), busy[2]),
                (3, 4, l(2), busy[2]),
            ],
            slots,
        )
    }

    fn busy_except(len: usize, free: std::ops::Range<usize>) -> Vec<usize> {
        (0..len).filter(|i| !free.contains(i)).collect()
    }

    fn vl(bw: f64) -> VirtualLink {
        VirtualLink { id: 0, endpoints: (0, 1), bandwidth_gbps: bw }
    }

    #[test]
    fn adaptive_single_working_path() {
        let t = ModulationTable::default();
        let b0 = busy_except(32, 0..4);
        let mut n = three_routes([800.0, 900.0, 3000.0], [&b0, &[], &[]], 32);
        let le = link_map_aps(&mut n, &t, &vl(100.0), (0, 4), 4, FsPolicy::LeastCost).unwrap();
        assert_eq!(le.working.len(), 1);
        assert_eq!(le.working[0].window.width, 4);
        assert_eq!(le.working[0].window.carried_gbps, 112.5);
        assert_eq!(le.backup.window.path.length_km, 900.0);
        assert_eq!(le.backup.window.width, 4);
    }

    #[test]
    fn adaptive_two_working_paths() {
        let t = ModulationTable::default();
        let b0 = busy_except(32, 0..4);
        let b1 = busy_except(32, 10..16);
        let mut n = three_routes([800.0, 1800.0, 2100.0], [&b0, &b1, &[]], 32);
        let le = link_map_aps(&mut n, &t, &vl(200.0), (0, 4), 4, FsPolicy::LeastCost).unwrap();
        let widths: Vec<usize> = le.working.iter().map(|w| w.window.width).collect();
        assert_eq!(widths, vec![4, 5]);
        assert_eq!(le.working[1].window.carried_gbps, 100.0);
        assert_eq!(le.working[1].window.modulation.name, "QPSK");
        assert_eq!(le.backup.window.modulation.name, "BPSK");
        assert_eq!(le.backup.window.width, 10);
    }

    #[test]
    fn adaptive_fails_after_k_minus_one_paths() {
        let t = ModulationTable::default();
        let narrow = busy_except(32, 0..2);
        let mut n = three_routes([800.0, 900.0, 1000.0], [&narrow, &narrow, &narrow], 32);
        let before = n.resource_state();
        // Two working attempts carry 37.5 each; 100 Gbps is not covered.
        assert_eq!(
            link_map_aps(&mut n, &t, &vl(100.0), (0, 4), 3, FsPolicy::LeastCost),
            Err(MapFailure::DemandNotCovered)
        );
        assert_eq!(n.resource_state(), before);
    }

    #[test]
    fn fixed_split_examples() {
        let t = ModulationTable::default();
        let mut n = three_routes([800.0, 900.0, 1800.0], [&[], &[], &[]], 32);
        let le = link_map_fixed(&mut n, &t, &vl(100.0), (0, 4), 3, FsPolicy::FirstFit).unwrap();
        let widths: Vec<usize> = le.working.iter().chain([&le.backup]).map(|w| w.window.width).collect();
        assert_eq!(widths, vec![3, 3, 3]);

        let mut n = three_routes([800.0, 900.0, 1800.0], [&[], &[], &[]], 32);
        let le = link_map_fixed(&mut n, &t, &vl(100.0), (0, 4), 2, FsPolicy::FirstFit).unwrap();
        assert_eq!((le.working.len(), le.working[0].window.width, le.backup.window.width), (1, 4, 4));

        let mut n = three_routes([800.0, 900.0, 1800.0], [&[], &[], &[]], 32);
        let before = n.resource_state();
        assert_eq!(link_map_fixed(&mut n, &t, &vl(100.0), (0, 4), 4, FsPolicy::FirstFit), Err(MapFailure::NoBackup));
        assert_eq!(n.resource_state(), before);
    }

    #[test]
    fn single_node_request_touches_no_spectrum() {
        let t = ModulationTable::default();
        let mut n = toy_cycle();
        let rec = embed(&mut n, &vnr(&[10], &[]), &SchemeConfig::standard(Scheme::Apss), &t).unwrap();
        assert_eq!(rec.nodes.hosts, vec![0]);
        assert!(n.links.iter().all(|l| l.grid().unwrap().busy_count() == 0));
    }

    /// Node 0 has the most CPU but hangs off node 4 by a bridge, so no
    /// disjoint pair leaves it. Anchor 1 (next by CPU) reaches 2 and 3,
    /// which are joined to it by two routes.
    fn leaf_anchor_instance() -> SubstrateNetwork {
        net(
            &[90, 80, 70, 60, 10, 10],
            &[
                (0, 4, 100.0, &[]),
                (1, 2, 100.0, &[]),
                (1, 3, 100.0, &[]),
                (2, 3, 100.0, &[]),
                (2, 4, 100.0, &[]),
                (3, 5, 100.0, &[]),
                (4, 5, 100.0, &[]),
            ],
            64,
        )
    }

    #[test]
    fn retries_with_next_anchor() {
        let t = ModulationTable::default();
        let mut n = leaf_anchor_instance();
        let req = vnr(&[20, 10], &[(0, 1, 50.0)]);
        // Anchor 0 can only pair with node 4 over the bridge: no backup exists.
        let mut probe = n.clone();
        let m = node_map_ans(&mut probe, &req, 0, 1).unwrap();
        assert_eq!(m.hosts, vec![0, 4]);
        assert!(crate::routing::k_disjoint_shortest_paths(&probe, 0, 4, 2, Metric::Km, |_| true).len() < 2);
        assert_eq!(
            link_map_aps(&mut probe, &t, &req.links[0], (0, 4), 4, FsPolicy::LeastCost),
            Err(MapFailure::NoBackup)
        );

        let rec = embed(&mut n, &req, &SchemeConfig::standard(Scheme::Apss), &t).unwrap();
        assert_eq!(rec.anchor, Some(1));
        assert_eq!(rec.nodes.hosts, vec![1, 2]);
    }

    #[test]
    fn blocked_leaves_substrate_untouched() {
        let t = ModulationTable::default();
        let mut n = leaf_anchor_instance();
        let before = n.resource_state();
        let req = vnr(&[5, 5, 5], &[(0, 1, 10000.0), (1, 2, 30.0)]);
        for scheme in Scheme::ALL {
            assert!(embed(&mut n, &req, &SchemeConfig::standard(scheme), &t).is_err());
            assert_eq!(n.resource_state(), before);
        }
    }

    #[test]
    fn release_round_trip_and_double_release() {
        let t = ModulationTable::default();
        let mut n = leaf_anchor_instance();
        let initial = n.resource_state();
        let a = embed(&mut n, &vnr(&[20, 10], &[(0, 1, 50.0)]), &SchemeConfig::standard(Scheme::Apss), &t).unwrap();
        let after_a = n.resource_state();
        let b = embed(&mut n, &vnr(&[5, 5], &[(0, 1, 80.0)]), &SchemeConfig::standard(Scheme::Apss), &t).unwrap();
        release_embedding(&mut n, &a).unwrap();
        assert!(b.leases().iter().all(|&l| n.is_outstanding(l)));
        release_embedding(&mut n, &b).unwrap();
        assert_eq!(n.resource_state(), initial);
        assert!(matches!(release_embedding(&mut n, &a), Err(ResourceError::DoubleRelease(_))));
        assert_ne!(after_a, initial);
    }

    #[test]
    fn scheme_config_validation() {
        assert_eq!(SchemeConfig::new(Scheme::Apss, 1, 1), Err(EmbeddingConfigError::KTooSmall(1)));
        assert_eq!(SchemeConfig::new(Scheme::Mdf, 3, 1), Err(EmbeddingConfigError::MdfNeedsTwo(3)));
        assert!(SchemeConfig::new(Scheme::Mpf, 4, 0).is_ok());
        assert_eq!("apss".parse::<Scheme>().unwrap(), Scheme::Apss);
        assert!("xyz".parse::<Scheme>().is_err());
    }
}
