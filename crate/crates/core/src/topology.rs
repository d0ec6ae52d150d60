//! Substrate network model, built-in fixtures and the line-oriented
//! topology file format.
//!
//! ```text
//! # comment
//! topology <name> <slotted|scalar>
//! [nodes]
//! <id> <cpu_capacity>
//! [links]
//! <id> <u> <v> <length_km> <capacity>
//! ```
//!
//! `capacity` is a slot count in slotted mode and Gbps in scalar mode.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::resources::{Bandwidth, Lease, LeaseId};
use crate::spectrum::SlotGrid;

pub type NodeId = usize;
pub type LinkId = usize;

const USNET_FIXTURE: &str = include_str!("../fixtures/usnet.topo");
const NSFNET_FIXTURE: &str = include_str!("../fixtures/nsfnet.topo");

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate {kind} id {id}")]
    DuplicateId { line: usize, kind: &'static str, id: usize },
    #[error("{kind} ids are not dense: missing id {missing}")]
    SparseIds { kind: &'static str, missing: usize },
    #[error("line {line}: {msg}")]
    InvalidLink { line: usize, msg: String },
    #[error("topology is disconnected: node {0} is unreachable from node 0")]
    Disconnected(NodeId),
    #[error("topology has no nodes")]
    Empty,
    #[error("unknown topology `{0}` (expected usnet or nsfnet)")]
    UnknownTopology(String),
}

/// Slotted networks carry a frequency-slot grid per link; scalar networks a
/// plain bandwidth pool. One mode per network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapacityMode {
    Slotted,
    Scalar,
}

impl fmt::Display for CapacityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CapacityMode::Slotted => "slotted",
            CapacityMode::Scalar => "scalar",
        })
    }
}

impl FromStr for CapacityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slotted" => Ok(CapacityMode::Slotted),
            "scalar" => Ok(CapacityMode::Scalar),
            other => Err(format!("unknown capacity mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateNode {
    pub id: NodeId,
    pub cpu_capacity: u32,
    pub cpu_available: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinkCapacity {
    Slotted(SlotGrid),
    Scalar { capacity: Bandwidth, residual: Bandwidth },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstrateLink {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub length_km: f64,
    pub capacity: LinkCapacity,
}

impl SubstrateLink {
    pub fn other_end(&self, node: NodeId) -> NodeId {
        if self.endpoints.0 == node {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.endpoints.0 == node || self.endpoints.1 == node
    }

    pub fn grid(&self) -> Option<&SlotGrid> {
        match &self.capacity {
            LinkCapacity::Slotted(g) => Some(g),
            LinkCapacity::Scalar { .. } => None,
        }
    }

    pub fn residual(&self) -> Option<Bandwidth> {
        match self.capacity {
            LinkCapacity::Scalar { residual, .. } => Some(residual),
            LinkCapacity::Slotted(_) => None,
        }
    }
}

/// Uniform capacities applied to a built-in topology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityParams {
    pub cpu: u32,
    pub slots: usize,
    pub gbps: f64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        Self { cpu: 300, slots: 320, gbps: 65.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinTopology {
    Usnet,
    Nsfnet,
}

impl BuiltinTopology {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinTopology::Usnet => "usnet",
            BuiltinTopology::Nsfnet => "nsfnet",
        }
    }

    /// The shipped fixture text (link lengths in km).
    pub fn fixture(self) -> &'static str {
        match self {
            BuiltinTopology::Usnet => USNET_FIXTURE,
            BuiltinTopology::Nsfnet => NSFNET_FIXTURE,
        }
    }
}

impl FromStr for BuiltinTopology {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "usnet" => Ok(BuiltinTopology::Usnet),
            "nsfnet" => Ok(BuiltinTopology::Nsfnet),
            _ => Err(TopologyError::UnknownTopology(s.to_string())),
        }
    }
}

/// Snapshot of every mutable resource in a network. Two snapshots compare
/// equal iff CPU, slot grids, residual bandwidths and the outstanding lease
/// set are identical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceState {
    pub cpu: Vec<u32>,
    pub links: Vec<LinkCapacity>,
    pub leases: Vec<LeaseId>,
}

#[derive(Debug, Clone)]
pub struct SubstrateNetwork {
    pub name: String,
    pub mode: CapacityMode,
    pub nodes: Vec<SubstrateNode>,
    pub links: Vec<SubstrateLink>,
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    hops: Vec<Vec<u32>>,
    pub(crate) leases: BTreeMap<LeaseId, Lease>,
    pub(crate) next_lease: u64,
}

impl SubstrateNetwork {
    /// Builds a network, checking id density, link sanity and connectivity.
    pub fn new(
        name: impl Into<String>,
        mode: CapacityMode,
        nodes: Vec<SubstrateNode>,
        links: Vec<SubstrateLink>,
    ) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(TopologyError::SparseIds { kind: "node", missing: i });
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen_pairs = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            if l.id != i {
                return Err(TopologyError::SparseIds { kind: "link", missing: i });
            }
            let (u, v) = l.endpoints;
            let bad = |msg: String| TopologyError::InvalidLink { line: 0, msg };
            if u >= nodes.len() || v >= nodes.len() {
                return Err(bad(format!("link {i} references unknown node")));
            }
            if u == v {
                return Err(bad(format!("link {i} is a self-loop")));
            }
            if !(l.length_km > 0.0) || !l.length_km.is_finite() {
                return Err(bad(format!("link {i} has non-positive length")));
            }
            let key = (u.min(v), u.max(v));
            if let Some(prev) = seen_pairs.insert(key, i) {
                return Err(bad(format!("links {prev} and {i} join the same node pair")));
            }
            match (&l.capacity, mode) {
                (LinkCapacity::Slotted(_), CapacityMode::Slotted)
                | (LinkCapacity::Scalar { .. }, CapacityMode::Scalar) => {}
                _ => return Err(bad(format!("link {i} capacity does not match {mode} mode"))),
            }
            adjacency[u].push((v, i));
            adjacency[v].push((u, i));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let mut net = Self {
            name: name.into(),
            mode,
            nodes,
            links,
            adjacency,
            hops: Vec::new(),
            leases: BTreeMap::new(),
            next_lease: 0,
        };
        net.hops = (0..net.nodes.len()).map(|s| net.bfs(s)).collect();
        if let Some(unreached) = net.hops[0].iter().position(|&h| h == u32::MAX) {
            return Err(TopologyError::Disconnected(unreached));
        }
        Ok(net)
    }

    fn bfs(&self, source: NodeId) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.nodes.len()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Neighbours of `node` as `(neighbour, link)` pairs, sorted by neighbour id.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[node]
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        self.adjacency[u].iter().find(|&&(n, _)| n == v).map(|&(_, l)| l)
    }

    pub fn hop_distance(&self, u: NodeId, v: NodeId) -> u32 {
        self.hops[u][v]
    }

    pub fn resource_state(&self) -> ResourceState {
        ResourceState {
            cpu: self.nodes.iter().map(|n| n.cpu_available).collect(),
            links: self.links.iter().map(|l| l.capacity.clone()).collect(),
            leases: self.leases.keys().copied().collect(),
        }
    }

    pub fn outstanding_leases(&self) -> usize {
        self.leases.len()
    }

    /// Overwrites each link length; `lengths` is indexed by link id.
    pub fn set_link_lengths(&mut self, lengths: &[f64]) -> Result<(), TopologyError> {
        if lengths.len() != self.links.len() {
            return Err(TopologyError::InvalidLink {
                line: 0,
                msg: format!("expected {} lengths, got {}", self.links.len(), lengths.len()),
            });
        }
        if let Some(i) = lengths.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(TopologyError::InvalidLink { line: 0, msg: format!("link {i} has non-positive length") });
        }
        for (l, &d) in self.links.iter_mut().zip(lengths) {
            l.length_km = d;
        }
        Ok(())
    }

    /// Renders the network in the topology file format, capacities taken
    /// from the current totals (slot count or capacity Gbps).
    pub fn to_topology_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "topology {} {}", self.name, self.mode);
        out.push_str("[nodes]\n");
        for n in &self.nodes {
            let _ = writeln!(out, "{} {}", n.id, n.cpu_capacity);
        }
        out.push_str("[links]\n");
        for l in &self.links {
            let cap = match &l.capacity {
                LinkCapacity::Slotted(g) => g.len().to_string(),
                LinkCapacity::Scalar { capacity, .. } => format!("{}", capacity.as_gbps()),
            };
            let _ = writeln!(out, "{} {} {} {} {}", l.id, l.endpoints.0, l.endpoints.1, l.length_km, cap);
        }
        out
    }
}

/// Builds a named topology from its shipped fixture with uniform capacities.
pub fn builtin_topology(
    which: BuiltinTopology,
    mode: CapacityMode,
    params: CapacityParams,
) -> Result<SubstrateNetwork, TopologyError> {
    let base = load_topology(which.fixture())?;
    let nodes = base
        .nodes
        .iter()
        .map(|n| SubstrateNode { id: n.id, cpu_capacity: params.cpu, cpu_available: params.cpu })
        .collect();
    let links =
        base.links.iter().map(|l| SubstrateLink { capacity: uniform_capacity(mode, params), ..l.clone() }).collect();
    SubstrateNetwork::new(which.name(), mode, nodes, links)
}

fn uniform_capacity(mode: CapacityMode, params: CapacityParams) -> LinkCapacity {
    match mode {
        CapacityMode::Slotted => LinkCapacity::Slotted(SlotGrid::new(params.slots)),
        CapacityMode::Scalar => {
            let bw = Bandwidth::from_gbps(params.gbps);
            LinkCapacity::Scalar { capacity: bw, residual: bw }
        }
    }
}

#[derive(PartialEq)]
enum Section {
    Header,
    Nodes,
    Links,
}

/// Parses the topology file format. All resources start free.
pub fn load_topology(text: &str) -> Result<SubstrateNetwork, TopologyError> {
    let mut header: Option<(String, CapacityMode)> = None;
    let mut section = Section::Header;
    let mut nodes: BTreeMap<usize, (usize, u32)> = BTreeMap::new();
    let mut links: BTreeMap<usize, (usize, SubstrateLink)> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: &str| TopologyError::Syntax { line: line_no, msg: msg.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if header.is_none() {
            match fields.as_slice() {
                ["topology", name, mode] => {
                    let mode = mode.parse::<CapacityMode>().map_err(|e| syntax(&e))?;
                    header = Some((name.to_string(), mode));
                    continue;
                }
                _ => return Err(syntax("expected `topology <name> <capacity_mode>`")),
            }
        }
        let mode = header.as_ref().map(|h| h.1).unwrap_or(CapacityMode::Slotted);
        match line {
            "[nodes]" => {
                section = Section::Nodes;
                continue;
            }
            "[links]" => {
                section = Section::Links;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Header => return Err(syntax("expected `[nodes]` or `[links]` section")),
            Section::Nodes => {
                let [id, cpu] = fields.as_slice() else {
                    return Err(syntax("expected `<id> <cpu_capacity>`"));
                };
                let id: usize = id.parse().map_err(|_| syntax("bad node id"))?;
                let cpu: u32 = cpu.parse().map_err(|_| syntax("bad cpu capacity"))?;
                if nodes.insert(id, (line_no, cpu)).is_some() {
                    return Err(TopologyError::DuplicateId { line: line_no, kind: "node", id });
                }
            }
            Section::Links => {
                let [id, u, v, len, cap] = fields.as_slice() else {
                    return Err(syntax("expected `<id> <u> <v> <length_km> <capacity>`"));
                };
                let id: usize = id.parse().map_err(|_| syntax("bad link id"))?;
                let u: usize = u.parse().map_err(|_| syntax("bad endpoint"))?;
                let v: usize = v.parse().map_err(|_| syntax("bad endpoint"))?;
                let length_km: f64 = len.parse().map_err(|_| syntax("bad length"))?;
                let capacity = match mode {
                    CapacityMode::Slotted => {
                        let slots: usize = cap.parse().map_err(|_| syntax("bad slot count"))?;
                        LinkCapacity::Slotted(SlotGrid::new(slots))
                    }
                    CapacityMode::Scalar => {
                        let gbps: f64 = cap.parse().map_err(|_| syntax("bad capacity"))?;
                        if !(gbps >= 0.0) {
                            return Err(syntax("bad capacity"));
                        }
                        let bw = Bandwidth::from_gbps(gbps);
                        LinkCapacity::Scalar { capacity: bw, residual: bw }
                    }
                };
                let link = SubstrateLink { id, endpoints: (u, v), length_km, capacity };
                if links.insert(id, (line_no, link)).is_some() {
                    return Err(TopologyError::DuplicateId { line: line_no, kind: "link", id });
                }
            }
        }
    }

    let (name, mode) = header.ok_or(TopologyError::Empty)?;
    let node_vec = nodes
        .iter()
        .enumerate()
        .map(|(i, (&id, &(_, cpu)))| {
            if id != i {
                Err(TopologyError::SparseIds { kind: "node", missing: i })
            } else {
                Ok(SubstrateNode { id, cpu_capacity: cpu, cpu_available: cpu })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut link_vec = Vec::with_capacity(links.len());
    for (i, (&id, (line, link))) in links.iter().enumerate() {
        if id != i {
            return Err(TopologyError::SparseIds { kind: "link", missing: i });
        }
        let (u, v) = link.endpoints;
        if !nodes.contains_key(&u) || !nodes.contains_key(&v) {
            return Err(TopologyError::InvalidLink {
                line: *line,
                msg: format!("link {id} references an unknown node"),
            });
        }
        link_vec.push(link.clone());
    }
    let line_of: BTreeMap<usize, usize> = links.iter().map(|(&id, (line, _))| (id, *line)).collect();
    SubstrateNetwork::new(name, mode, node_vec, link_vec).map_err(|e| match e {
        // Attach the offending line where the message names a link id.
        TopologyError::InvalidLink { msg, .. } => {
            let line = msg
                .split_whitespace()
                .nth(1)
                .and_then(|w| w.parse::<usize>().ok())
                .and_then(|id| line_of.get(&id).copied())
                .unwrap_or(0);
            TopologyError::InvalidLink { line, msg }
        }
        other => other,
    })
}
