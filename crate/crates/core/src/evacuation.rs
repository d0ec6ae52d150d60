//! Dual-VM evacuation out of a disaster risk zone over a scalar-bandwidth
//! substrate.
//!
//! The flow is: deploy VNs, find the ones with both DRZ nodes hosting one of
//! their VMs, move those two VMs to hosts outside the zone at minimum total
//! remapped distance, then migrate them post-copy. SEDV admits a pair only
//! when both VMs get a path at the basic bandwidth, upgrades each VM to the
//! bottleneck of its path, and at the pair's downtime slows the VM that would
//! finish first so both end together. BEDV takes the whole bottleneck of a
//! shortest path for each VM and never synchronizes.
//!
//! Data is in gigabits and bandwidth in Gbps, so times come out in seconds.
//! Substrate reservations are whole bit/s, rounded up from the session rate.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::parallel;
use crate::resources::{Bandwidth, LeaseId, ResourceError};
use crate::routing::{shortest_path, Metric, SubstratePath};
use crate::topology::{CapacityMode, LinkCapacity, NodeId, SubstrateLink, SubstrateNetwork};
use crate::vn::{generate_vnr, stream, VirtualNetworkRequest, WorkloadConfig, WorkloadStreams};

const DEPLOY_STREAM: u64 = 11;
const DATA_STREAM: u64 = 12;
const DOWNTIME_STREAM: u64 = 13;

#[derive(Debug, Error, PartialEq)]
pub enum EvacuationError {
    #[error("evacuation needs a scalar-bandwidth network")]
    NotScalar,
    #[error("basic bandwidth must be positive for SEDV, got {0}")]
    BadBasicBandwidth(f64),
    #[error("disaster risk zone needs two distinct nodes of the network, got ({0}, {1})")]
    BadZone(NodeId, NodeId),
    #[error("deadlock at t = {time}: {waiting} VN(s) waiting with nothing migrating")]
    Deadlock { time: f64, waiting: usize },
    #[error("plan count {plans} does not match {draws} fixed draws")]
    DrawMismatch { plans: usize, draws: usize },
    #[error(transparent)]
    Resource(#[from] ResourceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvacScheme {
    Sedv,
    Bedv,
}

impl EvacScheme {
    pub const ALL: [EvacScheme; 2] = [EvacScheme::Sedv, EvacScheme::Bedv];

    pub fn name(self) -> &'static str {
        match self {
            EvacScheme::Sedv => "SEDV",
            EvacScheme::Bedv => "BEDV",
        }
    }
}

impl fmt::Display for EvacScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvacScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sedv" => Ok(EvacScheme::Sedv),
            "bedv" => Ok(EvacScheme::Bedv),
            _ => Err(format!("unknown evacuation scheme `{s}` (expected sedv or bedv)")),
        }
    }
}

/// Two substrate nodes under threat; every link touching either is covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisasterRiskZone {
    nodes: (NodeId, NodeId),
}

impl DisasterRiskZone {
    pub fn new(net: &SubstrateNetwork, a: NodeId, b: NodeId) -> Result<Self, EvacuationError> {
        if a == b || a >= net.node_count() || b >= net.node_count() {
            return Err(EvacuationError::BadZone(a, b));
        }
        Ok(Self { nodes: (a.min(b), a.max(b)) })
    }

    /// The zone used for the shipped topologies.
    pub fn default_for(net: &SubstrateNetwork) -> Option<Self> {
        let (a, b) = match net.name.as_str() {
            "nsfnet" => (3, 4),
            "usnet" => (8, 9),
            _ => return None,
        };
        Self::new(net, a, b).ok()
    }

    pub fn nodes(&self) -> (NodeId, NodeId) {
        self.nodes
    }

    pub fn covers_node(&self, n: NodeId) -> bool {
        n == self.nodes.0 || n == self.nodes.1
    }

    pub fn covers_link(&self, l: &SubstrateLink) -> bool {
        self.covers_node(l.endpoints.0) || self.covers_node(l.endpoints.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeployedLink {
    pub vlink: usize,
    pub path: SubstratePath,
    pub bandwidth: Bandwidth,
    pub lease: LeaseId,
}

/// A VN resident on a scalar substrate: one host and CPU lease per virtual
/// node, one bandwidth-reserved path per virtual link.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployedVn {
    pub vnr: VirtualNetworkRequest,
    pub hosts: Vec<NodeId>,
    pub cpu_leases: Vec<LeaseId>,
    pub links: Vec<DeployedLink>,
}

fn residual(l: &SubstrateLink) -> Bandwidth {
    l.residual().unwrap_or(Bandwidth(0))
}

fn route_vlink(
    net: &mut SubstrateNetwork,
    from: NodeId,
    to: NodeId,
    bw: Bandwidth,
    avoid: Option<&DisasterRiskZone>,
) -> Option<(SubstratePath, LeaseId)> {
    let path =
        shortest_path(net, from, to, Metric::Km, |l| residual(l) >= bw && !avoid.is_some_and(|z| z.covers_link(l)))?;
    let lease = net.reserve_bandwidth(&path.links, bw).ok()?;
    Some((path, lease))
}

/// Places `vnr` on `hosts` (one per virtual node, distinct) with shortest-km
/// link paths, or leaves the network untouched.
pub fn deploy_vn(net: &mut SubstrateNetwork, vnr: &VirtualNetworkRequest, hosts: &[NodeId]) -> Option<DeployedVn> {
    debug_assert_eq!(hosts.len(), vnr.nodes.len());
    let mut cpu_leases = Vec::with_capacity(hosts.len());
    let mut links: Vec<DeployedLink> = Vec::with_capacity(vnr.links.len());
    let rollback = |net: &mut SubstrateNetwork, cpu: &[LeaseId], links: &[DeployedLink]| {
        let ids: Vec<LeaseId> = cpu.iter().copied().chain(links.iter().map(|l| l.lease)).collect();
        net.release_all(&ids).expect("leases just issued");
    };
    for (v, &h) in vnr.nodes.iter().zip(hosts) {
        match net.reserve_cpu(h, v.cpu) {
            Ok(id) => cpu_leases.push(id),
            Err(_) => {
                rollback(net, &cpu_leases, &links);
                return None;
            }
        }
    }
    for vl in &vnr.links {
        let bw = Bandwidth::from_gbps(vl.bandwidth_gbps);
        match route_vlink(net, hosts[vl.endpoints.0], hosts[vl.endpoints.1], bw, None) {
            Some((path, lease)) => links.push(DeployedLink { vlink: vl.id, path, bandwidth: bw, lease }),
            None => {
                rollback(net, &cpu_leases, &links);
                return None;
            }
        }
    }
    Some(DeployedVn { vnr: vnr.clone(), hosts: hosts.to_vec(), cpu_leases, links })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeployConfig {
    pub count: usize,
    /// Shape of each VN; rate, holding and count fields are unused.
    pub shape: WorkloadConfig,
    /// Random host sets tried per VN before it is dropped.
    pub attempts: usize,
    pub placement: Placement,
}

/// How a deployed VN's hosts are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Any distinct nodes, uniformly.
    Uniform,
    /// A random connected neighbourhood: start at a uniform node and keep
    /// adding a uniform neighbour of the nodes chosen so far.
    Clustered,
}

impl FromStr for Placement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Placement::Uniform),
            "clustered" => Ok(Placement::Clustered),
            _ => Err(format!("unknown placement `{s}` (expected uniform or clustered)")),
        }
    }
}

impl DeployConfig {
    pub fn for_network(net: &SubstrateNetwork) -> Self {
        let count = match net.name.as_str() {
            "usnet" => 600,
            _ => 160,
        };
        Self { count, ..Self::default() }
    }
}

impl Default for DeployConfig {
    fn default() -> Self {
        Self {
            count: 160,
            shape: WorkloadConfig {
                min_nodes: 3,
                max_nodes: 5,
                link_probability: 0.3,
                min_cpu: 1,
                max_cpu: 1,
                min_bandwidth_gbps: 0.5,
                max_bandwidth_gbps: 3.0,
                bandwidth_step_gbps: 0.1,
                connected: false,
                ..WorkloadConfig::default()
            },
            attempts: 20,
            placement: Placement::Clustered,
        }
    }
}

/// Random feasible placement: each VN tries random distinct host sets until
/// one admits all its links. VNs that never fit are dropped, so the result
/// may be shorter than `cfg.count`.
pub fn deploy_random(net: &mut SubstrateNetwork, cfg: &DeployConfig, seed: u64) -> Vec<DeployedVn> {
    let mut shapes = WorkloadStreams::new(seed);
    let mut rng = stream(seed, DEPLOY_STREAM);
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let vnr = generate_vnr(&mut shapes, &cfg.shape, i as u64);
        if vnr.nodes.len() > net.node_count() {
            continue;
        }
        for _ in 0..cfg.attempts {
            let hosts = match cfg.placement {
                Placement::Uniform => sample(&mut rng, net.node_count(), vnr.nodes.len()).into_vec(),
                Placement::Clustered => grow_cluster(net, vnr.nodes.len(), &mut rng),
            };
            if let Some(d) = deploy_vn(net, &vnr, &hosts) {
                out.push(d);
                break;
            }
        }
    }
    out
}

fn grow_cluster(net: &SubstrateNetwork, n: usize, rng: &mut impl Rng) -> Vec<NodeId> {
    let mut chosen = vec![rng.random_range(0..net.node_count())];
    while chosen.len() < n {
        let mut frontier: Vec<NodeId> = chosen
            .iter()
            .flat_map(|&u| net.neighbors(u).iter().map(|&(v, _)| v))
            .filter(|v| !chosen.contains(v))
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        chosen.push(frontier[rng.random_range(0..frontier.len())]);
    }
    chosen
}

/// Indices of the VNs hosting a VM on each of the two zone nodes.
pub fn find_threatened(vns: &[DeployedVn], drz: &DisasterRiskZone) -> Vec<usize> {
    let (a, b) = drz.nodes();
    vns.iter().enumerate().filter(|(_, vn)| vn.hosts.contains(&a) && vn.hosts.contains(&b)).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovedVm {
    pub vnode: usize,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration {
    /// Ordered by virtual node id.
    pub moved: [MovedVm; 2],
    /// Total km of the remapped virtual link paths.
    pub cost_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Infeasible;

/// Moves the two threatened VMs of `vn` out of the zone.
///
/// Candidates lie outside the zone, host no other VM of the VN, have the CPU
/// and lie within `distance_limit` hops of a host of a VM that stays put;
/// with fewer than two such nodes the distance limit is dropped. Every
/// ordered candidate pair is priced by the total km of shortest paths for the
/// virtual links touching either moved VM, each routed around the zone with
/// the earlier ones' bandwidth already deducted. The cheapest pair wins, the
/// first in (node, node) order on ties. On success the VN record and the
/// substrate reflect the new placement; on failure nothing changes.
pub fn reconfigure_vn(
    net: &mut SubstrateNetwork,
    vn: &mut DeployedVn,
    drz: &DisasterRiskZone,
    distance_limit: u32,
) -> Result<Reconfiguration, Infeasible> {
    let (za, zb) = drz.nodes();
    let mut moving: Vec<usize> = (0..vn.hosts.len()).filter(|&v| vn.hosts[v] == za || vn.hosts[v] == zb).collect();
    moving.sort_unstable();
    let [va, vb] = moving[..] else { return Err(Infeasible) };
    let staying: Vec<NodeId> = (0..vn.hosts.len()).filter(|v| !moving.contains(v)).map(|v| vn.hosts[v]).collect();

    let demand = |v: usize| vn.vnr.nodes[v].cpu;
    let base: Vec<NodeId> = (0..net.node_count())
        .filter(|&n| !drz.covers_node(n) && !staying.contains(&n))
        .filter(|&n| net.nodes[n].cpu_available >= demand(va).min(demand(vb)))
        .collect();
    let near: Vec<NodeId> =
        base.iter().copied().filter(|&n| staying.iter().any(|&h| net.hop_distance(n, h) <= distance_limit)).collect();
    let candidates = if near.len() >= 2 { near } else { base };

    let incident: Vec<usize> = (0..vn.links.len())
        .filter(|&i| {
            let (a, b) = vn.vnr.links[vn.links[i].vlink].endpoints;
            a == va || a == vb || b == va || b == vb
        })
        .collect();
    let old_leases: Vec<LeaseId> = incident.iter().map(|&i| vn.links[i].lease).collect();
    net.release_all(&old_leases).expect("deployed leases are outstanding");

    let mut hosts = vn.hosts.clone();
    let mut best: Option<(f64, NodeId, NodeId)> = None;
    for &x in &candidates {
        if net.nodes[x].cpu_available < demand(va) {
            continue;
        }
        for &y in &candidates {
            if x == y || net.nodes[y].cpu_available < demand(vb) {
                continue;
            }
            hosts[va] = x;
            hosts[vb] = y;
            if let Some((cost, routed)) = route_incident(net, vn, &incident, &hosts, drz) {
                net.release_all(&routed.iter().map(|r| r.1).collect::<Vec<_>>()).expect("trial leases");
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, x, y));
                }
            }
        }
    }

    let Some((cost_km, x, y)) = best else {
        restore_links(net, vn, &incident);
        return Err(Infeasible);
    };
    hosts[va] = x;
    hosts[vb] = y;
    let (_, routed) = route_incident(net, vn, &incident, &hosts, drz).expect("winning pair routes again");
    for (&i, (path, lease)) in incident.iter().zip(routed) {
        vn.links[i].path = path;
        vn.links[i].lease = lease;
    }
    for (v, to) in [(va, x), (vb, y)] {
        let lease = net.reserve_cpu(to, demand(v)).expect("candidate CPU checked");
        net.release(vn.cpu_leases[v]).expect("deployed CPU lease");
        vn.cpu_leases[v] = lease;
    }
    let from = (vn.hosts[va], vn.hosts[vb]);
    vn.hosts = hosts;
    Ok(Reconfiguration {
        moved: [MovedVm { vnode: va, from: from.0, to: x }, MovedVm { vnode: vb, from: from.1, to: y }],
        cost_km,
    })
}

/// Routes the given deployed links for `hosts`, keeping the reservations.
/// On failure every reservation made here is undone.
fn route_incident(
    net: &mut SubstrateNetwork,
    vn: &DeployedVn,
    incident: &[usize],
    hosts: &[NodeId],
    drz: &DisasterRiskZone,
) -> Option<(f64, Vec<(SubstratePath, LeaseId)>)> {
    let mut routed: Vec<(SubstratePath, LeaseId)> = Vec::with_capacity(incident.len());
    let mut cost = 0.0;
    for &i in incident {
        let dl = &vn.links[i];
        let (a, b) = vn.vnr.links[dl.vlink].endpoints;
        match route_vlink(net, hosts[a], hosts[b], dl.bandwidth, Some(drz)) {
            Some(r) => {
                cost += r.0.length_km;
                routed.push(r);
            }
            None => {
                net.release_all(&routed.iter().map(|r| r.1).collect::<Vec<_>>()).expect("trial leases");
                return None;
            }
        }
    }
    Some((cost, routed))
}

fn restore_links(net: &mut SubstrateNetwork, vn: &mut DeployedVn, incident: &[usize]) {
    for &i in incident {
        let dl = &mut vn.links[i];
        dl.lease = net.reserve_bandwidth(&dl.path.links, dl.bandwidth).expect("bandwidth released just before");
    }
}

/// Remaining transfer time from `t_c`: `(D - D_c) / b + t_c`.
pub fn predicted_end_time(data_total: f64, data_moved: f64, bandwidth: f64, t_c: f64) -> f64 {
    (data_total - data_moved) / bandwidth + t_c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Waiting,
    Migrating,
    Done,
}

/// One VM's post-copy transfer. `data_moved` is exact as of `updated_at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MigrationSession {
    pub data_total: f64,
    pub data_moved: f64,
    pub updated_at: f64,
    pub bandwidth: f64,
    pub downtime: f64,
    pub predicted_end: f64,
    pub state: SessionState,
}

impl MigrationSession {
    pub fn waiting(data_total: f64, downtime: f64) -> Self {
        Self {
            data_total,
            data_moved: 0.0,
            updated_at: 0.0,
            bandwidth: 0.0,
            downtime,
            predicted_end: f64::INFINITY,
            state: SessionState::Waiting,
        }
    }

    pub fn begin(&mut self, bandwidth: f64, t: f64) {
        self.bandwidth = bandwidth;
        self.updated_at = t;
        self.state = SessionState::Migrating;
        self.predicted_end = predicted_end_time(self.data_total, self.data_moved, bandwidth, t);
    }

    /// Accrues transfer up to `t`.
    pub fn advance(&mut self, t: f64) {
        if self.state == SessionState::Migrating && t > self.updated_at {
            self.data_moved = (self.data_moved + self.bandwidth * (t - self.updated_at)).min(self.data_total);
            self.updated_at = t;
        }
    }

    pub fn remaining(&self) -> f64 {
        self.data_total - self.data_moved
    }

    fn finish(&mut self) {
        self.data_moved = self.data_total;
        self.updated_at = self.predicted_end;
        self.state = SessionState::Done;
    }
}

/// Which session of a pair a synchronization slowed, and to what rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncAdjustment {
    pub reduced: usize,
    pub old_bandwidth: f64,
    pub new_bandwidth: f64,
}

/// Slows whichever session would finish first so both end at the later
/// predicted end: `b := rem / rem_other * b_other`. The slowed session takes
/// the other's predicted end verbatim. No change when either is not
/// migrating or the ends already agree.
pub fn synchronize_pair(pair: &mut [MigrationSession; 2], t_c: f64) -> Option<SyncAdjustment> {
    if pair.iter().any(|s| s.state != SessionState::Migrating) {
        return None;
    }
    for s in pair.iter_mut() {
        s.advance(t_c);
    }
    let e0 = predicted_end_time(pair[0].data_total, pair[0].data_moved, pair[0].bandwidth, t_c);
    let e1 = predicted_end_time(pair[1].data_total, pair[1].data_moved, pair[1].bandwidth, t_c);
    let (r, o) = if e0 < e1 {
        (0, 1)
    } else if e1 < e0 {
        (1, 0)
    } else {
        return None;
    };
    let old = pair[r].bandwidth;
    let new = pair[r].remaining() / pair[o].remaining() * pair[o].bandwidth;
    pair[r].bandwidth = new;
    pair[r].predicted_end = pair[o].predicted_end;
    Some(SyncAdjustment { reduced: r, old_bandwidth: old, new_bandwidth: new })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmMigration {
    pub vnode: usize,
    pub source: NodeId,
    pub dest: NodeId,
    /// Gigabits to move.
    pub data_gb: f64,
    pub downtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvacuationPlan {
    pub vn_id: u64,
    pub vms: [VmMigration; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VnTimeline {
    pub vn_id: u64,
    pub admit_t: f64,
    pub sync_t: Option<f64>,
    pub done_t: f64,
}

/// Rate history of one VM: `(t, Gbps)` steps, closed by a zero-rate step at
/// completion.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub vn_id: u64,
    pub vnode: usize,
    pub data_gb: f64,
    pub links: Vec<usize>,
    pub steps: Vec<(f64, f64)>,
}

impl SessionTrace {
    pub fn transferred(&self) -> f64 {
        self.steps.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigrationOutcome {
    pub timeline: Vec<VnTimeline>,
    pub traces: Vec<SessionTrace>,
}

struct ActiveVm {
    session: MigrationSession,
    path: SubstratePath,
    lease: LeaseId,
    trace: Vec<(f64, f64)>,
}

struct PairState {
    vms: Option<[ActiveVm; 2]>,
    admit_t: f64,
    sync_t: Option<f64>,
    synced: bool,
    done_t: Option<f64>,
}

fn bottleneck(net: &SubstrateNetwork, path: &SubstratePath) -> Bandwidth {
    path.links.iter().map(|&l| residual(&net.links[l])).min().unwrap_or(Bandwidth(0))
}

/// Shortest-km path whose every link has at least `floor` residual, with
/// `floor` reserved on it.
fn claim_path(
    net: &mut SubstrateNetwork,
    from: NodeId,
    to: NodeId,
    floor: Bandwidth,
) -> Option<(SubstratePath, LeaseId)> {
    let path = shortest_path(net, from, to, Metric::Km, |l| residual(l) >= floor)?;
    let lease = net.reserve_bandwidth(&path.links, floor).ok()?;
    Some((path, lease))
}

/// Swaps `lease` for one of `amount` on the same path.
fn re_reserve(net: &mut SubstrateNetwork, path: &SubstratePath, lease: LeaseId, amount: Bandwidth) -> LeaseId {
    net.release(lease).expect("active migration lease");
    net.reserve_bandwidth(&path.links, amount).expect("amount fits what was just released")
}

fn gbps_ceil(gbps: f64) -> Bandwidth {
    Bandwidth((gbps * 1e9).ceil() as u64)
}

/// Runs the migration event loop for `plans` (processed in the given order)
/// on `net`. Every migration lease is returned by the end.
pub fn migrate(
    net: &mut SubstrateNetwork,
    plans: &[EvacuationPlan],
    scheme: EvacScheme,
    basic: Bandwidth,
) -> Result<MigrationOutcome, EvacuationError> {
    if net.mode != CapacityMode::Scalar {
        return Err(EvacuationError::NotScalar);
    }
    if scheme == EvacScheme::Sedv && basic.0 == 0 {
        return Err(EvacuationError::BadBasicBandwidth(basic.as_gbps()));
    }
    let mut pairs: Vec<PairState> = plans
        .iter()
        .map(|_| PairState { vms: None, admit_t: 0.0, sync_t: None, synced: false, done_t: None })
        .collect();
    let mut waiting: Vec<usize> = (0..plans.len()).collect();
    let mut t = 0.0;

    loop {
        let admitted = match scheme {
            EvacScheme::Sedv => admit_sedv(net, plans, &mut waiting, basic),
            EvacScheme::Bedv => admit_bedv(net, plans, &mut waiting),
        };
        for (p, vms) in admitted {
            let st = &mut pairs[p];
            st.admit_t = t;
            let mut active = Vec::with_capacity(2);
            for (k, (path, lease)) in vms.into_iter().enumerate() {
                let plan = plans[p].vms[k];
                let bw = net.lease(lease).map(lease_amount).expect("fresh lease");
                let mut session = MigrationSession::waiting(plan.data_gb, plan.downtime_s);
                session.begin(bw.as_gbps(), t);
                active.push(ActiveVm { session, path, lease, trace: vec![(t, session.bandwidth)] });
            }
            let [a, b]: [ActiveVm; 2] = active.try_into().ok().expect("two VMs");
            if scheme == EvacScheme::Sedv {
                st.sync_t = Some(t + a.session.downtime.max(b.session.downtime));
            }
            st.vms = Some([a, b]);
        }

        let migrating = |s: &PairState| {
            s.vms.as_ref().is_some_and(|v| v.iter().any(|a| a.session.state == SessionState::Migrating))
        };
        let any_active = pairs.iter().any(migrating);
        if !any_active {
            if waiting.is_empty() {
                break;
            }
            return Err(EvacuationError::Deadlock { time: t, waiting: waiting.len() });
        }

        let mut next = f64::INFINITY;
        for s in &pairs {
            if let Some(vms) = &s.vms {
                for a in vms.iter().filter(|a| a.session.state == SessionState::Migrating) {
                    next = next.min(a.session.predicted_end);
                }
                if let (Some(ts), false) = (s.sync_t, s.synced) {
                    if migrating(s) {
                        next = next.min(ts);
                    }
                }
            }
        }
        t = next;

        // Completions, then synchronizations, each in plan order.
        for s in pairs.iter_mut() {
            let Some(vms) = s.vms.as_mut() else { continue };
            for a in vms.iter_mut() {
                if a.session.state == SessionState::Migrating && a.session.predicted_end <= t {
                    a.session.finish();
                    a.trace.push((t, 0.0));
                    net.release(a.lease)?;
                }
            }
            if s.done_t.is_none() && vms.iter().all(|a| a.session.state == SessionState::Done) {
                s.done_t = Some(t);
            }
        }
        for s in pairs.iter_mut() {
            let Some(vms) = s.vms.as_mut() else { continue };
            let Some(ts) = s.sync_t else { continue };
            if s.synced || ts > t {
                continue;
            }
            s.synced = true;
            let mut sessions = [vms[0].session, vms[1].session];
            let adj = synchronize_pair(&mut sessions, t);
            vms[0].session = sessions[0];
            vms[1].session = sessions[1];
            if let Some(adj) = adj {
                let a = &mut vms[adj.reduced];
                a.lease = re_reserve(net, &a.path, a.lease, gbps_ceil(adj.new_bandwidth));
                a.trace.push((t, adj.new_bandwidth));
            }
        }
    }

    let mut timeline = Vec::with_capacity(plans.len());
    let mut traces = Vec::with_capacity(2 * plans.len());
    for (plan, s) in plans.iter().zip(pairs) {
        let vms = s.vms.expect("every plan admitted before the loop ends");
        timeline.push(VnTimeline {
            vn_id: plan.vn_id,
            admit_t: s.admit_t,
            sync_t: s.sync_t,
            done_t: s.done_t.expect("both VMs done"),
        });
        for (a, vm) in vms.into_iter().zip(plan.vms) {
            traces.push(SessionTrace {
                vn_id: plan.vn_id,
                vnode: vm.vnode,
                data_gb: vm.data_gb,
                links: a.path.links,
                steps: a.trace,
            });
        }
    }
    Ok(MigrationOutcome { timeline, traces })
}

fn lease_amount(l: &crate::resources::Lease) -> Bandwidth {
    match l {
        crate::resources::Lease::Bandwidth { amount, .. } => *amount,
        _ => Bandwidth(0),
    }
}

type Admitted = Vec<(usize, [(SubstratePath, LeaseId); 2])>;

/// Extra bandwidth for the two VMs of a pair: the spare on their paths is
/// shared max-min fairly, so a link both paths cross is split evenly and
/// whatever one VM cannot use elsewhere goes to the other.
fn joint_upgrade(net: &SubstrateNetwork, paths: [&SubstratePath; 2]) -> [Bandwidth; 2] {
    let mut spare: Vec<(usize, u64, [bool; 2])> = Vec::new();
    for (k, p) in paths.iter().enumerate() {
        for &l in &p.links {
            match spare.iter_mut().find(|e| e.0 == l) {
                Some(e) => e.2[k] = true,
                None => {
                    let mut on = [false; 2];
                    on[k] = true;
                    spare.push((l, residual(&net.links[l]).0, on));
                }
            }
        }
    }
    let mut extra = [0u64; 2];
    let mut active = [!paths[0].links.is_empty(), !paths[1].links.is_empty()];
    let users = |on: [bool; 2], active: [bool; 2]| (0..2).filter(|&k| on[k] && active[k]).count() as u64;
    while active.iter().any(|&a| a) {
        let step = spare.iter().filter(|e| users(e.2, active) > 0).map(|e| e.1 / users(e.2, active)).min().unwrap_or(0);
        for e in spare.iter_mut() {
            e.1 -= step * users(e.2, active);
        }
        for (k, x) in extra.iter_mut().enumerate() {
            if active[k] {
                *x += step;
            }
        }
        // A VM stops growing once one of its links cannot give it another bit.
        let before = active;
        for k in 0..2 {
            if before[k] && spare.iter().any(|e| e.2[k] && e.1 < users(e.2, before).max(1)) {
                active[k] = false;
            }
        }
        if active == before {
            break;
        }
    }
    extra.map(Bandwidth)
}

/// Admits waiting pairs in order. A pair is admitted only when both VMs
/// find a path with `basic` to spare on every link (the second after the
/// first's reservation); both are then upgraded together over the spare on
/// their paths before the next pair is tried.
fn admit_sedv(
    net: &mut SubstrateNetwork,
    plans: &[EvacuationPlan],
    waiting: &mut Vec<usize>,
    basic: Bandwidth,
) -> Admitted {
    let mut admitted: Admitted = Vec::new();
    waiting.retain(|&p| {
        let [m0, m1] = plans[p].vms;
        let Some(first) = claim_path(net, m0.source, m0.dest, basic) else { return true };
        let Some(second) = claim_path(net, m1.source, m1.dest, basic) else {
            net.release(first.1).expect("trial lease");
            return true;
        };
        let mut vms = [first, second];
        let extra = joint_upgrade(net, [&vms[0].0, &vms[1].0]);
        for ((path, lease), e) in vms.iter_mut().zip(extra) {
            if e.0 > 0 {
                *lease = re_reserve(net, path, *lease, Bandwidth(basic.0 + e.0));
            }
        }
        admitted.push((p, vms));
        false
    });
    admitted
}

/// Admits waiting pairs one by one, each VM taking a shortest path over
/// links with spare bandwidth and all of that path's bottleneck.
fn admit_bedv(net: &mut SubstrateNetwork, plans: &[EvacuationPlan], waiting: &mut Vec<usize>) -> Admitted {
    let mut admitted: Admitted = Vec::new();
    let grab = |net: &mut SubstrateNetwork, m: VmMigration| {
        let path = shortest_path(net, m.source, m.dest, Metric::Km, |l| residual(l).0 > 0)?;
        let amount = bottleneck(net, &path);
        let lease = net.reserve_bandwidth(&path.links, amount).ok()?;
        Some((path, lease))
    };
    waiting.retain(|&p| {
        let [m0, m1] = plans[p].vms;
        let Some(first) = grab(net, m0) else { return true };
        let Some(second) = grab(net, m1) else {
            net.release(first.1).expect("trial lease");
            return true;
        };
        admitted.push((p, [first, second]));
        false
    });
    admitted
}

/// Per-VM transfer sizes and downtimes, one pair per plan.
#[derive(Debug, Clone, PartialEq)]
pub enum MigrationDraws {
    /// Data uniform in [5, 10] GB, downtime uniform in [0.5, 1.5] s, drawn
    /// from the run seed.
    Random,
    /// `(data_gb, downtime_s)` per VM, in threatened-VN order.
    Fixed(Vec<[(f64, f64); 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvacuationOptions {
    pub scheme: EvacScheme,
    pub basic_bw_gbps: f64,
    pub seed: u64,
    pub distance_limit: u32,
    pub draws: MigrationDraws,
}

impl EvacuationOptions {
    pub fn new(scheme: EvacScheme, basic_bw_gbps: f64, seed: u64) -> Self {
        Self { scheme, basic_bw_gbps, seed, distance_limit: 2, draws: MigrationDraws::Random }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvacuationResult {
    /// Dual-VM VNs found in the zone.
    pub n_dual_vns: usize,
    /// Those that could not be placed outside the zone and were not moved.
    pub n_infeasible: usize,
    pub tet: f64,
    pub aet: f64,
    pub timeline: Vec<VnTimeline>,
    pub traces: Vec<SessionTrace>,
}

/// Reconfigures every threatened VN at t = 0 (in VN order), draws the
/// transfer sizes and downtimes, and migrates. Inputs are not modified.
/// Evacuation time of a VN runs from t = 0 to the completion of its second
/// VM; TET is the largest and AET the mean over migrated VNs.
pub fn run_evacuation(
    net: &SubstrateNetwork,
    deployed: &[DeployedVn],
    drz: &DisasterRiskZone,
    opts: &EvacuationOptions,
) -> Result<EvacuationResult, EvacuationError> {
    if net.mode != CapacityMode::Scalar {
        return Err(EvacuationError::NotScalar);
    }
    if opts.scheme == EvacScheme::Sedv && !(opts.basic_bw_gbps > 0.0) {
        return Err(EvacuationError::BadBasicBandwidth(opts.basic_bw_gbps));
    }
    let mut net = net.clone();
    let mut vns = deployed.to_vec();
    let threatened = find_threatened(&vns, drz);
    let draws: Vec<[(f64, f64); 2]> = match &opts.draws {
        MigrationDraws::Fixed(d) => {
            if d.len() != threatened.len() {
                return Err(EvacuationError::DrawMismatch { plans: threatened.len(), draws: d.len() });
            }
            d.clone()
        }
        MigrationDraws::Random => {
            let mut data = stream(opts.seed, DATA_STREAM);
            let mut down = stream(opts.seed, DOWNTIME_STREAM);
            (0..threatened.len())
                .map(|_| {
                    let mut vm = || (8.0 * data.random_range(5.0..=10.0), down.random_range(0.5..=1.5));
                    [vm(), vm()]
                })
                .collect()
        }
    };

    let mut plans = Vec::new();
    let mut n_infeasible = 0;
    for (&i, d) in threatened.iter().zip(&draws) {
        match reconfigure_vn(&mut net, &mut vns[i], drz, opts.distance_limit) {
            Ok(r) => plans.push(EvacuationPlan {
                vn_id: vns[i].vnr.id,
                vms: [0, 1].map(|k| VmMigration {
                    vnode: r.moved[k].vnode,
                    source: r.moved[k].from,
                    dest: r.moved[k].to,
                    data_gb: d[k].0,
                    downtime_s: d[k].1,
                }),
            }),
            Err(Infeasible) => n_infeasible += 1,
        }
    }

    let outcome = migrate(&mut net, &plans, opts.scheme, Bandwidth::from_gbps(opts.basic_bw_gbps))?;
    let times: Vec<f64> = outcome.timeline.iter().map(|v| v.done_t).collect();
    let tet = times.iter().copied().fold(0.0, f64::max);
    let aet = if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 };
    Ok(EvacuationResult {
        n_dual_vns: threatened.len(),
        n_infeasible,
        tet,
        aet,
        timeline: outcome.timeline,
        traces: outcome.traces,
    })
}

/// One cell of a scenario grid. `net` already carries the cell's link
/// capacity; VNs are deployed on it from `seed`.
#[derive(Debug, Clone)]
pub struct EvacCell {
    pub net: SubstrateNetwork,
    pub drz: DisasterRiskZone,
    pub deploy: DeployConfig,
    pub link_capacity_gbps: f64,
    pub options: EvacuationOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvacuationRow {
    pub scheme: EvacScheme,
    pub topology: String,
    pub link_capacity_gbps: f64,
    pub basic_bw_gbps: f64,
    pub seed: u64,
    pub n_dual_vns: usize,
    /// Absent when the run deadlocked.
    pub tet_s: Option<f64>,
    pub aet_s: Option<f64>,
}

/// Deploys, evacuates and summarizes one cell. A deadlock yields a row
/// without times; other errors are returned.
pub fn run_evac_cell(cell: &EvacCell) -> Result<(EvacuationRow, Option<EvacuationResult>), EvacuationError> {
    let mut net = cell.net.clone();
    let vns = deploy_random(&mut net, &cell.deploy, cell.options.seed);
    let mut row = EvacuationRow {
        scheme: cell.options.scheme,
        topology: net.name.clone(),
        link_capacity_gbps: cell.link_capacity_gbps,
        basic_bw_gbps: cell.options.basic_bw_gbps,
        seed: cell.options.seed,
        n_dual_vns: find_threatened(&vns, &cell.drz).len(),
        tet_s: None,
        aet_s: None,
    };
    match run_evacuation(&net, &vns, &cell.drz, &cell.options) {
        Ok(r) => {
            row.tet_s = Some(r.tet);
            row.aet_s = Some(r.aet);
            Ok((row, Some(r)))
        }
        Err(EvacuationError::Deadlock { .. }) => Ok((row, None)),
        Err(e) => Err(e),
    }
}

/// Runs cells in parallel when enabled; results in input order.
pub fn run_evac_grid(cells: &[EvacCell]) -> Vec<Result<(EvacuationRow, Option<EvacuationResult>), EvacuationError>> {
    parallel::map_cells(cells, run_evac_cell)
}

/// Current residual of every scalar link, in bit/s.
pub fn residuals(net: &SubstrateNetwork) -> Vec<u64> {
    net.links
        .iter()
        .map(|l| match l.capacity {
            LinkCapacity::Scalar { residual, .. } => residual.0,
            LinkCapacity::Slotted(_) => 0,
        })
        .collect()
}
