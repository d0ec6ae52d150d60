//! Frequency-slot bookkeeping: modulation choice, slot arithmetic, window
//! enumeration, the fragmentation-aware window cost and allocation.

use std::fmt;

use thiserror::Error;

use crate::resources::{LeaseId, ResourceError};
use crate::routing::SubstratePath;
use crate::topology::{CapacityMode, LinkCapacity, SubstrateLink, SubstrateNetwork, SubstrateNode};

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("no modulation format reaches {0} km")]
    NoFeasibleModulation(f64),
    #[error("window starting at slot {start} (width {width}) is not free along the path")]
    NotACandidate { start: usize, width: usize },
    #[error("invalid modulation table: {0}")]
    InvalidTable(String),
}

/// Per-link slot availability, one bit per slot (set = busy).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SlotGrid {
    len: usize,
    busy: Vec<u64>,
}

impl fmt::Debug for SlotGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = (0..self.len).map(|i| if self.is_free(i) { '.' } else { '#' }).collect();
        write!(f, "SlotGrid[{bits}]")
    }
}

impl SlotGrid {
    pub fn new(len: usize) -> Self {
        Self { len, busy: vec![0; len.div_ceil(64)] }
    }

    /// Grid of `len` slots with the listed indices busy.
    pub fn with_busy(len: usize, busy: &[usize]) -> Self {
        let mut g = Self::new(len);
        for &i in busy {
            g.occupy(i, 1);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_free(&self, i: usize) -> bool {
        i < self.len && self.busy[i / 64] & (1 << (i % 64)) == 0
    }

    pub fn free_count(&self) -> usize {
        self.len - self.busy_count()
    }

    pub fn busy_count(&self) -> usize {
        self.busy.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn occupy(&mut self, start: usize, width: usize) {
        for i in start..start + width {
            self.busy[i / 64] |= 1 << (i % 64);
        }
    }

    pub(crate) fn vacate(&mut self, start: usize, width: usize) {
        for i in start..start + width {
            self.busy[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Longest run of free slots.
    pub fn max_free_run(&self) -> usize {
        longest_run((0..self.len).map(|i| self.is_free(i)))
    }
}

fn longest_run(free: impl Iterator<Item = bool>) -> usize {
    let (mut best, mut cur) = (0, 0);
    for f in free {
        cur = if f { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    pub name: String,
    /// bit/s/Hz
    pub efficiency: f64,
    pub reach_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationTable {
    entries: Vec<Modulation>,
    pub slot_width_ghz: f64,
    pub guard_slots: usize,
}

impl Default for ModulationTable {
    /// BPSK/QPSK/8QAM/16QAM over 12.5 GHz slots with one guard slot.
    fn default() -> Self {
        let entries = [("BPSK", 1.0, 4000.0), ("QPSK", 2.0, 2000.0), ("8QAM", 3.0, 1000.0), ("16QAM", 4.0, 500.0)]
            .into_iter()
            .map(|(n, e, r)| Modulation { name: n.to_string(), efficiency: e, reach_km: r })
            .collect();
        Self { entries, slot_width_ghz: 12.5, guard_slots: 1 }
    }
}

impl ModulationTable {
    /// Entries must be strictly increasing in efficiency and strictly
    /// decreasing in reach.
    pub fn new(entries: Vec<Modulation>, slot_width_ghz: f64, guard_slots: usize) -> Result<Self, SpectrumError> {
        if entries.is_empty() {
            return Err(SpectrumError::InvalidTable("no entries".into()));
        }
        if !(slot_width_ghz > 0.0) {
            return Err(SpectrumError::InvalidTable("slot width must be positive".into()));
        }
        for e in &entries {
            if !(e.efficiency > 0.0) || !(e.reach_km > 0.0) {
                return Err(SpectrumError::InvalidTable(format!("{} has non-positive values", e.name)));
            }
        }
        for w in entries.windows(2) {
            if !(w[1].efficiency > w[0].efficiency) || !(w[1].reach_km < w[0].reach_km) {
                return Err(SpectrumError::InvalidTable(format!(
                    "{} must be more efficient and shorter-reach than {}",
                    w[1].name, w[0].name
                )));
            }
        }
        Ok(Self { entries, slot_width_ghz, guard_slots })
    }

    pub fn entries(&self) -> &[Modulation] {
        &self.entries
    }

    pub fn max_reach_km(&self) -> f64 {
        self.entries[0].reach_km
    }

    /// Highest-efficiency entry whose reach covers `d_km` (inclusive).
    pub fn select(&self, d_km: f64) -> Result<&Modulation, SpectrumError> {
        self.entries.iter().rev().find(|m| d_km <= m.reach_km).ok_or(SpectrumError::NoFeasibleModulation(d_km))
    }

    /// Gbps carried by one slot under `m`.
    pub fn slot_capacity(&self, m: &Modulation) -> f64 {
        self.slot_width_ghz * m.efficiency
    }
}

/// Outcome of sizing a demand on a path of given length.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRequirement {
    pub modulation: Modulation,
    /// Window width including guard slots.
    pub slots: usize,
    /// Gbps per slot.
    pub slot_capacity: f64,
}

impl SlotRequirement {
    /// Gbps carried by a window of `width` slots under this modulation.
    pub fn carried(&self, width: usize, guard: usize) -> f64 {
        self.slot_capacity * width.saturating_sub(guard) as f64
    }
}

pub fn select_modulation(table: &ModulationTable, d_km: f64) -> Result<&Modulation, SpectrumError> {
    table.select(d_km)
}

/// `ceil(b / c_fs) + g` slots, with `c_fs = slot width * efficiency`.
pub fn slots_required(table: &ModulationTable, gbps: f64, d_km: f64) -> Result<SlotRequirement, SpectrumError> {
    let m = table.select(d_km)?;
    let c_fs = table.slot_capacity(m);
    let mut data = (gbps / c_fs).ceil().max(0.0) as usize;
    // Correct for division rounding so that exactly the smallest count with
    // c_fs * data >= gbps is returned.
    while c_fs * (data as f64) < gbps {
        data += 1;
    }
    while data > 0 && c_fs * ((data - 1) as f64) >= gbps {
        data -= 1;
    }
    Ok(SlotRequirement { modulation: m.clone(), slots: data + table.guard_slots, slot_capacity: c_fs })
}

/// Per-slot availability along a path: free on every link.
pub fn path_free_mask(net: &SubstrateNetwork, path: &SubstratePath) -> Vec<bool> {
    let grids: Vec<_> = path.links.iter().filter_map(|&l| net.links[l].grid()).collect();
    let len = grids.iter().map(|g| g.len()).min().unwrap_or(0);
    (0..len).map(|i| grids.iter().all(|g| g.is_free(i))).collect()
}

/// Longest run of slots free on every link of the path.
pub fn max_window(net: &SubstrateNetwork, path: &SubstratePath) -> usize {
    longest_run(path_free_mask(net, path).into_iter())
}

/// Start indices of every `width`-slot window free along the path.
pub fn candidate_starts(net: &SubstrateNetwork, path: &SubstratePath, width: usize) -> Vec<usize> {
    if width == 0 {
        return Vec::new();
    }
    let mask = path_free_mask(net, path);
    let mut out = Vec::new();
    let mut run = 0;
    for (i, &free) in mask.iter().enumerate() {
        run = if free { run + 1 } else { 0 };
        if run >= width {
            out.push(i + 1 - width);
        }
    }
    out
}

/// Number of free slots bordering the window, summed over the path links.
/// Neighbours outside the grid contribute nothing.
pub fn fsw_cost(
    net: &SubstrateNetwork,
    path: &SubstratePath,
    start: usize,
    width: usize,
) -> Result<u32, SpectrumError> {
    let free_all = width > 0
        && path.links.iter().all(|&l| match &net.links[l].capacity {
            LinkCapacity::Slotted(g) => (start..start + width).all(|i| g.is_free(i)),
            LinkCapacity::Scalar { .. } => false,
        });
    if !free_all {
        return Err(SpectrumError::NotACandidate { start, width });
    }
    let mut cost = 0;
    for &l in &path.links {
        let g = net.links[l].grid().expect("checked slotted above");
        if start > 0 && g.is_free(start - 1) {
            cost += 1;
        }
        if g.is_free(start + width) {
            cost += 1;
        }
    }
    Ok(cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsPolicy {
    LeastCost,
    FirstFit,
}

/// Picks a window start: lowest cost (ties to the smallest start) or the
/// first fit.
pub fn choose_fsw(net: &SubstrateNetwork, path: &SubstratePath, width: usize, policy: FsPolicy) -> Option<usize> {
    let starts = candidate_starts(net, path, width);
    match policy {
        FsPolicy::FirstFit => starts.first().copied(),
        FsPolicy::LeastCost => starts
            .into_iter()
            .map(|s| (fsw_cost(net, path, s, width).expect("candidate is free"), s))
            .min()
            .map(|(_, s)| s),
    }
}

/// A contiguous slot run on a path with the modulation it is lit with.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotWindow {
    pub path: SubstratePath,
    pub start: usize,
    pub width: usize,
    pub modulation: Modulation,
    /// Gbps, `c_fs * (width - guard)`.
    pub carried_gbps: f64,
}

pub fn allocate_window(net: &mut SubstrateNetwork, window: &SlotWindow) -> Result<LeaseId, ResourceError> {
    net.allocate_slots(&window.path.links, window.start, window.width)
}

pub fn release_window(net: &mut SubstrateNetwork, lease: LeaseId) -> Result<(), ResourceError> {
    net.release(lease)
}

/// Chain 0-1-..-n of 100 km links, one `len`-slot grid per link with the
/// given busy slots, and the path along it.
pub fn chain_fixture(len: usize, busy: &[&[usize]]) -> (SubstrateNetwork, SubstratePath) {
    let n = busy.len() + 1;
    let nodes = (0..n).map(|id| SubstrateNode { id, cpu_capacity: 10, cpu_available: 10 }).collect();
    let links = busy
        .iter()
        .enumerate()
        .map(|(i, b)| SubstrateLink {
            id: i,
            endpoints: (i, i + 1),
            length_km: 100.0,
            capacity: LinkCapacity::Slotted(SlotGrid::with_busy(len, b)),
        })
        .collect();
    let net = SubstrateNetwork::new("chain", CapacityMode::Slotted, nodes, links).unwrap();
    let path =
        SubstratePath { nodes: (0..n).collect(), links: (0..n - 1).collect(), length_km: 100.0 * (n - 1) as f64 };
    (net, path)
}

/// The worked cost example: path 1-2-3 (nodes 0-1-2 here) with 12-slot grids: link 1-2 busy {2,6}, link 2-3 busy {2,3,6,7}.
pub fn canonical_fixture() -> (SubstrateNetwork, SubstratePath) {
    chain_fixture(12, &[&[2, 6], &[2, 3, 6, 7]])
}

/// Candidate starts of the worked example for a 2-slot window, and their costs.
pub const CANONICAL_STARTS: [usize; 5] = [0, 4, 8, 9, 10];
pub const CANONICAL_COSTS: [u32; 5] = [0, 1, 3, 4, 2];

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cost oracle straight from the definition, scanning the raw grids.
    pub(crate) fn brute_cost(net: &SubstrateNetwork, path: &SubstratePath, start: usize, width: usize) -> u32 {
        let mut c = 0;
        for &l in &path.links {
            let g = net.links[l].grid().unwrap();
            let avail = |i: isize| i >= 0 && (i as usize) < g.len() && g.is_free(i as usize);
            c += avail(start as isize - 1) as u32 + avail((start + width) as isize) as u32;
        }
        c
    }

    fn brute_max_window(net: &SubstrateNetwork, path: &SubstratePath) -> usize {
        let len = net.links[path.links[0]].grid().unwrap().len();
        let mut best = 0;
        for s in 0..len {
            for e in s..len {
                if (s..=e).all(|i| path.links.iter().all(|&l| net.links[l].grid().unwrap().is_free(i))) {
                    best = best.max(e - s + 1);
                }
            }
        }
        best
    }

    #[test]
    fn modulation_selection() {
        let t = ModulationTable::default();
        assert_eq!(t.select(500.0).unwrap().name, "16QAM");
        assert_eq!(t.select(1500.0).unwrap().name, "QPSK");
        assert_eq!(t.select(4001.0), Err(SpectrumError::NoFeasibleModulation(4001.0)));
    }

    #[test]
    fn slot_arithmetic_examples() {
        let t = ModulationTable::default();
        let r = slots_required(&t, 100.0, 800.0).unwrap();
        assert_eq!((r.modulation.name.as_str(), r.slots, r.slot_capacity), ("8QAM", 4, 37.5));
        let r = slots_required(&t, 250.0, 4000.0).unwrap();
        assert_eq!((r.modulation.name.as_str(), r.slots, r.slot_capacity), ("BPSK", 21, 12.5));
        let r = slots_required(&t, 25.0, 400.0).unwrap();
        assert_eq!((r.modulation.name.as_str(), r.slots, r.slot_capacity), ("16QAM", 2, 50.0));
        assert!(slots_required(&t, 25.0, 5000.0).is_err());
    }

    #[test]
    fn table_validation() {
        let m = |n: &str, e, r| Modulation { name: n.into(), efficiency: e, reach_km: r };
        assert!(ModulationTable::new(vec![m("a", 1.0, 100.0), m("b", 1.0, 50.0)], 12.5, 1).is_err());
        assert!(ModulationTable::new(vec![m("a", 1.0, 100.0), m("b", 2.0, 100.0)], 12.5, 1).is_err());
        assert!(ModulationTable::new(vec![], 12.5, 1).is_err());
        assert!(ModulationTable::new(vec![m("a", 1.0, 100.0), m("b", 2.0, 50.0)], 12.5, 0).is_ok());
    }

    #[test]
    fn max_window_examples() {
        let (net, path) = canonical_fixture();
        assert_eq!(max_window(&net, &path), 4);
        assert_eq!(brute_max_window(&net, &path), 4);
        let (free, p) = chain_fixture(12, &[&[], &[]]);
        assert_eq!(max_window(&free, &p), 12);
        let all: Vec<usize> = (0..12).collect();
        let (full, p) = chain_fixture(12, &[&[], &all]);
        assert_eq!(max_window(&full, &p), 0);
    }

    #[test]
    fn canonical_costs() {
        let (net, path) = canonical_fixture();
        assert_eq!(candidate_starts(&net, &path, 2), vec![0, 4, 8, 9, 10]);
        let costs: Vec<u32> = [0, 4, 8, 9, 10].iter().map(|&s| fsw_cost(&net, &path, s, 2).unwrap()).collect();
        assert_eq!(costs, vec![0, 1, 3, 4, 2]);
        assert_eq!(choose_fsw(&net, &path, 2, FsPolicy::LeastCost), Some(0));
        assert_eq!(fsw_cost(&net, &path, 2, 2), Err(SpectrumError::NotACandidate { start: 2, width: 2 }));
    }

    #[test]
    fn boundary_costs() {
        let (free, p) = chain_fixture(12, &[&[], &[], &[]]);
        assert_eq!(fsw_cost(&free, &p, 5, 3).unwrap(), 6);
        let (one, p) = chain_fixture(12, &[&[2]]);
        assert_eq!(fsw_cost(&one, &p, 0, 2).unwrap(), 0);
    }

    #[test]
    fn least_cost_versus_first_fit() {
        // free at {0,1,2,5,6,9,10,11}
        let (net, path) = chain_fixture(12, &[&[3, 4, 7, 8]]);
        assert_eq!(candidate_starts(&net, &path, 2), vec![0, 1, 5, 9, 10]);
        assert_eq!(choose_fsw(&net, &path, 2, FsPolicy::LeastCost), Some(5));
        assert_eq!(fsw_cost(&net, &path, 5, 2).unwrap(), 0);
        assert_eq!(choose_fsw(&net, &path, 2, FsPolicy::FirstFit), Some(0));
        assert_eq!(fsw_cost(&net, &path, 0, 2).unwrap(), 1);
        assert_eq!(choose_fsw(&net, &path, 4, FsPolicy::LeastCost), None);
    }

    fn window(path: &SubstratePath, start: usize, width: usize) -> SlotWindow {
        SlotWindow {
            path: path.clone(),
            start,
            width,
            modulation: ModulationTable::default().entries()[0].clone(),
            carried_gbps: 0.0,
        }
    }

    #[test]
    fn allocate_and_release() {
        let (mut net, path) = canonical_fixture();
        let before = net.resource_state();
        let lease = allocate_window(&mut net, &window(&path, 8, 2)).unwrap();
        assert_eq!(max_window(&net, &path), 2);
        assert_eq!(brute_max_window(&net, &path), 2);
        assert!(matches!(allocate_window(&mut net, &window(&path, 8, 2)), Err(ResourceError::Overlap { .. })));
        release_window(&mut net, lease).unwrap();
        assert_eq!(net.resource_state(), before);
        assert_eq!(release_window(&mut net, lease), Err(ResourceError::DoubleRelease(lease)));
    }

    proptest! {
        #[test]
        fn cost_matches_brute_force(
            len in 1usize..64,
            links in prop::collection::vec(prop::collection::vec(any::<bool>(), 64), 1..5),
            width in 1usize..6,
        ) {
            let busy: Vec<Vec<usize>> = links
                .iter()
                .map(|bits| (0..len).filter(|&i| bits[i] && i % 3 != 0).collect())
                .collect();
            let refs: Vec<&[usize]> = busy.iter().map(|b| b.as_slice()).collect();
            let (net, path) = chain_fixture(len, &refs);
            let starts = candidate_starts(&net, &path, width);
            for &s in &starts {
                prop_assert_eq!(fsw_cost(&net, &path, s, width).unwrap(), brute_cost(&net, &path, s, width));
            }
            if let Some(best) = choose_fsw(&net, &path, width, FsPolicy::LeastCost) {
                let min = starts.iter().map(|&s| brute_cost(&net, &path, s, width)).min().unwrap();
                prop_assert_eq!(brute_cost(&net, &path, best, width), min);
                prop_assert!(starts.iter().all(|&s| brute_cost(&net, &path, s, width) > min || s >= best));
            } else {
                prop_assert!(starts.is_empty());
            }
            prop_assert_eq!(max_window(&net, &path), brute_max_window(&net, &path));
        }

        #[test]
        fn slots_never_under_allocate(gbps in 0.001f64..1000.0, d in 1.0f64..4000.0) {
            let t = ModulationTable::default();
            let r = slots_required(&t, gbps, d).unwrap();
            prop_assert!(r.carried(r.slots, t.guard_slots) >= gbps);
            prop_assert!(r.slots > t.guard_slots);
        }

        #[test]
        fn modulation_monotone(d1 in 1.0f64..4000.0, d2 in 1.0f64..4000.0) {
            let t = ModulationTable::default();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(t.select(lo).unwrap().efficiency >= t.select(hi).unwrap().efficiency);
        }

        // Disjoint windows allocated and released in any order leave the grid untouched.
        #[test]
        fn interleaved_allocations_commute(
            reqs in prop::collection::vec((0usize..30, 1usize..4), 1..20),
            seed in any::<u64>(),
        ) {
            let (mut net, path) = chain_fixture(32, &[&[], &[]]);
            let before = net.resource_state();
            let mut leases = Vec::new();
            for (start, width) in reqs {
                if start + width <= 32 {
                    if let Ok(l) = allocate_window(&mut net, &window(&path, start, width)) {
                        leases.push(l);
                    }
                }
                for &l in &path.links {
                    prop_assert!(net.links[l].grid().unwrap().busy_count() <= 32);
                }
            }
            let n = leases.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| (i as u64).wrapping_mul(seed | 1).rotate_left(17));
            for i in order {
                release_window(&mut net, leases[i]).unwrap();
            }
            prop_assert_eq!(net.resource_state(), before);
        }
    }
}
