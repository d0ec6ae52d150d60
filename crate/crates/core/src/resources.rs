//! Resource leases on a substrate network.
//!
//! Every CPU deduction, slot window and bandwidth reservation is recorded as
//! a lease; releasing a lease restores exactly what it took. Scalar
//! bandwidth is kept in integer bit/s so reserve/release pairs are exact.

use std::fmt;

use thiserror::Error;

use crate::topology::{LinkCapacity, LinkId, NodeId, SubstrateNetwork};

/// Bandwidth in bit/s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bandwidth(pub u64);

impl Bandwidth {
    pub const ZERO: Bandwidth = Bandwidth(0);

    /// Rounds to the nearest bit/s.
    pub fn from_gbps(gbps: f64) -> Self {
        Bandwidth((gbps * 1e9).round().max(0.0) as u64)
    }

    pub fn as_gbps(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Gbps", self.as_gbps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LeaseId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lease {
    Cpu { node: NodeId, amount: u32 },
    Slots { links: Vec<LinkId>, start: usize, width: usize },
    Bandwidth { links: Vec<LinkId>, amount: Bandwidth },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResourceError {
    #[error("node {node} has {available} CPU available, {requested} requested")]
    InsufficientCpu { node: NodeId, available: u32, requested: u32 },
    #[error("slot {slot} on link {link} is already busy")]
    Overlap { link: LinkId, slot: usize },
    #[error("window [{start}, {end}) exceeds the {len}-slot grid")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("link {link} has {residual} left, {requested} requested")]
    InsufficientBandwidth { link: LinkId, residual: Bandwidth, requested: Bandwidth },
    #[error("link {0} is not in the capacity mode this operation needs")]
    ModeMismatch(LinkId),
    #[error("lease {0:?} is not outstanding")]
    DoubleRelease(LeaseId),
}

impl SubstrateNetwork {
    fn issue(&mut self, lease: Lease) -> LeaseId {
        let id = LeaseId(self.next_lease);
        self.next_lease += 1;
        self.leases.insert(id, lease);
        id
    }

    pub fn lease(&self, id: LeaseId) -> Option<&Lease> {
        self.leases.get(&id)
    }

    pub fn is_outstanding(&self, id: LeaseId) -> bool {
        self.leases.contains_key(&id)
    }

    pub fn reserve_cpu(&mut self, node: NodeId, amount: u32) -> Result<LeaseId, ResourceError> {
        let n = &mut self.nodes[node];
        if amount > n.cpu_available {
            return Err(ResourceError::InsufficientCpu { node, available: n.cpu_available, requested: amount });
        }
        n.cpu_available -= amount;
        Ok(self.issue(Lease::Cpu { node, amount }))
    }

    /// Marks `[start, start + width)` busy on every link, or changes nothing.
    pub fn allocate_slots(&mut self, links: &[LinkId], start: usize, width: usize) -> Result<LeaseId, ResourceError> {
        for &l in links {
            let LinkCapacity::Slotted(grid) = &self.links[l].capacity else {
                return Err(ResourceError::ModeMismatch(l));
            };
            if start + width > grid.len() {
                return Err(ResourceError::OutOfRange { start, end: start + width, len: grid.len() });
            }
            if let Some(slot) = (start..start + width).find(|&s| !grid.is_free(s)) {
                return Err(ResourceError::Overlap { link: l, slot });
            }
        }
        for &l in links {
            if let LinkCapacity::Slotted(grid) = &mut self.links[l].capacity {
                grid.occupy(start, width);
            }
        }
        Ok(self.issue(Lease::Slots { links: links.to_vec(), start, width }))
    }

    /// Deducts `amount` from every link, or changes nothing.
    pub fn reserve_bandwidth(&mut self, links: &[LinkId], amount: Bandwidth) -> Result<LeaseId, ResourceError> {
        for &l in links {
            match self.links[l].capacity {
                LinkCapacity::Scalar { residual, .. } if residual < amount => {
                    return Err(ResourceError::InsufficientBandwidth { link: l, residual, requested: amount })
                }
                LinkCapacity::Scalar { .. } => {}
                LinkCapacity::Slotted(_) => return Err(ResourceError::ModeMismatch(l)),
            }
        }
        for &l in links {
            if let LinkCapacity::Scalar { residual, .. } = &mut self.links[l].capacity {
                residual.0 -= amount.0;
            }
        }
        Ok(self.issue(Lease::Bandwidth { links: links.to_vec(), amount }))
    }

    pub fn release(&mut self, id: LeaseId) -> Result<(), ResourceError> {
        let lease = self.leases.remove(&id).ok_or(ResourceError::DoubleRelease(id))?;
        match lease {
            Lease::Cpu { node, amount } => self.nodes[node].cpu_available += amount,
            Lease::Slots { links, start, width } => {
                for l in links {
                    if let LinkCapacity::Slotted(grid) = &mut self.links[l].capacity {
                        grid.vacate(start, width);
                    }
                }
            }
            Lease::Bandwidth { links, amount } => {
                for l in links {
                    if let LinkCapacity::Scalar { residual, .. } = &mut self.links[l].capacity {
                        residual.0 += amount.0;
                    }
                }
            }
        }
        Ok(())
    }

    /// Releases every lease in `ids`, failing without side effects if any of
    /// them is not outstanding.
    pub fn release_all(&mut self, ids: &[LeaseId]) -> Result<(), ResourceError> {
        let mut seen = std::collections::BTreeSet::new();
        for &id in ids {
            if !self.is_outstanding(id) || !seen.insert(id) {
                return Err(ResourceError::DoubleRelease(id));
            }
        }
        for &id in ids {
            self.release(id)?;
        }
        Ok(())
    }

    /// Adds `delta` to the capacity and residual of every scalar link.
    pub fn grow_scalar_capacity(&mut self, delta: Bandwidth) {
        for l in &mut self.links {
            if let LinkCapacity::Scalar { capacity, residual } = &mut l.capacity {
                capacity.0 += delta.0;
                residual.0 += delta.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{builtin_topology, BuiltinTopology, CapacityMode, CapacityParams};
    use proptest::prelude::*;

    fn nsf(gbps: f64) -> SubstrateNetwork {
        builtin_topology(BuiltinTopology::Nsfnet, CapacityMode::Scalar, CapacityParams { cpu: 100, slots: 0, gbps })
            .unwrap()
    }

    #[test]
    fn cpu_lease_round_trip() {
        let mut net = nsf(65.0);
        let before = net.resource_state();
        let a = net.reserve_cpu(3, 60).unwrap();
        assert_eq!(net.nodes[3].cpu_available, 40);
        assert!(matches!(net.reserve_cpu(3, 41), Err(ResourceError::InsufficientCpu { .. })));
        net.release(a).unwrap();
        assert_eq!(net.resource_state(), before);
        assert_eq!(net.release(a), Err(ResourceError::DoubleRelease(a)));
    }

    #[test]
    fn bandwidth_is_all_or_nothing() {
        let mut net = nsf(10.0);
        let first = net.reserve_bandwidth(&[0, 1], Bandwidth::from_gbps(7.0)).unwrap();
        let before = net.resource_state();
        assert!(net.reserve_bandwidth(&[2, 1], Bandwidth::from_gbps(4.0)).is_err());
        assert_eq!(net.resource_state(), before);
        net.release(first).unwrap();
    }

    #[test]
    fn slot_ops_rejected_in_scalar_mode() {
        let mut net = nsf(10.0);
        assert_eq!(net.allocate_slots(&[0], 0, 1), Err(ResourceError::ModeMismatch(0)));
    }

    proptest! {
        // Any interleaving of reservations, fully released, restores residuals bit-exactly.
        #[test]
        fn scalar_reserve_release_is_exact(
            ops in prop::collection::vec((0usize..22, 0usize..22, 0.0f64..3.0), 1..60),
            order in any::<u64>(),
        ) {
            let mut net = nsf(65.0);
            let before = net.resource_state();
            let mut leases = Vec::new();
            for (a, b, gbps) in ops {
                let links = if a == b { vec![a] } else { vec![a, b] };
                if let Ok(id) = net.reserve_bandwidth(&links, Bandwidth::from_gbps(gbps)) {
                    leases.push(id);
                }
            }
            let n = leases.len();
            if n > 1 {
                leases.rotate_left((order as usize) % n);
            }
            for id in leases {
                net.release(id).unwrap();
            }
            prop_assert_eq!(net.resource_state(), before);
        }
    }
}
