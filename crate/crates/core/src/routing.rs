//! Deterministic shortest paths and iterative link-disjoint shortest paths.
//!
//! Ties between equal-metric paths go to fewer hops, then to the
//! lexicographically smallest node sequence. The label order is preserved
//! under path extension, so a plain label-setting Dijkstra returns the
//! unique minimum under that total order.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::topology::{LinkId, NodeId, SubstrateLink, SubstrateNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Km,
    Hops,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstratePath {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub length_km: f64,
}

impl SubstratePath {
    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn target(&self) -> NodeId {
        *self.nodes.last().expect("path has at least one node")
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Km => self.length_km,
            Metric::Hops => self.hops() as f64,
        }
    }

    /// Checks that consecutive nodes are joined by the listed links, that no
    /// node or link repeats and that the length matches.
    pub fn is_consistent(&self, net: &SubstrateNetwork) -> bool {
        if self.nodes.len() != self.links.len() + 1 {
            return false;
        }
        let distinct_nodes: BTreeSet<_> = self.nodes.iter().collect();
        let distinct_links: BTreeSet<_> = self.links.iter().collect();
        if distinct_nodes.len() != self.nodes.len() || distinct_links.len() != self.links.len() {
            return false;
        }
        let joined =
            self.links.iter().enumerate().all(|(i, &l)| net.link_between(self.nodes[i], self.nodes[i + 1]) == Some(l));
        let km: f64 = self.links.iter().map(|&l| net.links[l].length_km).sum();
        joined && km == self.length_km
    }
}

#[derive(Clone)]
struct Label {
    cost: f64,
    hops: usize,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Label {
    fn order(&self, other: &Label) -> Ordering {
        self.cost.total_cmp(&other.cost).then(self.hops.cmp(&other.hops)).then_with(|| self.nodes.cmp(&other.nodes))
    }
}

/// Minimum-metric simple path from `s` to `t` over links accepted by `filter`.
pub fn shortest_path<F>(
    net: &SubstrateNetwork,
    s: NodeId,
    t: NodeId,
    metric: Metric,
    filter: F,
) -> Option<SubstratePath>
where
    F: Fn(&SubstrateLink) -> bool,
{
    if s == t {
        return None;
    }
    let n = net.node_count();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut settled = vec![false; n];
    best[s] = Some(Label { cost: 0.0, hops: 0, nodes: vec![s], links: Vec::new() });

    loop {
        let mut pick: Option<NodeId> = None;
        for v in 0..n {
            if settled[v] {
                continue;
            }
            if let Some(lv) = &best[v] {
                let better = match pick {
                    None => true,
                    Some(p) => lv.order(best[p].as_ref().unwrap()) == Ordering::Less,
                };
                if better {
                    pick = Some(v);
                }
            }
        }
        let u = pick?;
        settled[u] = true;
        if u == t {
            let l = best[t].take().unwrap();
            let length_km = l.cost_km(net);
            return Some(SubstratePath { nodes: l.nodes, links: l.links, length_km });
        }
        let base = best[u].clone().unwrap();
        for &(v, link) in net.neighbors(u) {
            if settled[v] || !filter(&net.links[link]) {
                continue;
            }
            let step = match metric {
                Metric::Km => net.links[link].length_km,
                Metric::Hops => 1.0,
            };
            let mut cand = base.clone();
            cand.cost += step;
            cand.hops += 1;
            cand.nodes.push(v);
            cand.links.push(link);
            let replace = match &best[v] {
                None => true,
                Some(cur) => cand.order(cur) == Ordering::Less,
            };
            if replace {
                best[v] = Some(cand);
            }
        }
    }
}

impl Label {
    fn cost_km(&self, net: &SubstrateNetwork) -> f64 {
        self.links.iter().map(|&l| net.links[l].length_km).sum()
    }
}

/// Up to `k` pairwise link-disjoint paths, each the shortest in the graph
/// left after removing the links of the earlier ones.
pub fn k_disjoint_shortest_paths<F>(
    net: &SubstrateNetwork,
    s: NodeId,
    t: NodeId,
    k: usize,
    metric: Metric,
    filter: F,
) -> Vec<SubstratePath>
where
    F: Fn(&SubstrateLink) -> bool,
{
    let mut used = vec![false; net.link_count()];
    let mut out = Vec::new();
    while out.len() < k {
        let Some(p) = shortest_path(net, s, t, metric, |l| !used[l.id] && filter(l)) else {
            break;
        };
        for &l in &p.links {
            used[l] = true;
        }
        out.push(p);
    }
    out
}
