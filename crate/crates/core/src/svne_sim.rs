//! The dynamic embedding campaign: Poisson arrivals over a slotted substrate,
//! departures releasing their resources, and the blocking, redundancy and
//! spectrum metrics accumulated past the warm-up.
//!
//! Slot counts are per window: a window of `w` slots counts `w` whatever
//! the length of its path, and holds `g` guard slots.

use thiserror::Error;

use crate::embedding::{embed, release_embedding, EmbeddingRecord, SchemeConfig};
use crate::parallel;
use crate::spectrum::ModulationTable;
use crate::topology::{CapacityMode, SubstrateNetwork};
use crate::vn::{generate_workload, EventKind, WorkloadConfig, WorkloadError};

#[derive(Debug, Error, PartialEq)]
pub enum CampaignError {
    #[error("campaign needs a slotted network")]
    NotSlotted,
    #[error("load must be positive, got {0}")]
    BadLoad(f64),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignCell {
    pub scheme: SchemeConfig,
    /// Offered load in Erlang.
    pub load: f64,
    pub seed: u64,
    /// Request shape and counts; its rate and seed are overridden by the cell.
    pub workload: WorkloadConfig,
    pub modulation: ModulationTable,
}

impl CampaignCell {
    pub fn new(scheme: SchemeConfig, load: f64, seed: u64) -> Self {
        Self { scheme, load, seed, workload: WorkloadConfig::default(), modulation: ModulationTable::default() }
    }

    pub fn workload_config(&self) -> WorkloadConfig {
        WorkloadConfig { seed: self.seed, ..self.workload.clone() }.with_load(self.load)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricsAccumulator {
    pub counted: u64,
    pub accepted: u64,
    pub blocked: u64,
    pub backup_slots: u64,
    pub guard_slots: u64,
    pub total_slots: u64,
    pub working_paths: u64,
    pub accepted_vlinks: u64,
}

impl MetricsAccumulator {
    pub fn record_accept(&mut self, rec: &EmbeddingRecord, guard: usize) {
        self.counted += 1;
        self.accepted += 1;
        for le in &rec.links {
            self.accepted_vlinks += 1;
            self.working_paths += le.working.len() as u64;
            for pw in le.working.iter().chain(std::iter::once(&le.backup)) {
                self.total_slots += pw.window.width as u64;
                self.guard_slots += guard as u64;
            }
            self.backup_slots += le.backup.window.width as u64;
        }
    }

    pub fn record_block(&mut self) {
        self.counted += 1;
        self.blocked += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub vbr: f64,
    pub abr: Option<f64>,
    pub agc: Option<f64>,
    pub asc: Option<f64>,
    pub avg_working_paths: Option<f64>,
}

/// Ratios from raw counters; the per-accepted figures are absent when
/// nothing was accepted.
pub fn compute_metrics(acc: &MetricsAccumulator) -> Metrics {
    let total = acc.accepted + acc.blocked;
    let vbr = if total == 0 { 0.0 } else { acc.blocked as f64 / total as f64 };
    let per_vn = |x: u64| (acc.accepted > 0).then(|| x as f64 / acc.accepted as f64);
    Metrics {
        vbr,
        abr: (acc.total_slots > 0).then(|| acc.backup_slots as f64 / acc.total_slots as f64),
        agc: per_vn(acc.guard_slots),
        asc: per_vn(acc.total_slots),
        avg_working_paths: (acc.accepted_vlinks > 0).then(|| acc.working_paths as f64 / acc.accepted_vlinks as f64),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub cell: CampaignCell,
    pub counters: MetricsAccumulator,
    pub metrics: Metrics,
}

/// Optional per-event hook for tests: sees the network after each event
/// and every accepted record.
pub trait CampaignObserver {
    fn after_event(&mut self, _net: &SubstrateNetwork) {}
    fn accepted(&mut self, _net: &SubstrateNetwork, _rec: &EmbeddingRecord) {}
}

impl CampaignObserver for () {}

pub fn run_svne_campaign(net: &SubstrateNetwork, cell: &CampaignCell) -> Result<CampaignResult, CampaignError> {
    run_svne_campaign_observed(net, cell, &mut ())
}

pub fn run_svne_campaign_observed(
    template: &SubstrateNetwork,
    cell: &CampaignCell,
    observer: &mut dyn CampaignObserver,
) -> Result<CampaignResult, CampaignError> {
    if template.mode != CapacityMode::Slotted {
        return Err(CampaignError::NotSlotted);
    }
    if !(cell.load > 0.0) {
        return Err(CampaignError::BadLoad(cell.load));
    }
    let wl_cfg = cell.workload_config();
    let workload = generate_workload(&wl_cfg)?;
    let mut net = template.clone();
    let mut resident: Vec<Option<EmbeddingRecord>> = vec![None; workload.requests.len()];
    let mut acc = MetricsAccumulator::default();
    let guard = cell.modulation.guard_slots;

    for ev in &workload.events {
        let idx = ev.request;
        match ev.kind {
            EventKind::Arrival => {
                let counted = idx >= wl_cfg.warmup;
                match embed(&mut net, &workload.requests[idx], &cell.scheme, &cell.modulation) {
                    Ok(rec) => {
                        if counted {
                            acc.record_accept(&rec, guard);
                        }
                        observer.accepted(&net, &rec);
                        resident[idx] = Some(rec);
                    }
                    Err(_) => {
                        if counted {
                            acc.record_block();
                        }
                    }
                }
            }
            EventKind::Departure => {
                if let Some(rec) = resident[idx].take() {
                    release_embedding(&mut net, &rec).expect("resident record holds its leases");
                }
            }
        }
        observer.after_event(&net);
    }
    debug_assert_eq!(net.outstanding_leases(), 0);
    Ok(CampaignResult { cell: cell.clone(), metrics: compute_metrics(&acc), counters: acc })
}

/// Runs every cell against its own clone of `net`, results in input order.
pub fn run_grid(net: &SubstrateNetwork, cells: &[CampaignCell]) -> Vec<Result<CampaignResult, CampaignError>> {
    parallel::map_cells(cells, |c| run_svne_campaign(net, c))
}
