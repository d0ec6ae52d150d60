//! Survivable virtual network embedding over elastic optical networks, and
//! synchronous evacuation of dual-VM virtual networks out of a disaster risk
//! zone.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: substrate graph, built-in USNET/NSFNET fixtures, file I/O
//! - [`resources`]: CPU, slot and bandwidth leases with exact release
//! - [`routing`]: deterministic shortest and link-disjoint shortest paths
//! - [`spectrum`]: modulation, slot arithmetic, window cost and allocation
//! - [`vn`]: virtual network requests and the Poisson workload generator
//! - [`embedding`]: APSS and the APC/APF/MPF/MDF baselines
//! - [`svne_sim`]: the dynamic embedding campaign and its metrics
//! - [`evacuation`]: DRZ handling, reconfiguration and SEDV/BEDV migration
//! - [`report`]: CSV emission with locale-free float formatting
//! - [`parallel`]: cell fan-out, rayon-backed behind the `parallel` feature

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embedding;
pub mod evacuation;
pub mod parallel;
pub mod report;
pub mod resources;
pub mod routing;
pub mod spectrum;
pub mod svne_sim;
pub mod topology;
pub mod vn;

pub use embedding::{embed, release_embedding, EmbeddingRecord, Scheme, SchemeConfig};
pub use evacuation::{DisasterRiskZone, EvacScheme, EvacuationResult};
pub use resources::{Bandwidth, LeaseId, ResourceError};
pub use routing::{Metric, SubstratePath};
pub use spectrum::{ModulationTable, SlotGrid, SlotWindow};
pub use svne_sim::{run_svne_campaign, CampaignCell, CampaignResult};
pub use topology::{BuiltinTopology, CapacityMode, CapacityParams, SubstrateNetwork};
pub use vn::{VirtualNetworkRequest, WorkloadConfig};
