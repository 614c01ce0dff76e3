//! Transmission delay, demand model and the per-slot cost components.

use serde::{Deserialize, Serialize};

use crate::cache_net::{
    transferable_bytes, BandwidthMetric, ContentRef, DistanceTable, DominatingSet, Endpoint, Link, LogEntry,
    PlacementState, RequestBatch, TransferLog,
};
use crate::error::{Error, Result};
use crate::mobility::SojournTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub migration: f64,
    pub access: f64,
    pub delivery: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { migration: 1.0, access: 1.0, delivery: 1.0 }
    }
}

/// Monetary and delay constants. Sizes are in MB; delays in the time unit (one slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParameters {
    pub upload_per_mb: f64,
    pub download_per_mb: f64,
    pub bandwidth_per_mb_hop: f64,
    pub cloud_delay_per_mb: f64,
    pub user_delay_per_mb: f64,
    pub low_delay_cost: f64,
    pub high_delay_cost: f64,
    pub weights: Weights,
    pub bandwidth_metric: BandwidthMetric,
}

impl Default for CostParameters {
    fn default() -> Self {
        CostParameters {
            upload_per_mb: 2.0,
            download_per_mb: 2.0,
            bandwidth_per_mb_hop: 3.0,
            cloud_delay_per_mb: 0.5,
            user_delay_per_mb: 0.2,
            low_delay_cost: 5.0,
            high_delay_cost: 10.0,
            weights: Weights::default(),
            bandwidth_metric: BandwidthMetric::Hops,
        }
    }
}

impl CostParameters {
    /// Copy with every monetary rate multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        CostParameters {
            upload_per_mb: self.upload_per_mb * k,
            download_per_mb: self.download_per_mb * k,
            bandwidth_per_mb_hop: self.bandwidth_per_mb_hop * k,
            low_delay_cost: self.low_delay_cost * k,
            high_delay_cost: self.high_delay_cost * k,
            ..self.clone()
        }
    }
}

pub fn transmission_delay(source: Endpoint, dest: usize, mb: f64, link: &Link, cloud_delay_per_mb: f64) -> f64 {
    match source {
        Endpoint::Cloud => mb * cloud_delay_per_mb,
        Endpoint::Cache(i) if i == dest => 0.0,
        Endpoint::Cache(_) => mb / link.rate + link.tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZipfNormalization {
    /// rho = sum of 1/l, independent of the slope.
    #[default]
    Harmonic,
    /// rho = sum of 1/l^alpha, so rates sum to the total rate.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandModel {
    pub zipf_slope: f64,
    /// Requests per slot arriving at each cache.
    pub request_rate: f64,
    pub normalization: ZipfNormalization,
}

impl Default for DemandModel {
    fn default() -> Self {
        DemandModel { zipf_slope: 0.8, request_rate: 20.0, normalization: ZipfNormalization::Harmonic }
    }
}

pub fn zipf_normalizer(catalog: usize, demand: &DemandModel) -> f64 {
    let exponent = match demand.normalization {
        ZipfNormalization::Harmonic => 1.0,
        ZipfNormalization::Standard => demand.zipf_slope,
    };
    (1..=catalog).map(|l| 1.0 / (l as f64).powf(exponent)).sum()
}

pub fn zipf_request_rate(rank: usize, catalog: usize, demand: &DemandModel) -> Result<f64> {
    if rank == 0 || rank > catalog {
        return Err(Error::IndexOutOfRange(format!("rank {rank} outside 1..={catalog}")));
    }
    Ok(demand.request_rate / (zipf_normalizer(catalog, demand) * (rank as f64).powf(demand.zipf_slope)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MigrationCost {
    /// Upload power at edge sources.
    pub c1: f64,
    /// Download power at destinations.
    pub c2: f64,
    /// Bandwidth between edge caches.
    pub c3: f64,
}

impl MigrationCost {
    pub fn total(&self) -> f64 {
        self.c1 + self.c2 + self.c3
    }

    pub fn power(&self) -> f64 {
        self.c1 + self.c2
    }
}

pub fn migration_cost_slot(log: &TransferLog, params: &CostParameters, dist: &DistanceTable) -> MigrationCost {
    let mut out = MigrationCost::default();
    for e in &log.entries {
        if let LogEntry::Download { source, dest, mb, .. } = *e {
            out.c2 += mb * params.download_per_mb;
            if let Endpoint::Cache(i) = source {
                out.c1 += mb * params.upload_per_mb;
                out.c3 += mb * params.bandwidth_per_mb_hop * dist.get(i, dest);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Service {
    Local,
    /// Redirected to `holder`; `edge_mb` bytes arrive before the sojourn ends.
    Edge { holder: usize, edge_mb: f64 },
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServedRequest {
    pub content: usize,
    pub at: usize,
    pub size_mb: f64,
    pub service: Service,
}

pub fn request_delay(r: &ServedRequest, link: &Link, params: &CostParameters) -> f64 {
    match r.service {
        Service::Local => 0.0,
        Service::Edge { holder, edge_mb } => {
            let edge = if edge_mb > 0.0 {
                transmission_delay(Endpoint::Cache(holder), r.at, edge_mb, link, params.cloud_delay_per_mb)
            } else {
                0.0
            };
            edge + (r.size_mb - edge_mb) * params.cloud_delay_per_mb
        }
        Service::Cloud => r.size_mb * params.cloud_delay_per_mb,
    }
}

/// Routes each request: local copy first, then redirect quotas `z[i][j][l]` toward holders
/// (most deliverable bytes first, ties to the lower id), then the cloud.
pub fn route_requests(
    state: &PlacementState,
    requests: &RequestBatch,
    sojourn: &SojournTable,
    link: &Link,
    low_sizes: &[f64],
) -> Vec<ServedRequest> {
    let mut out = Vec::new();
    for j in 0..state.n {
        for l in 0..state.n_low {
            let count = requests.get(l, j);
            if count == 0 {
                continue;
            }
            let size_mb = low_sizes[l];
            if state.y(j, l) {
                out.extend((0..count).map(|_| ServedRequest { content: l, at: j, size_mb, service: Service::Local }));
                continue;
            }
            let mut quotas: Vec<(usize, f64, u32)> = (0..state.n)
                .filter(|&i| i != j && state.y(i, l) && state.z(i, j, l) > 0)
                .map(|i| (i, transferable_bytes(true, sojourn.get(i, j), link, size_mb), state.z(i, j, l)))
                .collect();
            quotas.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut left = count;
            for (holder, edge_mb, quota) in quotas {
                let take = quota.min(left);
                out.extend(
                    (0..take).map(|_| ServedRequest { content: l, at: j, size_mb, service: Service::Edge { holder, edge_mb } }),
                );
                left -= take;
            }
            out.extend((0..left).map(|_| ServedRequest { content: l, at: j, size_mb, service: Service::Cloud }));
        }
    }
    out
}

pub fn low_priority_access_cost(served: &[ServedRequest], link: &Link, params: &CostParameters) -> f64 {
    params.low_delay_cost * served.iter().map(|r| request_delay(r, link, params)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighDelivery {
    pub dominating: usize,
    pub content: usize,
    pub size_mb: f64,
    /// Fixed cache supplying `edge_mb`, if any.
    pub source: Option<usize>,
    pub edge_mb: f64,
}

pub fn delivery_delay(d: &HighDelivery, link: &Link, params: &CostParameters) -> f64 {
    let edge = match d.source {
        Some(f) if d.edge_mb > 0.0 => {
            transmission_delay(Endpoint::Cache(f), d.dominating, d.edge_mb, link, params.cloud_delay_per_mb)
        }
        _ => 0.0,
    };
    edge + (d.size_mb - d.edge_mb) * params.cloud_delay_per_mb
}

/// For every dominating cache and arrival, the covering fixed cache holding the content
/// that can push the most bytes (ties to the lower id); the remainder comes from the cloud.
pub fn plan_high_deliveries(
    state: &PlacementState,
    dominating: &DominatingSet,
    arrivals: &[usize],
    high_sizes: &[f64],
    sojourn: &SojournTable,
    link: &Link,
) -> Vec<HighDelivery> {
    let mut out = Vec::new();
    for &u in &dominating.members {
        for &h in arrivals {
            let size_mb = high_sizes[h];
            let mut best: Option<(usize, f64)> = None;
            for f in 0..state.f {
                let mb = transferable_bytes(state.x(f, h), sojourn.get(f, u), link, size_mb);
                if mb > 0.0 && best.is_none_or(|(_, b)| mb > b) {
                    best = Some((f, mb));
                }
            }
            out.push(HighDelivery {
                dominating: u,
                content: h,
                size_mb,
                source: best.map(|b| b.0),
                edge_mb: best.map(|b| b.1).unwrap_or(0.0),
            });
        }
    }
    out
}

pub fn high_priority_delivery_cost(deliveries: &[HighDelivery], link: &Link, params: &CostParameters) -> f64 {
    params.high_delay_cost * deliveries.iter().map(|d| delivery_delay(d, link, params)).sum::<f64>()
}

/// Downloads of delivered high-priority content, split by source.
pub fn delivery_log(deliveries: &[HighDelivery]) -> TransferLog {
    let mut log = TransferLog::default();
    for d in deliveries {
        if let Some(f) = d.source {
            if d.edge_mb > 0.0 {
                log.entries.push(LogEntry::Download {
                    source: Endpoint::Cache(f),
                    dest: d.dominating,
                    content: ContentRef::High(d.content),
                    mb: d.edge_mb,
                });
            }
        }
        let rest = d.size_mb - d.edge_mb;
        if rest > 0.0 {
            log.entries.push(LogEntry::Download {
                source: Endpoint::Cloud,
                dest: d.dominating,
                content: ContentRef::High(d.content),
                mb: rest,
            });
        }
    }
    log
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotCost {
    pub migration: MigrationCost,
    pub low_access: f64,
    pub high_delivery: f64,
    pub phi_cumulative: f64,
}

impl SlotCost {
    pub fn weighted(&self, w: &Weights) -> f64 {
        weighted_slot_cost(self.migration.total(), self.low_access, self.high_delivery, w)
    }
}

pub fn weighted_slot_cost(migration: f64, access: f64, delivery: f64, w: &Weights) -> f64 {
    w.migration * migration + w.access * access + w.delivery * delivery
}

pub fn accumulate_phi(
    prev: &SlotCost,
    migration: MigrationCost,
    low_access: f64,
    high_delivery: f64,
    weights: &Weights,
) -> SlotCost {
    SlotCost {
        migration,
        low_access,
        high_delivery,
        phi_cumulative: prev.phi_cumulative + weighted_slot_cost(migration.total(), low_access, high_delivery, weights),
    }
}
