// SPDX-License-Identifier: Apache-2.0

//! Fixed-latency parts of the offload protocol: job-info delivery, wakeup
//! and job-pointer retrieval. None of these contend for a shared resource
//! in the model, so they are computed directly instead of being simulated.

use std::collections::BTreeSet;

use crate::mcast::{self, MulticastAddress};
use crate::topology::{CalibrationConstants, Cycle, Topology};
use crate::{Error, Result};

use super::{JobDescriptor, Mode};

/// Offset of the software-interrupt (MCIP) register inside a cluster
/// window: the first word after the TCDM.
pub fn mcip_offset(topo: &Topology) -> u64 {
    topo.tcdm_bytes
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobInfoDelivery {
    /// Stores issued by the host, in order.
    pub stores: Vec<MulticastAddress>,
    /// Clusters whose TCDM holds the job information afterwards.
    pub clusters: BTreeSet<usize>,
    pub start: Cycle,
    pub end: Cycle,
}

/// Phase A: the host writes the job pointer and arguments, one 64-bit
/// store per word, at the base of the destination TCDMs.
pub fn send_job_info(
    topo: &Topology,
    cal: &CalibrationConstants,
    job: &JobDescriptor,
    start: Cycle,
) -> Result<JobInfoDelivery> {
    let words = 1 + job.arg_bytes.div_ceil(8);
    let map = topo.address_map();
    let bases: Vec<MulticastAddress> = match job.mode {
        Mode::Baseline => vec![MulticastAddress::unicast(topo.cluster_base_flat(0))],
        Mode::Extended => mcast::cluster_prefix_requests(topo, job.n_clusters, 0),
        Mode::Ideal => {
            return Err(Error::Argument("ideal runs have no job-info phase".into()));
        }
    };
    let mut stores = Vec::new();
    let mut clusters = BTreeSet::new();
    for base in &bases {
        for w in 0..words {
            let st = MulticastAddress::new(base.addr + 8 * w, base.mask);
            clusters.extend(mcast::route(st, &map)?);
            stores.push(st);
        }
    }
    let expected: BTreeSet<usize> = match job.mode {
        Mode::Baseline => [0].into(),
        _ => (0..job.n_clusters).collect(),
    };
    if clusters != expected {
        return Err(Error::Protocol(format!(
            "job information reached clusters {clusters:?}, expected {expected:?}"
        )));
    }
    Ok(JobInfoDelivery {
        stores,
        clusters,
        start,
        end: start + cal.phase_a_cost,
    })
}

/// Phase B: per-cluster wake instants, indexed by cluster.
///
/// Baseline issues one interrupt store per cluster, highest index first.
/// Extended issues one multicast store per cube of the selection.
pub fn wakeup_times(
    topo: &Topology,
    cal: &CalibrationConstants,
    job: &JobDescriptor,
    start: Cycle,
) -> Result<Vec<Cycle>> {
    let map = topo.address_map();
    let n = job.n_clusters;
    let mut wake = vec![Cycle::MAX; n];
    match job.mode {
        Mode::Baseline => {
            for (k, c) in (0..n).rev().enumerate() {
                let st = MulticastAddress::unicast(topo.cluster_base_flat(c) + mcip_offset(topo));
                let ports = mcast::route(st, &map)?;
                debug_assert_eq!(ports.len(), 1);
                let issue = start + k as Cycle * cal.host_store_interval;
                wake[c] = issue + cal.wakeup_hw_latency;
            }
        }
        Mode::Extended => {
            let reqs = mcast::cluster_prefix_requests(topo, n, mcip_offset(topo));
            for (k, st) in reqs.into_iter().enumerate() {
                let issue = start + k as Cycle * cal.host_store_interval;
                for p in mcast::route(st, &map)? {
                    wake[p] = issue + cal.wakeup_sw_total;
                }
            }
        }
        Mode::Ideal => return Err(Error::Argument("ideal runs have no wakeup phase".into())),
    }
    if wake.contains(&Cycle::MAX) {
        return Err(Error::Protocol("interrupt stores missed a selected cluster".into()));
    }
    Ok(wake)
}

/// Phase C: latency of the job-pointer load on `cluster`.
pub fn pointer_load_latency(
    topo: &Topology,
    cal: &CalibrationConstants,
    mode: Mode,
    cluster: usize,
) -> Cycle {
    match mode {
        Mode::Baseline => cal.pointer_load_latency(topo, cluster),
        _ => cal.tcdm_local_access,
    }
}

/// Request and response legs of an atomic increment on cluster 0's
/// counter, excluding the counter's own occupancy.
pub fn atomic_travel(cal: &CalibrationConstants, cluster: usize) -> (Cycle, Cycle) {
    if cluster == 0 {
        return (0, 0);
    }
    let extra = cal.barrier_atomic_remote - cal.barrier_atomic_local;
    (extra.div_ceil(2), extra / 2)
}

/// Central counter in cluster 0's TCDM used by the baseline completion
/// barrier. Increments are serialized in arrival order.
#[derive(Debug, Clone)]
pub struct CentralCounter {
    expected: usize,
    count: usize,
    free_at: Cycle,
    occupancy: Cycle,
}

impl CentralCounter {
    pub fn new(expected: usize, occupancy: Cycle) -> Self {
        Self {
            expected,
            count: 0,
            free_at: 0,
            occupancy,
        }
    }

    /// An increment reaches the counter at `now`. Returns when it completes
    /// and whether it was the last expected one.
    pub fn increment(&mut self, now: Cycle) -> (Cycle, bool) {
        let done = now.max(self.free_at) + self.occupancy;
        self.free_at = done;
        self.count += 1;
        (done, self.count == self.expected)
    }

    pub fn count(&self) -> usize {
        self.count
    }
}
