// SPDX-License-Identifier: Apache-2.0

//! System structure, memory map and latency calibration.
//!
//! Everything the simulator knows about the hardware lives here. A
//! [`Topology`] fixes counts, sizes and the cluster address layout; a
//! [`CalibrationConstants`] fixes every latency the protocol model charges.
//! Both are plain values: a simulation borrows them immutably for its whole
//! lifetime.

use serde::{Deserialize, Serialize};

use crate::mcast::AddressRange;
use crate::{Error, Result};

pub type Cycle = u64;

/// Counts, sizes and address layout of the host + accelerator system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub n_quadrants: usize,
    pub clusters_per_quadrant: usize,
    pub compute_cores_per_cluster: usize,
    pub dma_cores_per_cluster: usize,
    pub tcdm_bytes: u64,
    pub tcdm_banks: usize,
    pub spm_wide_bytes: u64,
    pub spm_narrow_bytes: u64,
    /// Narrow network width in bytes per cycle.
    pub narrow_width_bytes: u64,
    /// Wide network width in bytes per cycle (one beat).
    pub wide_width_bytes: u64,
    pub cluster_stride_bytes: u64,
    pub cluster_region_base: u64,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            n_quadrants: 8,
            clusters_per_quadrant: 4,
            compute_cores_per_cluster: 8,
            dma_cores_per_cluster: 1,
            tcdm_bytes: 128 * 1024,
            tcdm_banks: 32,
            spm_wide_bytes: 1024 * 1024,
            spm_narrow_bytes: 512 * 1024,
            narrow_width_bytes: 8,
            wide_width_bytes: 64,
            cluster_stride_bytes: 0x4_0000,
            cluster_region_base: 0x1000_0000,
        }
    }
}

/// Fixed base of the interrupt controller window.
pub const CLINT_BASE: u64 = 0x0400_0000;
pub const CLINT_BYTES: u64 = 0x10_0000;
/// Fixed bases of the system scratchpads.
pub const SPM_NARROW_BASE: u64 = 0x7000_0000;
pub const SPM_WIDE_BASE: u64 = 0x8000_0000;

/// What sits behind a master port of the top-level narrow crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    Cluster(usize),
    Clint,
    SpmNarrow,
    SpmWide,
}

impl Topology {
    pub fn n_clusters(&self) -> usize {
        self.n_quadrants * self.clusters_per_quadrant
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Topology(msg));
        if self.n_quadrants == 0 || self.clusters_per_quadrant == 0 {
            return bad("quadrant and cluster counts must be positive".into());
        }
        if self.wide_width_bytes == 0 || self.narrow_width_bytes == 0 {
            return bad("network widths must be positive".into());
        }
        if !self.cluster_stride_bytes.is_power_of_two() {
            return bad(format!(
                "cluster_stride_bytes {:#x} is not a power of two",
                self.cluster_stride_bytes
            ));
        }
        if self.cluster_stride_bytes < self.tcdm_bytes {
            return bad(format!(
                "cluster_stride_bytes {:#x} is smaller than tcdm_bytes {:#x}",
                self.cluster_stride_bytes, self.tcdm_bytes
            ));
        }
        let region = self.cluster_region_bytes();
        if region == 0 || !self.cluster_region_base.is_multiple_of(region.next_power_of_two()) {
            return bad(format!(
                "cluster_region_base {:#x} is not aligned to the cluster region size {:#x}",
                self.cluster_region_base, region
            ));
        }
        let map = self.address_map();
        for (i, a) in map.iter().enumerate() {
            for b in &map[i + 1..] {
                if a.overlaps(b) {
                    return bad(format!(
                        "address ranges {:#x}+{:#x} and {:#x}+{:#x} overlap",
                        a.base, a.length, b.base, b.length
                    ));
                }
            }
        }
        Ok(())
    }

    /// Total bytes spanned by all cluster windows.
    pub fn cluster_region_bytes(&self) -> u64 {
        self.n_clusters() as u64 * self.cluster_stride_bytes
    }

    pub fn flat_index(&self, quadrant: usize, cluster: usize) -> Result<usize> {
        if quadrant >= self.n_quadrants {
            return Err(Error::Index {
                what: "quadrant",
                index: quadrant,
                limit: self.n_quadrants,
            });
        }
        if cluster >= self.clusters_per_quadrant {
            return Err(Error::Index {
                what: "cluster",
                index: cluster,
                limit: self.clusters_per_quadrant,
            });
        }
        Ok(quadrant * self.clusters_per_quadrant + cluster)
    }

    pub fn quadrant_of(&self, flat: usize) -> usize {
        flat / self.clusters_per_quadrant
    }

    pub fn cluster_base_address(&self, quadrant: usize, cluster: usize) -> Result<u64> {
        let flat = self.flat_index(quadrant, cluster)?;
        Ok(self.cluster_base_flat(flat))
    }

    /// Base address of a cluster by flattened index. The caller guarantees
    /// `flat < n_clusters()`.
    pub fn cluster_base_flat(&self, flat: usize) -> u64 {
        self.cluster_region_base + flat as u64 * self.cluster_stride_bytes
    }

    /// Port index of the interrupt controller; cluster ports come first.
    pub fn clint_port(&self) -> usize {
        self.n_clusters()
    }

    pub fn target_of_port(&self, port: usize) -> Option<Target> {
        let n = self.n_clusters();
        match port {
            p if p < n => Some(Target::Cluster(p)),
            p if p == n => Some(Target::Clint),
            p if p == n + 1 => Some(Target::SpmNarrow),
            p if p == n + 2 => Some(Target::SpmWide),
            _ => None,
        }
    }

    /// Address map of the top-level narrow crossbar, ordered by port.
    ///
    /// One window per cluster, then the CLINT and the two scratchpads.
    /// Every entry is a cube: a power-of-two length at an aligned base.
    pub fn address_map(&self) -> Vec<AddressRange> {
        let mut map: Vec<AddressRange> = (0..self.n_clusters())
            .map(|c| AddressRange {
                base: self.cluster_base_flat(c),
                length: self.cluster_stride_bytes,
                port: c,
            })
            .collect();
        let n = self.n_clusters();
        map.push(AddressRange {
            base: CLINT_BASE,
            length: CLINT_BYTES,
            port: n,
        });
        map.push(AddressRange {
            base: SPM_NARROW_BASE,
            length: self.spm_narrow_bytes.next_power_of_two(),
            port: n + 1,
        });
        map.push(AddressRange {
            base: SPM_WIDE_BASE,
            length: self.spm_wide_bytes.next_power_of_two(),
            port: n + 2,
        });
        map
    }
}

/// Every latency the protocol model charges, in cycles.
///
/// Values without a measured counterpart are calibration knobs; their
/// defaults and the targets they were tuned against are listed in
/// `docs/calibration.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConstants {
    /// Instructions to program the two operand transfers of phase E.
    pub dma_setup_two_transfers: Cycle,
    /// Instructions to program a single transfer (phases D and G).
    pub dma_setup_one_transfer: Cycle,
    /// AR → first R → AW/W → B round trip of one DMA transfer.
    pub dma_round_trip: Cycle,
    /// Store leaving the host until the cluster cores are awake.
    pub wakeup_hw_latency: Cycle,
    /// Multicast wakeup as observed by the clusters, hardware included.
    pub wakeup_sw_total: Cycle,
    /// Spacing of consecutive per-cluster interrupt stores in baseline mode.
    pub host_store_interval: Cycle,
    pub tcdm_local_access: Cycle,
    pub narrow_same_quadrant: Cycle,
    pub narrow_cross_quadrant: Cycle,
    pub phase_a_cost: Cycle,
    /// Host interrupt entry, clear and return to the workload.
    pub phase_i_cost: Cycle,
    /// Counter occupancy of one atomic increment (also its local latency).
    pub barrier_atomic_local: Cycle,
    /// Uncontended latency of an atomic increment from a remote cluster.
    pub barrier_atomic_remote: Cycle,
    /// Store from a cluster to the CLINT (completion unit or host MSIP).
    pub completion_unit_notify: Cycle,
    pub cluster_hw_barrier: Cycle,
    /// ATAX compute cost per matrix element.
    pub c_atax: f64,
    /// GEMM compute cost per multiply-accumulate per compute core.
    pub c_gemm: f64,
}

impl Default for CalibrationConstants {
    fn default() -> Self {
        Self {
            dma_setup_two_transfers: 53,
            dma_setup_one_transfer: 21,
            dma_round_trip: 55,
            wakeup_hw_latency: 39,
            wakeup_sw_total: 47,
            host_store_interval: 12,
            tcdm_local_access: 5,
            narrow_same_quadrant: 15,
            narrow_cross_quadrant: 25,
            phase_a_cost: 40,
            phase_i_cost: 65,
            barrier_atomic_local: 10,
            barrier_atomic_remote: 30,
            completion_unit_notify: 28,
            cluster_hw_barrier: 5,
            c_atax: 4.0,
            c_gemm: 1.0,
        }
    }
}

impl CalibrationConstants {
    pub fn validate(&self) -> Result<()> {
        if self.barrier_atomic_remote < self.barrier_atomic_local {
            return Err(Error::Config(
                "barrier_atomic_remote must not be below barrier_atomic_local".into(),
            ));
        }
        if self.wakeup_sw_total < self.wakeup_hw_latency {
            return Err(Error::Config(
                "wakeup_sw_total must include wakeup_hw_latency".into(),
            ));
        }
        for (name, v) in [("c_atax", self.c_atax), ("c_gemm", self.c_gemm)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }

    /// Setup instructions for a phase that programs `transfers` DMA
    /// transfers. The per-transfer increment extrapolates the one- and
    /// two-transfer measurements.
    pub fn dma_setup(&self, transfers: usize) -> Cycle {
        match transfers {
            0 => 0,
            1 => self.dma_setup_one_transfer,
            k => {
                let step = self
                    .dma_setup_two_transfers
                    .saturating_sub(self.dma_setup_one_transfer);
                self.dma_setup_two_transfers + step * (k as u64 - 2)
            }
        }
    }

    /// Narrow-network load latency from `cluster` into cluster 0's TCDM.
    pub fn pointer_load_latency(&self, topo: &Topology, cluster: usize) -> Cycle {
        if cluster == 0 {
            self.tcdm_local_access
        } else if topo.quadrant_of(cluster) == topo.quadrant_of(0) {
            self.narrow_same_quadrant
        } else {
            self.narrow_cross_quadrant
        }
    }
}
