// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::kernels::ProblemSize;
use crate::topology::Cycle;

use super::{Mode, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub cluster: usize,
    pub phase: Phase,
    pub start: Cycle,
    pub end: Cycle,
}

impl PhaseInterval {
    pub fn duration(&self) -> Cycle {
        self.end - self.start
    }
}

/// Duration statistics of one phase over the clusters that ran it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub name: String,
    pub min: Cycle,
    pub max: Cycle,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffloadReport {
    pub mode: Mode,
    pub kernel: String,
    pub size: ProblemSize,
    pub n_clusters: usize,
    pub intervals: Vec<PhaseInterval>,
    pub total: Cycle,
    /// Phases that ran, in protocol order.
    pub phases: Vec<PhaseStats>,
}

impl OffloadReport {
    pub(crate) fn new(
        mode: Mode,
        kernel: String,
        size: ProblemSize,
        n_clusters: usize,
        mut intervals: Vec<PhaseInterval>,
    ) -> Self {
        intervals.sort_by_key(|iv| (iv.cluster, iv.phase, iv.start));
        let start = intervals.iter().map(|iv| iv.start).min().unwrap_or(0);
        let end = intervals.iter().map(|iv| iv.end).max().unwrap_or(0);
        let phases = Phase::ALL
            .iter()
            .filter_map(|&p| {
                let d: Vec<Cycle> = intervals
                    .iter()
                    .filter(|iv| iv.phase == p)
                    .map(PhaseInterval::duration)
                    .collect();
                let (&min, &max) = (d.iter().min()?, d.iter().max()?);
                Some(PhaseStats {
                    name: p.label().to_string(),
                    min,
                    max,
                    mean: d.iter().sum::<Cycle>() as f64 / d.len() as f64,
                })
            })
            .collect();
        Self {
            mode,
            kernel,
            size,
            n_clusters,
            intervals,
            total: end - start,
            phases,
        }
    }

    pub fn interval(&self, cluster: usize, phase: Phase) -> Option<&PhaseInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.cluster == cluster && iv.phase == phase)
    }

    pub fn duration(&self, cluster: usize, phase: Phase) -> Option<Cycle> {
        self.interval(cluster, phase).map(PhaseInterval::duration)
    }

    pub fn stats(&self, phase: Phase) -> Option<&PhaseStats> {
        self.phases.iter().find(|s| s.name == phase.label())
    }

    /// Per-cluster durations of `phase`, indexed by cluster.
    pub fn durations(&self, phase: Phase) -> Vec<Cycle> {
        self.intervals
            .iter()
            .filter(|iv| iv.phase == phase)
            .map(PhaseInterval::duration)
            .collect()
    }

    pub fn record(&self) -> ReportRecord {
        ReportRecord {
            mode: self.mode,
            kernel: self.kernel.clone(),
            n: self.size.n,
            m: self.size.m,
            k: self.size.k,
            n_clusters: self.n_clusters,
            total_cycles: self.total,
            phases: self.phases.clone(),
        }
    }
}

/// Serialized form of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub mode: Mode,
    pub kernel: String,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M")]
    pub m: Option<u64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    pub n_clusters: usize,
    pub total_cycles: Cycle,
    pub phases: Vec<PhaseStats>,
}
