// SPDX-License-Identifier: Apache-2.0

//! The nine-phase offload protocol.
//!
//! | phase | who      | what                                     |
//! |-------|----------|------------------------------------------|
//! | A     | host     | send job information                     |
//! | B     | host→all | wake the selected clusters               |
//! | C     | cluster  | retrieve the job pointer                 |
//! | D     | cluster  | retrieve the job arguments               |
//! | E     | cluster  | DMA the operands from the wide SPM       |
//! | F     | cluster  | execute                                  |
//! | G     | cluster  | DMA the results back to the wide SPM     |
//! | H     | cluster  | notify completion                        |
//! | I     | host     | take the interrupt and resume            |
//!
//! Baseline mode uses unicast stores, a central-counter barrier and a
//! TCDM-to-TCDM argument copy. Extended mode multicasts the job information
//! and the wakeup, and synchronizes through the [`JobCompletionUnit`].
//! Ideal mode runs E, F and G only, started at cycle 0 on every cluster.

mod jcu;
pub mod phases;
mod report;
mod sim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use jcu::JobCompletionUnit;
pub use report::{OffloadReport, PhaseInterval, PhaseStats, ReportRecord};

use crate::engine::Trace;
use crate::kernels::{KernelSpec, ProblemSize};
use crate::topology::{CalibrationConstants, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Extended,
    Ideal,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Extended, Mode::Ideal];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Extended => "extended",
            Mode::Ideal => "ideal",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "base" => Ok(Mode::Baseline),
            "extended" | "multicast" => Ok(Mode::Extended),
            "ideal" => Ok(Mode::Ideal),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::A,
        Phase::B,
        Phase::C,
        Phase::D,
        Phase::E,
        Phase::F,
        Phase::G,
        Phase::H,
        Phase::I,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["A", "B", "C", "D", "E", "F", "G", "H", "I"][self.index()]
    }

    pub fn is_host(self) -> bool {
        matches!(self, Phase::A | Phase::I)
    }

    /// Phases that make up the offload overhead rather than the job.
    pub fn is_offload(self) -> bool {
        !matches!(self, Phase::E | Phase::F | Phase::G)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct JobDescriptor {
    pub kernel: KernelSpec,
    pub size: ProblemSize,
    /// Clusters `0..n_clusters` take part.
    pub n_clusters: usize,
    pub mode: Mode,
    pub arg_bytes: u64,
}

impl JobDescriptor {
    pub fn new(kernel: KernelSpec, size: ProblemSize, n_clusters: usize, mode: Mode) -> Self {
        let arg_bytes = kernel.arg_bytes();
        Self {
            kernel,
            size,
            n_clusters,
            mode,
            arg_bytes,
        }
    }

    pub fn validate(&self, topo: &Topology) -> Result<()> {
        if self.n_clusters == 0 || self.n_clusters > topo.n_clusters() {
            return Err(Error::Argument(format!(
                "n_clusters = {} outside 1..={}",
                self.n_clusters,
                topo.n_clusters()
            )));
        }
        if self.arg_bytes == 0 {
            return Err(Error::Argument("arg_bytes must be positive".into()));
        }
        self.kernel.check_partition(self.n_clusters, &self.size)
    }
}

/// Simulates one offload and reports every phase interval.
pub fn run_offload(
    topo: &Topology,
    cal: &CalibrationConstants,
    job: &JobDescriptor,
) -> Result<OffloadReport> {
    run_offload_traced(topo, cal, job, false).map(|(r, _)| r)
}

/// As [`run_offload`], also returning the event trace when `trace` is set.
pub fn run_offload_traced(
    topo: &Topology,
    cal: &CalibrationConstants,
    job: &JobDescriptor,
    trace: bool,
) -> Result<(OffloadReport, Trace)> {
    topo.validate()?;
    cal.validate()?;
    job.validate(topo)?;
    sim::OffloadSim::new(topo, cal, job, trace)?.run()
}
