// SPDX-License-Identifier: Apache-2.0

//! Grid sweeps and model validation.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::analytic::{self, SpeedupMetrics};
use crate::config::SystemConfig;
use crate::engine::Trace;
use crate::kernels::{KernelRegistry, ProblemSize};
use crate::offload::{self, JobDescriptor, Mode, OffloadReport, PhaseStats};
use crate::topology::{CalibrationConstants, Cycle, Topology};
use crate::{Error, Result};

pub const POWERS_OF_TWO: [usize; 6] = [1, 2, 4, 8, 16, 32];

/// A topology, its calibration and the kernels that can be offloaded to it.
#[derive(Debug, Clone)]
pub struct Setup {
    pub topology: Topology,
    pub calibration: CalibrationConstants,
    pub kernels: KernelRegistry,
}

impl Setup {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            topology: cfg.topology.clone(),
            calibration: cfg.calibration.clone(),
            kernels: cfg.kernel_registry()?,
        })
    }

    pub fn job(&self, kernel: &str, size: ProblemSize, n: usize, mode: Mode) -> Result<JobDescriptor> {
        Ok(JobDescriptor::new(self.kernels.get(kernel)?.clone(), size, n, mode))
    }

    pub fn run(&self, kernel: &str, size: ProblemSize, n: usize, mode: Mode) -> Result<OffloadReport> {
        offload::run_offload(&self.topology, &self.calibration, &self.job(kernel, size, n, mode)?)
    }

    pub fn run_traced(
        &self,
        kernel: &str,
        size: ProblemSize,
        n: usize,
        mode: Mode,
    ) -> Result<(OffloadReport, Trace)> {
        let job = self.job(kernel, size, n, mode)?;
        offload::run_offload_traced(&self.topology, &self.calibration, &job, true)
    }
}

impl Default for Setup {
    fn default() -> Self {
        Self::new(&SystemConfig::default()).expect("default configuration is valid")
    }
}

fn sizes_de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ProblemSize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Str(String),
    }
    Vec::<Raw>::deserialize(d)?
        .into_iter()
        .map(|r| match r {
            Raw::Int(n) => Ok(ProblemSize::vector(n)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        })
        .collect()
}

fn sizes_ser<S: serde::Serializer>(v: &[ProblemSize], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(ToString::to_string))
}

/// Cartesian grid of offloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kernels: Vec<String>,
    /// Problem sizes. Under weak scaling these are per-cluster sizes and
    /// the partitioned dimension is multiplied by the cluster count.
    #[serde(deserialize_with = "sizes_de", serialize_with = "sizes_ser")]
    pub sizes: Vec<ProblemSize>,
    #[serde(default = "default_clusters")]
    pub clusters: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub weak_scaling: bool,
}

fn default_clusters() -> Vec<usize> {
    POWERS_OF_TWO.to_vec()
}

fn default_modes() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

impl ExperimentPlan {
    pub fn new(kernels: &[&str], sizes: &[ProblemSize], clusters: &[usize], modes: &[Mode]) -> Self {
        Self {
            kernels: kernels.iter().map(|s| s.to_string()).collect(),
            sizes: sizes.to_vec(),
            clusters: clusters.to_vec(),
            modes: modes.to_vec(),
            weak_scaling: false,
        }
    }

    pub fn weak(mut self) -> Self {
        self.weak_scaling = true;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty() || self.sizes.is_empty() || self.clusters.is_empty() || self.modes.is_empty()
    }

    /// Grid points in deterministic order: kernel, size, cluster count.
    pub fn points(&self, kernels: &KernelRegistry) -> Result<Vec<(String, ProblemSize, usize)>> {
        let mut out = Vec::new();
        for k in &self.kernels {
            let spec = kernels.get(k)?;
            for s in &self.sizes {
                for &n in &self.clusters {
                    let size = if self.weak_scaling { spec.scaled(s, n as u64) } else { *s };
                    out.push((spec.name().to_string(), size, n));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
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
    /// This mode's total minus the ideal total at the same point.
    pub overhead: i64,
    pub ideal_speedup: f64,
    pub ext_speedup: f64,
    pub restored_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepWarning {
    pub kernel: String,
    pub size: String,
    pub n_clusters: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum SweepRecord {
    Result(SweepRow),
    Warning(SweepWarning),
}

/// Totals of the three modes at one grid point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub baseline: OffloadReport,
    pub extended: OffloadReport,
    pub ideal: OffloadReport,
}

impl PointResult {
    pub fn report(&self, mode: Mode) -> &OffloadReport {
        match mode {
            Mode::Baseline => &self.baseline,
            Mode::Extended => &self.extended,
            Mode::Ideal => &self.ideal,
        }
    }

    pub fn metrics(&self) -> Result<SpeedupMetrics> {
        analytic::speedup_metrics(
            self.baseline.total as f64,
            self.ideal.total as f64,
            self.extended.total as f64,
        )
    }
}

pub fn run_point(setup: &Setup, kernel: &str, size: ProblemSize, n: usize) -> Result<PointResult> {
    Ok(PointResult {
        baseline: setup.run(kernel, size, n, Mode::Baseline)?,
        extended: setup.run(kernel, size, n, Mode::Extended)?,
        ideal: setup.run(kernel, size, n, Mode::Ideal)?,
    })
}

fn rows(plan: &ExperimentPlan, p: &PointResult) -> Result<Vec<SweepRecord>> {
    let m = p.metrics()?;
    Ok(plan
        .modes
        .iter()
        .map(|&mode| {
            let r = p.report(mode);
            SweepRecord::Result(SweepRow {
                mode,
                kernel: r.kernel.clone(),
                n: r.size.n,
                m: r.size.m,
                k: r.size.k,
                n_clusters: r.n_clusters,
                total_cycles: r.total,
                phases: r.phases.clone(),
                overhead: r.total as i64 - p.ideal.total as i64,
                ideal_speedup: m.ideal_speedup,
                ext_speedup: m.ext_speedup,
                restored_fraction: m.restored_fraction,
            })
        })
        .collect())
}

/// Runs every grid point in every mode. Partition violations become warning
/// records; other errors abort the sweep.
pub fn sweep(setup: &Setup, plan: &ExperimentPlan) -> Result<Vec<SweepRecord>> {
    if plan.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let points = plan.points(&setup.kernels)?;
    let per_point: Vec<Result<Vec<SweepRecord>>> = points
        .par_iter()
        .map(|(kernel, size, n)| match run_point(setup, kernel, *size, *n) {
            Ok(p) => rows(plan, &p),
            Err(Error::Partition(msg)) => Ok(vec![SweepRecord::Warning(SweepWarning {
                kernel: kernel.clone(),
                size: size.to_string(),
                n_clusters: *n,
                message: msg,
            })]),
            Err(e) => Err(e),
        })
        .collect();
    let mut out = Vec::new();
    for r in per_point {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub kernel: String,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M")]
    pub m: Option<u64>,
    pub n_clusters: usize,
    pub simulated: Cycle,
    pub predicted: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTable {
    pub rows: Vec<ValidationRow>,
    pub max_relative_error: f64,
}

/// Extended-mode simulation against the closed-form model at every point.
pub fn validate(setup: &Setup, plan: &ExperimentPlan) -> Result<ValidationTable> {
    if plan.is_empty() {
        return Err(Error::Config("empty validation grid".into()));
    }
    let points = plan.points(&setup.kernels)?;
    for (k, s, n) in &points {
        analytic::estimate(k, *n, s)?;
    }
    let rows: Vec<ValidationRow> = points
        .par_iter()
        .map(|(kernel, size, n)| {
            let sim = setup.run(kernel, *size, *n, Mode::Extended)?;
            let predicted = analytic::estimate(kernel, *n, size)?.total;
            Ok(ValidationRow {
                kernel: kernel.clone(),
                n: size.n,
                m: size.m,
                n_clusters: *n,
                simulated: sim.total,
                predicted,
                relative_error: analytic::relative_error(sim.total as f64, predicted)?,
            })
        })
        .collect::<Result<_>>()?;
    let max_relative_error = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Ok(ValidationTable {
        rows,
        max_relative_error,
    })
}

/// AXPY sizes of the validation grid.
pub fn axpy_validation_plan() -> ExperimentPlan {
    let sizes: Vec<ProblemSize> = [256, 1024, 4096].map(ProblemSize::vector).to_vec();
    ExperimentPlan::new(&["axpy"], &sizes, &POWERS_OF_TWO, &[Mode::Extended])
}

/// ATAX sizes of the validation grid (square matrices).
pub fn atax_validation_plan() -> ExperimentPlan {
    let sizes: Vec<ProblemSize> = [64, 128, 256].map(|n| ProblemSize::matrix(n, n)).to_vec();
    ExperimentPlan::new(&["atax"], &sizes, &POWERS_OF_TWO, &[Mode::Extended])
}
