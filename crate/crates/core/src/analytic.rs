// SPDX-License-Identifier: Apache-2.0

//! Closed-form runtime models of offloaded jobs.
//!
//! All models are evaluated in `f64` and never rounded. The AXPY model is
//! the sum of the per-phase critical paths; the ATAX model is stated as a
//! sum of terms rather than phases, and is reported that way.

use serde::Serialize;

use crate::kernels::ProblemSize;
use crate::{Error, Result};

/// Wide-network beat, in bytes.
const BEAT: f64 = 64.0;
/// Double-precision element, in bytes.
const ELEM: f64 = 8.0;

// Retrieve-operands: setup of both transfers and DMA round trip.
const E_SETUP: f64 = 53.0;
const DMA_LATENCY: f64 = 55.0;
// Job execution: initialization and cycles per element on one core.
const F_INIT: f64 = 55.0;
const F_CYCLES_PER_ELEM: f64 = 1.47;
// Writeback: setup of a single transfer.
const G_SETUP: f64 = 21.0;

const AXPY_CONSTANT: f64 = 400.0;
const AXPY_PARALLEL: f64 = 2.47;
const ATAX_CONSTANT: f64 = 566.0;
const ATAX_PER_ELEMENT: f64 = 3.98;
const ATAX_PARALLEL: f64 = 2.9;

/// Retrieve-operands time for AXPY: both vectors stream through the single
/// wide-memory port, whatever the cluster count.
pub fn phase_e_axpy(n_elems: f64) -> f64 {
    E_SETUP + DMA_LATENCY + 2.0 * n_elems * ELEM / BEAT
}

/// AXPY execution time on each of `clusters` clusters of eight cores.
pub fn phase_f_axpy(clusters: f64, n_elems: f64) -> f64 {
    let throughput = 8.0 * clusters / F_CYCLES_PER_ELEM;
    F_INIT + n_elems / throughput
}

/// Writeback of each cluster's `N/n` result elements.
pub fn phase_g(clusters: f64, n_elems: f64) -> f64 {
    G_SETUP + DMA_LATENCY + n_elems * ELEM / (clusters * BEAT)
}

pub fn axpy_total(clusters: f64, n_elems: f64) -> f64 {
    AXPY_CONSTANT + n_elems / 4.0 + AXPY_PARALLEL * n_elems / (clusters * 8.0)
}

pub fn atax_total(clusters: f64, n: f64, m: f64) -> f64 {
    ATAX_CONSTANT
        + ATAX_PER_ELEMENT * n * m
        + ATAX_PARALLEL * n / (clusters * 8.0)
        + n * (1.0 + m) / 8.0 * clusters
}

/// Sum over phases of the slowest cluster in that phase. Rows are phases,
/// columns clusters.
pub fn compose(per_cluster_phase_times: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = per_cluster_phase_times.first() else {
        return Err(Error::Shape("empty phase matrix".into()));
    };
    let width = first.len();
    if width == 0 {
        return Err(Error::Shape("phase matrix has no clusters".into()));
    }
    let mut total = 0.0;
    for (p, row) in per_cluster_phase_times.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Shape(format!(
                "phase {p} has {} clusters, expected {width}",
                row.len()
            )));
        }
        total += row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(total)
}

pub fn relative_error(measured: f64, predicted: f64) -> Result<f64> {
    if !(measured > 0.0) {
        return Err(Error::Argument(format!(
            "measured runtime must be positive, got {measured}"
        )));
    }
    Ok((measured - predicted).abs() / measured)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupMetrics {
    pub ideal_speedup: f64,
    pub ext_speedup: f64,
    /// Share of the ideal speedup the extensions recover.
    pub restored_fraction: f64,
    /// False when the inputs violate `ideal <= extended <= base`.
    pub ordered: bool,
}

pub fn speedup_metrics(base: f64, ideal: f64, extended: f64) -> Result<SpeedupMetrics> {
    for (name, v) in [("base", base), ("ideal", ideal), ("extended", extended)] {
        if !(v > 0.0) {
            return Err(Error::Argument(format!("{name} runtime must be positive, got {v}")));
        }
    }
    let ideal_speedup = base / ideal;
    let ext_speedup = base / extended;
    Ok(SpeedupMetrics {
        ideal_speedup,
        ext_speedup,
        restored_fraction: ext_speedup / ideal_speedup,
        ordered: ideal <= extended && extended <= base,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticEstimate {
    pub kernel: String,
    pub n_clusters: usize,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    /// `(label, cycles)`, summing to `total`.
    pub per_phase: Vec<(String, f64)>,
    pub total: f64,
}

/// Per-phase and total prediction for a kernel with a published model.
pub fn estimate(kernel: &str, clusters: usize, size: &ProblemSize) -> Result<AnalyticEstimate> {
    if clusters == 0 {
        return Err(Error::Argument("cluster count must be positive".into()));
    }
    let n = clusters as f64;
    let big_n = size.n as f64;
    let per_phase: Vec<(String, f64)> = match kernel.to_ascii_lowercase().as_str() {
        "axpy" => {
            let (e, f, g) = (
                phase_e_axpy(big_n),
                phase_f_axpy(n, big_n),
                phase_g(n, big_n),
            );
            // The constant of the total model covers A-D, H, I and the fixed
            // parts of E, F and G.
            let offload = AXPY_CONSTANT - (E_SETUP + DMA_LATENCY) - F_INIT - (G_SETUP + DMA_LATENCY);
            vec![
                ("A-D,H,I".into(), offload),
                ("E".into(), e),
                ("F".into(), f),
                ("G".into(), g),
            ]
        }
        "atax" => {
            let m = size.m.unwrap_or(size.n) as f64;
            vec![
                ("constant".into(), ATAX_CONSTANT),
                ("sequential".into(), ATAX_PER_ELEMENT * big_n * m),
                ("parallel".into(), ATAX_PARALLEL * big_n / (n * 8.0)),
                ("broadcast".into(), big_n * (1.0 + m) / 8.0 * n),
            ]
        }
        other => return Err(Error::ModelUnavailable(other.to_string())),
    };
    let total = per_phase.iter().map(|p| p.1).sum();
    Ok(AnalyticEstimate {
        kernel: kernel.to_ascii_lowercase(),
        n_clusters: clusters,
        n: size.n,
        m: if kernel.eq_ignore_ascii_case("atax") {
            Some(size.m.unwrap_or(size.n))
        } else {
            None
        },
        per_phase,
        total,
    })
}

/// Cluster count in `candidates` with the lowest predicted runtime; ties go
/// to the smaller count.
pub fn best_cluster_count(
    kernel: &str,
    size: &ProblemSize,
    candidates: impl IntoIterator<Item = usize>,
) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for n in candidates {
        let t = estimate(kernel, n, size)?.total;
        if best.is_none_or(|(_, bt)| t < bt) {
            best = Some((n, t));
        }
    }
    Ok(best)
}
