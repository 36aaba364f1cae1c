// SPDX-License-Identifier: Apache-2.0

//! Transaction-level model of job offload from a host core onto a
//! hierarchical manycore accelerator.
//!
//! The crate is organised bottom-up:
//!
//! * [`topology`]: system structure, memory map and latency calibration.
//! * [`mcast`]: address/mask multicast encoding and crossbar port matching.
//! * [`engine`]: deterministic discrete-event kernel and the contended
//!   wide-memory port.
//! * [`kernels`]: per-cluster cost descriptors for the offloaded workloads.
//! * [`offload`]: the host and cluster state machines for the nine offload
//!   phases in baseline, extended and ideal configurations.
//! * [`analytic`]: closed-form runtime models and speedup metrics.
//! * [`experiment`]: sweep and model-validation drivers shared by the CLI
//!   and the Python bindings.

pub mod analytic;
pub mod config;
pub mod engine;
mod error;
pub mod experiment;
pub mod kernels;
pub mod mcast;
pub mod offload;
pub mod topology;

pub use error::{Error, Result};
