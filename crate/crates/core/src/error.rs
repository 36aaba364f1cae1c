// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of range: {what} = {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("multicast mask {mask:#x} expands to more than {limit} addresses")]
    Capacity { mask: u64, limit: usize },
    #[error("address set is not expressible as a single address/mask cube")]
    Encoding,
    #[error("address {addr:#x} (mask {mask:#x}) matches no master port")]
    Decode { addr: u64, mask: u64 },
    #[error("multicast {0} requests are not supported")]
    UnsupportedMulticast(&'static str),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("simulation exceeded the event cap of {0} events")]
    Livelock(u64),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no analytic model for kernel `{0}`")]
    ModelUnavailable(String),
    #[error("kernel definition error: {0}")]
    Kernel(String),
}

impl Error {
    /// Errors caused by user-supplied configuration rather than by the
    /// simulated job itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Topology(_) | Error::Config(_) | Error::ModelUnavailable(_) | Error::Kernel(_)
        )
    }
}
