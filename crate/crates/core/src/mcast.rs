// SPDX-License-Identifier: Apache-2.0

//! Multicast addressing on the narrow crossbar.
//!
//! A request carries one destination address plus a mask; every set mask bit
//! is a don't-care, so a request with `k` mask bits names `2^k` addresses.
//! Master-port windows are described the same way (aligned power-of-two
//! ranges), which reduces address decoding to a single bitwise test.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::topology::Topology;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MulticastAddress {
    pub addr: u64,
    /// 1-bits are don't-cares.
    pub mask: u64,
}

impl MulticastAddress {
    pub fn unicast(addr: u64) -> Self {
        Self { addr, mask: 0 }
    }

    pub fn new(addr: u64, mask: u64) -> Self {
        Self { addr, mask }
    }

    pub fn is_unicast(&self) -> bool {
        self.mask == 0
    }

    /// Number of encoded addresses, `2^popcount(mask)`.
    pub fn cardinality(&self) -> u128 {
        1u128 << self.mask.count_ones()
    }
}

/// A master-port window: `length` is a power of two and `base` a multiple
/// of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressRange {
    pub base: u64,
    pub length: u64,
    pub port: usize,
}

impl AddressRange {
    pub fn new(base: u64, length: u64, port: usize) -> Result<Self> {
        let r = Self { base, length, port };
        if !r.is_cube() {
            return Err(Error::Argument(format!(
                "range {base:#x}+{length:#x} is not an aligned power-of-two window"
            )));
        }
        Ok(r)
    }

    pub fn is_cube(&self) -> bool {
        self.length.is_power_of_two() && self.base.is_multiple_of(self.length)
    }

    pub fn cube_mask(&self) -> u64 {
        self.length - 1
    }

    pub fn as_cube(&self) -> MulticastAddress {
        MulticastAddress::new(self.base, self.cube_mask())
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr - self.base < self.length
    }

    pub fn overlaps(&self, other: &AddressRange) -> bool {
        self.base < other.base.saturating_add(other.length)
            && other.base < self.base.saturating_add(self.length)
    }
}

/// Every address encoded by `m`. Fails when the set would exceed `limit`.
pub fn expand(m: MulticastAddress, limit: usize) -> Result<BTreeSet<u64>> {
    if m.cardinality() > limit as u128 {
        return Err(Error::Capacity {
            mask: m.mask,
            limit,
        });
    }
    let fixed = m.addr & !m.mask;
    let mut out = BTreeSet::new();
    // Enumerate all submasks of `mask`, including 0 and `mask` itself.
    let mut sub = 0u64;
    loop {
        out.insert(fixed | sub);
        if sub == m.mask {
            break;
        }
        sub = sub.wrapping_sub(m.mask) & m.mask;
    }
    Ok(out)
}

/// Smallest cube equal to `addresses`; the address field is the minimum
/// member.
pub fn encode(addresses: &BTreeSet<u64>) -> Result<MulticastAddress> {
    let Some(&first) = addresses.first() else {
        return Err(Error::Argument("cannot encode an empty address set".into()));
    };
    let mask = addresses.iter().fold(0u64, |acc, &a| acc | (a ^ first));
    let m = MulticastAddress::new(first, mask);
    if m.cardinality() != addresses.len() as u128 {
        return Err(Error::Encoding);
    }
    Ok(m)
}

/// Crossbar decode condition: true iff the request cube and the window
/// cube share at least one address.
pub fn port_match(req: MulticastAddress, range: &AddressRange) -> bool {
    ((req.mask | range.cube_mask()) | !(req.addr ^ range.base)) == u64::MAX
}

/// Master ports a write request is forwarded to.
pub fn route(req: MulticastAddress, map: &[AddressRange]) -> Result<BTreeSet<usize>> {
    let ports: BTreeSet<usize> = map
        .iter()
        .filter(|r| port_match(req, r))
        .map(|r| r.port)
        .collect();
    if ports.is_empty() {
        return Err(Error::Decode {
            addr: req.addr,
            mask: req.mask,
        });
    }
    Ok(ports)
}

/// Read requests use the classic single-port decode; masked reads are
/// rejected.
pub fn route_read(req: MulticastAddress, map: &[AddressRange]) -> Result<usize> {
    if !req.is_unicast() {
        return Err(Error::UnsupportedMulticast("read"));
    }
    route(req, map).map(|p| *p.first().expect("route never returns an empty set"))
}

/// Aligned power-of-two blocks `(start, len)` that exactly tile the cluster
/// prefix `0..n`. A power-of-two `n` yields a single block.
pub fn prefix_cubes(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0usize;
    while start < n {
        let align = if start == 0 {
            usize::MAX
        } else {
            1 << start.trailing_zeros()
        };
        let mut len = 1usize << (usize::BITS - 1 - (n - start).leading_zeros());
        len = len.min(align);
        out.push((start, len));
        start += len;
    }
    out
}

/// Multicast stores reaching `offset` inside each cluster of `0..n`.
pub fn cluster_prefix_requests(topo: &Topology, n: usize, offset: u64) -> Vec<MulticastAddress> {
    prefix_cubes(n)
        .into_iter()
        .map(|(start, len)| {
            MulticastAddress::new(
                topo.cluster_base_flat(start) + offset,
                (len as u64 - 1) * topo.cluster_stride_bytes,
            )
        })
        .collect()
}
