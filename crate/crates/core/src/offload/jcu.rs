// SPDX-License-Identifier: Apache-2.0

//! Counter-based job completion unit in the interrupt controller.

use crate::topology::Cycle;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobCompletionUnit {
    offload: u32,
    arrivals: u32,
    pending_interrupt: bool,
    /// A completion happened while the host interrupt was still pending.
    deferred: bool,
    fired: u64,
}

impl JobCompletionUnit {
    pub fn new() -> Self {
        Self::default()
    }

    /// Host side: number of clusters selected for the next job.
    pub fn program(&mut self, offload: u32) {
        self.offload = offload;
        self.arrivals = 0;
    }

    pub fn offload(&self) -> u32 {
        self.offload
    }

    pub fn arrivals(&self) -> u32 {
        self.arrivals
    }

    pub fn pending_interrupt(&self) -> bool {
        self.pending_interrupt
    }

    pub fn interrupts_fired(&self) -> u64 {
        self.fired
    }

    /// A cluster writes the arrivals register. Returns the cycle at which
    /// the host interrupt fires, if this arrival completes the job and no
    /// interrupt is pending.
    pub fn arrive(&mut self, now: Cycle) -> Result<Option<Cycle>> {
        if self.offload == 0 {
            return Err(Error::Protocol(
                "arrival at the job completion unit before the offload register was programmed"
                    .into(),
            ));
        }
        self.arrivals += 1;
        if self.arrivals < self.offload {
            return Ok(None);
        }
        self.arrivals = 0;
        if self.pending_interrupt {
            self.deferred = true;
            Ok(None)
        } else {
            Ok(Some(self.fire(now)))
        }
    }

    /// Host side: clears the pending interrupt. A deferred completion fires
    /// right away.
    pub fn clear_interrupt(&mut self, now: Cycle) -> Option<Cycle> {
        self.pending_interrupt = false;
        if std::mem::take(&mut self.deferred) {
            Some(self.fire(now))
        } else {
            None
        }
    }

    /// Marks an interrupt raised by another source as pending.
    pub fn set_pending(&mut self) {
        self.pending_interrupt = true;
    }

    fn fire(&mut self, now: Cycle) -> Cycle {
        self.pending_interrupt = true;
        self.fired += 1;
        now
    }
}
