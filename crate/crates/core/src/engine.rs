// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event kernel.
//!
//! [`Simulation`] is a cycle clock plus a priority queue ordered by
//! `(time, sequence)`, so events scheduled for the same cycle fire in the
//! order they were scheduled. [`SharedPort`] models a single-ported memory
//! that serves one beat per cycle and arbitrates round-robin among the
//! transfers waiting on it.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::topology::Cycle;
use crate::{Error, Result};

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<A> {
    pub time: Cycle,
    pub sequence: u64,
    pub action: A,
}

struct Queued<A>(Event<A>);

impl<A> PartialEq for Queued<A> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<A> Eq for Queued<A> {}
impl<A> PartialOrd for Queued<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<A> Ord for Queued<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}
impl<A> Queued<A> {
    fn key(&self) -> (Cycle, u64) {
        (self.0.time, self.0.sequence)
    }
}

pub struct Simulation<A> {
    now: Cycle,
    next_sequence: u64,
    fired: u64,
    event_cap: u64,
    queue: BinaryHeap<Reverse<Queued<A>>>,
}

impl<A> Default for Simulation<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Simulation<A> {
    pub fn new() -> Self {
        Self::with_event_cap(DEFAULT_EVENT_CAP)
    }

    pub fn with_event_cap(event_cap: u64) -> Self {
        Self {
            now: 0,
            next_sequence: 0,
            fired: 0,
            event_cap,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> Cycle {
        self.now
    }

    pub fn events_fired(&self) -> u64 {
        self.fired
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn schedule(&mut self, delay: Cycle, action: A) -> EventHandle {
        self.schedule_at(self.now + delay, action)
    }

    /// Schedules at an absolute time. Times in the past are clamped to now.
    pub fn schedule_at(&mut self, time: Cycle, action: A) -> EventHandle {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Queued(Event {
            time: time.max(self.now),
            sequence,
            action,
        })));
        EventHandle(sequence)
    }

    /// Pops the next event and advances the clock to it.
    pub fn next_event(&mut self) -> Result<Option<Event<A>>> {
        let Some(Reverse(Queued(ev))) = self.queue.pop() else {
            return Ok(None);
        };
        self.fired += 1;
        if self.fired > self.event_cap {
            return Err(Error::Livelock(self.event_cap));
        }
        self.now = ev.time;
        Ok(Some(ev))
    }

    /// Drains the queue through `handler`; returns the time of the last
    /// event, or the current time when nothing was scheduled.
    pub fn run_until_idle<F>(&mut self, mut handler: F) -> Result<Cycle>
    where
        F: FnMut(&mut Self, Event<A>) -> Result<()>,
    {
        while let Some(ev) = self.next_event()? {
            handler(self, ev)?;
        }
        Ok(self.now)
    }
}

/// One record of the optional event trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub cycle: Cycle,
    pub actor: String,
    pub phase: String,
    pub edge: &'static str,
}

#[derive(Debug, Default, Clone)]
pub struct Trace {
    enabled: bool,
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            records: Vec::new(),
        }
    }

    pub fn record(&mut self, cycle: Cycle, actor: impl Into<String>, phase: &str, edge: &'static str) {
        if self.enabled {
            self.records.push(TraceRecord {
                cycle,
                actor: actor.into(),
                phase: phase.to_string(),
                edge,
            });
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Line-delimited JSON, one record per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// How many consecutive beats a transfer may take before the port moves on
/// to the next waiting transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arbitration {
    /// Strict beat-level round-robin.
    Beat,
    /// Round-robin with a grant of up to this many beats.
    Burst(u64),
    /// A granted transfer keeps the port until its last beat.
    Transfer,
}

impl Arbitration {
    fn quantum(self) -> u64 {
        match self {
            Arbitration::Beat => 1,
            Arbitration::Burst(b) => b.max(1),
            Arbitration::Transfer => u64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferRequest {
    pub origin: usize,
    pub bytes: u64,
    pub issue_time: Cycle,
    /// Cycles between issue and joining the arbitration ring.
    pub setup: Cycle,
    /// Cycles between the last beat and completion.
    pub round_trip: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransferId(pub usize);

/// A transfer whose last beat has been served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Served {
    pub id: TransferId,
    pub origin: usize,
    pub last_beat_end: Cycle,
    pub completion: Cycle,
}

#[derive(Debug, Clone)]
struct Active {
    id: TransferId,
    remaining: u64,
}

#[derive(Debug, Clone)]
struct Record {
    req: TransferRequest,
    beats: u64,
    served: u64,
}

/// Single-ported memory interface serving one beat per cycle.
///
/// Time inside the port is tracked by `clock`: all beats before `clock` have
/// been assigned. Callers drive it with [`SharedPort::advance`] and learn
/// when to call it next from [`SharedPort::next_completion_bound`].
#[derive(Debug, Clone)]
pub struct SharedPort {
    name: String,
    beat_bytes: u64,
    arbitration: Arbitration,
    clock: Cycle,
    /// Transfers still in setup, sorted by arrival then submission order.
    pending: VecDeque<(Cycle, TransferId)>,
    ring: VecDeque<Active>,
    head_used: u64,
    records: Vec<Record>,
    busy_cycles: u64,
}

impl SharedPort {
    pub fn new(name: impl Into<String>, beat_bytes: u64, arbitration: Arbitration) -> Self {
        assert!(beat_bytes > 0, "beat width must be positive");
        Self {
            name: name.into(),
            beat_bytes,
            arbitration,
            clock: 0,
            pending: VecDeque::new(),
            ring: VecDeque::new(),
            head_used: 0,
            records: Vec::new(),
            busy_cycles: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn beat_bytes(&self) -> u64 {
        self.beat_bytes
    }

    pub fn clock(&self) -> Cycle {
        self.clock
    }

    pub fn busy_cycles(&self) -> u64 {
        self.busy_cycles
    }

    pub fn beats_for(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.beat_bytes)
    }

    pub fn served_beats(&self, id: TransferId) -> u64 {
        self.records[id.0].served
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.ring.is_empty()
    }

    /// Queues a transfer. It joins the ring at `issue_time + setup`, which
    /// must not lie before the port's clock.
    pub fn submit(&mut self, req: TransferRequest) -> Result<TransferId> {
        if req.bytes == 0 {
            return Err(Error::Argument("zero-byte transfer".into()));
        }
        let arrival = req.issue_time + req.setup;
        if arrival < self.clock {
            return Err(Error::Argument(format!(
                "transfer on {} arrives at {arrival}, before the port clock {}",
                self.name, self.clock
            )));
        }
        let id = TransferId(self.records.len());
        self.records.push(Record {
            req,
            beats: self.beats_for(req.bytes),
            served: 0,
        });
        let pos = self.pending.partition_point(|&(t, _)| t <= arrival);
        self.pending.insert(pos, (arrival, id));
        Ok(id)
    }

    /// Earliest time any outstanding transfer could serve its last beat.
    pub fn next_completion_bound(&self) -> Option<Cycle> {
        let ring = self.ring.iter().map(|a| self.clock + a.remaining);
        let pending = self
            .pending
            .iter()
            .map(|&(t, id)| t + self.records[id.0].beats);
        ring.chain(pending).min()
    }

    fn admit_arrivals(&mut self) {
        while let Some(&(t, id)) = self.pending.front() {
            if t > self.clock {
                break;
            }
            self.pending.pop_front();
            let beats = self.records[id.0].beats;
            self.ring.push_back(Active {
                id,
                remaining: beats,
            });
        }
    }

    /// Assigns beats up to `until` and reports every transfer whose last
    /// beat ended by then.
    pub fn advance(&mut self, until: Cycle) -> Vec<Served> {
        let mut done = Vec::new();
        let quantum = self.arbitration.quantum();
        while self.clock < until || self.pending.front().is_some_and(|p| p.0 <= self.clock) {
            self.admit_arrivals();
            if self.ring.is_empty() {
                match self.pending.front() {
                    Some(&(t, _)) if t <= until => {
                        self.clock = t;
                        continue;
                    }
                    _ => {
                        self.clock = self.clock.max(until);
                        break;
                    }
                }
            }
            if self.clock >= until {
                break;
            }
            let horizon = self
                .pending
                .front()
                .map_or(until, |p| p.0.min(until));
            let k = self.ring.len() as u64;
            let q = if k == 1 { u64::MAX } else { quantum };

            // Skip whole rounds at once when no transfer can finish in them.
            if q != u64::MAX && self.head_used == 0 && k > 1 {
                let min_rem = self.ring.iter().map(|a| a.remaining).min().unwrap();
                let by_work = (min_rem - 1) / q;
                let by_time = (horizon - self.clock) / (k * q);
                let rounds = by_work.min(by_time);
                if rounds > 0 {
                    for a in self.ring.iter_mut() {
                        a.remaining -= rounds * q;
                        self.records[a.id.0].served += rounds * q;
                    }
                    self.clock += rounds * k * q;
                    self.busy_cycles += rounds * k * q;
                    continue;
                }
            }

            let head = self.ring.front_mut().unwrap();
            let beats = head
                .remaining
                .min(q.saturating_sub(self.head_used))
                .min(horizon - self.clock);
            head.remaining -= beats;
            self.records[head.id.0].served += beats;
            self.clock += beats;
            self.busy_cycles += beats;
            self.head_used += beats;
            if head.remaining == 0 {
                let a = self.ring.pop_front().unwrap();
                self.head_used = 0;
                let req = self.records[a.id.0].req;
                done.push(Served {
                    id: a.id,
                    origin: req.origin,
                    last_beat_end: self.clock,
                    completion: self.clock + req.round_trip,
                });
            } else if self.head_used >= q {
                let a = self.ring.pop_front().unwrap();
                self.ring.push_back(a);
                self.head_used = 0;
            }
        }
        done
    }
}

#[derive(Debug, Clone, Copy)]
enum PortAction {
    Submit(usize),
    Check,
    Complete(usize),
}

/// Runs a batch of independent transfers through one port on the event
/// kernel and returns each transfer's completion cycle, in input order.
pub fn simulate_transfers(port: &mut SharedPort, reqs: &[TransferRequest]) -> Result<Vec<Cycle>> {
    let mut sim: Simulation<PortAction> = Simulation::new();
    for (i, r) in reqs.iter().enumerate() {
        if r.bytes == 0 {
            return Err(Error::Argument("zero-byte transfer".into()));
        }
        sim.schedule_at(r.issue_time, PortAction::Submit(i));
    }
    let mut ids = vec![None; reqs.len()];
    let mut completions = vec![0; reqs.len()];
    sim.run_until_idle(|sim, ev| {
        let now = ev.time;
        match ev.action {
            PortAction::Submit(i) => {
                for s in port.advance(now) {
                    let idx = ids.iter().position(|x| *x == Some(s.id)).unwrap();
                    sim.schedule_at(s.completion, PortAction::Complete(idx));
                }
                ids[i] = Some(port.submit(reqs[i])?);
            }
            PortAction::Check => {
                for s in port.advance(now) {
                    let idx = ids.iter().position(|x| *x == Some(s.id)).unwrap();
                    sim.schedule_at(s.completion, PortAction::Complete(idx));
                }
            }
            PortAction::Complete(i) => completions[i] = now,
        }
        if matches!(ev.action, PortAction::Submit(_) | PortAction::Check) {
            if let Some(t) = port.next_completion_bound() {
                sim.schedule_at(t, PortAction::Check);
            }
        }
        Ok(())
    })?;
    Ok(completions)
}
