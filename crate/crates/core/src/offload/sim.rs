// SPDX-License-Identifier: Apache-2.0

//! Event-driven execution of one offload.

use std::collections::{BTreeSet, HashMap};

use crate::engine::{Arbitration, SharedPort, Simulation, Trace, TransferId, TransferRequest};
use crate::kernels::ClusterWork;
use crate::topology::{CalibrationConstants, Cycle, Topology};
use crate::{Error, Result};

use super::phases::{self, CentralCounter};
use super::{JobCompletionUnit, JobDescriptor, Mode, OffloadReport, Phase, PhaseInterval};

// Read and write channels of the wide SPM are independent.
const SPM_READ: usize = 0;
const SPM_WRITE: usize = 1;
const TCDM0: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Args,
    Operands,
    Result,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    HostStart,
    Wake(usize),
    PointerLoaded(usize),
    StartE(usize),
    Check(usize),
    TransferDone(usize, Kind),
    ComputeDone(usize),
    AmoArrive(usize),
    AmoResponse(usize, bool),
    JcuArrive(usize),
    HostIrq,
}

#[derive(Debug, Clone, Default)]
struct ClusterState {
    start: [Option<Cycle>; 9],
    end: [Option<Cycle>; 9],
}

struct Port {
    port: SharedPort,
    owners: HashMap<TransferId, (usize, Kind)>,
    checks: BTreeSet<Cycle>,
}

pub(super) struct OffloadSim<'a> {
    topo: &'a Topology,
    cal: &'a CalibrationConstants,
    job: &'a JobDescriptor,
    work: ClusterWork,
    sim: Simulation<Action>,
    ports: [Port; 3],
    clusters: Vec<ClusterState>,
    host: ClusterState,
    counter: CentralCounter,
    jcu: JobCompletionUnit,
    trace: Trace,
}

impl<'a> OffloadSim<'a> {
    pub(super) fn new(
        topo: &'a Topology,
        cal: &'a CalibrationConstants,
        job: &'a JobDescriptor,
        trace: bool,
    ) -> Result<Self> {
        let work = job.kernel.work(job.n_clusters, &job.size)?;
        let port = |name: &str| Port {
            port: SharedPort::new(name, topo.wide_width_bytes, Arbitration::Transfer),
            owners: HashMap::new(),
            checks: BTreeSet::new(),
        };
        Ok(Self {
            topo,
            cal,
            job,
            work,
            sim: Simulation::new(),
            ports: [port("spm_wide.r"), port("spm_wide.w"), port("tcdm0")],
            clusters: vec![ClusterState::default(); job.n_clusters],
            host: ClusterState::default(),
            counter: CentralCounter::new(job.n_clusters, cal.barrier_atomic_local),
            jcu: JobCompletionUnit::new(),
            trace: Trace::new(trace),
        })
    }

    pub(super) fn run(mut self) -> Result<(OffloadReport, Trace)> {
        match self.job.mode {
            Mode::Ideal => {
                for c in 0..self.job.n_clusters {
                    self.sim.schedule_at(0, Action::StartE(c));
                }
            }
            _ => {
                self.sim.schedule_at(0, Action::HostStart);
            }
        }
        while let Some(ev) = self.sim.next_event()? {
            self.handle(ev.time, ev.action)?;
        }
        self.finish()
    }

    fn begin(&mut self, cluster: Option<usize>, phase: Phase, t: Cycle) {
        let st = match cluster {
            Some(c) => &mut self.clusters[c],
            None => &mut self.host,
        };
        st.start[phase.index()] = Some(t);
        let actor = cluster.map_or_else(|| "host".to_string(), |c| format!("cluster{c}"));
        self.trace.record(t, actor, phase.label(), "begin");
    }

    fn end(&mut self, cluster: Option<usize>, phase: Phase, t: Cycle) {
        let st = match cluster {
            Some(c) => &mut self.clusters[c],
            None => &mut self.host,
        };
        st.end[phase.index()] = Some(t);
        let actor = cluster.map_or_else(|| "host".to_string(), |c| format!("cluster{c}"));
        self.trace.record(t, actor, phase.label(), "end");
    }

    fn span(&mut self, cluster: Option<usize>, phase: Phase, start: Cycle, end: Cycle) {
        self.begin(cluster, phase, start);
        self.end(cluster, phase, end);
    }

    fn handle(&mut self, now: Cycle, action: Action) -> Result<()> {
        let (topo, cal, job) = (self.topo, self.cal, self.job);
        match action {
            Action::HostStart => {
                if job.mode == Mode::Extended {
                    self.jcu.program(job.n_clusters as u32);
                }
                let info = phases::send_job_info(topo, cal, job, now)?;
                self.span(None, Phase::A, info.start, info.end);
                for (c, t) in phases::wakeup_times(topo, cal, job, info.end)?.into_iter().enumerate() {
                    self.begin(Some(c), Phase::B, info.end);
                    self.sim.schedule_at(t, Action::Wake(c));
                }
            }
            Action::Wake(c) => {
                self.end(Some(c), Phase::B, now);
                self.begin(Some(c), Phase::C, now);
                let lat = phases::pointer_load_latency(topo, cal, job.mode, c);
                self.sim.schedule_at(now + lat, Action::PointerLoaded(c));
            }
            Action::PointerLoaded(c) => {
                self.end(Some(c), Phase::C, now);
                self.begin(Some(c), Phase::D, now);
                if job.mode == Mode::Baseline && c != 0 {
                    let req = TransferRequest {
                        origin: c,
                        bytes: job.arg_bytes,
                        issue_time: now,
                        setup: cal.dma_setup(1),
                        round_trip: cal.dma_round_trip,
                    };
                    self.submit(TCDM0, now, req, c, Kind::Args)?;
                } else {
                    self.end(Some(c), Phase::D, now);
                    self.sim.schedule_at(now, Action::StartE(c));
                }
            }
            Action::StartE(c) => {
                self.begin(Some(c), Phase::E, now);
                let k = self.work.input_transfers.iter().filter(|&&b| b > 0).count();
                // The operand transfers of one cluster run back to back on its
                // DMA engine, so they hold the port as one burst.
                let beat = topo.wide_width_bytes;
                let bytes: u64 = self
                    .work
                    .input_transfers
                    .iter()
                    .map(|b| b.div_ceil(beat) * beat)
                    .sum();
                if bytes == 0 {
                    self.operands_loaded(c, now);
                } else {
                    let req = TransferRequest {
                        origin: c,
                        bytes,
                        issue_time: now,
                        setup: cal.dma_setup(k),
                        round_trip: cal.dma_round_trip,
                    };
                    self.submit(SPM_READ, now, req, c, Kind::Operands)?;
                }
            }
            Action::Check(p) => {
                self.ports[p].checks.remove(&now);
                self.poll(p, now)?;
            }
            Action::TransferDone(c, kind) => match kind {
                Kind::Args => {
                    self.end(Some(c), Phase::D, now);
                    self.sim.schedule_at(now, Action::StartE(c));
                }
                Kind::Operands => self.operands_loaded(c, now),
                Kind::Result => self.results_written(c, now)?,
            },
            Action::ComputeDone(c) => {
                self.end(Some(c), Phase::F, now);
                self.begin(Some(c), Phase::G, now);
                if self.work.result_bytes == 0 {
                    self.results_written(c, now)?;
                } else {
                    let req = TransferRequest {
                        origin: c,
                        bytes: self.work.result_bytes,
                        issue_time: now,
                        setup: cal.dma_setup(1),
                        round_trip: cal.dma_round_trip,
                    };
                    self.submit(SPM_WRITE, now, req, c, Kind::Result)?;
                }
            }
            Action::AmoArrive(c) => {
                let (done, last) = self.counter.increment(now);
                let (_, resp) = phases::atomic_travel(cal, c);
                self.sim.schedule_at(done + resp, Action::AmoResponse(c, last));
            }
            Action::AmoResponse(c, last) => {
                if last {
                    let irq = now + cal.completion_unit_notify;
                    self.end(Some(c), Phase::H, irq);
                    self.sim.schedule_at(irq, Action::HostIrq);
                } else {
                    self.end(Some(c), Phase::H, now);
                }
            }
            Action::JcuArrive(c) => {
                self.end(Some(c), Phase::H, now);
                if let Some(t) = self.jcu.arrive(now)? {
                    self.sim.schedule_at(t, Action::HostIrq);
                }
            }
            Action::HostIrq => {
                self.span(None, Phase::I, now, now + cal.phase_i_cost);
                self.jcu.clear_interrupt(now + cal.phase_i_cost);
            }
        }
        Ok(())
    }

    fn operands_loaded(&mut self, c: usize, now: Cycle) {
        self.end(Some(c), Phase::E, now);
        self.begin(Some(c), Phase::F, now);
        let f = self.cal.cluster_hw_barrier + self.work.compute_cycles.ceil() as Cycle;
        self.sim.schedule_at(now + f, Action::ComputeDone(c));
    }

    fn results_written(&mut self, c: usize, now: Cycle) -> Result<()> {
        self.end(Some(c), Phase::G, now);
        match self.job.mode {
            Mode::Ideal => {}
            Mode::Baseline => {
                self.begin(Some(c), Phase::H, now);
                let (req, _) = phases::atomic_travel(self.cal, c);
                self.sim.schedule_at(now + req, Action::AmoArrive(c));
            }
            Mode::Extended => {
                self.begin(Some(c), Phase::H, now);
                self.sim
                    .schedule_at(now + self.cal.completion_unit_notify, Action::JcuArrive(c));
            }
        }
        Ok(())
    }

    fn submit(
        &mut self,
        p: usize,
        now: Cycle,
        req: TransferRequest,
        cluster: usize,
        kind: Kind,
    ) -> Result<()> {
        self.poll(p, now)?;
        let id = self.ports[p].port.submit(req)?;
        self.ports[p].owners.insert(id, (cluster, kind));
        self.schedule_check(p);
        Ok(())
    }

    /// Serves the port up to `now` and dispatches finished transfers.
    fn poll(&mut self, p: usize, now: Cycle) -> Result<()> {
        let served = self.ports[p].port.advance(now);
        for s in served {
            let (c, kind) = self.ports[p].owners[&s.id];
            self.sim.schedule_at(s.completion, Action::TransferDone(c, kind));
        }
        self.schedule_check(p);
        Ok(())
    }

    fn schedule_check(&mut self, p: usize) {
        let Some(t) = self.ports[p].port.next_completion_bound() else {
            return;
        };
        if self.ports[p].checks.insert(t) {
            self.sim.schedule_at(t, Action::Check(p));
        }
    }

    fn finish(self) -> Result<(OffloadReport, Trace)> {
        let phases: &[Phase] = match self.job.mode {
            Mode::Ideal => &[Phase::E, Phase::F, Phase::G],
            _ => &Phase::ALL,
        };
        let mut intervals = Vec::new();
        for &p in phases {
            let owners: Vec<(usize, &ClusterState)> = if p.is_host() {
                vec![(0, &self.host)]
            } else {
                self.clusters.iter().enumerate().collect()
            };
            for (c, st) in owners {
                match (st.start[p.index()], st.end[p.index()]) {
                    (Some(start), Some(end)) => intervals.push(PhaseInterval {
                        cluster: c,
                        phase: p,
                        start,
                        end,
                    }),
                    _ => {
                        return Err(Error::Protocol(format!(
                            "phase {p} did not complete on cluster {c}"
                        )));
                    }
                }
            }
        }
        let report = OffloadReport::new(
            self.job.mode,
            self.job.kernel.name().to_string(),
            self.job.size,
            self.job.n_clusters,
            intervals,
        );
        Ok((report, self.trace))
    }
}
