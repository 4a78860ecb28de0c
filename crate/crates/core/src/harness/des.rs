//! Discrete-event runner: a single-threaded virtual clock drives every worker
//! (and the manager, for centralized methods) through its evaluation loop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::events::{Event, EventKind};
use super::manager::Manager;
use super::report::{ExperimentReport, RunOutput, TimelineBuilder};
use super::HarnessError;
use crate::history::{EvalRecord, History, WorkerId};
use crate::optimizer::{FitSummary, WorkerState};
use crate::space::{Config, ParamSpace};
use crate::transport::{Message, SimBarrier, SimEndpoint, SimFabric, Transport};

/// Stream offset separating duration draws from optimizer streams.
const DURATION_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy)]
enum Action {
    EvalEnd(WorkerId),
    FitEnd(WorkerId),
    ManagerWake,
    ManagerDispatch,
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    action: Action,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: the heap pops the earliest time, then the earliest insertion.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Slot {
    durations: ChaCha8Rng,
    next_seq: u64,
    running: Option<(Config, f64)>,
}

/// State shared by the distributed and centralized engines.
struct Core<'a> {
    cfg: &'a ExperimentConfig,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    events: Vec<Event>,
    records: Vec<EvalRecord>,
    timelines: TimelineBuilder,
    fits: Vec<(f64, f64)>,
    slots: Vec<Slot>,
}

impl<'a> Core<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        let slots = (1..=cfg.n_worker as u64)
            .map(|w| {
                let mut durations = ChaCha8Rng::seed_from_u64(cfg.seed);
                durations.set_stream(DURATION_STREAM + w);
                Slot { durations, next_seq: 0, running: None }
            })
            .collect();
        Self {
            cfg,
            queue: BinaryHeap::new(),
            next_seq: 0,
            events: Vec::new(),
            records: Vec::new(),
            timelines: TimelineBuilder::new(cfg.n_worker, cfg.t_wall),
            fits: Vec::new(),
            slots,
        }
    }

    fn schedule(&mut self, time: f64, action: Action) {
        self.queue.push(Scheduled { time, seq: self.next_seq, action });
        self.next_seq += 1;
    }

    fn log(&mut self, time: f64, worker: WorkerId, kind: EventKind, payload: u64) {
        self.events.push(Event { time, worker, kind, payload });
    }

    fn start_eval(&mut self, w: WorkerId, config: Config, t: f64) {
        let slot = &mut self.slots[w as usize - 1];
        let duration = self.cfg.emulator.draw(&mut slot.durations);
        let seq = slot.next_seq;
        slot.running = Some((config, t));
        self.log(t, w, EventKind::EvalStart, seq);
        self.schedule(t + duration, Action::EvalEnd(w));
    }

    fn finish_eval(&mut self, w: WorkerId, t: f64) -> Result<EvalRecord, HarnessError> {
        let slot = &mut self.slots[w as usize - 1];
        let (config, t_start) = slot.running.take().expect("eval end without a running evaluation");
        let seq = slot.next_seq;
        slot.next_seq += 1;
        let objective = -self.cfg.benchmark.evaluate(&config)?;
        let record = EvalRecord { config, objective, t_start, t_end: t, worker_id: w, seq };
        self.log(t, w, EventKind::EvalEnd, seq);
        self.timelines.busy(w, t_start, t);
        self.records.push(record.clone());
        Ok(record)
    }

    /// Charges a fit starting at `t` on `w`'s timeline; returns its end time.
    fn charge_fit(&mut self, w: WorkerId, t: f64, fit: FitSummary) -> f64 {
        let end = t + self.cfg.cost.fit_seconds(fit);
        self.log(t, w, EventKind::FitStart, fit.n_train as u64);
        self.log(end, w, EventKind::FitEnd, fit.n_train as u64);
        self.timelines.overhead(w, t, end);
        self.fits.push((t, end - t));
        end
    }

    fn select_cost(&self, selections: usize, n_candidates: usize, n_tree: usize) -> f64 {
        selections as f64 * self.cfg.cost.select_seconds(n_candidates, n_tree)
    }

    fn finish(self, space: Arc<ParamSpace>, final_histories: Vec<History>) -> ExperimentReport {
        let out = RunOutput {
            records: self.records,
            events: self.events,
            timelines: self.timelines,
            fit_durations: self.fits,
            final_histories,
        };
        ExperimentReport::assemble(self.cfg, space, out)
    }
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let space = Arc::new(cfg.benchmark.space());
    if cfg.method.is_centralized() {
        Centralized::new(cfg, Arc::clone(&space))?.run(space)
    } else {
        Distributed::new(cfg, Arc::clone(&space))?.run(space)
    }
}

struct Peer {
    state: WorkerState,
    endpoint: SimEndpoint,
    done: bool,
}

/// Every worker runs its own ask/evaluate/exchange/tell loop.
struct Distributed<'a> {
    core: Core<'a>,
    fabric: SimFabric,
    barrier: Option<SimBarrier>,
    peers: Vec<Peer>,
}

impl<'a> Distributed<'a> {
    fn new(cfg: &'a ExperimentConfig, space: Arc<ParamSpace>) -> Result<Self, HarnessError> {
        let fabric = SimFabric::new(cfg.n_worker, cfg.latency);
        let opt = cfg.effective_optimizer();
        let peers = (1..=cfg.n_worker as WorkerId)
            .map(|w| {
                Ok(Peer {
                    state: WorkerState::new(w, Arc::clone(&space), opt.clone(), cfg.seed)?,
                    endpoint: fabric.endpoint(w),
                    done: false,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let barrier = cfg.method.is_barrier_sync().then(|| SimBarrier::new(cfg.n_worker));
        Ok(Self { core: Core::new(cfg), fabric, barrier, peers })
    }

    fn peer(&mut self, w: WorkerId) -> &mut Peer {
        &mut self.peers[w as usize - 1]
    }

    fn run(mut self, space: Arc<ParamSpace>) -> Result<ExperimentReport, HarnessError> {
        for w in 1..=self.core.cfg.n_worker as WorkerId {
            self.start_next(w, 0.0)?;
        }
        while let Some(ev) = self.core.queue.pop() {
            self.fabric.set_now(ev.time);
            match ev.action {
                Action::EvalEnd(w) => self.on_eval_end(w, ev.time)?,
                Action::FitEnd(w) => self.start_next(w, ev.time)?,
                Action::ManagerWake | Action::ManagerDispatch => unreachable!("no manager"),
            }
        }
        debug_assert!(self.peers.iter().all(|p| p.done));
        let histories = self.peers.into_iter().map(|p| p.state.history().clone()).collect();
        Ok(self.core.finish(space, histories))
    }

    fn start_next(&mut self, w: WorkerId, t: f64) -> Result<(), HarnessError> {
        if t >= self.core.cfg.t_wall {
            return self.terminate(w, t);
        }
        self.core.log(t, w, EventKind::Ask, 0);
        let peer = self.peer(w);
        let ask = peer.state.ask_detailed()?;
        let (n_candidates, n_tree) = (peer.state.config().selector.n_candidates, peer.state.config().forest.n_tree);
        let cost = self.core.select_cost(usize::from(ask.selection.is_some()), n_candidates, n_tree);
        self.core.timelines.overhead(w, t, t + cost);
        self.core.start_eval(w, ask.config, t + cost);
        Ok(())
    }

    fn terminate(&mut self, w: WorkerId, t: f64) -> Result<(), HarnessError> {
        if self.barrier.is_none() {
            let peer = self.peer(w);
            let mut h = peer.state.take_history();
            let got = peer.endpoint.recv_any(&mut h).received;
            peer.state.observe(h)?;
            self.core.log(t, w, EventKind::Recv, got as u64);
        }
        self.peer(w).done = true;
        Ok(())
    }

    fn on_eval_end(&mut self, w: WorkerId, t: f64) -> Result<(), HarnessError> {
        let record = self.core.finish_eval(w, t)?;
        let message = Message::new(record.clone());
        let barrier_mode = self.barrier.is_some();
        let peer = self.peer(w);
        peer.state.complete_evaluation();
        let mut h = peer.state.take_history();
        h.push(record);
        if barrier_mode {
            peer.state.observe(h)?;
            self.core.log(t, w, EventKind::Send, self.core.cfg.n_worker as u64 - 1);
            return self.arrive(w, t, message);
        }
        let sent = peer.endpoint.send_all(&message)?;
        let got = peer.endpoint.recv_any(&mut h).received;
        self.core.log(t, w, EventKind::Send, sent as u64);
        self.core.log(t, w, EventKind::Recv, got as u64);
        self.tell_and_continue(w, t, h)
    }

    fn tell_and_continue(&mut self, w: WorkerId, t: f64, h: History) -> Result<(), HarnessError> {
        let t_wall = self.core.cfg.t_wall;
        let peer = self.peer(w);
        if t >= t_wall {
            peer.state.observe(h)?;
            return self.terminate(w, t);
        }
        match peer.state.tell(h)? {
            Some(fit) => {
                let end = self.core.charge_fit(w, t, fit);
                self.core.schedule(end, Action::FitEnd(w));
                Ok(())
            }
            None => self.start_next(w, t),
        }
    }

    fn arrive(&mut self, w: WorkerId, t: f64, message: Message) -> Result<(), HarnessError> {
        let barrier = self.barrier.as_mut().expect("barrier mode");
        let Some(release) = barrier.arrive(w, t, message) else {
            return Ok(());
        };
        let mut ranks: Vec<WorkerId> = release.arrivals.iter().map(|a| a.0).collect();
        ranks.sort_unstable();
        for rank in ranks {
            let incoming: Vec<EvalRecord> = release.messages_for(rank).map(|m| m.record.clone()).collect();
            self.core.log(release.time, rank, EventKind::BarrierWait, incoming.len() as u64);
            self.core.log(release.time, rank, EventKind::Recv, incoming.len() as u64);
            let mut h = self.peer(rank).state.take_history();
            h.extend(incoming);
            self.tell_and_continue(rank, release.time, h)?;
        }
        Ok(())
    }
}

/// One manager proposes every configuration; workers only evaluate.
struct Centralized<'a> {
    core: Core<'a>,
    manager: Manager,
    /// Workers waiting for a configuration, in arrival order.
    waiting: Vec<WorkerId>,
    results: Vec<EvalRecord>,
    pending: Vec<(WorkerId, Config)>,
    busy: bool,
    wake_scheduled: bool,
    stopped: bool,
}

impl<'a> Centralized<'a> {
    fn new(cfg: &'a ExperimentConfig, space: Arc<ParamSpace>) -> Result<Self, HarnessError> {
        let strategy = cfg.method.batch_strategy().expect("centralized method");
        let manager = Manager::new(space, cfg.effective_optimizer(), strategy, cfg.seed)?;
        Ok(Self {
            core: Core::new(cfg),
            manager,
            waiting: (1..=cfg.n_worker as WorkerId).collect(),
            results: Vec::new(),
            pending: Vec::new(),
            busy: false,
            wake_scheduled: false,
            stopped: false,
        })
    }

    fn run(mut self, space: Arc<ParamSpace>) -> Result<ExperimentReport, HarnessError> {
        self.maybe_wake(0.0);
        while let Some(ev) = self.core.queue.pop() {
            match ev.action {
                Action::EvalEnd(w) => {
                    let record = self.core.finish_eval(w, ev.time)?;
                    self.core.log(ev.time, w, EventKind::Send, 1);
                    self.results.push(record);
                    self.waiting.push(w);
                    self.maybe_wake(ev.time);
                }
                Action::ManagerWake => {
                    self.wake_scheduled = false;
                    self.step(ev.time)?;
                }
                Action::ManagerDispatch => self.dispatch(ev.time),
                Action::FitEnd(_) => unreachable!("workers do not fit"),
            }
        }
        if !self.results.is_empty() {
            self.manager.ingest_without_fit(std::mem::take(&mut self.results))?;
        }
        Ok(self.core.finish(space, Vec::new()))
    }

    fn ready(&self) -> bool {
        if self.stopped || self.busy {
            return false;
        }
        if self.core.cfg.method.is_batch_sync() {
            self.waiting.len() == self.core.cfg.n_worker
        } else {
            !self.waiting.is_empty()
        }
    }

    fn maybe_wake(&mut self, t: f64) {
        if !self.wake_scheduled && self.ready() {
            self.wake_scheduled = true;
            self.core.schedule(t, Action::ManagerWake);
        }
    }

    fn step(&mut self, t: f64) -> Result<(), HarnessError> {
        if !self.ready() {
            return Ok(());
        }
        if t >= self.core.cfg.t_wall {
            self.stopped = true;
            return Ok(());
        }
        let results = std::mem::take(&mut self.results);
        self.core.log(t, 0, EventKind::Recv, results.len() as u64);
        let mut cursor = t;
        if let Some(fit) = self.manager.ingest(results)? {
            cursor = self.core.charge_fit(0, cursor, fit);
        }
        let assigned = std::mem::take(&mut self.waiting);
        self.core.log(cursor, 0, EventKind::Ask, assigned.len() as u64);
        let proposal = self.manager.propose(assigned.len())?;
        for refit in proposal.refits {
            cursor = self.core.charge_fit(0, cursor, refit);
        }
        let select = self.core.select_cost(proposal.selections, self.manager.n_candidates(), self.manager.n_tree());
        self.core.timelines.overhead(0, cursor, cursor + select);
        cursor += select;
        self.pending = assigned.into_iter().zip(proposal.configs).collect();
        self.busy = true;
        self.core.schedule(cursor, Action::ManagerDispatch);
        Ok(())
    }

    fn dispatch(&mut self, t: f64) {
        self.busy = false;
        let pending = std::mem::take(&mut self.pending);
        if t >= self.core.cfg.t_wall {
            self.stopped = true;
            return;
        }
        self.core.log(t, 0, EventKind::Send, pending.len() as u64);
        for (w, config) in pending {
            self.core.start_eval(w, config, t);
        }
        self.maybe_wake(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Method;

    #[test]
    fn heap_orders_by_time_then_insertion() {
        let mut h = BinaryHeap::new();
        h.push(Scheduled { time: 2.0, seq: 0, action: Action::ManagerWake });
        h.push(Scheduled { time: 1.0, seq: 2, action: Action::ManagerWake });
        h.push(Scheduled { time: 1.0, seq: 1, action: Action::ManagerWake });
        let order: Vec<(f64, u64)> = std::iter::from_fn(|| h.pop()).map(|s| (s.time, s.seq)).collect();
        assert_eq!(order, vec![(1.0, 1), (1.0, 2), (2.0, 0)]);
    }

    #[test]
    fn seq1_fills_budget_serially() {
        let mut cfg = ExperimentConfig::new(Method::Seq1, 1);
        cfg.emulator = crate::bench::RuntimeEmulator::new(60.0, 0.0, 1.0).unwrap();
        cfg.cost = super::super::CostModel::free();
        cfg.t_wall = 300.0;
        cfg.optimizer.selector.n_candidates = 100;
        cfg.optimizer.forest.n_tree = 10;
        let r = run(&cfg).unwrap();
        assert_eq!(r.n_evaluations, 5);
        assert_eq!(r.u_eff, 1.0);
    }
}
