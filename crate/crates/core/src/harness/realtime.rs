//! Real-time runner: one OS thread per worker (plus one for the manager of
//! centralized methods). Evaluations sleep for their emulated duration scaled
//! by `realtime_scale`; surrogate work takes however long it really takes.

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::events::{Event, EventKind};
use super::manager::Manager;
use super::report::{ExperimentReport, RunOutput, TimelineBuilder};
use super::HarnessError;
use crate::bench::Benchmark;
use crate::history::{EvalRecord, History, WorkerId};
use crate::optimizer::WorkerState;
use crate::space::{Config, ParamSpace};
use crate::transport::{channel_mesh, ChannelEndpoint, Message, SyncBarrier, Transport};

const DURATION_STREAM: u64 = 1 << 32;

/// Simulated seconds elapsed since the run started.
#[derive(Debug, Clone, Copy)]
struct Clock {
    start: Instant,
    scale: f64,
}

impl Clock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64() / self.scale
    }

    fn sleep(&self, sim_seconds: f64) {
        thread::sleep(Duration::from_secs_f64(sim_seconds * self.scale));
    }
}

/// What one thread observed.
#[derive(Default)]
struct Log {
    events: Vec<Event>,
    busy: Vec<(f64, f64)>,
    overhead: Vec<(f64, f64)>,
    fits: Vec<(f64, f64)>,
    records: Vec<EvalRecord>,
}

impl Log {
    fn push(&mut self, time: f64, worker: WorkerId, kind: EventKind, payload: u64) {
        self.events.push(Event { time, worker, kind, payload });
    }
}

/// Per-thread evaluator: duration stream, sequence counter, benchmark.
struct Evaluator {
    worker: WorkerId,
    durations: ChaCha8Rng,
    next_seq: u64,
    benchmark: Benchmark,
    cfg: Arc<ExperimentConfig>,
    clock: Clock,
}

impl Evaluator {
    fn new(worker: WorkerId, cfg: &Arc<ExperimentConfig>, clock: Clock) -> Self {
        let mut durations = ChaCha8Rng::seed_from_u64(cfg.seed);
        durations.set_stream(DURATION_STREAM + worker as u64);
        Self { worker, durations, next_seq: 0, benchmark: cfg.benchmark.clone(), cfg: Arc::clone(cfg), clock }
    }

    fn evaluate(&mut self, config: Config, log: &mut Log) -> Result<EvalRecord, HarnessError> {
        let duration = self.cfg.emulator.draw(&mut self.durations);
        let seq = self.next_seq;
        self.next_seq += 1;
        let t_start = self.clock.now();
        log.push(t_start, self.worker, EventKind::EvalStart, seq);
        let objective = -self.benchmark.evaluate(&config)?;
        let elapsed = self.clock.now() - t_start;
        self.clock.sleep((duration - elapsed).max(0.0));
        let t_end = self.clock.now();
        log.push(t_end, self.worker, EventKind::EvalEnd, seq);
        log.busy.push((t_start, t_end));
        let record = EvalRecord { config, objective, t_start, t_end, worker_id: self.worker, seq };
        log.records.push(record.clone());
        Ok(record)
    }
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let space = Arc::new(cfg.benchmark.space());
    let shared = Arc::new(cfg.clone());
    let clock = Clock { start: Instant::now(), scale: cfg.realtime_scale };
    let (logs, histories) = if cfg.method.is_centralized() {
        (run_centralized(&shared, &space, clock)?, Vec::new())
    } else {
        run_distributed(&shared, &space, clock)?
    };

    let mut timelines = TimelineBuilder::new(cfg.n_worker, cfg.t_wall);
    let mut out = RunOutput {
        records: Vec::new(),
        events: Vec::new(),
        timelines: TimelineBuilder::new(0, 0.0),
        fit_durations: Vec::new(),
        final_histories: histories,
    };
    for (worker, log) in logs.into_iter().enumerate() {
        for (s, e) in log.busy {
            timelines.busy(worker as WorkerId, s, e);
        }
        for (s, e) in log.overhead {
            timelines.overhead(worker as WorkerId, s, e);
        }
        out.events.extend(log.events);
        out.fit_durations.extend(log.fits);
        out.records.extend(log.records);
    }
    out.events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.worker.cmp(&b.worker)));
    out.fit_durations.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.timelines = timelines;
    Ok(ExperimentReport::assemble(cfg, space, out))
}

type WorkerOutcome = Result<(Log, History), HarnessError>;

/// Returns logs indexed by worker (index 0 is an empty manager log).
fn run_distributed(
    cfg: &Arc<ExperimentConfig>,
    space: &Arc<ParamSpace>,
    clock: Clock,
) -> Result<(Vec<Log>, Vec<History>), HarnessError> {
    let opt = cfg.effective_optimizer();
    let barrier = cfg.method.is_barrier_sync().then(|| Arc::new(SyncBarrier::new(cfg.n_worker)));
    let mut handles = Vec::new();
    for endpoint in channel_mesh(cfg.n_worker) {
        let w = endpoint.rank();
        let state = WorkerState::new(w, Arc::clone(space), opt.clone(), cfg.seed)?;
        let evaluator = Evaluator::new(w, cfg, clock);
        let barrier = barrier.clone();
        handles.push(thread::spawn(move || {
            let aborter = barrier.clone();
            let outcome = worker_loop(state, endpoint, evaluator, barrier);
            if outcome.is_err() {
                if let Some(b) = aborter {
                    b.abort();
                }
            }
            outcome
        }));
    }
    let mut logs = vec![Log::default()];
    let mut histories = Vec::new();
    for h in handles {
        let (log, history) = h.join().map_err(|_| HarnessError::Worker("worker thread panicked".into()))??;
        logs.push(log);
        histories.push(history);
    }
    Ok((logs, histories))
}

fn worker_loop(
    mut state: WorkerState,
    mut endpoint: ChannelEndpoint,
    mut evaluator: Evaluator,
    barrier: Option<Arc<SyncBarrier>>,
) -> WorkerOutcome {
    let clock = evaluator.clock;
    let t_wall = evaluator.cfg.t_wall;
    let w = state.worker_id();
    let mut log = Log::default();
    loop {
        let t = clock.now();
        if t >= t_wall {
            if barrier.is_none() {
                let mut h = state.take_history();
                let got = endpoint.recv_any(&mut h).received;
                log.push(clock.now(), w, EventKind::Recv, got as u64);
                state.observe(h)?;
            }
            break;
        }
        log.push(t, w, EventKind::Ask, 0);
        let config = state.ask()?;
        let ask_end = clock.now();
        log.overhead.push((t, ask_end));

        let record = evaluator.evaluate(config, &mut log)?;
        let t_end = record.t_end;
        state.complete_evaluation();
        let message = Message::new(record.clone());
        let mut h = state.take_history();
        h.push(record);

        let stop = match &barrier {
            None => {
                // A closed local endpoint ends this worker; peers carry on.
                let Ok(sent) = endpoint.send_all(&message) else {
                    state.observe(h)?;
                    break;
                };
                log.push(clock.now(), w, EventKind::Send, sent as u64);
                let got = endpoint.recv_any(&mut h).received;
                log.push(clock.now(), w, EventKind::Recv, got as u64);
                t_end >= t_wall
            }
            Some(b) => {
                log.push(clock.now(), w, EventKind::Send, b.size() as u64 - 1);
                let round = b.exchange(w, message, || clock.now() >= t_wall);
                let round = match round {
                    Ok(r) => r,
                    Err(_) => {
                        state.observe(h)?;
                        break;
                    }
                };
                let now = clock.now();
                log.push(now, w, EventKind::BarrierWait, round.messages.len() as u64);
                log.push(now, w, EventKind::Recv, round.messages.len() as u64);
                h.extend(round.messages.into_iter().map(|m| m.record));
                round.stop
            }
        };
        if stop {
            state.observe(h)?;
            break;
        }
        let fit_start = clock.now();
        if let Some(fit) = state.tell(h)? {
            let fit_end = clock.now();
            log.push(fit_start, w, EventKind::FitStart, fit.n_train as u64);
            log.push(fit_end, w, EventKind::FitEnd, fit.n_train as u64);
            log.overhead.push((fit_start, fit_end));
            log.fits.push((fit_start, fit_end - fit_start));
        }
    }
    Ok((log, state.history().clone()))
}

fn run_centralized(
    cfg: &Arc<ExperimentConfig>,
    space: &Arc<ParamSpace>,
    clock: Clock,
) -> Result<Vec<Log>, HarnessError> {
    let strategy = cfg.method.batch_strategy().expect("centralized method");
    let manager = Manager::new(Arc::clone(space), cfg.effective_optimizer(), strategy, cfg.seed)?;
    let (result_tx, result_rx) = mpsc::channel::<EvalRecord>();
    let mut assign = Vec::new();
    let mut handles = Vec::new();
    for w in 1..=cfg.n_worker as WorkerId {
        let (tx, rx) = mpsc::channel::<Option<Config>>();
        assign.push(tx);
        let results = result_tx.clone();
        let mut evaluator = Evaluator::new(w, cfg, clock);
        handles.push(thread::spawn(move || -> Result<Log, HarnessError> {
            let mut log = Log::default();
            while let Ok(Some(config)) = rx.recv() {
                let record = evaluator.evaluate(config, &mut log)?;
                log.push(record.t_end, w, EventKind::Send, 1);
                if results.send(record).is_err() {
                    break;
                }
            }
            Ok(log)
        }));
    }
    drop(result_tx);
    let manager_log = manager_loop(manager, cfg, clock, &assign, &result_rx);
    drop(assign);
    let mut logs = vec![manager_log?];
    for h in handles {
        logs.push(h.join().map_err(|_| HarnessError::Worker("worker thread panicked".into()))??);
    }
    Ok(logs)
}

fn manager_loop(
    mut manager: Manager,
    cfg: &ExperimentConfig,
    clock: Clock,
    assign: &[Sender<Option<Config>>],
    results: &Receiver<EvalRecord>,
) -> Result<Log, HarnessError> {
    let n = cfg.n_worker;
    let mut log = Log::default();
    let mut waiting: Vec<WorkerId> = (1..=n as WorkerId).collect();
    let mut received: Vec<EvalRecord> = Vec::new();
    let mut stopped = 0;
    loop {
        let need_all = cfg.method.is_batch_sync();
        while (need_all && waiting.len() < n) || waiting.is_empty() {
            let Ok(r) = results.recv() else { return Ok(log) };
            waiting.push(r.worker_id);
            received.push(r);
        }
        while let Ok(r) = results.try_recv() {
            waiting.push(r.worker_id);
            received.push(r);
        }
        let t = clock.now();
        if t >= cfg.t_wall {
            manager.ingest_without_fit(std::mem::take(&mut received))?;
            for w in waiting.drain(..) {
                let _ = assign[w as usize - 1].send(None);
                stopped += 1;
            }
            if stopped == n {
                return Ok(log);
            }
            continue;
        }
        log.push(t, 0, EventKind::Recv, received.len() as u64);
        if let Some(fit) = manager.ingest(std::mem::take(&mut received))? {
            let end = clock.now();
            log.push(t, 0, EventKind::FitStart, fit.n_train as u64);
            log.push(end, 0, EventKind::FitEnd, fit.n_train as u64);
            log.fits.push((t, end - t));
        }
        let q = waiting.len();
        log.push(clock.now(), 0, EventKind::Ask, q as u64);
        let proposal = manager.propose(q)?;
        let dispatch = clock.now();
        log.overhead.push((t, dispatch));
        log.push(dispatch, 0, EventKind::Send, q as u64);
        for (w, config) in waiting.drain(..).zip(proposal.configs) {
            let _ = assign[w as usize - 1].send(Some(config));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::RuntimeEmulator;
    use crate::harness::{CostModel, Method};

    fn quick(method: Method, n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(method, n);
        cfg.t_wall = 300.0;
        cfg.emulator = RuntimeEmulator::new(30.0, 10.0, 1.0).unwrap();
        cfg.cost = CostModel::free();
        cfg.optimizer.selector.n_candidates = 200;
        cfg.optimizer.forest.n_tree = 10;
        cfg.realtime_scale = 2e-4;
        cfg
    }

    #[test]
    fn distributed_async_run_exchanges_records() {
        let r = run(&quick(Method::AdboQucb, 3)).unwrap();
        assert!(r.n_evaluations >= 3);
        assert_eq!(r.final_histories.len(), 3);
        assert!(r.final_histories.iter().all(|h| h.n_sample() > 1));
        assert!((0.0..=1.0).contains(&r.u_eff));
    }

    #[test]
    fn barrier_run_terminates_together() {
        let r = run(&quick(Method::SdboBucb, 3)).unwrap();
        let lens: Vec<usize> = r.final_histories.iter().map(History::n_sample).collect();
        assert!(lens.iter().all(|&l| l == r.n_evaluations), "{lens:?} vs {}", r.n_evaluations);
    }

    #[test]
    fn centralized_run_completes() {
        for m in [Method::AcboQucb, Method::ScboCl, Method::RdAcbo] {
            let r = run(&quick(m, 3)).unwrap();
            assert!(r.n_evaluations >= 3, "{m}");
            assert!(r.final_histories.is_empty());
        }
    }
}
