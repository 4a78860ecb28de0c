use std::sync::{Arc, Condvar, Mutex};

use super::Message;
use crate::history::WorkerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("barrier round aborted")]
pub struct BarrierAborted;

#[derive(Debug)]
struct RoundState {
    round: u64,
    slots: Vec<Option<Message>>,
    arrived: usize,
    released: Arc<Vec<Message>>,
    stop: bool,
    aborted: bool,
}

/// Thread rendezvous exchanging one message per worker per round.
#[derive(Debug)]
pub struct SyncBarrier {
    size: usize,
    state: Mutex<RoundState>,
    cv: Condvar,
}

/// What a worker gets back from a completed round.
#[derive(Debug, Clone)]
pub struct RoundResult {
    pub messages: Vec<Message>,
    /// Decision taken by the last worker to arrive.
    pub stop: bool,
}

impl SyncBarrier {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            state: Mutex::new(RoundState {
                round: 0,
                slots: vec![None; size],
                arrived: 0,
                released: Arc::new(Vec::new()),
                stop: false,
                aborted: false,
            }),
            cv: Condvar::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn round(&self) -> u64 {
        self.state.lock().expect("barrier lock").round
    }

    /// Contributes `m` and blocks until every worker has contributed to this
    /// round. The last arrival evaluates `decide_stop` once for the round.
    pub fn exchange(
        &self,
        rank: WorkerId,
        m: Message,
        decide_stop: impl FnOnce() -> bool,
    ) -> Result<RoundResult, BarrierAborted> {
        let mut st = self.state.lock().expect("barrier lock");
        if st.aborted {
            return Err(BarrierAborted);
        }
        st.slots[rank as usize - 1] = Some(m);
        st.arrived += 1;
        let my_round = st.round;
        if st.arrived == self.size {
            let all: Vec<Message> = st.slots.iter_mut().map(|s| s.take().expect("every slot filled")).collect();
            st.released = Arc::new(all);
            st.stop = decide_stop();
            st.arrived = 0;
            st.round += 1;
            self.cv.notify_all();
        } else {
            st = self.cv.wait_while(st, |s| s.round == my_round && !s.aborted).expect("barrier lock");
            if st.round == my_round {
                return Err(BarrierAborted);
            }
        }
        let messages = st.released.iter().filter(|m| m.sender != rank).cloned().collect();
        Ok(RoundResult { messages, stop: st.stop })
    }

    /// Fails the current and every later round for all workers.
    pub fn abort(&self) {
        self.state.lock().expect("barrier lock").aborted = true;
        self.cv.notify_all();
    }
}

/// Release of a simulated barrier round.
#[derive(Debug, Clone)]
pub struct SimRelease {
    pub time: f64,
    /// `(rank, arrival time)` for every participant.
    pub arrivals: Vec<(WorkerId, f64)>,
    pub messages: Vec<Message>,
}

impl SimRelease {
    pub fn messages_for(&self, rank: WorkerId) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(move |m| m.sender != rank)
    }

    pub fn wait_of(&self, rank: WorkerId) -> f64 {
        self.arrivals.iter().find(|(r, _)| *r == rank).map_or(0.0, |(_, t)| self.time - t)
    }
}

/// Barrier bookkeeping for the discrete-event runner: collects arrivals and
/// releases everyone at the latest arrival time.
#[derive(Debug, Clone)]
pub struct SimBarrier {
    size: usize,
    round: u64,
    arrivals: Vec<(WorkerId, f64)>,
    messages: Vec<Message>,
}

impl SimBarrier {
    pub fn new(size: usize) -> Self {
        Self { size, round: 0, arrivals: Vec::new(), messages: Vec::new() }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn waiting(&self) -> usize {
        self.arrivals.len()
    }

    pub fn arrive(&mut self, rank: WorkerId, time: f64, m: Message) -> Option<SimRelease> {
        debug_assert!(self.arrivals.iter().all(|(r, _)| *r != rank), "worker arrived twice");
        self.arrivals.push((rank, time));
        self.messages.push(m);
        if self.arrivals.len() < self.size {
            return None;
        }
        self.round += 1;
        let time = self.arrivals.iter().map(|(_, t)| *t).fold(f64::NEG_INFINITY, f64::max);
        Some(SimRelease {
            time,
            arrivals: std::mem::take(&mut self.arrivals),
            messages: std::mem::take(&mut self.messages),
        })
    }
}
