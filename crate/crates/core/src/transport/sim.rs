use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::rc::Rc;

use super::{check_sender, Message, Transport, TransportError};
use crate::history::WorkerId;

#[derive(Debug)]
struct FabricState {
    size: usize,
    latency: f64,
    /// `inboxes[receiver][sender]`, 0-based.
    inboxes: Vec<Vec<VecDeque<(f64, Message)>>>,
    closed: Vec<bool>,
}

/// Message fabric for the discrete-event runner.
///
/// Messages become visible `latency` simulated seconds after they are sent.
/// The fabric reads the shared clock, which the event loop advances.
#[derive(Debug, Clone)]
pub struct SimFabric {
    state: Rc<RefCell<FabricState>>,
    clock: Rc<Cell<f64>>,
}

impl SimFabric {
    pub fn new(size: usize, latency: f64) -> Self {
        assert!(latency >= 0.0, "latency must be non-negative");
        let inboxes = (0..size).map(|_| (0..size).map(|_| VecDeque::new()).collect()).collect();
        Self {
            state: Rc::new(RefCell::new(FabricState { size, latency, inboxes, closed: vec![false; size] })),
            clock: Rc::new(Cell::new(0.0)),
        }
    }

    pub fn now(&self) -> f64 {
        self.clock.get()
    }

    pub fn set_now(&self, t: f64) {
        self.clock.set(t);
    }

    pub fn endpoint(&self, rank: WorkerId) -> SimEndpoint {
        assert!(rank >= 1 && rank as usize <= self.size(), "rank out of range");
        SimEndpoint { rank, fabric: self.clone() }
    }

    pub fn size(&self) -> usize {
        self.state.borrow().size
    }

    pub fn close(&self, rank: WorkerId) {
        self.state.borrow_mut().closed[rank as usize - 1] = true;
    }

    /// Messages queued for `receiver`, delivered or not.
    pub fn pending(&self, receiver: WorkerId) -> usize {
        self.state.borrow().inboxes[receiver as usize - 1].iter().map(VecDeque::len).sum()
    }
}

/// One worker's view of a [`SimFabric`].
#[derive(Debug, Clone)]
pub struct SimEndpoint {
    rank: WorkerId,
    fabric: SimFabric,
}

impl Transport for SimEndpoint {
    fn rank(&self) -> WorkerId {
        self.rank
    }

    fn size(&self) -> usize {
        self.fabric.size()
    }

    fn send_all(&mut self, m: &Message) -> Result<usize, TransportError> {
        check_sender(m)?;
        let now = self.fabric.now();
        let mut st = self.fabric.state.borrow_mut();
        let me = self.rank as usize - 1;
        if st.closed[me] {
            return Err(TransportError::Closed(self.rank));
        }
        let deliver_at = now + st.latency;
        let mut sent = 0;
        for peer in 0..st.size {
            if peer == me || st.closed[peer] {
                continue;
            }
            st.inboxes[peer][me].push_back((deliver_at, m.clone()));
            sent += 1;
        }
        Ok(sent)
    }

    fn poll(&mut self, peer: WorkerId) -> Option<Message> {
        let now = self.fabric.now();
        let mut st = self.fabric.state.borrow_mut();
        let q = &mut st.inboxes[self.rank as usize - 1][peer as usize - 1];
        match q.front() {
            Some((at, _)) if *at <= now => q.pop_front().map(|(_, m)| m),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{EvalRecord, History};
    use crate::space::Config;

    fn msg(worker_id: WorkerId, seq: u64) -> Message {
        Message::new(EvalRecord {
            config: Config::reals(&[0.0]),
            objective: seq as f64,
            t_start: 0.0,
            t_end: 1.0,
            worker_id,
            seq,
        })
    }

    #[test]
    fn single_worker_is_a_no_op() {
        let f = SimFabric::new(1, 0.0);
        let mut e = f.endpoint(1);
        assert_eq!(e.send_all(&msg(1, 0)).unwrap(), 0);
        let mut h = History::new();
        let stats = e.recv_any(&mut h);
        assert_eq!((stats.passes, stats.polls), (0, 0));
        assert!(h.is_empty());
    }

    #[test]
    fn broadcast_reaches_every_peer_once() {
        let f = SimFabric::new(4, 0.0);
        let mut e = f.endpoint(2);
        assert_eq!(e.send_all(&msg(2, 0)).unwrap(), 3);
        assert_eq!([1, 2, 3, 4].map(|r| f.pending(r)), [1, 0, 1, 1]);
    }

    #[test]
    fn empty_inboxes_take_one_pass() {
        let f = SimFabric::new(3, 0.0);
        let mut h = History::new();
        let stats = f.endpoint(1).recv_any(&mut h);
        assert_eq!(stats, crate::transport::RecvStats { passes: 1, polls: 2, received: 0 });
    }

    #[test]
    fn drains_multiple_messages_across_peers() {
        let f = SimFabric::new(3, 0.0);
        f.endpoint(2).send_all(&msg(2, 0)).unwrap();
        f.endpoint(2).send_all(&msg(2, 1)).unwrap();
        f.endpoint(3).send_all(&msg(3, 0)).unwrap();
        let mut h = History::new();
        let stats = f.endpoint(1).recv_any(&mut h);
        assert_eq!(stats.received, 3);
        assert!(stats.passes >= 2);
        assert_eq!(h.n_sample(), 3);
        let from2: Vec<u64> = h.iter().filter(|r| r.worker_id == 2).map(|r| r.seq).collect();
        assert_eq!(from2, vec![0, 1]);
    }

    #[test]
    fn latency_hides_messages_until_due() {
        let f = SimFabric::new(2, 5.0);
        f.endpoint(1).send_all(&msg(1, 0)).unwrap();
        let mut h = History::new();
        f.set_now(4.9);
        assert_eq!(f.endpoint(2).recv_any(&mut h).received, 0);
        f.set_now(5.0);
        assert_eq!(f.endpoint(2).recv_any(&mut h).received, 1);
    }

    #[test]
    fn closed_peers_are_skipped_and_closed_senders_fail() {
        let f = SimFabric::new(3, 0.0);
        f.close(3);
        assert_eq!(f.endpoint(1).send_all(&msg(1, 0)).unwrap(), 1);
        assert_eq!(f.endpoint(3).send_all(&msg(3, 0)), Err(TransportError::Closed(3)));
    }

    #[test]
    fn sender_must_own_the_record() {
        let f = SimFabric::new(2, 0.0);
        let mut m = msg(1, 0);
        m.sender = 2;
        assert!(matches!(f.endpoint(2).send_all(&m), Err(TransportError::SenderMismatch { .. })));
    }
}
