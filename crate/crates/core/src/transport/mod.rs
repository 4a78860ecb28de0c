//! Peer-to-peer result exchange.
//!
//! [`Transport`] is the per-worker endpoint surface: nonblocking broadcast to
//! all peers and a polling receive that drains whatever has arrived. Two
//! fabrics implement it: a simulated one driven by a virtual clock and an
//! in-process one built on channels. A barrier rendezvous covers the
//! synchronous mode.

mod barrier;
mod channel;
mod sim;

pub use barrier::{BarrierAborted, RoundResult, SimBarrier, SimRelease, SyncBarrier};
pub use channel::{channel_mesh, ChannelEndpoint};
pub use sim::{SimEndpoint, SimFabric};

use crate::history::{EvalRecord, History, WorkerId};

/// A record broadcast by its producer.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: WorkerId,
    pub record: EvalRecord,
}

impl Message {
    pub fn new(record: EvalRecord) -> Self {
        Self { sender: record.worker_id, record }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Async,
    BarrierSync,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("endpoint {0} is closed")]
    Closed(WorkerId),
    #[error("message sender {sender} does not match record worker {worker}")]
    SenderMismatch { sender: WorkerId, worker: WorkerId },
}

/// Counters from one [`Transport::recv_any`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecvStats {
    pub passes: usize,
    pub polls: usize,
    pub received: usize,
}

pub trait Transport {
    /// This worker's rank, in `1..=size`.
    fn rank(&self) -> WorkerId;

    fn size(&self) -> usize;

    /// Enqueues `m` for every open peer without waiting on any receiver.
    /// Returns the number of inbox insertions.
    fn send_all(&mut self, m: &Message) -> Result<usize, TransportError>;

    /// Takes the next available message from `peer`, if any, without blocking.
    fn poll(&mut self, peer: WorkerId) -> Option<Message>;

    /// Polls every peer once per pass, pushing each received record into `h`,
    /// and stops after the first pass that yields nothing.
    fn recv_any(&mut self, h: &mut History) -> RecvStats {
        let mut stats = RecvStats::default();
        if self.size() <= 1 {
            return stats;
        }
        let me = self.rank();
        loop {
            stats.passes += 1;
            let mut got = 0;
            for peer in (1..=self.size() as WorkerId).filter(|&p| p != me) {
                stats.polls += 1;
                if let Some(m) = self.poll(peer) {
                    h.push(m.record);
                    got += 1;
                }
            }
            stats.received += got;
            if got == 0 {
                return stats;
            }
        }
    }
}

fn check_sender(m: &Message) -> Result<(), TransportError> {
    if m.sender != m.record.worker_id {
        return Err(TransportError::SenderMismatch { sender: m.sender, worker: m.record.worker_id });
    }
    Ok(())
}
