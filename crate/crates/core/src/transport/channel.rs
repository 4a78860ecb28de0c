use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};

use super::{check_sender, Message, Transport, TransportError};
use crate::history::WorkerId;

/// Endpoint over one unbounded channel per ordered worker pair.
///
/// Dropping an endpoint closes it: peers then skip it when sending.
#[derive(Debug)]
pub struct ChannelEndpoint {
    rank: WorkerId,
    size: usize,
    /// Indexed by 0-based peer rank; `None` at our own index.
    outgoing: Vec<Option<Sender<Message>>>,
    incoming: Vec<Option<Receiver<Message>>>,
    closed: bool,
}

/// Builds a fully connected set of endpoints with ranks `1..=size`.
pub fn channel_mesh(size: usize) -> Vec<ChannelEndpoint> {
    let mut outgoing: Vec<Vec<Option<Sender<Message>>>> = (0..size).map(|_| vec![None; size]).collect();
    let mut incoming: Vec<Vec<Option<Receiver<Message>>>> =
        (0..size).map(|_| (0..size).map(|_| None).collect()).collect();
    for from in 0..size {
        for to in (0..size).filter(|&to| to != from) {
            let (tx, rx) = channel();
            outgoing[from][to] = Some(tx);
            incoming[to][from] = Some(rx);
        }
    }
    outgoing
        .into_iter()
        .zip(incoming)
        .enumerate()
        .map(|(i, (outgoing, incoming))| ChannelEndpoint {
            rank: i as WorkerId + 1,
            size,
            outgoing,
            incoming,
            closed: false,
        })
        .collect()
}

impl ChannelEndpoint {
    /// Stops sending; further `send_all` calls fail.
    pub fn close(&mut self) {
        self.closed = true;
        self.outgoing.iter_mut().for_each(|s| *s = None);
    }
}

impl Transport for ChannelEndpoint {
    fn rank(&self) -> WorkerId {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send_all(&mut self, m: &Message) -> Result<usize, TransportError> {
        check_sender(m)?;
        if self.closed {
            return Err(TransportError::Closed(self.rank));
        }
        let mut sent = 0;
        for slot in &mut self.outgoing {
            if let Some(tx) = slot {
                if tx.send(m.clone()).is_ok() {
                    sent += 1;
                } else {
                    *slot = None;
                }
            }
        }
        Ok(sent)
    }

    fn poll(&mut self, peer: WorkerId) -> Option<Message> {
        let slot = &mut self.incoming[peer as usize - 1];
        match slot.as_ref()?.try_recv() {
            Ok(m) => Some(m),
            Err(TryRecvError::Empty) => None,
            Err(TryRecvError::Disconnected) => {
                *slot = None;
                None
            }
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
            objective: 0.0,
            t_start: 0.0,
            t_end: 0.0,
            worker_id,
            seq,
        })
    }

    #[test]
    fn mesh_delivers_in_sender_order() {
        let mut mesh = channel_mesh(3);
        for seq in 0..5 {
            assert_eq!(mesh[0].send_all(&msg(1, seq)).unwrap(), 2);
        }
        let mut h = History::new();
        let stats = mesh[2].recv_any(&mut h);
        assert_eq!(stats.received, 5);
        assert_eq!(h.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dropped_peer_is_skipped() {
        let mut mesh = channel_mesh(3);
        let gone = mesh.pop().unwrap();
        drop(gone);
        assert_eq!(mesh[0].send_all(&msg(1, 0)).unwrap(), 1);
        mesh[1].close();
        assert_eq!(mesh[1].send_all(&msg(2, 0)), Err(TransportError::Closed(2)));
    }
}
