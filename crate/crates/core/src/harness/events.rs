use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::history::WorkerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Ask,
    EvalStart,
    EvalEnd,
    Send,
    Recv,
    FitStart,
    FitEnd,
    BarrierWait,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Ask => "ask",
            EventKind::EvalStart => "eval_start",
            EventKind::EvalEnd => "eval_end",
            EventKind::Send => "send",
            EventKind::Recv => "recv",
            EventKind::FitStart => "fit_start",
            EventKind::FitEnd => "fit_end",
            EventKind::BarrierWait => "barrier_wait",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use EventKind::*;
        [Ask, EvalStart, EvalEnd, Send, Recv, FitStart, FitEnd, BarrierWait]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

/// One entry of the run's event log. Worker 0 is the central manager.
///
/// `payload` is a size: messages sent or received, training-set size for
/// fits, or the evaluation's sequence number for eval events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub worker: WorkerId,
    pub kind: EventKind,
    pub payload: u64,
}

pub fn write_events_csv<W: Write>(events: &[Event], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv<R: Read>(input: R) -> csv::Result<Vec<Event>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let events = [
            Event { time: 0.0, worker: 1, kind: EventKind::EvalStart, payload: 0 },
            Event { time: 61.5, worker: 1, kind: EventKind::BarrierWait, payload: 3 },
        ];
        let mut buf = Vec::new();
        write_events_csv(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "time,worker,kind,payload\n0.0,1,eval_start,0\n61.5,1,barrier_wait,3\n");
        assert_eq!(read_events_csv(buf.as_slice()).unwrap(), events);
    }
}
