use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::domain::{AppId, SimTime};

/// Event kinds in tie-break order: at equal times a monitor tick is handled
/// before shaping (so forecasters see the tick's usage first), and
/// submissions come last so they see all capacity freed at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    MonitorTick,
    ShapeTick,
    AppComplete { generation: u64 },
    Resubmit,
    Submit,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::MonitorTick => 0,
            EventKind::ShapeTick => 1,
            EventKind::AppComplete { .. } => 2,
            EventKind::Resubmit => 3,
            EventKind::Submit => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    /// Application the event concerns; ticks use `AppId(0)`.
    pub app: AppId,
    seq: u64,
}

impl Event {
    fn key(&self) -> (SimTime, u8, AppId, u64) {
        (self.time, self.kind.rank(), self.app, self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue with a total order on (time, kind, app, insertion sequence).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: SimTime, kind: EventKind, app: AppId) {
        self.seq += 1;
        self.heap.push(Reverse(Event { time, kind, app, seq: self.seq }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
