use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use nalgebra::DVector;

/// Simulation events. Variant order is not significant; same-time events
/// are ordered by [`Event::priority`].
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A decoded data packet reaches the gateway.
    Delivery {
        loop_idx: usize,
        gen_step: u64,
        state: DVector<f64>,
        /// Start time of the poll this packet answers.
        poll_us: Option<u64>,
    },
    AckArrive { loop_idx: usize, gen_step: u64 },
    SampleTick { step: u64 },
    FrameStart { slot: u64 },
    SlotStart { slot: u64 },
    PollTimeout { poll_id: u64 },
    PollStart,
    PollReply { poll_id: u64, loop_idx: usize },
}

impl Event {
    /// Rank among events at the same instant; lower runs first.
    pub fn priority(&self) -> u8 {
        match self {
            Event::Delivery { .. } => 0,
            Event::AckArrive { .. } => 1,
            Event::SampleTick { .. } => 2,
            Event::FrameStart { .. } => 3,
            Event::SlotStart { .. } => 4,
            Event::PollTimeout { .. } => 5,
            Event::PollStart | Event::PollReply { .. } => 6,
        }
    }

    fn loop_key(&self) -> usize {
        match self {
            Event::Delivery { loop_idx, .. } | Event::AckArrive { loop_idx, .. } | Event::PollReply { loop_idx, .. } => {
                *loop_idx
            }
            _ => 0,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    key: (u64, u8, usize, u64),
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Time-ordered event queue with microsecond timestamps. Ties are broken by
/// event priority, then loop index, then insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    now: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `event` at `time_us`. Scheduling into the past is a logic
    /// error and panics in debug builds.
    pub fn push(&mut self, time_us: u64, event: Event) {
        debug_assert!(time_us >= self.now, "event scheduled in the past");
        let key = (time_us, event.priority(), event.loop_key(), self.seq);
        self.seq += 1;
        self.heap.push(Reverse(Scheduled { key, event }));
    }

    pub fn pop(&mut self) -> Option<(u64, Event)> {
        let Reverse(s) = self.heap.pop()?;
        self.now = s.key.0;
        Some((s.key.0, s.event))
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn same_time_priority_order() {
        let mut q = EventQueue::new();
        q.push(10, Event::PollStart);
        q.push(10, Event::SlotStart { slot: 1 });
        q.push(10, Event::SampleTick { step: 1 });
        q.push(10, Event::Delivery { loop_idx: 2, gen_step: 0, state: DVector::zeros(1), poll_us: None });
        q.push(10, Event::Delivery { loop_idx: 1, gen_step: 0, state: DVector::zeros(1), poll_us: None });
        q.push(5, Event::FrameStart { slot: 0 });
        let order: Vec<u8> = std::iter::from_fn(|| q.pop()).map(|(_, e)| e.priority()).collect();
        assert_eq!(order, vec![3, 0, 0, 2, 4, 6]);
    }

    proptest! {
        #[test]
        fn pops_are_non_decreasing(times in proptest::collection::vec(0u64..1000, 1..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.push(*t, Event::SampleTick { step: i as u64 });
            }
            let mut last = 0;
            while let Some((t, _)) = q.pop() {
                prop_assert!(t >= last);
                last = t;
            }
        }
    }
}
