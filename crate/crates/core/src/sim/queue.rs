use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::clock::{SimClock, Tick};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot schedule at tick {at}: current tick is {now}")]
pub struct PastTickError {
    pub at: Tick,
    pub now: Tick,
}

struct Scheduled<E> {
    at: Tick,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // BinaryHeap is a max-heap; invert so the earliest (tick, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Priority queue of future events. Events at the same tick run in
/// insertion order.
pub struct EventQueue<E> {
    clock: SimClock,
    next_seq: u64,
    heap: BinaryHeap<Scheduled<E>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue {
            clock: SimClock::default(),
            next_seq: 0,
            heap: BinaryHeap::new(),
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Tick {
        self.clock.now()
    }

    pub fn schedule(&mut self, event: E, at: Tick) -> Result<(), PastTickError> {
        let now = self.clock.now();
        if at < now {
            return Err(PastTickError { at, now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { at, seq, event });
        Ok(())
    }

    /// Schedules `delay` ticks after now; cannot fail.
    pub fn schedule_in(&mut self, event: E, delay: Tick) {
        let at = self.clock.now() + delay;
        self.schedule(event, at).expect("future tick");
    }

    /// Advances the clock to `tick` without popping anything.
    pub fn advance_to(&mut self, tick: Tick) {
        self.clock.advance_to(tick);
    }

    /// Pops the next event due at or before the current tick.
    pub fn pop_due(&mut self) -> Option<E> {
        if self.heap.peek()?.at <= self.clock.now() {
            self.heap.pop().map(|s| s.event)
        } else {
            None
        }
    }

    /// Pops the next event regardless of tick, advancing the clock to it.
    pub fn pop_next(&mut self) -> Option<(Tick, E)> {
        let s = self.heap.pop()?;
        self.clock.advance_to(s.at);
        Some((s.at, s.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
