//! Deterministic event scheduler.
//!
//! Events are totally ordered by `(fire_at, insertion sequence)`, so two
//! events scheduled for the same instant fire in the order they were queued.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

/// Handle returned by [`EventQueue::schedule`]; doubles as the insertion
/// sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(u64);

impl EventId {
    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("event scheduled in the past: fire_at={fire_at} < now={now}")]
    InPast { fire_at: SimTime, now: SimTime },
}

struct Entry<T> {
    at: SimTime,
    id: EventId,
    payload: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.id == other.id
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    // Reversed: BinaryHeap is a max-heap and we want the earliest first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.id).cmp(&(self.at, self.id))
    }
}

/// Counters returned by [`EventQueue::run_until`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub events_processed: u64,
    pub events_cancelled: u64,
    pub clock: SimTime,
    /// No events left in the queue when the run returned.
    pub quiescent: bool,
}

/// An event handed to the run-loop handler.
#[derive(Debug)]
pub struct Fired<T> {
    pub at: SimTime,
    pub id: EventId,
    pub payload: T,
}

pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    // one bit per issued id; set while the event is pending
    live: Vec<u64>,
    next_seq: u64,
    now: SimTime,
    pending: usize,
    processed: u64,
    cancelled: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            live: Vec::new(),
            next_seq: 0,
            now: SimTime::ZERO,
            pending: 0,
            processed: 0,
            cancelled: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events scheduled and neither fired nor cancelled.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn is_empty(&self) -> bool {
        self.pending == 0
    }

    pub fn schedule(&mut self, at: SimTime, payload: T) -> Result<EventId, ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::InPast {
                fire_at: at,
                now: self.now,
            });
        }
        let id = EventId(self.next_seq);
        self.next_seq += 1;
        self.set_live(id, true);
        self.pending += 1;
        self.heap.push(Entry { at, id, payload });
        Ok(id)
    }

    /// Schedules `delay` after the current clock; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, payload: T) -> EventId {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns true iff the event existed and had not yet fired.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if !self.is_live(id) {
            return false;
        }
        self.set_live(id, false);
        self.pending -= 1;
        self.cancelled += 1;
        true
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Fired<T>> {
        loop {
            let top = self.heap.peek()?;
            if top.at > t_end {
                return None;
            }
            let Entry { at, id, payload } = self.heap.pop().expect("peeked");
            if !self.is_live(id) {
                continue;
            }
            self.set_live(id, false);
            self.pending -= 1;
            self.processed += 1;
            self.now = at;
            return Some(Fired { at, id, payload });
        }
    }

    /// Processes every event with `fire_at <= t_end` in order. The handler
    /// receives the queue so it can schedule follow-up events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> SimStats
    where
        F: FnMut(&mut Self, Fired<T>),
    {
        let start_processed = self.processed;
        let start_cancelled = self.cancelled;
        let mut fired_any = false;
        while let Some(ev) = self.pop_until(t_end) {
            fired_any = true;
            handler(self, ev);
        }
        if !self.is_empty() || !fired_any {
            self.now = self.now.max(t_end);
        }
        SimStats {
            events_processed: self.processed - start_processed,
            events_cancelled: self.cancelled - start_cancelled,
            clock: self.now,
            quiescent: self.is_empty(),
        }
    }

    fn is_live(&self, id: EventId) -> bool {
        let (w, b) = ((id.0 / 64) as usize, id.0 % 64);
        self.live.get(w).is_some_and(|word| word & (1 << b) != 0)
    }

    fn set_live(&mut self, id: EventId, on: bool) {
        let (w, b) = ((id.0 / 64) as usize, id.0 % 64);
        if w >= self.live.len() {
            self.live.resize(w + 1, 0);
        }
        if on {
            self.live[w] |= 1 << b;
        } else {
            self.live[w] &= !(1 << b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn schedule_at_zero_fires_first() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), 'b').unwrap();
        q.schedule(SimTime(0), 'a').unwrap();
        let mut seen = Vec::new();
        q.run_until(SimTime(100), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, vec!['a', 'b']);
    }

    #[test]
    fn ties_fire_in_insertion_order() {
        let mut q = EventQueue::new();
        for i in 0..5 {
            q.schedule(SimTime(7), i).unwrap();
        }
        let mut seen = Vec::new();
        q.run_until(SimTime(7), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn scheduling_in_the_past_fails() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), ()).unwrap();
        q.run_until(SimTime(10), |_, _| {});
        let err = q.schedule(SimTime(5), ()).unwrap_err();
        assert_eq!(
            err,
            ScheduleError::InPast {
                fire_at: SimTime(5),
                now: SimTime(10)
            }
        );
    }

    #[test]
    fn empty_queue_advances_clock_to_end() {
        let mut q: EventQueue<()> = EventQueue::new();
        let stats = q.run_until(SimTime(500), |_, _| {});
        assert_eq!(stats.clock, SimTime(500));
        assert_eq!(stats.events_processed, 0);
        assert!(stats.quiescent);
    }

    #[test]
    fn events_after_horizon_do_not_fire() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(100), ()).unwrap();
        let stats = q.run_until(SimTime(50), |_, _| panic!("fired early"));
        assert_eq!(stats.clock, SimTime(50));
        assert!(!stats.quiescent);
        assert_eq!(q.pending(), 1);
    }

    #[test]
    fn clock_stops_at_last_event_when_drained() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(100), ()).unwrap();
        let stats = q.run_until(SimTime(1_000), |_, _| {});
        assert_eq!(stats.clock, SimTime(100));
    }

    #[test]
    fn cancel_semantics() {
        let mut q = EventQueue::new();
        let a = q.schedule(SimTime(5), 'a').unwrap();
        let b = q.schedule(SimTime(6), 'b').unwrap();
        assert!(q.cancel(b));
        assert!(!q.cancel(b), "second cancel must report false");
        let mut seen = Vec::new();
        q.run_until(SimTime(10), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, vec!['a']);
        assert!(!q.cancel(a), "already fired");
    }

    #[test]
    fn handler_can_schedule_follow_ups() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(0), 0u32).unwrap();
        let mut count = 0;
        let stats = q.run_until(SimTime(1_000), |q, ev| {
            count += 1;
            if ev.payload < 9 {
                q.schedule_in(SimTime(10), ev.payload + 1);
            }
        });
        assert_eq!(count, 10);
        assert_eq!(stats.clock, SimTime(90));
    }
}
