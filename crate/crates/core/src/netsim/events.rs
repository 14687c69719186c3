use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("event scheduled at {at} s, before the current time {now} s")]
pub struct PastEvent {
    pub at: f64,
    pub now: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub time: f64,
    pub sequence: u64,
    pub kind: K,
}

impl<K> Eq for Event<K> where K: PartialEq {}

impl<K: PartialEq> Ord for Event<K> {
    // reversed: BinaryHeap is a max-heap, we want the earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.sequence.cmp(&self.sequence))
    }
}

impl<K: PartialEq> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Future event list ordered by `(time, sequence)`; equal times pop FIFO.
#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<Event<K>>,
    next_sequence: u64,
    now: f64,
}

impl<K: PartialEq> Default for EventQueue<K> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_sequence: 0,
            now: 0.0,
        }
    }
}

impl<K: PartialEq> EventQueue<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, kind: K) -> Result<(), PastEvent> {
        if !(time >= self.now) {
            return Err(PastEvent {
                at: time,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Event { time, sequence, kind });
        Ok(())
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        let e = self.heap.pop()?;
        self.now = e.time;
        Some(e)
    }

    /// Pop events up to and including `until`, handing each to `handler`
    /// together with the queue so it can schedule follow-ups.
    pub fn run<E, F>(&mut self, until: f64, mut handler: F) -> Result<(), E>
    where
        F: FnMut(&mut Self, Event<K>) -> Result<(), E>,
    {
        while let Some(next) = self.heap.peek() {
            if next.time > until {
                break;
            }
            let e = self.pop().expect("peeked");
            handler(self, e)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_are_fifo() {
        let mut q = EventQueue::new();
        q.schedule(1.0, "a").unwrap();
        q.schedule(0.5, "b").unwrap();
        q.schedule(1.0, "c").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|e| e.kind)).collect();
        assert_eq!(order, vec!["b", "a", "c"]);
    }

    #[test]
    fn empty_queue_terminates() {
        let mut q: EventQueue<()> = EventQueue::new();
        let mut calls = 0;
        q.run::<(), _>(10.0, |_, _| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 0);
    }

    #[test]
    fn past_scheduling_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(2.0, 0).unwrap();
        q.pop();
        assert_eq!(q.schedule(1.0, 1), Err(PastEvent { at: 1.0, now: 2.0 }));
        assert!(q.schedule(2.0, 1).is_ok());
    }

    #[test]
    fn run_stops_at_horizon() {
        let mut q = EventQueue::new();
        for t in [0.5, 1.5, 2.5] {
            q.schedule(t, t).unwrap();
        }
        let mut seen = vec![];
        q.run::<(), _>(2.0, |_, e| {
            seen.push(e.kind);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0.5, 1.5]);
        assert_eq!(q.len(), 1);
    }
}
