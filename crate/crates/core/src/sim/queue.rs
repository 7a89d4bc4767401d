use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("event at {fire_at} ms is earlier than the current time {now} ms")]
pub struct PastDated {
    pub fire_at: u64,
    pub now: u64,
}

struct Entry<E> {
    fire_at: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.seq) == (other.fire_at, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// Events ordered by `(fire_at, seq)`; `seq` grows with every insertion.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    next_seq: u64,
    now: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues `event`; returns its sequence number.
    pub fn schedule(&mut self, fire_at: u64, event: E) -> Result<u64, PastDated> {
        if fire_at < self.now {
            return Err(PastDated { fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { fire_at, seq, event }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(e)| e.fire_at)
    }

    /// Removes the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(u64, u64, E)> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.fire_at;
        Some((e.fire_at, e.seq, e.event))
    }

    /// Moves the clock forward without firing anything.
    pub fn advance_to(&mut self, t: u64) {
        self.now = self.now.max(t);
    }
}
