//! Bounded FIFO ring buffer connecting pipeline stages.
//!
//! A full ring blocks the producer (backpressure); nothing is ever lost
//! inside a ring. The put/get counters expose occupancy without walking the
//! entries.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Accepted,
    /// Ring full; caller must retry after the consumer frees an entry.
    Blocked,
}

#[derive(Debug)]
pub struct RingBuffer<T> {
    capacity: usize,
    entries: VecDeque<T>,
    put_count: u64,
    get_count: u64,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> RingBuffer<T> {
        assert!(capacity > 0, "ring capacity must be positive");
        RingBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            put_count: 0,
            get_count: 0,
        }
    }

    pub fn put(&mut self, item: T) -> Result<(), (PutOutcome, T)> {
        if self.entries.len() == self.capacity {
            return Err((PutOutcome::Blocked, item));
        }
        self.entries.push_back(item);
        self.put_count += 1;
        Ok(())
    }

    pub fn get(&mut self) -> Option<T> {
        let item = self.entries.pop_front()?;
        self.get_count += 1;
        Some(item)
    }

    pub fn occupancy(&self) -> usize {
        debug_assert_eq!(
            self.entries.len() as u64,
            self.put_count - self.get_count
        );
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn put_count(&self) -> u64 {
        self.put_count
    }

    pub fn get_count(&self) -> u64 {
        self.get_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn put_into_empty_ring() {
        let mut r = RingBuffer::new(4);
        assert!(r.put(1u32).is_ok());
        assert_eq!(r.occupancy(), 1);
    }

    #[test]
    fn put_into_full_ring_blocks() {
        let mut r = RingBuffer::new(4);
        for i in 0..4 {
            r.put(i).unwrap();
        }
        let err = r.put(99).unwrap_err();
        assert_eq!(err.0, PutOutcome::Blocked);
        assert_eq!(err.1, 99);
        assert_eq!(r.occupancy(), 4);
    }

    #[test]
    fn get_is_fifo_and_empty_returns_none() {
        let mut r = RingBuffer::new(4);
        r.put('A').unwrap();
        r.put('B').unwrap();
        assert_eq!(r.get(), Some('A'));
        assert_eq!(r.get(), Some('B'));
        assert_eq!(r.get(), None);
    }

    #[test]
    fn random_interleavings_preserve_fifo() {
        // Model check: after 1000 random put/get interleavings, the sequence
        // of gotten items equals the sequence of accepted puts.
        let mut rng = Rng::new(0xF1F0, 2);
        for round in 0..1000 {
            let cap = 1 + rng.next_below(8) as usize;
            let mut ring = RingBuffer::new(cap);
            let mut accepted = Vec::new();
            let mut gotten = Vec::new();
            let mut next_item = 0u32;
            for _ in 0..rng.next_in(1, 64) {
                if rng.next_below(2) == 0 {
                    if ring.put(next_item).is_ok() {
                        accepted.push(next_item);
                    }
                    next_item += 1;
                } else if let Some(item) = ring.get() {
                    gotten.push(item);
                }
                assert!(ring.occupancy() <= cap, "round {round}");
            }
            while let Some(item) = ring.get() {
                gotten.push(item);
            }
            assert_eq!(gotten, accepted, "round {round}");
        }
    }

    #[test]
    fn counters_track_occupancy() {
        let mut r = RingBuffer::new(16);
        for i in 0..12u32 {
            r.put(i).unwrap();
        }
        for _ in 0..5 {
            r.get();
        }
        assert_eq!(r.put_count(), 12);
        assert_eq!(r.get_count(), 5);
        assert_eq!(r.occupancy(), 12 - 5);
    }
}
