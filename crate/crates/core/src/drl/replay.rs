use rand::seq::index;
use rand::Rng;

use crate::dynamics::KinematicState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub s: KinematicState,
    pub a: f64,
    pub r: f64,
    pub s2: KinematicState,
    /// Episode boundary: the bootstrap term is dropped.
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling without replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `batch` distinct indices drawn uniformly, or `None` if the buffer is
    /// too small.
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, batch: usize) -> Option<Vec<usize>> {
        if self.items.len() < batch {
            return None;
        }
        Some(index::sample(rng, self.items.len(), batch).into_vec())
    }
}
