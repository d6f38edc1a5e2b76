use rand::Rng;

use crate::env::State;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    /// Index into the action set.
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions; the oldest entry is overwritten
/// once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.entries.len() < self.capacity {
            self.entries.push(t);
        } else {
            self.entries[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement; `None` until `batch` entries exist.
    pub fn sample<'a, R: Rng + ?Sized>(
        &'a self,
        batch: usize,
        rng: &mut R,
    ) -> Option<Vec<&'a Transition>> {
        if batch == 0 || self.entries.len() < batch {
            return None;
        }
        Some(
            (0..batch)
                .map(|_| &self.entries[rng.random_range(0..self.entries.len())])
                .collect(),
        )
    }
}
