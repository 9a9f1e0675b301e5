use std::collections::VecDeque;

use rand::Rng;

/// Stored experience in network form.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: [f64; 4],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; 4],
    pub terminal: bool,
    /// Actions available from `next_state`; empty when terminal.
    pub next_feasible: Vec<usize>,
}

/// Fixed-capacity FIFO buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` draws with replacement, or `None` while fewer than `n` are stored.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<&T>> {
        if n == 0 || self.items.len() < n {
            return None;
        }
        Some(
            (0..n)
                .map(|_| &self.items[rng.gen_range(0..self.items.len())])
                .collect(),
        )
    }
}
