//! FIFO ring replay buffer with uniform sampling.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::render::ObsImage;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Arc<ObsImage>,
    pub action: usize,
    pub reward: f32,
    pub next_obs: Arc<ObsImage>,
    pub done: bool,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    buf: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { buf: Vec::with_capacity(capacity.min(1 << 20)), capacity, cursor: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform sample with replacement over the stored entries.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&Transition> {
        assert!(!self.buf.is_empty(), "sampling an empty replay buffer");
        (0..batch).map(|_| &self.buf[rng.random_range(0..self.buf.len())]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }
}
