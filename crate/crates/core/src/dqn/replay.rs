//! Fixed-capacity experience replay with uniform sampling.

use std::collections::VecDeque;

use rand::Rng;

use crate::env::{Features, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::mask::FeasibleSets;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Features,
    pub action: usize,
    pub reward: f64,
    pub next_features: Features,
    pub done: bool,
    /// Feasible sets of the next state, recorded when the transition was collected.
    pub next_sets: FeasibleSets,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if self.action >= NUM_ACTIONS {
            return Err(Error::invalid(format!("action {} outside the joint space", self.action)));
        }
        if !self.reward.is_finite() {
            return Err(Error::Numerical(format!("non-finite reward {}", self.reward)));
        }
        Ok(())
    }
}

/// FIFO buffer: once full, every push evicts the oldest transition.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
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

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` positions drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::invalid("cannot sample from an empty replay buffer"));
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
