//! Replay storage: a uniform ring buffer and a sum-tree prioritised buffer.

use rand::Rng;

use crate::codec::{Decoder, Encoder};
use crate::env::{Transition, OBS_DIM};
use crate::error::{Error, Result};

/// Compact stored transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub obs: [f64; OBS_DIM],
    pub action: usize,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub done: bool,
}

impl Experience {
    pub fn from_transition(t: &Transition) -> Self {
        Self {
            obs: t.obs.to_array(),
            action: t.action.index(),
            reward: t.reward,
            next_obs: t.next_obs.to_array(),
            done: t.done,
        }
    }

    fn encode(&self, enc: &mut Encoder) {
        self.obs.iter().for_each(|&v| enc.f64(v));
        enc.u8(self.action as u8);
        enc.f64(self.reward);
        self.next_obs.iter().for_each(|&v| enc.f64(v));
        enc.bool(self.done);
    }

    fn decode(dec: &mut Decoder) -> Result<Self> {
        let mut obs = [0.0; OBS_DIM];
        for v in &mut obs {
            *v = dec.f64()?;
        }
        let action = dec.u8()? as usize;
        let reward = dec.f64()?;
        let mut next_obs = [0.0; OBS_DIM];
        for v in &mut next_obs {
            *v = dec.f64()?;
        }
        Ok(Self { obs, action, reward, next_obs, done: dec.bool()? })
    }
}

/// Fixed-capacity FIFO ring with uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self { capacity, items: Vec::new(), next: 0 })
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

    /// Appends, evicting the oldest item when full. Returns the slot used.
    pub fn push(&mut self, e: Experience) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[slot] = e;
        }
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Experience>> {
        if self.items.len() < batch || batch == 0 {
            return Err(Error::contract(format!(
                "cannot sample {batch} items from a buffer of {}",
                self.items.len()
            )));
        }
        Ok((0..batch).map(|_| self.items[rng.random_range(0..self.items.len())]).collect())
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.capacity);
        enc.usize(self.next);
        enc.usize(self.items.len());
        self.items.iter().for_each(|e| e.encode(enc));
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let capacity = dec.usize()?;
        let next = dec.usize()?;
        let n = dec.usize()?;
        if n > capacity || next >= capacity.max(1) {
            return Err(Error::Integrity("replay buffer header is inconsistent".into()));
        }
        let items = (0..n).map(|_| Experience::decode(dec)).collect::<Result<_>>()?;
        Ok(Self { capacity, items, next })
    }
}

/// Binary tree of partial sums over a fixed number of leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf index whose prefix-sum interval contains `mass`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }

    /// Every internal node equals the sum of its children (up to rounding).
    pub fn is_consistent(&self) -> bool {
        (1..self.leaves).all(|k| {
            let s = self.nodes[2 * k] + self.nodes[2 * k + 1];
            (self.nodes[k] - s).abs() <= 1e-9 * (1.0 + s.abs())
        })
    }
}

/// Prioritised replay: `P(i) ∝ p_i^α`, importance weights `(n·P(i))^(−β)`
/// normalised by the batch maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedBuffer {
    buffer: ReplayBuffer,
    tree: SumTree,
    priorities: Vec<f64>,
    alpha: f64,
    priority_floor: f64,
    max_priority: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedSample {
    pub items: Vec<Experience>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, alpha: f64, priority_floor: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(priority_floor > 0.0) {
            return Err(Error::config("priority exponent must be >= 0 and priority floor > 0"));
        }
        Ok(Self {
            buffer: ReplayBuffer::new(capacity)?,
            tree: SumTree::new(capacity),
            priorities: vec![0.0; capacity],
            alpha,
            priority_floor,
            max_priority: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    pub fn mean_priority(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.priorities[..self.len()].iter().sum::<f64>() / self.len() as f64
    }

    /// New items get the largest priority seen so far.
    pub fn push(&mut self, e: Experience) -> usize {
        let slot = self.buffer.push(e);
        self.set_priority(slot, self.max_priority);
        slot
    }

    pub fn push_with_priority(&mut self, e: Experience, priority: f64) -> usize {
        let slot = self.buffer.push(e);
        self.set_priority(slot, priority);
        slot
    }

    fn set_priority(&mut self, i: usize, p: f64) {
        let p = p.max(self.priority_floor);
        self.priorities[i] = p;
        self.max_priority = self.max_priority.max(p);
        self.tree.set(i, p.powf(self.alpha));
    }

    /// Raw priorities are floored at the configured minimum.
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) -> Result<()> {
        if indices.len() != priorities.len() {
            return Err(Error::contract("indices and priorities differ in length"));
        }
        for (&i, &p) in indices.iter().zip(priorities) {
            if i >= self.len() || !p.is_finite() {
                return Err(Error::contract(format!("invalid priority update ({i}, {p})")));
            }
            self.set_priority(i, p);
        }
        Ok(())
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<PrioritizedSample> {
        if self.is_empty() || batch == 0 {
            return Err(Error::contract(format!(
                "cannot sample {batch} items from a buffer of {}",
                self.len()
            )));
        }
        let total = self.tree.total();
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let i = self.tree.find(rng.random::<f64>() * total).min(self.len() - 1);
            indices.push(i);
            weights.push((n * self.probability(i)).powf(-beta));
        }
        let wmax = weights.iter().copied().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= wmax);
        let items = indices.iter().map(|&i| *self.buffer.get(i)).collect();
        Ok(PrioritizedSample { items, indices, weights })
    }

    pub fn encode(&self, enc: &mut Encoder) {
        self.buffer.encode(enc);
        enc.f64_slice(&self.priorities[..self.len()]);
        enc.f64(self.alpha);
        enc.f64(self.priority_floor);
        enc.f64(self.max_priority);
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let buffer = ReplayBuffer::decode(dec)?;
        let stored = dec.f64_vec_exact(buffer.len())?;
        let alpha = dec.f64()?;
        let priority_floor = dec.f64()?;
        let max_priority = dec.f64()?;
        let mut tree = SumTree::new(buffer.capacity());
        let mut priorities = vec![0.0; buffer.capacity()];
        for (i, &p) in stored.iter().enumerate() {
            priorities[i] = p;
            tree.set(i, p.powf(alpha));
        }
        Ok(Self { buffer, tree, priorities, alpha, priority_floor, max_priority })
    }
}
