//! Replay storage: a bounded ring buffer, a mutex-guarded shared variant for
//! concurrent producers, and per-task buffers with a support/query split.

use std::sync::Mutex;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use uavlc_core::env::Transition;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            data: Vec::new(),
            next: 0,
        }
    }

    pub fn from_transitions(capacity: usize, items: impl IntoIterator<Item = Transition>) -> Self {
        let mut buf = ReplayBuffer::new(capacity);
        for t in items {
            buf.push(t);
        }
        buf
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Inserts a transition, overwriting the oldest once full.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    /// Indices of a uniform batch drawn without replacement.
    ///
    /// Returns `min(batch, len)` distinct indices.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        let amount = batch.min(self.data.len());
        index::sample(rng, self.data.len(), amount).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        self.sample_indices(batch, rng)
            .into_iter()
            .map(|i| self.data[i].clone())
            .collect()
    }
}

/// Replay buffer shared between rollout producers and a single learner.
///
/// Every operation holds the lock for its whole duration, so pushes and
/// samples are atomic with respect to each other.
#[derive(Debug)]
pub struct SharedReplay {
    inner: Mutex<ReplayBuffer>,
}

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        SharedReplay {
            inner: Mutex::new(ReplayBuffer::new(capacity)),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ReplayBuffer> {
        // A panicking producer cannot leave the ring half-written.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn push(&self, t: Transition) {
        self.lock().push(t);
    }

    pub fn extend(&self, items: impl IntoIterator<Item = Transition>) {
        let mut guard = self.lock();
        for t in items {
            guard.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        self.lock().sample(batch, rng)
    }

    pub fn into_inner(self) -> ReplayBuffer {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

/// Transitions collected on one task, `D_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBuffer {
    pub task_id: usize,
    buffer: ReplayBuffer,
}

impl TaskBuffer {
    pub fn new(task_id: usize, capacity: usize) -> Self {
        TaskBuffer {
            task_id,
            buffer: ReplayBuffer::new(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Uniform disjoint split into support (`D_t^tr`) and query (`D_t^val`).
    ///
    /// The support part gets `round(fraction · len)` transitions, at least one
    /// when the buffer is non-empty; the query part keeps the rest and may be
    /// empty for tiny buffers.
    pub fn split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> (ReplayBuffer, ReplayBuffer) {
        let n = self.buffer.len();
        let cap = self.buffer.capacity();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let n_support = if n == 0 {
            0
        } else {
            ((fraction * n as f64).round() as usize).clamp(1, n)
        };
        let take = |idx: &[usize]| {
            ReplayBuffer::from_transitions(cap, idx.iter().map(|&i| self.buffer.data[i].clone()))
        };
        let (sup, query) = order.split_at(n_support);
        (take(sup), take(query))
    }
}
