use std::collections::VecDeque;

use rand::Rng;

/// Fixed-capacity ring buffer sampled uniformly with replacement.
#[derive(Debug, Clone)]
pub struct ReplayMemory<E> {
    capacity: usize,
    items: Vec<E>,
    next: usize,
    pushed: u64,
}

impl<E> ReplayMemory<E> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            pushed: 0,
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

    /// Total insertions, including overwritten ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Inserts `item`, overwriting the oldest entry once full.
    pub fn push(&mut self, item: E) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    /// `batch` uniform draws with replacement; empty when the memory is.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&E> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &E> {
        self.items.iter()
    }
}

/// Whole episodes stored as one transition sequence per agent, for
/// sampling contiguous windows to unroll a recurrent net over.
#[derive(Debug, Clone)]
pub struct EpisodeMemory<E> {
    capacity: usize,
    episodes: VecDeque<Vec<Vec<E>>>,
    stored: usize,
}

impl<E> EpisodeMemory<E> {
    /// Memory holding at most `capacity` transitions across all episodes.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "episode memory capacity must be positive");
        Self {
            capacity,
            episodes: VecDeque::new(),
            stored: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.stored
    }

    pub fn is_empty(&self) -> bool {
        self.stored == 0
    }

    pub fn episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Stores one episode, given as per-agent sequences, evicting the oldest
    /// episodes until the total fits the capacity.
    pub fn push_episode(&mut self, per_agent: Vec<Vec<E>>) {
        let size: usize = per_agent.iter().map(Vec::len).sum();
        if size == 0 {
            return;
        }
        self.stored += size;
        self.episodes.push_back(per_agent);
        while self.stored > self.capacity && self.episodes.len() > 1 {
            let old = self.episodes.pop_front().expect("non-empty");
            self.stored -= old.iter().map(Vec::len).sum::<usize>();
        }
    }

    /// Number of distinct `(episode, agent, offset)` windows of length
    /// `len`.
    pub fn windows(&self, len: usize) -> usize {
        self.episodes
            .iter()
            .flatten()
            .map(|seq| (seq.len() + 1).saturating_sub(len))
            .sum()
    }

    /// `batch` windows of `len` consecutive transitions of one agent,
    /// uniform over all windows, with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, len: usize, rng: &mut R) -> Vec<&[E]> {
        assert!(len > 0, "window length must be positive");
        let total = self.windows(len);
        if total == 0 {
            return Vec::new();
        }
        let mut picks: Vec<(usize, usize)> = (0..batch).map(|slot| (rng.random_range(0..total), slot)).collect();
        picks.sort_unstable();
        let mut out: Vec<Option<&[E]>> = vec![None; batch];
        let mut base = 0;
        let mut next = 0;
        for seq in self.episodes.iter().flatten() {
            let count = (seq.len() + 1).saturating_sub(len);
            while next < picks.len() && picks[next].0 < base + count {
                let offset = picks[next].0 - base;
                out[picks[next].1] = Some(&seq[offset..offset + len]);
                next += 1;
            }
            base += count;
        }
        out.into_iter().map(|w| w.expect("every pick lands in a window")).collect()
    }
}
