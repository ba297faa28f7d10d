use rand::Rng;

use super::RlError;

/// Fixed-capacity ring of experiences with FIFO eviction.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    /// Slot the next push overwrites once full.
    head: usize,
    inserted: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            inserted: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
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

    /// Total pushes ever, including evicted items.
    pub fn insert_count(&self) -> u64 {
        self.inserted
    }

    /// Item `i` in age order, 0 being the oldest retained.
    pub fn get(&self, i: usize) -> Option<&T> {
        if i >= self.items.len() {
            return None;
        }
        self.items.get((self.head + i) % self.items.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        (0..self.len()).map(move |i| self.get(i).expect("index in range"))
    }

    /// Uniform indices with replacement, in age order.
    pub fn sample_indices<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>, RlError> {
        if self.items.len() < batch_size || batch_size == 0 {
            return Err(RlError::Underfull {
                len: self.items.len(),
                batch_size,
            });
        }
        Ok((0..batch_size).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&T>, RlError> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.get(i).expect("sampled index in range"))
            .collect())
    }
}
