use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use super::EpisodeRecord;

/// Fixed-capacity FIFO of whole episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// Draws `batch` distinct episodes, or `None` if too few are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&EpisodeRecord>> {
        if batch == 0 || batch > self.episodes.len() {
            return None;
        }
        let mut idx = sample(rng, self.episodes.len(), batch).into_vec();
        idx.sort_unstable();
        Some(idx.into_iter().map(|i| &self.episodes[i]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(seed: u64) -> EpisodeRecord {
        EpisodeRecord {
            seed,
            variant: Variant::Nocomm,
            n_agents: 2,
            n_actions: 3,
            steps: Vec::new(),
            success: false,
        }
    }

    #[test]
    fn evicts_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for s in 0..5 {
            buf.push(episode(s));
        }
        assert_eq!(buf.iter().map(|e| e.seed).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn samples_without_replacement() {
        let mut buf = ReplayBuffer::new(10);
        for s in 0..10 {
            buf.push(episode(s));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seeds: Vec<u64> = buf.sample(10, &mut rng).unwrap().iter().map(|e| e.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 10);
        assert!(buf.sample(11, &mut rng).is_none());
    }
}
