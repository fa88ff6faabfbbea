//! Epoch-wise shuffled minibatch streams.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Yields full batches of row indices. Each epoch is a fresh shuffle; the
/// trailing partial batch is dropped and the stream restarts, so a short
/// stream cycles while a longer one is still in its first pass.
#[derive(Clone, Debug)]
pub struct BatchStream {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    epoch: usize,
}

impl BatchStream {
    pub fn new(rows: Vec<usize>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if rows.len() < batch_size {
            return Err(Error::Data(format!(
                "{} rows cannot fill a batch of {batch_size}",
                rows.len()
            )));
        }
        let pos = rows.len();
        Ok(Self {
            order: rows,
            batch_size,
            pos,
            epoch: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len() / self.batch_size
    }

    /// Completed shuffles so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        if self.pos + self.batch_size > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let batch = self.order[self.pos..self.pos + self.batch_size].to_vec();
        self.pos += self.batch_size;
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn drops_partial_batches_and_covers_each_epoch_without_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BatchStream::new((0..10).collect(), 4).unwrap();
        assert_eq!(s.batches_per_epoch(), 2);
        let a = s.next_batch(&mut rng);
        let b = s.next_batch(&mut rng);
        let mut seen: Vec<_> = a.iter().chain(&b).copied().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        assert_eq!(s.epoch(), 1);
        s.next_batch(&mut rng);
        assert_eq!(s.epoch(), 2);
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(BatchStream::new(vec![0, 1], 3), Err(Error::Data(_))));
        assert!(matches!(BatchStream::new(vec![0, 1], 0), Err(Error::Config(_))));
    }
}
