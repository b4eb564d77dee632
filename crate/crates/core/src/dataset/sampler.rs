//! BPR triplet sampling with rejection-based negatives.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Incidence};

/// Which incidence table the triplet was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BprMode {
    /// Anchor is a user, positive/negative are items.
    UserItem,
    /// Anchor is an item, positive/negative are tags.
    ItemTag,
}

/// One ranking triplet: `(anchor, positive)` is observed in train,
/// `(anchor, negative)` is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriplet {
    pub anchor: u32,
    pub positive: u32,
    pub negative: u32,
}

/// Owns its RNG; not shared between threads.
pub struct BprSampler {
    mode: BprMode,
    rng: ChaCha8Rng,
    max_rejects: usize,
}

const DEFAULT_MAX_REJECTS: usize = 100;

impl BprSampler {
    pub fn new(mode: BprMode, seed: u64) -> Self {
        Self { mode, rng: ChaCha8Rng::seed_from_u64(seed), max_rejects: DEFAULT_MAX_REJECTS }
    }

    pub fn from_rng(mode: BprMode, rng: ChaCha8Rng) -> Self {
        Self { mode, rng, max_rejects: DEFAULT_MAX_REJECTS }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn table<'a>(&self, dataset: &'a Dataset) -> &'a Incidence {
        match self.mode {
            BprMode::UserItem => &dataset.ui_train,
            BprMode::ItemTag => &dataset.it_labels,
        }
    }

    /// Sample `batch_size` triplets. Anchors are drawn uniformly over observed
    /// train pairs; one negative per positive by rejection sampling over the
    /// non-observed columns. An anchor whose row rejects too many times (or is
    /// fully dense) is resampled.
    pub fn sample_batch(&mut self, dataset: &Dataset, batch_size: usize) -> Vec<BprTriplet> {
        let table = self.table(dataset);
        let nnz = table.nnz();
        assert!(nnz > 0, "train split must be nonempty");
        let n_cols = table.n_cols() as u32;
        let mut out = Vec::with_capacity(batch_size);
        while out.len() < batch_size {
            let pair_idx = self.rng.random_range(0..nnz);
            // locate the row owning this flat pair index
            let row = table.row_ptr().partition_point(|&p| p <= pair_idx) - 1;
            let positive = table.col_idx()[pair_idx];
            if table.degree(row) as u32 == n_cols {
                // fully dense row: no negative exists, resample the anchor
                continue;
            }
            let mut found = None;
            for _ in 0..self.max_rejects {
                let cand = self.rng.random_range(0..n_cols);
                if !table.contains(row, cand) {
                    found = Some(cand);
                    break;
                }
            }
            let Some(negative) = found else { continue };
            out.push(BprTriplet { anchor: row as u32, positive, negative });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{IdMap, IdMaps};

    fn tiny_dataset() -> Dataset {
        // 3 users, 4 items; u0 interacted with everything but item 3
        let pairs = vec![(0, 0), (0, 1), (0, 2), (1, 0), (2, 1), (2, 3)];
        let it = vec![(0, 0), (1, 0), (2, 1), (3, 1)];
        Dataset {
            n_users: 3,
            n_items: 4,
            n_tags: 2,
            ui_train: Incidence::from_pairs(3, 4, &pairs),
            ui_valid: Incidence::from_pairs(3, 4, &[]),
            ui_test: Incidence::from_pairs(3, 4, &[]),
            it_labels: Incidence::from_pairs(4, 2, &it),
            id_maps: IdMaps {
                users: IdMap::from_names(vec!["a".into(), "b".into(), "c".into()]),
                items: IdMap::from_names((0..4).map(|i| format!("i{i}")).collect()),
                tags: IdMap::from_names(vec!["t0".into(), "t1".into()]),
            },
        }
    }

    #[test]
    fn batch_triplets_respect_observedness() {
        let ds = tiny_dataset();
        let mut sampler = BprSampler::new(BprMode::UserItem, 9);
        let batch = sampler.sample_batch(&ds, 512);
        assert_eq!(batch.len(), 512);
        for t in &batch {
            assert!(ds.ui_train.contains(t.anchor as usize, t.positive));
            assert!(!ds.ui_train.contains(t.anchor as usize, t.negative));
        }
    }

    #[test]
    fn nearly_dense_row_forces_the_single_negative() {
        let ds = tiny_dataset();
        let mut sampler = BprSampler::new(BprMode::UserItem, 11);
        for t in sampler.sample_batch(&ds, 256) {
            if t.anchor == 0 {
                assert_eq!(t.negative, 3, "user 0 has only item 3 unobserved");
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_batch_sequence() {
        let ds = tiny_dataset();
        let mut a = BprSampler::new(BprMode::ItemTag, 5);
        let mut b = BprSampler::new(BprMode::ItemTag, 5);
        for _ in 0..4 {
            assert_eq!(a.sample_batch(&ds, 64), b.sample_batch(&ds, 64));
        }
    }

    #[test]
    fn fully_dense_rows_are_skipped_not_stuck() {
        // user 0 has all items: sampler must fall back to other anchors
        let pairs = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        let mut ds = tiny_dataset();
        ds.n_users = 2;
        ds.n_items = 2;
        ds.ui_train = Incidence::from_pairs(2, 2, &pairs[..3]);
        // u0 row = {0,1} dense; u1 row = {0}
        let mut sampler = BprSampler::new(BprMode::UserItem, 3);
        let batch = sampler.sample_batch(&ds, 32);
        assert!(batch.iter().all(|t| t.anchor == 1));
    }
}
