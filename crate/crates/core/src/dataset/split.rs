//! Per-user train/valid/test partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, Incidence};

/// Split proportions. Counts are derived per user: valid and test take the
/// floor of their share (at least one each), the remainder trains.
#[derive(Debug, Clone, Copy)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, valid: 0.1, test: 0.2 }
    }
}

/// (train, valid, test) counts for a user with `n` interactions.
pub fn split_sizes(n: usize, ratios: SplitRatios) -> (usize, usize, usize) {
    let valid = ((n as f64 * ratios.valid).floor() as usize).max(1);
    let test = ((n as f64 * ratios.test).floor() as usize).max(1);
    let train = n - valid - test;
    (train, valid, test)
}

/// Randomly partition each user's interactions with the given seed.
///
/// The same `(dataset, seed)` always produces the identical split. The item-tag
/// table is never split; all labels remain training signal.
pub fn split_dataset(dataset: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Dataset, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_pairs = Vec::new();
    let mut valid_pairs = Vec::new();
    let mut test_pairs = Vec::new();
    for user in 0..dataset.n_users {
        let items = dataset.user_all_items(user);
        let n = items.len();
        if n < 3 {
            return Err(DataError::TooFewInteractions {
                user: dataset.id_maps.users.decode(user as u32).to_string(),
                min: 3,
                got: n,
            });
        }
        let (n_train, n_valid, n_test) = split_sizes(n, ratios);
        let mut shuffled = items;
        shuffled.shuffle(&mut rng);
        let u = user as u32;
        for &i in &shuffled[..n_train] {
            train_pairs.push((u, i));
        }
        for &i in &shuffled[n_train..n_train + n_valid] {
            valid_pairs.push((u, i));
        }
        for &i in &shuffled[n_train + n_valid..n_train + n_valid + n_test] {
            test_pairs.push((u, i));
        }
    }
    Ok(Dataset {
        ui_train: Incidence::from_pairs(dataset.n_users, dataset.n_items, &train_pairs),
        ui_valid: Incidence::from_pairs(dataset.n_users, dataset.n_items, &valid_pairs),
        ui_test: Incidence::from_pairs(dataset.n_users, dataset.n_items, &test_pairs),
        it_labels: dataset.it_labels.clone(),
        id_maps: dataset.id_maps.clone(),
        ..*dataset
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{IdMap, IdMaps};

    fn grid_dataset(n_users: usize, degree: usize) -> Dataset {
        let n_items = degree;
        let pairs: Vec<(u32, u32)> = (0..n_users)
            .flat_map(|u| (0..degree).map(move |i| (u as u32, i as u32)))
            .collect();
        let users = IdMap::from_names((0..n_users).map(|u| format!("u{u}")).collect());
        let items = IdMap::from_names((0..n_items).map(|i| format!("i{i}")).collect());
        Dataset {
            n_users,
            n_items,
            n_tags: 1,
            ui_train: Incidence::from_pairs(n_users, n_items, &pairs),
            ui_valid: Incidence::from_pairs(n_users, n_items, &[]),
            ui_test: Incidence::from_pairs(n_users, n_items, &[]),
            it_labels: Incidence::from_pairs(n_items, 1, &[(0, 0)]),
            id_maps: IdMaps { users, items, tags: IdMap::from_names(vec!["t0".into()]) },
        }
    }

    #[test]
    fn ten_interactions_split_seven_one_two() {
        assert_eq!(split_sizes(10, SplitRatios::default()), (7, 1, 2));
    }

    #[test]
    fn rounding_rule_enumerated_on_counts_10_to_20() {
        // Oracle: floor(0.1 n) and floor(0.2 n) with a minimum of one each,
        // remainder to train. Enumerated independently of split_dataset.
        let expect: Vec<(usize, (usize, usize, usize))> = (10..=20)
            .map(|n| {
                let v = ((n as f64) * 0.1).floor() as usize;
                let t = ((n as f64) * 0.2).floor() as usize;
                let v = v.max(1);
                let t = t.max(1);
                (n, (n - v - t, v, t))
            })
            .collect();
        assert_eq!(expect[1], (11, (8, 1, 2)));
        for (n, want) in expect {
            assert_eq!(split_sizes(n, SplitRatios::default()), want, "n={n}");
        }
    }

    #[test]
    fn split_partitions_each_user_disjointly() {
        let ds = grid_dataset(6, 13);
        let split = split_dataset(&ds, SplitRatios::default(), 7).unwrap();
        for u in 0..ds.n_users {
            let tr = split.ui_train.row(u);
            let va = split.ui_valid.row(u);
            let te = split.ui_test.row(u);
            assert_eq!(tr.len() + va.len() + te.len(), 13);
            let mut all: Vec<u32> = tr.iter().chain(va).chain(te).copied().collect();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), 13, "splits must be pairwise disjoint");
            assert_eq!(all, ds.ui_train.row(u), "union must equal the filtered set");
            assert!(!te.is_empty());
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_splits() {
        let ds = grid_dataset(5, 11);
        let a = split_dataset(&ds, SplitRatios::default(), 42).unwrap();
        let b = split_dataset(&ds, SplitRatios::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ds, SplitRatios::default(), 43).unwrap();
        assert_ne!(a.ui_train, c.ui_train);
    }
}
