//! Intent-restricted item similarity by tag-set Jaccard index.

use crate::dataset::Incidence;

/// Jaccard index of two sorted slices; 0 when both are empty.
pub fn jaccard_similarity(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Tags of `item` that fall in cluster `k` under the hard assignment.
pub fn intent_tag_set(it_labels: &Incidence, hard: &[u32], k: usize, item: usize) -> Vec<u32> {
    it_labels.row(item).iter().copied().filter(|&t| hard[t as usize] as usize == k).collect()
}

/// Per-intent similar-item sets: `j'` belongs to `S^k_j` iff the Jaccard index
/// of the two items' cluster-`k` tag sets strictly exceeds `delta`.
///
/// Membership is symmetric and an item never contains itself; the self pair
/// enters only at loss construction. Must be rebuilt whenever the hard
/// assignment changes.
pub struct SimilarSets {
    pub delta: f64,
    sets: Vec<Vec<Vec<u32>>>,
}

impl SimilarSets {
    /// Empty sets for every intent and item (disables set expansion).
    pub fn empty(n_items: usize, k: usize) -> Self {
        Self { delta: 1.0, sets: vec![vec![Vec::new(); n_items]; k] }
    }

    pub fn build(it_labels: &Incidence, hard: &[u32], k: usize, delta: f64) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "threshold must lie in (0, 1)");
        let n_items = it_labels.n_rows();
        let n_tags = it_labels.n_cols();
        let mut sets = vec![vec![Vec::new(); n_items]; k];
        let mut tag_items: Vec<Vec<u32>> = vec![Vec::new(); n_tags];
        let mut sizes = vec![0u32; n_items];
        // scratch for sparse intersection counting
        let mut counts = vec![0u32; n_items];
        let mut touched: Vec<u32> = Vec::new();
        for intent in 0..k {
            for v in &mut tag_items {
                v.clear();
            }
            for j in 0..n_items {
                let mut size = 0u32;
                for &t in it_labels.row(j) {
                    if hard[t as usize] as usize == intent {
                        tag_items[t as usize].push(j as u32);
                        size += 1;
                    }
                }
                sizes[j] = size;
            }
            let out = &mut sets[intent];
            for j in 0..n_items {
                if sizes[j] == 0 {
                    continue;
                }
                touched.clear();
                for &t in it_labels.row(j) {
                    if hard[t as usize] as usize != intent {
                        continue;
                    }
                    for &other in &tag_items[t as usize] {
                        // count each unordered pair once
                        if (other as usize) <= j {
                            continue;
                        }
                        if counts[other as usize] == 0 {
                            touched.push(other);
                        }
                        counts[other as usize] += 1;
                    }
                }
                for &other in &touched {
                    let inter = counts[other as usize];
                    counts[other as usize] = 0;
                    let union = sizes[j] + sizes[other as usize] - inter;
                    let s = inter as f64 / union as f64;
                    if s > delta {
                        out[j].push(other);
                        out[other as usize].push(j as u32);
                    }
                }
            }
            for set in out.iter_mut() {
                set.sort_unstable();
            }
        }
        Self { delta, sets }
    }

    pub fn of(&self, intent: usize, item: usize) -> &[u32] {
        &self.sets[intent][item]
    }

    pub fn n_intents(&self) -> usize {
        self.sets.len()
    }

    pub fn total_pairs(&self) -> usize {
        self.sets.iter().flatten().map(|s| s.len()).sum::<usize>() / 2
    }
}
