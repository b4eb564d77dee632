//! Dataset summary statistics.

use serde::{Deserialize, Serialize};

use super::Dataset;

/// Counts, densities and mean degrees of the incidence tables.
///
/// Densities are percentages; average degrees are per row (per user for the
/// interaction table, per item for the label table).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub ui_pairs: usize,
    pub ui_train_pairs: usize,
    pub ui_valid_pairs: usize,
    pub ui_test_pairs: usize,
    pub ui_density_pct: f64,
    pub ui_avg_degree: f64,
    pub it_pairs: usize,
    pub it_density_pct: f64,
    pub it_avg_degree: f64,
}

/// Density/degree arithmetic on raw counts.
pub fn stats_from_counts(
    n_users: usize,
    n_items: usize,
    n_tags: usize,
    ui_pairs: usize,
    it_pairs: usize,
) -> (f64, f64, f64, f64) {
    let ui_density = 100.0 * ui_pairs as f64 / (n_users as f64 * n_items as f64);
    let ui_degree = ui_pairs as f64 / n_users as f64;
    let it_density = 100.0 * it_pairs as f64 / (n_items as f64 * n_tags as f64);
    let it_degree = it_pairs as f64 / n_items as f64;
    (ui_density, ui_degree, it_density, it_degree)
}

pub fn compute_stats(dataset: &Dataset) -> DatasetStats {
    let ui_pairs = dataset.ui_pairs();
    let it_pairs = dataset.it_labels.nnz();
    let (ui_density_pct, ui_avg_degree, it_density_pct, it_avg_degree) =
        stats_from_counts(dataset.n_users, dataset.n_items, dataset.n_tags, ui_pairs, it_pairs);
    DatasetStats {
        n_users: dataset.n_users,
        n_items: dataset.n_items,
        n_tags: dataset.n_tags,
        ui_pairs,
        ui_train_pairs: dataset.ui_train.nnz(),
        ui_valid_pairs: dataset.ui_valid.nnz(),
        ui_test_pairs: dataset.ui_test.nnz(),
        ui_density_pct,
        ui_avg_degree,
        it_pairs,
        it_density_pct,
        it_avg_degree,
    }
}
