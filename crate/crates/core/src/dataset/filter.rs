//! Binarization and iterative degree filtering.

use std::collections::{HashMap, HashSet};

use super::{DataError, Dataset, IdMap, IdMaps, Incidence, RawInteraction, RawTagging};

/// Thresholds for [`apply_filters`].
#[derive(Debug, Clone)]
pub struct FilterParams {
    /// Keep interactions with rating >= this value. Ignored for rows without
    /// a rating (implicit-feedback files are treated as already binary).
    pub rating_threshold: f64,
    pub min_user_degree: usize,
    pub min_item_degree: usize,
    pub min_tag_degree: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            rating_threshold: 4.0,
            min_user_degree: 10,
            min_item_degree: 10,
            min_tag_degree: 5,
        }
    }
}

/// Binarize ratings and iterate degree filtering to a fixed point.
///
/// Removals cascade (dropping a user can push an item below its minimum and
/// vice versa), so each pass re-checks every constraint until none fires.
/// Returns the unsplit dataset and the number of passes taken.
pub fn apply_filters(
    raw_ui: &[RawInteraction],
    raw_it: &[RawTagging],
    params: &FilterParams,
) -> Result<(Dataset, usize), DataError> {
    if raw_ui.is_empty() {
        return Err(DataError::EmptyInput("no user-item interactions".into()));
    }
    if raw_it.is_empty() {
        return Err(DataError::EmptyInput("no item-tag labels".into()));
    }

    // Binarize, then dedup to binary pairs while preserving first appearance.
    let mut seen_ui = HashSet::new();
    let mut ui_pairs: Vec<(&str, &str)> = Vec::new();
    for row in raw_ui {
        if row.rating.is_some_and(|r| r < params.rating_threshold) {
            continue;
        }
        if seen_ui.insert((row.user.as_str(), row.item.as_str())) {
            ui_pairs.push((row.user.as_str(), row.item.as_str()));
        }
    }
    let mut seen_it = HashSet::new();
    let mut it_pairs: Vec<(&str, &str)> = Vec::new();
    for row in raw_it {
        if seen_it.insert((row.item.as_str(), row.tag.as_str())) {
            it_pairs.push((row.item.as_str(), row.tag.as_str()));
        }
    }
    if ui_pairs.is_empty() {
        return Err(DataError::EmptyAfterFilter("interactions"));
    }

    let mut dropped_users: HashSet<&str> = HashSet::new();
    let mut dropped_items: HashSet<&str> = HashSet::new();
    let mut dropped_tags: HashSet<&str> = HashSet::new();
    let mut passes = 0usize;

    loop {
        passes += 1;
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for &(u, i) in &ui_pairs {
            if dropped_users.contains(u) || dropped_items.contains(i) {
                continue;
            }
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let mut tag_deg: HashMap<&str, usize> = HashMap::new();
        for &(i, t) in &it_pairs {
            if dropped_items.contains(i) || dropped_tags.contains(t) || !item_deg.contains_key(i) {
                continue;
            }
            *tag_deg.entry(t).or_default() += 1;
        }

        let mut changed = false;
        for (&u, &d) in &user_deg {
            if d < params.min_user_degree {
                dropped_users.insert(u);
                changed = true;
            }
        }
        for (&i, &d) in &item_deg {
            if d < params.min_item_degree {
                dropped_items.insert(i);
                changed = true;
            }
        }
        for (&t, &d) in &tag_deg {
            if d < params.min_tag_degree {
                dropped_tags.insert(t);
                changed = true;
            }
        }
        if !changed {
            let empty_users = user_deg.is_empty();
            let empty_items = item_deg.is_empty();
            let empty_tags = tag_deg.is_empty();
            if empty_users {
                return Err(DataError::EmptyAfterFilter("users"));
            }
            if empty_items {
                return Err(DataError::EmptyAfterFilter("items"));
            }
            if empty_tags {
                return Err(DataError::EmptyAfterFilter("tags"));
            }
            break;
        }
    }

    // Dense IDs in first-appearance order over the surviving pairs.
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut tags = IdMap::new();
    let mut dense_ui: Vec<(u32, u32)> = Vec::new();
    for &(u, i) in &ui_pairs {
        if dropped_users.contains(u) || dropped_items.contains(i) {
            continue;
        }
        dense_ui.push((users.intern(u), items.intern(i)));
    }
    let mut dense_it: Vec<(u32, u32)> = Vec::new();
    for &(i, t) in &it_pairs {
        if dropped_tags.contains(t) {
            continue;
        }
        let Some(item_id) = items.encode(i) else { continue };
        dense_it.push((item_id, tags.intern(t)));
    }

    let n_users = users.len();
    let n_items = items.len();
    let n_tags = tags.len();
    let dataset = Dataset {
        n_users,
        n_items,
        n_tags,
        ui_train: Incidence::from_pairs(n_users, n_items, &dense_ui),
        ui_valid: Incidence::from_pairs(n_users, n_items, &[]),
        ui_test: Incidence::from_pairs(n_users, n_items, &[]),
        it_labels: Incidence::from_pairs(n_items, n_tags, &dense_it),
        id_maps: IdMaps { users, items, tags },
    };
    debug_assert!(degrees_hold(&dataset, params));
    Ok((dataset, passes))
}

fn degrees_hold(ds: &Dataset, params: &FilterParams) -> bool {
    (0..ds.n_users).all(|u| ds.ui_train.degree(u) >= params.min_user_degree)
        && ds.ui_train.col_degrees().iter().all(|&d| d >= params.min_item_degree)
        && ds.it_labels.col_degrees().iter().all(|&d| d >= params.min_tag_degree)
}
