//! Data ingestion, filtering, splitting, and batch sampling.
//!
//! The pipeline is: parse raw tab-separated pair files into [`RawInteraction`]
//! / [`RawTagging`] lists, binarize and degree-filter them into an unsplit
//! [`Dataset`], then partition each user's interactions into train/valid/test.
//! A built dataset is immutable; samplers own their RNG state.

mod bundle;
mod filter;
mod incidence;
mod ingest;
mod sampler;
mod split;
mod stats;

pub use bundle::{load_bundle, save_bundle};
pub use filter::{apply_filters, FilterParams};
pub use incidence::Incidence;
pub use ingest::{load_interactions, load_taggings, UiSchema};
pub use sampler::{BprMode, BprSampler, BprTriplet};
pub use split::{split_dataset, split_sizes, SplitRatios};
pub use stats::{compute_stats, DatasetStats};

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no {0} remain after degree filtering")]
    EmptyAfterFilter(&'static str),
    #[error("split requires every user to have at least {min} interactions (user {user} has {got})")]
    TooFewInteractions { user: String, min: usize, got: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt bundle {path}: {reason}")]
    CorruptBundle { path: String, reason: String },
}

/// One parsed user-item interaction line.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

/// One parsed item-tag label line.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTagging {
    pub item: String,
    pub tag: String,
}

/// Bijection between external string IDs and dense contiguous indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Self { names, index }
    }

    /// Dense ID for `name`, inserting in first-appearance order.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn encode(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn decode(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// External-to-dense ID maps for all three entity classes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
    pub tags: IdMap,
}

/// Immutable sparse interaction/label tables with dense contiguous IDs.
///
/// Before splitting, all user-item pairs live in `ui_train` and the valid and
/// test tables are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub ui_train: Incidence,
    pub ui_valid: Incidence,
    pub ui_test: Incidence,
    pub it_labels: Incidence,
    pub id_maps: IdMaps,
}

impl Dataset {
    /// Total observed user-item pairs across all splits.
    pub fn ui_pairs(&self) -> usize {
        self.ui_train.nnz() + self.ui_valid.nnz() + self.ui_test.nnz()
    }

    pub fn is_split(&self) -> bool {
        self.ui_valid.nnz() + self.ui_test.nnz() > 0
    }

    /// Sorted union of a user's pairs across all three splits.
    pub fn user_all_items(&self, user: usize) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .ui_train
            .row(user)
            .iter()
            .chain(self.ui_test.row(user))
            .chain(self.ui_valid.row(user))
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}
