//! Tag-enhanced recommendation training engine.
//!
//! Learns user/item/tag embeddings from implicit feedback plus item tags.
//! User and item embeddings are decomposed into `K` intent chunks; tags are
//! softly clustered into `K` groups by a self-supervised Student-t head, and
//! a relatedness-weighted bidirectional contrastive objective aligns each
//! item's aggregated-user representation with its fused item-plus-tag
//! representation per intent, optionally expanded set-to-set over
//! tag-Jaccard-similar items.
//!
//! The numeric core is generic over the scalar type ([`Scalar`]); `f32` is
//! the default training precision ([`Real`]) and `f64` backs the gradient
//! checker and oracle tests.

pub mod alignment;
pub mod clustering;
pub mod dataset;
pub mod model;
pub mod scalar;

pub use scalar::{Real, Scalar};
