//! Intent-aware multi-source alignment.
//!
//! For every batch item and intent the loss pulls together two views of the
//! same item: the mean of its training users' intent chunks, and the fused
//! sum of its own intent chunk with a transformed aggregate of its
//! cluster-`k` tags. Other batch items act as negatives; tag-Jaccard-similar
//! items can serve as additional positives.

mod loss;
mod similar;

pub use loss::{alignment_loss, AlignmentContext, AlignmentOptions};
pub use similar::{intent_tag_set, jaccard_similarity, SimilarSets};

use ndarray::Array1;

use crate::dataset::Incidence;
use crate::model::IntentHead;
use crate::Scalar;
use crate::model::leaky_relu;

/// Mean of chunk-`k` slices over the item's training users; zero when the
/// item has none.
pub fn aggregate_users<S: Scalar>(
    item: usize,
    item_users: &Incidence,
    user_table: &ndarray::Array2<S>,
    k: usize,
    chunk: usize,
) -> Array1<S> {
    let users = item_users.row(item);
    let mut out = Array1::zeros(chunk);
    if users.is_empty() {
        return out;
    }
    let d = user_table.ncols();
    let table = user_table.as_slice().unwrap();
    for &u in users {
        let off = u as usize * d + k * chunk;
        for c in 0..chunk {
            out[c] += table[off + c];
        }
    }
    let inv = S::one() / S::from_usize_lossy(users.len());
    out.mapv_inplace(|v| v * inv);
    out
}

/// Mean of full-width tag rows over the item's cluster-`k` tags; the zero
/// vector when no tag of the item falls in that cluster.
pub fn aggregate_tags<S: Scalar>(
    item: usize,
    it_labels: &Incidence,
    hard: &[u32],
    tag_table: &ndarray::Array2<S>,
    k: usize,
) -> Array1<S> {
    let d = tag_table.ncols();
    let mut out = Array1::zeros(d);
    let mut count = 0usize;
    let table = tag_table.as_slice().unwrap();
    for &t in it_labels.row(item) {
        if hard[t as usize] as usize != k {
            continue;
        }
        let off = t as usize * d;
        for c in 0..d {
            out[c] += table[off + c];
        }
        count += 1;
    }
    if count > 0 {
        let inv = S::one() / S::from_usize_lossy(count);
        out.mapv_inplace(|v| v * inv);
    }
    out
}

/// `W0 . tbar + b0`: maps the full-width tag aggregate to chunk width.
pub fn transform_tag<S: Scalar>(head: &IntentHead<S>, tbar: &[S]) -> Array1<S> {
    let cd = head.b0.len();
    let d = tbar.len();
    let w0 = head.w0.as_slice().unwrap();
    let mut out = Array1::zeros(cd);
    for r in 0..cd {
        let mut acc = head.b0[r];
        let row = &w0[r * d..(r + 1) * d];
        for c in 0..d {
            acc += row[c] * tbar[c];
        }
        out[r] = acc;
    }
    out
}

/// `x / ||x||`, or the zero vector when `x` is exactly zero (so an absent
/// side simply contributes nothing). Returns the norm alongside.
pub fn safe_normalize<S: Scalar>(x: &[S]) -> (Vec<S>, S) {
    let norm = x.iter().map(|&v| v * v).sum::<S>().sqrt();
    if norm > S::zero() {
        (x.iter().map(|&v| v / norm).collect(), norm)
    } else {
        (vec![S::zero(); x.len()], S::zero())
    }
}

/// Fused item-tag view: element-wise sum of the L2-normalized transformed tag
/// aggregate and the L2-normalized item chunk.
pub fn fuse_item_tag<S: Scalar>(that: &[S], item_chunk: &[S]) -> Array1<S> {
    let (nt, _) = safe_normalize(that);
    let (nv, _) = safe_normalize(item_chunk);
    Array1::from_iter(nt.iter().zip(&nv).map(|(&a, &b)| a + b))
}

/// Two-layer nonlinear projection head: `W2 . LeakyReLU(W1 . x + b1)`.
pub fn project<S: Scalar>(head: &IntentHead<S>, x: &[S]) -> Array1<S> {
    let cd = head.b1.len();
    let w1 = head.w1.as_slice().unwrap();
    let w2 = head.w2.as_slice().unwrap();
    let mut a1 = vec![S::zero(); cd];
    for r in 0..cd {
        let mut acc = head.b1[r];
        let row = &w1[r * cd..(r + 1) * cd];
        for c in 0..cd {
            acc += row[c] * x[c];
        }
        a1[r] = leaky_relu(acc);
    }
    let mut out = Array1::zeros(cd);
    for r in 0..cd {
        let row = &w2[r * cd..(r + 1) * cd];
        let mut acc = S::zero();
        for c in 0..cd {
            acc += row[c] * a1[c];
        }
        out[r] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array2};

    #[test]
    fn user_aggregation_means_the_chunks() {
        // two users with chunk-0 slices (1,0) and (0,1)
        let users = arr2(&[[1.0f64, 0.0, 9.0, 9.0], [0.0, 1.0, 9.0, 9.0], [5.0, 5.0, 9.0, 9.0]]);
        let item_users = Incidence::from_pairs(2, 3, &[(0, 0), (0, 1)]);
        let agg = aggregate_users(0, &item_users, &users, 0, 2);
        assert_eq!(agg, arr1(&[0.5, 0.5]));
        // single interacting user: the chunk itself
        let single = Incidence::from_pairs(2, 3, &[(1, 2)]);
        assert_eq!(aggregate_users(1, &single, &users, 1, 2), arr1(&[9.0, 9.0]));
        // no users: zero vector
        assert_eq!(aggregate_users(1, &item_users, &users, 0, 2), arr1(&[0.0, 0.0]));
    }

    #[test]
    fn tag_aggregation_means_full_rows_within_the_cluster() {
        let tags = arr2(&[[2.0f64, 0.0], [0.0, 4.0], [8.0, 8.0]]);
        let it = Incidence::from_pairs(1, 3, &[(0, 0), (0, 1), (0, 2)]);
        let hard = vec![0, 0, 1];
        assert_eq!(aggregate_tags(0, &it, &hard, &tags, 0), arr1(&[1.0, 2.0]));
        // one tag in the cluster: that row
        assert_eq!(aggregate_tags(0, &it, &hard, &tags, 1), arr1(&[8.0, 8.0]));
        // no tag in cluster 2 would apply for k larger; use an item with no labels
        let empty_it = Incidence::from_pairs(2, 3, &[(0, 0)]);
        assert_eq!(aggregate_tags(1, &empty_it, &hard, &tags, 0), arr1(&[0.0, 0.0]));
    }

    #[test]
    fn fuse_zero_tag_side_reduces_to_normalized_item_chunk() {
        let z = fuse_item_tag(&[0.0f64, 0.0], &[3.0, 4.0]);
        assert!((z[0] - 0.6).abs() < 1e-15);
        assert!((z[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn fuse_of_equal_unit_vectors_doubles_them() {
        let z = fuse_item_tag(&[1.0f64, 0.0], &[1.0, 0.0]);
        assert_eq!(z, arr1(&[2.0, 0.0]));
    }

    #[test]
    fn normalization_produces_unit_length() {
        let (n, norm) = safe_normalize(&[3.0f64, -4.0, 12.0]);
        assert!((norm - 13.0).abs() < 1e-12);
        let len: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((len - 1.0).abs() < 1e-12);
        let (z, zn) = safe_normalize(&[0.0f64, 0.0]);
        assert_eq!(zn, 0.0);
        assert_eq!(z, vec![0.0, 0.0]);
    }

    fn head_identity(cd: usize, d: usize) -> IntentHead<f64> {
        IntentHead {
            w0: Array2::zeros((cd, d)),
            b0: Array1::zeros(cd),
            w1: Array2::eye(cd),
            b1: Array1::zeros(cd),
            w2: Array2::eye(cd),
        }
    }

    #[test]
    fn projection_edge_cases() {
        let mut head = head_identity(2, 4);
        // all-zero weights map to zero
        head.w1.fill(0.0);
        head.w2.fill(0.0);
        assert_eq!(project(&head, &[1.0, -2.0]), arr1(&[0.0, 0.0]));
        // identity weights pass positive inputs through
        let head = head_identity(2, 4);
        assert_eq!(project(&head, &[0.3, 0.7]), arr1(&[0.3, 0.7]));
        // negative input picks up the LeakyReLU slope
        let head = head_identity(1, 4);
        let out = project(&head, &[-1.0]);
        assert!((out[0] - (-0.01)).abs() < 1e-15);
    }

    #[test]
    fn tag_transform_is_affine() {
        let mut head = head_identity(2, 3);
        head.w0 = arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]);
        head.b0 = arr1(&[0.5, -0.5]);
        let out = transform_tag(&head, &[2.0, 3.0, 4.0]);
        assert_eq!(out, arr1(&[2.5, 6.5]));
    }
}
