//! Self-supervised tag clustering.
//!
//! Tags are softly assigned to `K` trainable cluster centers through a
//! Student-t kernel; a sharpened target distribution provides the
//! self-supervision signal as a KL divergence, and the hard argmax assignment
//! ties each tag to one intent for aggregation and relatedness weighting.

use ndarray::Array2;
use thiserror::Error;

use crate::dataset::Incidence;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cluster {0} has zero soft mass; re-seed its center before sharpening")]
    DegenerateCluster(usize),
}

/// Entries below this are clamped inside logarithms.
const LOG_CLAMP: f64 = 1e-12;

fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        let diff = *x - *y;
        acc += diff * diff;
    }
    acc
}

/// Student-t kernel value for squared distance `d2`.
fn t_kernel<S: Scalar>(d2: S, eta: S) -> S {
    let one = S::one();
    let exponent = -(eta + one) / (one + one);
    (one + d2 / eta).powf(exponent)
}

/// Soft assignment matrix: row `l` is the probability of tag `l` belonging to
/// each cluster, proportional to `(1 + ||t_l - mu_k||^2 / eta)^(-(eta+1)/2)`.
pub fn soft_assign<S: Scalar>(tag_table: &Array2<S>, centers: &Array2<S>, eta: S) -> Array2<S> {
    assert!(eta > S::zero(), "temperature must be positive");
    let n_tags = tag_table.nrows();
    let k = centers.nrows();
    let mut q = Array2::zeros((n_tags, k));
    for l in 0..n_tags {
        let t = tag_table.row(l);
        let t = t.as_slice().unwrap();
        let mut denom = S::zero();
        for c in 0..k {
            let phi = t_kernel(sq_dist(t, centers.row(c).as_slice().unwrap()), eta);
            q[[l, c]] = phi;
            denom += phi;
        }
        for c in 0..k {
            q[[l, c]] = q[[l, c]] / denom;
        }
    }
    q
}

/// Sharpened target: `Q_hat[l,k]` proportional to `Q[l,k]^2 / f_k` with
/// `f_k` the soft cluster size, row-normalized.
pub fn target_distribution<S: Scalar>(q: &Array2<S>) -> Result<Array2<S>, ClusterError> {
    let (n, k) = q.dim();
    let mut freq = vec![S::zero(); k];
    for l in 0..n {
        for c in 0..k {
            freq[c] += q[[l, c]];
        }
    }
    for (c, &f) in freq.iter().enumerate() {
        if f <= S::zero() {
            return Err(ClusterError::DegenerateCluster(c));
        }
    }
    let mut out = Array2::zeros((n, k));
    for l in 0..n {
        let mut denom = S::zero();
        for c in 0..k {
            let v = q[[l, c]] * q[[l, c]] / freq[c];
            out[[l, c]] = v;
            denom += v;
        }
        for c in 0..k {
            out[[l, c]] = out[[l, c]] / denom;
        }
    }
    Ok(out)
}

/// `KL(Q_hat || Q)` with the target treated as a constant. Gradients flow
/// through `Q` into the tag table and the centers.
pub fn kl_loss<S: Scalar>(
    q_hat: &Array2<S>,
    tag_table: &Array2<S>,
    centers: &Array2<S>,
    eta: S,
    weight: S,
    grad_tag: &mut Array2<S>,
    grad_centers: &mut Array2<S>,
) -> S {
    let n_tags = tag_table.nrows();
    let k = centers.nrows();
    let d = tag_table.ncols();
    assert_eq!(q_hat.dim(), (n_tags, k), "target shape");
    let one = S::one();
    let clamp = S::from_f64_lossy(LOG_CLAMP);
    // kernel coefficient: dKL/d(dist2) = -(eta+1)/(2 eta) * (Q - Qhat) / (1 + dist2/eta)
    let coef = -(eta + one) / ((one + one) * eta);
    let ts = tag_table.as_slice().unwrap();
    let cs = centers.as_slice().unwrap();
    let gts = grad_tag.as_slice_mut().unwrap();
    let gcs = grad_centers.as_slice_mut().unwrap();
    let mut loss = S::zero();
    let mut phi = vec![S::zero(); k];
    let mut d2 = vec![S::zero(); k];
    for l in 0..n_tags {
        let t = &ts[l * d..(l + 1) * d];
        let mut denom = S::zero();
        for c in 0..k {
            d2[c] = sq_dist(t, &cs[c * d..(c + 1) * d]);
            phi[c] = t_kernel(d2[c], eta);
            denom += phi[c];
        }
        for c in 0..k {
            let q = phi[c] / denom;
            let p = q_hat[[l, c]];
            if p > S::zero() {
                loss += p * (p.max(clamp).ln() - q.max(clamp).ln());
            }
            let dkl_dd2 = coef * (q - p) / (one + d2[c] / eta);
            let two = one + one;
            let scale = two * dkl_dd2 * weight;
            let center = &cs[c * d..(c + 1) * d];
            for j in 0..d {
                let diff = t[j] - center[j];
                gts[l * d + j] += scale * diff;
                gcs[c * d + j] -= scale * diff;
            }
        }
    }
    loss
}

/// Argmax cluster per tag with lowest-index tie-break.
pub fn hard_assign<S: Scalar>(q: &Array2<S>) -> Vec<u32> {
    let (n, k) = q.dim();
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let mut best = 0usize;
        for c in 1..k {
            if q[[l, c]] > q[[l, best]] {
                best = c;
            }
        }
        out.push(best as u32);
    }
    out
}

/// Per-tag-cluster label counts for one item.
pub fn cluster_counts(it_labels: &Incidence, hard: &[u32], k: usize, item: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for &t in it_labels.row(item) {
        counts[hard[t as usize] as usize] += 1;
    }
    counts
}

/// Row-stochastic item-intent relatedness: softmax over per-cluster tag
/// counts, computed with max subtraction so large counts cannot overflow.
pub fn relatedness_matrix<S: Scalar>(it_labels: &Incidence, hard: &[u32], k: usize) -> Array2<S> {
    let n_items = it_labels.n_rows();
    let mut m = Array2::zeros((n_items, k));
    for j in 0..n_items {
        let counts = cluster_counts(it_labels, hard, k, j);
        let max = *counts.iter().max().unwrap();
        let mut denom = S::zero();
        for c in 0..k {
            let e = S::from_f64_lossy(counts[c] as f64 - max as f64).exp();
            m[[j, c]] = e;
            denom += e;
        }
        for c in 0..k {
            m[[j, c]] = m[[j, c]] / denom;
        }
    }
    m
}

/// Re-seed a center whose soft mass collapsed: move it to the tag embedding
/// farthest from its currently assigned center, then recompute `Q`.
/// Deterministic; at most `K` recovery rounds.
pub fn assign_with_recovery<S: Scalar>(
    tag_table: &Array2<S>,
    centers: &mut Array2<S>,
    eta: S,
) -> (Array2<S>, Array2<S>) {
    for _ in 0..=centers.nrows() {
        let q = soft_assign(tag_table, centers, eta);
        match target_distribution(&q) {
            Ok(q_hat) => return (q, q_hat),
            Err(ClusterError::DegenerateCluster(c)) => {
                let hard = hard_assign(&q);
                let mut far_tag = 0usize;
                let mut far_dist = S::neg_infinity();
                for l in 0..tag_table.nrows() {
                    let assigned = hard[l] as usize;
                    let dist = sq_dist(
                        tag_table.row(l).as_slice().unwrap(),
                        centers.row(assigned).as_slice().unwrap(),
                    );
                    if dist > far_dist {
                        far_dist = dist;
                        far_tag = l;
                    }
                }
                centers.row_mut(c).assign(&tag_table.row(far_tag));
            }
        }
    }
    let q = soft_assign(tag_table, centers, eta);
    let q_hat = target_distribution(&q).expect("recovery must converge within K rounds");
    (q, q_hat)
}
