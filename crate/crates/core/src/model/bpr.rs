//! Pairwise ranking losses with hand-derived gradients.

use ndarray::Array2;

use super::backbone::{dot, leaky_relu, leaky_relu_grad};
use super::NeumfMlp;
use crate::dataset::BprTriplet;
use crate::scalar::{sigmoid, softplus};
use crate::Scalar;

/// Loss and d(loss)/d(score difference) for one ranking pair.
///
/// The loss is `-log sigmoid(pos - neg)`, evaluated as `softplus(neg - pos)`
/// so it never takes `log(0)`. It depends on the scores only through their
/// difference, which makes it invariant to any anchor-constant score shift.
pub fn bpr_pair_loss<S: Scalar>(pos: S, neg: S) -> (S, S) {
    let diff = pos - neg;
    (softplus(-diff), sigmoid(diff) - S::one())
}

/// Mean BPR loss over a triplet batch scored by inner products.
///
/// `anchors` rows come from `a_table`, positives/negatives from `b_table`.
/// Gradients accumulate only into touched rows of `ga`/`gb`. This covers the
/// user-item loss for the dot-product backbones and the item-tag loss for
/// every backbone.
pub fn bpr_dot_loss<S: Scalar>(
    a_table: &Array2<S>,
    b_table: &Array2<S>,
    triplets: &[BprTriplet],
    weight: S,
    ga: &mut Array2<S>,
    gb: &mut Array2<S>,
) -> S {
    assert!(!triplets.is_empty(), "batch must be nonempty");
    let d = a_table.ncols();
    let a = a_table.as_slice().unwrap();
    let b = b_table.as_slice().unwrap();
    let gas = ga.as_slice_mut().unwrap();
    let gbs = gb.as_slice_mut().unwrap();
    let inv_batch = S::one() / S::from_usize_lossy(triplets.len());
    let mut total = S::zero();
    for t in triplets {
        let ao = t.anchor as usize * d;
        let po = t.positive as usize * d;
        let no = t.negative as usize * d;
        let pos = dot(&a[ao..ao + d], &b[po..po + d]);
        let neg = dot(&a[ao..ao + d], &b[no..no + d]);
        let (loss, ddiff) = bpr_pair_loss(pos, neg);
        total += loss;
        let c = ddiff * inv_batch * weight;
        for j in 0..d {
            gas[ao + j] += c * (b[po + j] - b[no + j]);
            gbs[po + j] += c * a[ao + j];
            gbs[no + j] -= c * a[ao + j];
        }
    }
    total * inv_batch
}

/// Mean user-item BPR loss scored by the single-tower MLP.
#[allow(clippy::too_many_arguments)]
pub fn bpr_ui_loss<S: Scalar>(
    user: &Array2<S>,
    item: &Array2<S>,
    mlp: Option<&NeumfMlp<S>>,
    triplets: &[BprTriplet],
    weight: S,
    gu: &mut Array2<S>,
    gi: &mut Array2<S>,
    gmlp: Option<&mut NeumfMlp<S>>,
) -> S {
    match (mlp, gmlp) {
        (None, _) => bpr_dot_loss(user, item, triplets, weight, gu, gi),
        (Some(mlp), Some(gmlp)) => bpr_mlp_loss(user, item, mlp, triplets, weight, gu, gi, gmlp),
        (Some(_), None) => panic!("mlp backbone requires an mlp gradient buffer"),
    }
}

/// Item-tag BPR loss. Tags are scored against raw item rows by inner product
/// for every backbone; the MLP and graph propagation only serve user-item
/// scoring.
pub fn bpr_vt_loss<S: Scalar>(
    item: &Array2<S>,
    tag: &Array2<S>,
    triplets: &[BprTriplet],
    weight: S,
    gi: &mut Array2<S>,
    gt: &mut Array2<S>,
) -> S {
    bpr_dot_loss(item, tag, triplets, weight, gi, gt)
}

struct MlpTrace<S> {
    z1: Vec<S>,
    a1: Vec<S>,
    z2: Vec<S>,
    a2: Vec<S>,
    y: S,
}

fn mlp_forward_trace<S: Scalar>(mlp: &NeumfMlp<S>, u: &[S], v: &[S]) -> MlpTrace<S> {
    let d = u.len();
    let h1 = mlp.b1.len();
    let h2 = mlp.b2.len();
    let w1 = mlp.w1.as_slice().unwrap();
    let w2 = mlp.w2.as_slice().unwrap();
    let mut z1 = vec![S::zero(); h1];
    let mut a1 = vec![S::zero(); h1];
    for r in 0..h1 {
        let row = &w1[r * 2 * d..(r + 1) * 2 * d];
        z1[r] = mlp.b1[r] + dot(&row[..d], u) + dot(&row[d..], v);
        a1[r] = leaky_relu(z1[r]);
    }
    let mut z2 = vec![S::zero(); h2];
    let mut a2 = vec![S::zero(); h2];
    for r in 0..h2 {
        z2[r] = mlp.b2[r] + dot(&mlp.w2.as_slice().unwrap()[r * h1..(r + 1) * h1], &a1);
        a2[r] = leaky_relu(z2[r]);
    }
    let _ = w2;
    let y = mlp.b3[0] + dot(mlp.w3.as_slice().unwrap(), &a2);
    MlpTrace { z1, a1, z2, a2, y }
}

#[allow(clippy::too_many_arguments)]
fn mlp_backward<S: Scalar>(
    mlp: &NeumfMlp<S>,
    trace: &MlpTrace<S>,
    u: &[S],
    v: &[S],
    g_out: S,
    gu: &mut [S],
    gv: &mut [S],
    gmlp: &mut NeumfMlp<S>,
) {
    let d = u.len();
    let h1 = mlp.b1.len();
    let h2 = mlp.b2.len();
    let w1 = mlp.w1.as_slice().unwrap();
    let w2 = mlp.w2.as_slice().unwrap();
    gmlp.b3[0] += g_out;
    let mut dz2 = vec![S::zero(); h2];
    {
        let gw3 = gmlp.w3.as_slice_mut().unwrap();
        let w3 = mlp.w3.as_slice().unwrap();
        for r in 0..h2 {
            gw3[r] += g_out * trace.a2[r];
            dz2[r] = g_out * w3[r] * leaky_relu_grad(trace.z2[r]);
        }
    }
    let mut da1 = vec![S::zero(); h1];
    {
        let gw2 = gmlp.w2.as_slice_mut().unwrap();
        for r in 0..h2 {
            gmlp.b2[r] += dz2[r];
            let row = &w2[r * h1..(r + 1) * h1];
            let grow = &mut gw2[r * h1..(r + 1) * h1];
            for c in 0..h1 {
                grow[c] += dz2[r] * trace.a1[c];
                da1[c] += dz2[r] * row[c];
            }
        }
    }
    let gw1 = gmlp.w1.as_slice_mut().unwrap();
    for r in 0..h1 {
        let dz1 = da1[r] * leaky_relu_grad(trace.z1[r]);
        gmlp.b1[r] += dz1;
        let row = &w1[r * 2 * d..(r + 1) * 2 * d];
        let grow = &mut gw1[r * 2 * d..(r + 1) * 2 * d];
        for c in 0..d {
            grow[c] += dz1 * u[c];
            grow[d + c] += dz1 * v[c];
            gu[c] += dz1 * row[c];
            gv[c] += dz1 * row[d + c];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bpr_mlp_loss<S: Scalar>(
    user: &Array2<S>,
    item: &Array2<S>,
    mlp: &NeumfMlp<S>,
    triplets: &[BprTriplet],
    weight: S,
    gu: &mut Array2<S>,
    gi: &mut Array2<S>,
    gmlp: &mut NeumfMlp<S>,
) -> S {
    assert!(!triplets.is_empty(), "batch must be nonempty");
    let d = user.ncols();
    let us = user.as_slice().unwrap();
    let is = item.as_slice().unwrap();
    let gus = gu.as_slice_mut().unwrap();
    let gis = gi.as_slice_mut().unwrap();
    let inv_batch = S::one() / S::from_usize_lossy(triplets.len());
    let mut total = S::zero();
    for t in triplets {
        let uo = t.anchor as usize * d;
        let po = t.positive as usize * d;
        let no = t.negative as usize * d;
        let u = &us[uo..uo + d];
        let vp = &is[po..po + d];
        let vn = &is[no..no + d];
        let tp = mlp_forward_trace(mlp, u, vp);
        let tn = mlp_forward_trace(mlp, u, vn);
        let (loss, ddiff) = bpr_pair_loss(tp.y, tn.y);
        total += loss;
        let c = ddiff * inv_batch * weight;
        mlp_backward(mlp, &tp, u, vp, c, &mut gus[uo..uo + d], &mut gis[po..po + d], gmlp);
        mlp_backward(mlp, &tn, u, vn, -c, &mut gus[uo..uo + d], &mut gis[no..no + d], gmlp);
    }
    total * inv_batch
}
