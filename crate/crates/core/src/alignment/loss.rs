//! Relatedness-weighted bidirectional contrastive alignment.
//!
//! All arithmetic below is ordered deterministically: the per-intent phase
//! may run on worker threads but each intent works on isolated buffers and
//! table gradients are merged sequentially in intent order, so results are
//! bit-identical regardless of thread count.

use ndarray::{Array1, Array2};

use crate::dataset::Incidence;
use crate::model::{leaky_relu, leaky_relu_grad, IntentHead, Model};
use crate::Scalar;

/// Knobs for the alignment loss. The two `align_*` switches control which
/// sides enter the fused item view (dropping both disables the loss); the
/// projection switch bypasses the nonlinear head.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentOptions<S> {
    pub tau: S,
    pub align_ui: bool,
    pub align_ut: bool,
    pub use_projection: bool,
}

impl<S: Scalar> Default for AlignmentOptions<S> {
    fn default() -> Self {
        Self { tau: S::one(), align_ui: true, align_ut: true, use_projection: true }
    }
}

/// Batch-level inputs. `positives[k][b]` lists batch indices serving as
/// positives for anchor `b` under intent `k`; it always contains `b` itself
/// and is shared by both loss directions.
pub struct AlignmentContext<'a, S> {
    pub items: &'a [u32],
    pub item_users: &'a Incidence,
    pub it_labels: &'a Incidence,
    pub hard: &'a [u32],
    pub positives: &'a [Vec<Vec<u32>>],
    pub relatedness: &'a Array2<S>,
    /// User/item tables feeding the aggregates: the raw embedding tables by
    /// default, or propagated tables when alignment runs on them.
    pub user_table: &'a Array2<S>,
    pub item_table: &'a Array2<S>,
}

/// One InfoNCE direction over a row-major similarity matrix (entries already
/// divided by tau). Rows are anchors, columns are candidates. Writes
/// `dL/dsim` into `d` (overwritten) and returns the weighted loss sum.
fn nce_direction<S: Scalar>(
    sims: &Array2<S>,
    weights: &[S],
    positives: &[Vec<u32>],
    d: &mut Array2<S>,
) -> S {
    let b = sims.nrows();
    let mut loss = S::zero();
    for row in 0..b {
        let s = sims.row(row);
        let s = s.as_slice().unwrap();
        let dr = &mut d.as_slice_mut().unwrap()[row * b..(row + 1) * b];
        let w = weights[row];
        let mut mx = S::neg_infinity();
        for &v in s {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = S::zero();
        for c in 0..b {
            let e = (s[c] - mx).exp();
            dr[c] = e;
            sum += e;
        }
        let lse = mx + sum.ln();
        let pos = &positives[row];
        debug_assert!(!pos.is_empty(), "anchor must keep at least its self pair");
        let inv_p = S::one() / S::from_usize_lossy(pos.len());
        let mut acc = S::zero();
        for &p in pos {
            acc += lse - s[p as usize];
        }
        loss += w * inv_p * acc;
        let wsum = w / sum;
        for v in dr.iter_mut() {
            *v = *v * wsum;
        }
        let corr = w * inv_p;
        for &p in pos {
            dr[p as usize] -= corr;
        }
    }
    loss
}

/// Batched projection forward: keeps pre-activations for the backward pass.
struct ProjTrace<S> {
    z1: Array2<S>,
    a1: Array2<S>,
}

fn project_forward<S: Scalar>(head: &IntentHead<S>, x: &Array2<S>) -> (Array2<S>, ProjTrace<S>) {
    let mut z1 = x.dot(&head.w1.t());
    for mut row in z1.rows_mut() {
        for (v, b) in row.iter_mut().zip(head.b1.iter()) {
            *v += *b;
        }
    }
    let a1 = z1.mapv(leaky_relu);
    let out = a1.dot(&head.w2.t());
    (out, ProjTrace { z1, a1 })
}

struct HeadGrads<S> {
    w0: Array2<S>,
    b0: Array1<S>,
    w1: Array2<S>,
    b1: Array1<S>,
    w2: Array2<S>,
}

fn project_backward<S: Scalar>(
    head: &IntentHead<S>,
    x: &Array2<S>,
    trace: &ProjTrace<S>,
    d_out: &Array2<S>,
    hg: &mut HeadGrads<S>,
) -> Array2<S> {
    hg.w2 = &hg.w2 + &d_out.t().dot(&trace.a1);
    let mut dz1 = d_out.dot(&head.w2);
    ndarray::Zip::from(&mut dz1).and(&trace.z1).for_each(|g, &z| *g = *g * leaky_relu_grad(z));
    hg.w1 = &hg.w1 + &dz1.t().dot(x);
    for row in dz1.rows() {
        for (b, &v) in hg.b1.iter_mut().zip(row.iter()) {
            *b += v;
        }
    }
    dz1.dot(&head.w1)
}

/// Normalization backward: maps `d(x/||x||)` to `dx`; zero at the origin.
fn normalize_backward<S: Scalar>(normalized: &[S], norm: S, dy: &[S], dx: &mut [S]) {
    if norm <= S::zero() {
        for v in dx.iter_mut() {
            *v = S::zero();
        }
        return;
    }
    let mut proj = S::zero();
    for (y, g) in normalized.iter().zip(dy) {
        proj += *y * *g;
    }
    let inv = S::one() / norm;
    for c in 0..dx.len() {
        dx[c] = (dy[c] - normalized[c] * proj) * inv;
    }
}

struct IntentWork<S> {
    loss: S,
    d_ubar: Array2<S>,
    d_tbar: Array2<S>,
    d_vchunk: Array2<S>,
    heads: HeadGrads<S>,
}

/// Full alignment loss over one batch.
///
/// Returns the unweighted loss value `(1/2K) sum_k (u2it + it2u)`; gradients
/// are accumulated into `grads` pre-multiplied by `weight`. With every
/// positive set reduced to the self pair this is exactly the plain
/// contrastive alignment loss.
pub fn alignment_loss<S: Scalar>(
    model: &Model<S>,
    ctx: &AlignmentContext<'_, S>,
    opts: &AlignmentOptions<S>,
    weight: S,
    grads: &mut Model<S>,
) -> S {
    let k_intents = model.dims.k;
    let b = ctx.items.len();
    assert!(b > 0, "alignment batch must be nonempty");
    assert_eq!(ctx.positives.len(), k_intents);
    if !opts.align_ui && !opts.align_ut {
        return S::zero();
    }
    let run = |k: usize| intent_pass(model, ctx, opts, weight, k);
    let works: Vec<IntentWork<S>> = if k_intents > 1 && rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        (0..k_intents).into_par_iter().map(run).collect()
    } else {
        (0..k_intents).map(run).collect()
    };

    let cd = model.dims.chunk();
    let d = model.dims.d;
    let mut total = S::zero();
    for (k, work) in works.iter().enumerate() {
        total += work.loss;
        // merge head gradients
        let gh = &mut grads.heads[k];
        gh.w0 = &gh.w0 + &work.heads.w0;
        gh.b0 = &gh.b0 + &work.heads.b0;
        gh.w1 = &gh.w1 + &work.heads.w1;
        gh.b1 = &gh.b1 + &work.heads.b1;
        gh.w2 = &gh.w2 + &work.heads.w2;
        // scatter aggregate gradients back into the tables
        let gu = grads.user.as_slice_mut().unwrap();
        let du = work.d_ubar.as_slice().unwrap();
        for (bi, &item) in ctx.items.iter().enumerate() {
            let users = ctx.item_users.row(item as usize);
            if users.is_empty() {
                continue;
            }
            let inv = S::one() / S::from_usize_lossy(users.len());
            let src = &du[bi * cd..(bi + 1) * cd];
            for &u in users {
                let off = u as usize * d + k * cd;
                for c in 0..cd {
                    gu[off + c] += src[c] * inv;
                }
            }
        }
        let gt = grads.tag.as_slice_mut().unwrap();
        let dt = work.d_tbar.as_slice().unwrap();
        for (bi, &item) in ctx.items.iter().enumerate() {
            let tags: Vec<u32> =
                ctx.it_labels.row(item as usize).iter().copied().filter(|&t| ctx.hard[t as usize] as usize == k).collect();
            if tags.is_empty() {
                continue;
            }
            let inv = S::one() / S::from_usize_lossy(tags.len());
            let src = &dt[bi * d..(bi + 1) * d];
            for &t in &tags {
                let off = t as usize * d;
                for c in 0..d {
                    gt[off + c] += src[c] * inv;
                }
            }
        }
        let gi = grads.item.as_slice_mut().unwrap();
        let dv = work.d_vchunk.as_slice().unwrap();
        for (bi, &item) in ctx.items.iter().enumerate() {
            let off = item as usize * d + k * cd;
            for c in 0..cd {
                gi[off + c] += dv[bi * cd + c];
            }
        }
    }
    total / S::from_usize_lossy(2 * k_intents)
}

fn intent_pass<S: Scalar>(
    model: &Model<S>,
    ctx: &AlignmentContext<'_, S>,
    opts: &AlignmentOptions<S>,
    weight: S,
    k: usize,
) -> IntentWork<S> {
    let b = ctx.items.len();
    let d = model.dims.d;
    let cd = model.dims.chunk();
    let head = &model.heads[k];
    let user_table = ctx.user_table.as_slice().unwrap();
    let tag_table = model.tag.as_slice().unwrap();
    let item_table = ctx.item_table.as_slice().unwrap();

    // aggregate the user and tag sources and gather the item chunks
    let mut ubar: Array2<S> = Array2::zeros((b, cd));
    let mut tbar: Array2<S> = Array2::zeros((b, d));
    let mut vchunk: Array2<S> = Array2::zeros((b, cd));
    {
        let ub = ubar.as_slice_mut().unwrap();
        let tb = tbar.as_slice_mut().unwrap();
        let vc = vchunk.as_slice_mut().unwrap();
        for (bi, &item) in ctx.items.iter().enumerate() {
            let j = item as usize;
            let users = ctx.item_users.row(j);
            if !users.is_empty() {
                let dst = &mut ub[bi * cd..(bi + 1) * cd];
                for &u in users {
                    let off = u as usize * d + k * cd;
                    for c in 0..cd {
                        dst[c] += user_table[off + c];
                    }
                }
                let inv = S::one() / S::from_usize_lossy(users.len());
                for v in dst.iter_mut() {
                    *v = *v * inv;
                }
            }
            let mut n_tags = 0usize;
            {
                let dst = &mut tb[bi * d..(bi + 1) * d];
                for &t in ctx.it_labels.row(j) {
                    if ctx.hard[t as usize] as usize != k {
                        continue;
                    }
                    let off = t as usize * d;
                    for c in 0..d {
                        dst[c] += tag_table[off + c];
                    }
                    n_tags += 1;
                }
                if n_tags > 0 {
                    let inv = S::one() / S::from_usize_lossy(n_tags);
                    for v in dst.iter_mut() {
                        *v = *v * inv;
                    }
                }
            }
            vc[bi * cd..(bi + 1) * cd].copy_from_slice(&item_table[j * d + k * cd..j * d + k * cd + cd]);
        }
    }

    // transformed tag aggregate and the fused item view
    let mut that: Array2<S> = Array2::zeros((b, cd));
    if opts.align_ut {
        that = tbar.dot(&head.w0.t());
        for mut row in that.rows_mut() {
            for (v, b0) in row.iter_mut().zip(head.b0.iter()) {
                *v += *b0;
            }
        }
    }
    let mut z: Array2<S> = Array2::zeros((b, cd));
    let mut that_norms = vec![S::zero(); b];
    let mut v_norms = vec![S::zero(); b];
    let mut that_unit: Array2<S> = Array2::zeros((b, cd));
    let mut v_unit: Array2<S> = Array2::zeros((b, cd));
    {
        let zs = z.as_slice_mut().unwrap();
        let ts = that.as_slice().unwrap();
        let vs = vchunk.as_slice().unwrap();
        let tu = that_unit.as_slice_mut().unwrap();
        let vu = v_unit.as_slice_mut().unwrap();
        for bi in 0..b {
            if opts.align_ut {
                let x = &ts[bi * cd..(bi + 1) * cd];
                let norm = x.iter().map(|&v| v * v).sum::<S>().sqrt();
                that_norms[bi] = norm;
                if norm > S::zero() {
                    for c in 0..cd {
                        let u = x[c] / norm;
                        tu[bi * cd + c] = u;
                        zs[bi * cd + c] += u;
                    }
                }
            }
            if opts.align_ui {
                let x = &vs[bi * cd..(bi + 1) * cd];
                let norm = x.iter().map(|&v| v * v).sum::<S>().sqrt();
                v_norms[bi] = norm;
                if norm > S::zero() {
                    for c in 0..cd {
                        let u = x[c] / norm;
                        vu[bi * cd + c] = u;
                        zs[bi * cd + c] += u;
                    }
                }
            }
        }
    }

    // projection
    let (pu, pz, trace_u, trace_z) = if opts.use_projection {
        let (pu, tu) = project_forward(head, &ubar);
        let (pz, tz) = project_forward(head, &z);
        (pu, pz, Some(tu), Some(tz))
    } else {
        (ubar.clone(), z.clone(), None, None)
    };

    // similarity matrix and both loss directions
    let inv_tau = S::one() / opts.tau;
    let mut sims = pu.dot(&pz.t());
    sims.mapv_inplace(|v| v * inv_tau);
    let weights: Vec<S> = ctx.items.iter().map(|&j| ctx.relatedness[[j as usize, k]]).collect();
    let positives = &ctx.positives[k];
    let mut d_u2it: Array2<S> = Array2::zeros((b, b));
    let loss_u2it = nce_direction(&sims, &weights, positives, &mut d_u2it);
    // materialize the transpose in standard layout so rows stay contiguous
    let mut sims_t: Array2<S> = Array2::zeros((b, b));
    sims_t.assign(&sims.t());
    let mut d_it2u: Array2<S> = Array2::zeros((b, b));
    let loss_it2u = nce_direction(&sims_t, &weights, positives, &mut d_it2u);

    // chain rule back to the projected views, folding in the caller weight
    // and the 1/(2K) reduction
    let scale = weight * inv_tau / S::from_usize_lossy(2 * model.dims.k);
    let mut g_pu = d_u2it.dot(&pz) + d_it2u.t().dot(&pz);
    let mut g_pz = d_u2it.t().dot(&pu) + d_it2u.dot(&pu);
    g_pu.mapv_inplace(|v| v * scale);
    g_pz.mapv_inplace(|v| v * scale);

    let mut heads = HeadGrads {
        w0: Array2::zeros((cd, d)),
        b0: Array1::zeros(cd),
        w1: Array2::zeros((cd, cd)),
        b1: Array1::zeros(cd),
        w2: Array2::zeros((cd, cd)),
    };
    let (d_ubar, dz) = if opts.use_projection {
        let du = project_backward(head, &ubar, trace_u.as_ref().unwrap(), &g_pu, &mut heads);
        let dz = project_backward(head, &z, trace_z.as_ref().unwrap(), &g_pz, &mut heads);
        (du, dz)
    } else {
        (g_pu, g_pz)
    };

    // un-fuse: route dz through each normalization branch
    let mut d_that: Array2<S> = Array2::zeros((b, cd));
    let mut d_vchunk: Array2<S> = Array2::zeros((b, cd));
    {
        let dzs = dz.as_slice().unwrap();
        let dts = d_that.as_slice_mut().unwrap();
        let dvs = d_vchunk.as_slice_mut().unwrap();
        let tu = that_unit.as_slice().unwrap();
        let vu = v_unit.as_slice().unwrap();
        for bi in 0..b {
            let dy = &dzs[bi * cd..(bi + 1) * cd];
            if opts.align_ut {
                normalize_backward(
                    &tu[bi * cd..(bi + 1) * cd],
                    that_norms[bi],
                    dy,
                    &mut dts[bi * cd..(bi + 1) * cd],
                );
            }
            if opts.align_ui {
                normalize_backward(
                    &vu[bi * cd..(bi + 1) * cd],
                    v_norms[bi],
                    dy,
                    &mut dvs[bi * cd..(bi + 1) * cd],
                );
            }
        }
    }

    // back through the tag transform
    let d_tbar = if opts.align_ut {
        heads.w0 = &heads.w0 + &d_that.t().dot(&tbar);
        for row in d_that.rows() {
            for (bg, &v) in heads.b0.iter_mut().zip(row.iter()) {
                *bg += v;
            }
        }
        d_that.dot(&head.w0)
    } else {
        Array2::zeros((b, d))
    };

    IntentWork { loss: loss_u2it + loss_it2u, d_ubar, d_tbar, d_vchunk, heads }
}
