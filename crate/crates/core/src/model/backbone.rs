//! Backbone scoring: dot-product MF, MLP scorer, and light graph convolution.

use ndarray::Array2;

use super::{BackboneKind, Model, ModelError, NeumfMlp, LEAKY_SLOPE};
use crate::dataset::Incidence;
use crate::Scalar;

pub fn leaky_relu<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        x
    } else {
        x * S::from_f64_lossy(LEAKY_SLOPE)
    }
}

pub fn leaky_relu_grad<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one()
    } else {
        S::from_f64_lossy(LEAKY_SLOPE)
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Symmetric degree-normalized bipartite graph over the train split.
///
/// Each observed pair `(u, i)` carries weight `1 / sqrt(deg(u) * deg(i))`;
/// rows with zero degree never receive or emit messages.
pub struct LightGcnGraph {
    n_users: usize,
    n_items: usize,
    pairs: Vec<(u32, u32)>,
    weights: Vec<f64>,
}

impl LightGcnGraph {
    pub fn build(train: &Incidence) -> Self {
        let n_users = train.n_rows();
        let n_items = train.n_cols();
        let item_deg = train.col_degrees();
        let mut pairs = Vec::with_capacity(train.nnz());
        let mut weights = Vec::with_capacity(train.nnz());
        for u in 0..n_users {
            let du = train.degree(u);
            for &i in train.row(u) {
                let di = item_deg[i as usize];
                pairs.push((u as u32, i));
                weights.push(1.0 / ((du * di) as f64).sqrt());
            }
        }
        Self { n_users, n_items, pairs, weights }
    }

    /// Run `n_layers` propagation steps and return the arithmetic mean of
    /// layers `0..=n_layers` for both sides. No nonlinearity, no weights.
    ///
    /// The propagation operator is symmetric, so this same function also maps
    /// output-side gradients back to the raw tables.
    pub fn propagate<S: Scalar>(
        &self,
        user: &Array2<S>,
        item: &Array2<S>,
        n_layers: usize,
    ) -> (Array2<S>, Array2<S>) {
        let d = user.ncols();
        assert_eq!(item.ncols(), d);
        assert_eq!(user.nrows(), self.n_users);
        assert_eq!(item.nrows(), self.n_items);
        let mut acc_u = user.clone();
        let mut acc_i = item.clone();
        let mut cur_u = user.clone();
        let mut cur_i = item.clone();
        for _ in 0..n_layers {
            let mut next_u: Array2<S> = Array2::zeros((self.n_users, d));
            let mut next_i: Array2<S> = Array2::zeros((self.n_items, d));
            {
                let cu = cur_u.as_slice().unwrap();
                let ci = cur_i.as_slice().unwrap();
                let nu = next_u.as_slice_mut().unwrap();
                let ni = next_i.as_slice_mut().unwrap();
                for (&(u, i), &w) in self.pairs.iter().zip(&self.weights) {
                    let w = S::from_f64_lossy(w);
                    let uo = u as usize * d;
                    let io = i as usize * d;
                    for c in 0..d {
                        nu[uo + c] += w * ci[io + c];
                        ni[io + c] += w * cu[uo + c];
                    }
                }
            }
            acc_u += &next_u;
            acc_i += &next_i;
            cur_u = next_u;
            cur_i = next_i;
        }
        let scale = S::one() / S::from_usize_lossy(n_layers + 1);
        acc_u.mapv_inplace(|v| v * scale);
        acc_i.mapv_inplace(|v| v * scale);
        (acc_u, acc_i)
    }
}

/// Cached propagated tables for the LightGCN backbone.
pub struct Propagated<S> {
    pub user: Array2<S>,
    pub item: Array2<S>,
    /// `Model::version` at propagation time.
    pub version: u64,
}

impl<S: Scalar> Propagated<S> {
    pub fn compute(graph: &LightGcnGraph, model: &Model<S>) -> Self {
        let (user, item) = graph.propagate(&model.user, &model.item, model.n_layers);
        Self { user, item, version: model.version }
    }
}

/// MLP forward pass for a `(user, item)` pair; returns the scalar score.
pub(crate) fn neumf_forward<S: Scalar>(mlp: &NeumfMlp<S>, u: &[S], v: &[S]) -> S {
    let d = u.len();
    let h1 = mlp.b1.len();
    let h2 = mlp.b2.len();
    let w1 = mlp.w1.as_slice().unwrap();
    let w2 = mlp.w2.as_slice().unwrap();
    let mut a1 = vec![S::zero(); h1];
    for r in 0..h1 {
        let row = &w1[r * 2 * d..(r + 1) * 2 * d];
        let mut acc = mlp.b1[r];
        acc += dot(&row[..d], u);
        acc += dot(&row[d..], v);
        a1[r] = leaky_relu(acc);
    }
    let mut a2 = vec![S::zero(); h2];
    for r in 0..h2 {
        let row = &w2[r * h1..(r + 1) * h1];
        a2[r] = leaky_relu(mlp.b2[r] + dot(row, &a1));
    }
    mlp.b3[0] + dot(mlp.w3.as_slice().unwrap(), &a2)
}

/// Relevance score of `(user, item)` under the model's backbone.
///
/// LightGCN requires a propagation cache built from the train adjacency;
/// a cache computed before the most recent optimizer step is rejected as
/// stale (the per-epoch freshness approximation bypasses this by scoring
/// against the cached tables directly inside the trainer).
pub fn score<S: Scalar>(
    model: &Model<S>,
    propagated: Option<&Propagated<S>>,
    user: usize,
    item: usize,
) -> Result<S, ModelError> {
    match model.backbone {
        BackboneKind::Bprmf => {
            Ok(dot(model.user.row(user).as_slice().unwrap(), model.item.row(item).as_slice().unwrap()))
        }
        BackboneKind::Neumf => {
            let mlp = model.mlp.as_ref().expect("neumf backbone carries an mlp");
            Ok(neumf_forward(mlp, model.user.row(user).as_slice().unwrap(), model.item.row(item).as_slice().unwrap()))
        }
        BackboneKind::Lightgcn => {
            let prop = propagated.ok_or(ModelError::StaleCache)?;
            if prop.version != model.version {
                return Err(ModelError::StaleCache);
            }
            Ok(dot(prop.user.row(user).as_slice().unwrap(), prop.item.row(item).as_slice().unwrap()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array1};

    use crate::model::Dims;

    fn unit_model(backbone: BackboneKind) -> Model<f64> {
        let dims = Dims { n_users: 2, n_items: 2, n_tags: 2, d: 4, k: 2 };
        let mut m = Model::init(dims, backbone, 2, 1).unwrap();
        m.user = arr2(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        m.item = arr2(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]);
        m
    }

    #[test]
    fn bprmf_score_is_the_inner_product() {
        let m = unit_model(BackboneKind::Bprmf);
        assert_eq!(score(&m, None, 0, 0).unwrap(), 1.0);
        assert_eq!(score(&m, None, 0, 1).unwrap(), 0.0);
        assert_eq!(score(&m, None, 1, 0).unwrap(), 0.0);
    }

    #[test]
    fn bprmf_score_is_bilinear() {
        let mut m = unit_model(BackboneKind::Bprmf);
        m.user.row_mut(0).mapv_inplace(|v| v * 3.5);
        assert_eq!(score(&m, None, 0, 0).unwrap(), 3.5);
    }

    #[test]
    fn neumf_with_zero_weights_outputs_the_final_bias() {
        let mut m = unit_model(BackboneKind::Neumf);
        let mlp = m.mlp.as_mut().unwrap();
        mlp.w1.fill(0.0);
        mlp.w2.fill(0.0);
        mlp.w3.fill(0.0);
        mlp.b3 = Array1::from_vec(vec![0.73]);
        assert_eq!(score(&m, None, 0, 1).unwrap(), 0.73);
    }

    #[test]
    fn lightgcn_two_node_graph_single_layer_averages_the_pair() {
        let mut m = unit_model(BackboneKind::Lightgcn);
        m.n_layers = 1;
        m.dims = Dims { n_users: 1, n_items: 1, n_tags: 2, d: 4, k: 2 };
        m.user = arr2(&[[2.0, 0.0, 4.0, 0.0]]);
        m.item = arr2(&[[0.0, 6.0, 0.0, 8.0]]);
        let train = Incidence::from_pairs(1, 1, &[(0, 0)]);
        let g = LightGcnGraph::build(&train);
        let (pu, pi) = g.propagate(&m.user, &m.item, 1);
        // hand propagation: layer1(user) = item0, output = (user + item)/2
        assert_eq!(pu.row(0), arr1(&[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(pi.row(0), arr1(&[1.0, 3.0, 2.0, 4.0]));
    }

    #[test]
    fn lightgcn_zero_layers_is_identity() {
        let train = Incidence::from_pairs(2, 2, &[(0, 0), (1, 1)]);
        let g = LightGcnGraph::build(&train);
        let m = unit_model(BackboneKind::Lightgcn);
        let (pu, pi) = g.propagate(&m.user, &m.item, 0);
        assert_eq!(pu, m.user);
        assert_eq!(pi, m.item);
    }

    #[test]
    fn isolated_node_keeps_only_its_layer_zero_share() {
        // user 1 has no edges: every deeper layer contributes zero, so the
        // mean over layers 0..=2 is row / 3
        let train = Incidence::from_pairs(2, 1, &[(0, 0)]);
        let g = LightGcnGraph::build(&train);
        let user = arr2(&[[3.0, 3.0], [9.0, 9.0]]);
        let item = arr2(&[[3.0, 3.0]]);
        let (pu, _) = g.propagate(&user, &item, 2);
        assert_eq!(pu.row(1), arr1(&[3.0, 3.0]));
    }

    #[test]
    fn zero_embeddings_stay_zero_under_propagation() {
        let train = Incidence::from_pairs(3, 2, &[(0, 0), (1, 0), (2, 1), (0, 1)]);
        let g = LightGcnGraph::build(&train);
        let user: Array2<f64> = Array2::zeros((3, 4));
        let item: Array2<f64> = Array2::zeros((2, 4));
        let (pu, pi) = g.propagate(&user, &item, 2);
        assert!(pu.iter().all(|&v| v == 0.0));
        assert!(pi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_propagation_cache_is_rejected() {
        let mut m = unit_model(BackboneKind::Lightgcn);
        let train = Incidence::from_pairs(2, 2, &[(0, 0), (1, 1)]);
        let g = LightGcnGraph::build(&train);
        let prop = Propagated::compute(&g, &m);
        assert!(score(&m, Some(&prop), 0, 0).is_ok());
        m.version += 1;
        assert!(matches!(score(&m, Some(&prop), 0, 0), Err(ModelError::StaleCache)));
        assert!(matches!(score(&m, None, 0, 0), Err(ModelError::StaleCache)));
    }
}
