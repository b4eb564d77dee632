//! Learnable parameters and backbone scoring.

mod backbone;
mod bpr;
mod checkpoint;

pub use backbone::{leaky_relu, leaky_relu_grad, score, LightGcnGraph, Propagated};
pub use bpr::{bpr_pair_loss, bpr_ui_loss, bpr_vt_loss};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("intent count {k} must divide embedding size {d}")]
    DimError { d: usize, k: usize },
    #[error("propagation cache is stale (model stepped since last propagate)")]
    StaleCache,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: String, reason: String },
    #[error("non-finite value in parameter tensor {0}")]
    NonFinite(String),
}

/// Entity counts and embedding geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_users: usize,
    pub n_items: usize,
    pub n_tags: usize,
    pub d: usize,
    pub k: usize,
}

impl Dims {
    /// Width of one intent chunk (`d / k`).
    pub fn chunk(&self) -> usize {
        self.d / self.k
    }
}

/// Scoring backbone attached to the shared embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    Bprmf,
    Neumf,
    Lightgcn,
}

impl BackboneKind {
    pub fn tag(self) -> u32 {
        match self {
            BackboneKind::Bprmf => 0,
            BackboneKind::Neumf => 1,
            BackboneKind::Lightgcn => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(BackboneKind::Bprmf),
            1 => Some(BackboneKind::Neumf),
            2 => Some(BackboneKind::Lightgcn),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::Bprmf => "bprmf",
            BackboneKind::Neumf => "neumf",
            BackboneKind::Lightgcn => "lightgcn",
        }
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bprmf" => Ok(BackboneKind::Bprmf),
            "neumf" => Ok(BackboneKind::Neumf),
            "lightgcn" => Ok(BackboneKind::Lightgcn),
            other => Err(format!("unknown backbone `{other}` (expected bprmf|neumf|lightgcn)")),
        }
    }
}

/// Per-intent alignment parameters: the tag transform (`w0`, `b0`) mapping a
/// full-width tag aggregate down to chunk width, and the two-layer projection
/// head (`w1`, `b1`, `w2`) applied before similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentHead<S> {
    pub w0: Array2<S>,
    pub b0: Array1<S>,
    pub w1: Array2<S>,
    pub b1: Array1<S>,
    pub w2: Array2<S>,
}

/// Single-tower MLP scorer: concat(user, item) -> d -> d/2 -> scalar,
/// LeakyReLU on both hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumfMlp<S> {
    pub w1: Array2<S>,
    pub b1: Array1<S>,
    pub w2: Array2<S>,
    pub b2: Array1<S>,
    pub w3: Array1<S>,
    pub b3: Array1<S>,
}

/// Whether a tensor takes weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Embedding-style tables and dense weight matrices: decayed.
    Weight,
    /// Biases: never decayed.
    Bias,
}

pub struct TensorRef<'a, S> {
    pub name: String,
    pub kind: ParamKind,
    pub data: &'a [S],
}

pub struct TensorMut<'a, S> {
    pub name: String,
    pub kind: ParamKind,
    pub data: &'a mut [S],
}

/// All learnable state. A second instance with identical shapes serves as the
/// gradient buffer, and two more as Adam moment tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub dims: Dims,
    pub backbone: BackboneKind,
    pub n_layers: usize,
    pub user: Array2<S>,
    pub item: Array2<S>,
    pub tag: Array2<S>,
    pub centers: Array2<S>,
    pub heads: Vec<IntentHead<S>>,
    pub mlp: Option<NeumfMlp<S>>,
    /// Bumped once per optimizer step; used for propagation staleness checks.
    pub version: u64,
}

fn xavier_fill<S: Scalar>(a: &mut Array2<S>, rng: &mut ChaCha8Rng) {
    let (rows, cols) = a.dim();
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    for v in a.as_slice_mut().unwrap() {
        *v = S::from_f64_lossy((rng.random::<f64>() * 2.0 - 1.0) * bound);
    }
}

impl<S: Scalar> Model<S> {
    /// Xavier-uniform initialization of every weight matrix; biases start at
    /// zero. Deterministic under `seed`.
    pub fn init(dims: Dims, backbone: BackboneKind, n_layers: usize, seed: u64) -> Result<Self, ModelError> {
        if dims.k == 0 || dims.d % dims.k != 0 {
            return Err(ModelError::DimError { d: dims.d, k: dims.k });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cd = dims.chunk();
        let d = dims.d;
        let mut user = Array2::zeros((dims.n_users, d));
        let mut item = Array2::zeros((dims.n_items, d));
        let mut tag = Array2::zeros((dims.n_tags, d));
        let mut centers = Array2::zeros((dims.k, d));
        xavier_fill(&mut user, &mut rng);
        xavier_fill(&mut item, &mut rng);
        xavier_fill(&mut tag, &mut rng);
        xavier_fill(&mut centers, &mut rng);
        let mut heads = Vec::with_capacity(dims.k);
        for _ in 0..dims.k {
            let mut w0 = Array2::zeros((cd, d));
            let mut w1 = Array2::zeros((cd, cd));
            let mut w2 = Array2::zeros((cd, cd));
            xavier_fill(&mut w0, &mut rng);
            xavier_fill(&mut w1, &mut rng);
            xavier_fill(&mut w2, &mut rng);
            heads.push(IntentHead {
                w0,
                b0: Array1::zeros(cd),
                w1,
                b1: Array1::zeros(cd),
                w2,
            });
        }
        let mlp = if backbone == BackboneKind::Neumf {
            let h1 = d;
            let h2 = d / 2;
            let mut w1 = Array2::zeros((h1, 2 * d));
            let mut w2 = Array2::zeros((h2, h1));
            let mut w3 = Array2::zeros((1, h2));
            xavier_fill(&mut w1, &mut rng);
            xavier_fill(&mut w2, &mut rng);
            xavier_fill(&mut w3, &mut rng);
            Some(NeumfMlp {
                w1,
                b1: Array1::zeros(h1),
                w2,
                b2: Array1::zeros(h2),
                w3: w3.row(0).to_owned(),
                b3: Array1::zeros(1),
            })
        } else {
            None
        };
        Ok(Self { dims, backbone, n_layers, user, item, tag, centers, heads, mlp, version: 0 })
    }

    /// Same shapes, every entry zero. Used for gradient and moment buffers.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            for v in t.data {
                *v = S::zero();
            }
        }
        z.version = 0;
        z
    }

    pub fn zero_fill(&mut self) {
        for t in self.tensors_mut() {
            for v in t.data {
                *v = S::zero();
            }
        }
    }

    /// Canonical tensor enumeration. The order is fixed and shared by the
    /// optimizer, the checkpoint writer, and the gradient checker:
    /// user, item, tag, centers, heads (w0,b0,w1,b1,w2 per intent), mlp.
    pub fn tensors(&self) -> Vec<TensorRef<'_, S>> {
        let mut out = Vec::new();
        out.push(TensorRef { name: "user".into(), kind: ParamKind::Weight, data: self.user.as_slice().unwrap() });
        out.push(TensorRef { name: "item".into(), kind: ParamKind::Weight, data: self.item.as_slice().unwrap() });
        out.push(TensorRef { name: "tag".into(), kind: ParamKind::Weight, data: self.tag.as_slice().unwrap() });
        out.push(TensorRef {
            name: "centers".into(),
            kind: ParamKind::Weight,
            data: self.centers.as_slice().unwrap(),
        });
        for (k, h) in self.heads.iter().enumerate() {
            out.push(TensorRef { name: format!("head{k}.w0"), kind: ParamKind::Weight, data: h.w0.as_slice().unwrap() });
            out.push(TensorRef { name: format!("head{k}.b0"), kind: ParamKind::Bias, data: h.b0.as_slice().unwrap() });
            out.push(TensorRef { name: format!("head{k}.w1"), kind: ParamKind::Weight, data: h.w1.as_slice().unwrap() });
            out.push(TensorRef { name: format!("head{k}.b1"), kind: ParamKind::Bias, data: h.b1.as_slice().unwrap() });
            out.push(TensorRef { name: format!("head{k}.w2"), kind: ParamKind::Weight, data: h.w2.as_slice().unwrap() });
        }
        if let Some(mlp) = &self.mlp {
            out.push(TensorRef { name: "mlp.w1".into(), kind: ParamKind::Weight, data: mlp.w1.as_slice().unwrap() });
            out.push(TensorRef { name: "mlp.b1".into(), kind: ParamKind::Bias, data: mlp.b1.as_slice().unwrap() });
            out.push(TensorRef { name: "mlp.w2".into(), kind: ParamKind::Weight, data: mlp.w2.as_slice().unwrap() });
            out.push(TensorRef { name: "mlp.b2".into(), kind: ParamKind::Bias, data: mlp.b2.as_slice().unwrap() });
            out.push(TensorRef { name: "mlp.w3".into(), kind: ParamKind::Weight, data: mlp.w3.as_slice().unwrap() });
            out.push(TensorRef { name: "mlp.b3".into(), kind: ParamKind::Bias, data: mlp.b3.as_slice().unwrap() });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, S>> {
        let mut out = Vec::new();
        out.push(TensorMut { name: "user".into(), kind: ParamKind::Weight, data: self.user.as_slice_mut().unwrap() });
        out.push(TensorMut { name: "item".into(), kind: ParamKind::Weight, data: self.item.as_slice_mut().unwrap() });
        out.push(TensorMut { name: "tag".into(), kind: ParamKind::Weight, data: self.tag.as_slice_mut().unwrap() });
        out.push(TensorMut {
            name: "centers".into(),
            kind: ParamKind::Weight,
            data: self.centers.as_slice_mut().unwrap(),
        });
        for (k, h) in self.heads.iter_mut().enumerate() {
            out.push(TensorMut { name: format!("head{k}.w0"), kind: ParamKind::Weight, data: h.w0.as_slice_mut().unwrap() });
            out.push(TensorMut { name: format!("head{k}.b0"), kind: ParamKind::Bias, data: h.b0.as_slice_mut().unwrap() });
            out.push(TensorMut { name: format!("head{k}.w1"), kind: ParamKind::Weight, data: h.w1.as_slice_mut().unwrap() });
            out.push(TensorMut { name: format!("head{k}.b1"), kind: ParamKind::Bias, data: h.b1.as_slice_mut().unwrap() });
            out.push(TensorMut { name: format!("head{k}.w2"), kind: ParamKind::Weight, data: h.w2.as_slice_mut().unwrap() });
        }
        if let Some(mlp) = &mut self.mlp {
            out.push(TensorMut { name: "mlp.w1".into(), kind: ParamKind::Weight, data: mlp.w1.as_slice_mut().unwrap() });
            out.push(TensorMut { name: "mlp.b1".into(), kind: ParamKind::Bias, data: mlp.b1.as_slice_mut().unwrap() });
            out.push(TensorMut { name: "mlp.w2".into(), kind: ParamKind::Weight, data: mlp.w2.as_slice_mut().unwrap() });
            out.push(TensorMut { name: "mlp.b2".into(), kind: ParamKind::Bias, data: mlp.b2.as_slice_mut().unwrap() });
            out.push(TensorMut { name: "mlp.w3".into(), kind: ParamKind::Weight, data: mlp.w3.as_slice_mut().unwrap() });
            out.push(TensorMut { name: "mlp.b3".into(), kind: ParamKind::Bias, data: mlp.b3.as_slice_mut().unwrap() });
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn flat_len(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn flat_get(&self, mut idx: usize) -> S {
        for t in self.tensors() {
            if idx < t.data.len() {
                return t.data[idx];
            }
            idx -= t.data.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_add(&mut self, mut idx: usize, delta: S) {
        for t in self.tensors_mut() {
            if idx < t.data.len() {
                t.data[idx] += delta;
                return;
            }
            idx -= t.data.len();
        }
        panic!("flat index out of range");
    }

    /// Name of the tensor owning flat index `idx` (for diagnostics).
    pub fn flat_name(&self, mut idx: usize) -> String {
        for t in self.tensors() {
            if idx < t.data.len() {
                return format!("{}[{}]", t.name, idx);
            }
            idx -= t.data.len();
        }
        panic!("flat index out of range");
    }

    /// Contiguous chunk `k` of a row in a `(n, d)` table.
    pub fn chunk_of<'a>(&self, table: &'a Array2<S>, row: usize, k: usize) -> &'a [S] {
        let d = self.dims.d;
        let cd = self.dims.chunk();
        &table.as_slice().unwrap()[row * d + k * cd..row * d + k * cd + cd]
    }

    /// Error if any parameter is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), ModelError> {
        for t in self.tensors() {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(t.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { n_users: 5, n_items: 6, n_tags: 4, d: 8, k: 2 }
    }

    #[test]
    fn intent_count_must_divide_embedding_size() {
        let bad = Dims { d: 64, k: 5, ..dims() };
        assert!(matches!(
            Model::<f64>::init(bad, BackboneKind::Bprmf, 0, 1),
            Err(ModelError::DimError { .. })
        ));
        let ok = Dims { d: 64, k: 4, ..dims() };
        let m = Model::<f64>::init(ok, BackboneKind::Bprmf, 0, 1).unwrap();
        assert_eq!(m.dims.chunk(), 16);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Model::<f32>::init(dims(), BackboneKind::Neumf, 0, 7).unwrap();
        let b = Model::<f32>::init(dims(), BackboneKind::Neumf, 0, 7).unwrap();
        assert_eq!(a, b);
        let c = Model::<f32>::init(dims(), BackboneKind::Neumf, 0, 8).unwrap();
        assert_ne!(a.user, c.user);
        // xavier bound for the user table
        let bound = (6.0f32 / (5 + 8) as f32).sqrt();
        for &v in a.user.as_slice().unwrap() {
            assert!(v.abs() <= bound);
        }
        // biases start at zero
        for t in a.tensors() {
            if t.kind == ParamKind::Bias {
                assert!(t.data.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn flat_indexing_walks_every_tensor() {
        let mut m = Model::<f64>::init(dims(), BackboneKind::Neumf, 0, 3).unwrap();
        let n = m.flat_len();
        let before = m.flat_get(n - 1);
        m.flat_add(n - 1, 0.5);
        assert_eq!(m.flat_get(n - 1), before + 0.5);
        assert!(m.flat_name(0).starts_with("user["));
    }

    #[test]
    fn chunk_view_is_the_contiguous_slice() {
        let m = Model::<f64>::init(dims(), BackboneKind::Bprmf, 0, 3).unwrap();
        let row = m.user.row(2);
        let chunk = m.chunk_of(&m.user, 2, 1);
        assert_eq!(chunk, &row.as_slice().unwrap()[4..8]);
    }

    #[test]
    fn non_finite_parameters_are_detected() {
        let mut m = Model::<f32>::init(dims(), BackboneKind::Bprmf, 0, 3).unwrap();
        assert!(m.check_finite().is_ok());
        m.tag[[1, 2]] = f32::NAN;
        assert!(matches!(m.check_finite(), Err(ModelError::NonFinite(n)) if n == "tag"));
    }
}
