//! Checkpoint file format.
//!
//! ```text
//! magic    b"IMCK"
//! version  u32 LE (currently 1)
//! n_users  u64 LE
//! n_items  u64 LE
//! n_tags   u64 LE
//! d        u32 LE
//! k        u32 LE
//! backbone u32 LE (0 = bprmf, 1 = neumf, 2 = lightgcn)
//! n_layers u32 LE (graph convolution layers; 0 unless lightgcn)
//! tables   f32 LE, row-major, in canonical tensor order
//!          (user, item, tag, centers, alignment heads, backbone weights)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BackboneKind, Dims, Model, ModelError};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io { path: path.display().to_string(), source }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint { path: path.display().to_string(), reason: reason.into() }
}

/// Write all parameter tables as 32-bit floats. A model trained at `f64`
/// loses precision here; exact-resume state uses the trainer's sidecar file
/// instead.
pub fn save_checkpoint<S: Scalar>(model: &Model<S>, path: &Path) -> Result<(), ModelError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    let res: std::io::Result<()> = (|| {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(model.dims.n_users as u64).to_le_bytes())?;
        w.write_all(&(model.dims.n_items as u64).to_le_bytes())?;
        w.write_all(&(model.dims.n_tags as u64).to_le_bytes())?;
        w.write_all(&(model.dims.d as u32).to_le_bytes())?;
        w.write_all(&(model.dims.k as u32).to_le_bytes())?;
        w.write_all(&model.backbone.tag().to_le_bytes())?;
        w.write_all(&(model.n_layers as u32).to_le_bytes())?;
        for t in model.tensors() {
            for &v in t.data {
                w.write_all(&v.to_f32_lossy().to_le_bytes())?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| io_err(path, e))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Model<S>, ModelError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    macro_rules! u32_field {
        () => {{
            r.read_exact(&mut b4).map_err(|e| io_err(path, e))?;
            u32::from_le_bytes(b4)
        }};
    }
    macro_rules! u64_field {
        () => {{
            r.read_exact(&mut b8).map_err(|e| io_err(path, e))?;
            u64::from_le_bytes(b8)
        }};
    }
    let version = u32_field!();
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(path, format!("unsupported version {version}")));
    }
    let n_users = u64_field!() as usize;
    let n_items = u64_field!() as usize;
    let n_tags = u64_field!() as usize;
    let d = u32_field!() as usize;
    let k = u32_field!() as usize;
    let backbone = BackboneKind::from_tag(u32_field!()).ok_or_else(|| corrupt(path, "unknown backbone tag"))?;
    let n_layers = u32_field!() as usize;
    if k == 0 || d % k != 0 {
        return Err(corrupt(path, format!("intent count {k} does not divide embedding size {d}")));
    }
    let dims = Dims { n_users, n_items, n_tags, d, k };
    let mut model = Model::<S>::init(dims, backbone, n_layers, 0).map_err(|e| match e {
        ModelError::DimError { d, k } => corrupt(path, format!("bad dims d={d} k={k}")),
        other => other,
    })?;
    let mut buf = [0u8; 4];
    for t in model.tensors_mut() {
        for v in t.data {
            r.read_exact(&mut buf).map_err(|e| corrupt(path, format!("truncated tables: {e}")))?;
            *v = S::from_f32_lossy(f32::from_le_bytes(buf));
        }
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(corrupt(path, "trailing bytes after tables")),
        Err(e) => return Err(io_err(path, e)),
    }
    model.version = 0;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { n_users: 3, n_items: 4, n_tags: 2, d: 8, k: 2 }
    }

    #[test]
    fn f32_checkpoint_round_trips_bit_exactly() {
        let model = Model::<f32>::init(dims(), BackboneKind::Neumf, 0, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.imck");
        save_checkpoint(&model, &path).unwrap();
        let back: Model<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn header_layout_is_fixed() {
        let model = Model::<f32>::init(dims(), BackboneKind::Lightgcn, 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.imck");
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"IMCK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3); // users
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4); // items
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2); // tags
        assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 8); // d
        assert_eq!(u32::from_le_bytes(bytes[36..40].try_into().unwrap()), 2); // k
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 2); // lightgcn
        assert_eq!(u32::from_le_bytes(bytes[44..48].try_into().unwrap()), 2); // layers
        let expected_floats: usize = model.tensors().iter().map(|t| t.data.len()).sum();
        assert_eq!(bytes.len(), 48 + 4 * expected_floats);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let model = Model::<f32>::init(dims(), BackboneKind::Bprmf, 0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.imck");
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(ModelError::CorruptCheckpoint { .. })
        ));
    }
}
