//! On-disk dataset bundle.
//!
//! Each incidence table is one binary file:
//!
//! ```text
//! magic   b"IMCT"
//! version u32 little-endian (currently 1)
//! n_rows  u64 LE
//! n_cols  u64 LE
//! nnz     u64 LE
//! row_ptr (n_rows + 1) x u64 LE
//! col_idx nnz x u32 LE
//! ```
//!
//! ID maps are tab-separated text files `dense_id \t external_id`, one per
//! entity class; summary statistics are stored as JSON.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{compute_stats, DataError, Dataset, IdMap, IdMaps, Incidence};

pub const INCIDENCE_MAGIC: &[u8; 4] = b"IMCT";
pub const INCIDENCE_VERSION: u32 = 1;

const TABLE_FILES: [&str; 4] = ["ui_train.imct", "ui_valid.imct", "ui_test.imct", "it_labels.imct"];
const MAP_FILES: [&str; 3] = ["users.tsv", "items.tsv", "tags.tsv"];

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> DataError {
    DataError::CorruptBundle { path: path.display().to_string(), reason: reason.into() }
}

pub fn write_incidence(path: &Path, m: &Incidence) -> Result<(), DataError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    let res: std::io::Result<()> = (|| {
        w.write_all(INCIDENCE_MAGIC)?;
        w.write_all(&INCIDENCE_VERSION.to_le_bytes())?;
        w.write_all(&(m.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(m.n_cols() as u64).to_le_bytes())?;
        w.write_all(&(m.nnz() as u64).to_le_bytes())?;
        for &p in m.row_ptr() {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in m.col_idx() {
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()
    })();
    res.map_err(|e| io_err(path, e))
}

pub fn read_incidence(path: &Path) -> Result<Incidence, DataError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != INCIDENCE_MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(|e| io_err(path, e))?;
    let version = u32::from_le_bytes(b4);
    if version != INCIDENCE_VERSION {
        return Err(corrupt(path, format!("unsupported version {version}")));
    }
    let mut read_u64 = |r: &mut BufReader<std::fs::File>| -> Result<u64, DataError> {
        r.read_exact(&mut b8).map_err(|e| io_err(path, e))?;
        Ok(u64::from_le_bytes(b8))
    };
    let n_rows = read_u64(&mut r)? as usize;
    let n_cols = read_u64(&mut r)? as usize;
    let nnz = read_u64(&mut r)? as usize;
    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    for _ in 0..=n_rows {
        row_ptr.push(read_u64(&mut r)? as usize);
    }
    if *row_ptr.last().unwrap() != nnz {
        return Err(corrupt(path, "row pointer tail does not match nnz"));
    }
    let mut col_idx = Vec::with_capacity(nnz);
    let mut b4c = [0u8; 4];
    for _ in 0..nnz {
        r.read_exact(&mut b4c).map_err(|e| io_err(path, e))?;
        let c = u32::from_le_bytes(b4c);
        if c as usize >= n_cols {
            return Err(corrupt(path, "column index out of range"));
        }
        col_idx.push(c);
    }
    Ok(Incidence::from_parts(n_rows, n_cols, row_ptr, col_idx))
}

fn write_id_map(path: &Path, map: &IdMap) -> Result<(), DataError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for (id, name) in map.names().iter().enumerate() {
        writeln!(w, "{id}\t{name}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_id_map(path: &Path) -> Result<IdMap, DataError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut names = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (id, name) = line
            .split_once('\t')
            .ok_or_else(|| corrupt(path, format!("line {} lacks a tab", idx + 1)))?;
        let id: usize = id.parse().map_err(|_| corrupt(path, format!("bad id at line {}", idx + 1)))?;
        if id != names.len() {
            return Err(corrupt(path, format!("ids must be dense and ascending (line {})", idx + 1)));
        }
        names.push(name.to_string());
    }
    Ok(IdMap::from_names(names))
}

/// Write the full bundle (incidence tables, ID maps, stats JSON) into `dir`.
pub fn save_bundle(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tables = [&dataset.ui_train, &dataset.ui_valid, &dataset.ui_test, &dataset.it_labels];
    for (name, table) in TABLE_FILES.iter().zip(tables) {
        write_incidence(&dir.join(name), table)?;
    }
    let maps = [&dataset.id_maps.users, &dataset.id_maps.items, &dataset.id_maps.tags];
    for (name, map) in MAP_FILES.iter().zip(maps) {
        write_id_map(&dir.join(name), map)?;
    }
    let stats = compute_stats(dataset);
    let path = dir.join("stats.json");
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))
}

pub fn load_bundle(dir: &Path) -> Result<Dataset, DataError> {
    let ui_train = read_incidence(&dir.join(TABLE_FILES[0]))?;
    let ui_valid = read_incidence(&dir.join(TABLE_FILES[1]))?;
    let ui_test = read_incidence(&dir.join(TABLE_FILES[2]))?;
    let it_labels = read_incidence(&dir.join(TABLE_FILES[3]))?;
    let users = read_id_map(&dir.join(MAP_FILES[0]))?;
    let items = read_id_map(&dir.join(MAP_FILES[1]))?;
    let tags = read_id_map(&dir.join(MAP_FILES[2]))?;
    let n_users = ui_train.n_rows();
    let n_items = ui_train.n_cols();
    let n_tags = it_labels.n_cols();
    if users.len() != n_users || items.len() != n_items || tags.len() != n_tags {
        return Err(corrupt(dir, "id map sizes disagree with incidence tables"));
    }
    if it_labels.n_rows() != n_items {
        return Err(corrupt(dir, "item-tag table row count disagrees with item count"));
    }
    Ok(Dataset {
        n_users,
        n_items,
        n_tags,
        ui_train,
        ui_valid,
        ui_test,
        it_labels,
        id_maps: IdMaps { users, items, tags },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incidence_file_layout_is_byte_exact() {
        let m = Incidence::from_pairs(2, 3, &[(0, 2), (1, 0)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.imct");
        write_incidence(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut want = Vec::new();
        want.extend_from_slice(b"IMCT");
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes()); // rows
        want.extend_from_slice(&3u64.to_le_bytes()); // cols
        want.extend_from_slice(&2u64.to_le_bytes()); // nnz
        for p in [0u64, 1, 2] {
            want.extend_from_slice(&p.to_le_bytes());
        }
        for c in [2u32, 0] {
            want.extend_from_slice(&c.to_le_bytes());
        }
        assert_eq!(bytes, want);
        assert_eq!(read_incidence(&path).unwrap(), m);
    }

    #[test]
    fn bundle_round_trips() {
        let pairs: Vec<(u32, u32)> = (0..5u32).flat_map(|u| (0..4u32).map(move |i| (u, i))).collect();
        let ds = Dataset {
            n_users: 5,
            n_items: 4,
            n_tags: 2,
            ui_train: Incidence::from_pairs(5, 4, &pairs[..12]),
            ui_valid: Incidence::from_pairs(5, 4, &pairs[12..16]),
            ui_test: Incidence::from_pairs(5, 4, &pairs[16..]),
            it_labels: Incidence::from_pairs(4, 2, &[(0, 0), (1, 1), (2, 0)]),
            id_maps: IdMaps {
                users: IdMap::from_names((0..5).map(|u| format!("user-{u}")).collect()),
                items: IdMap::from_names((0..4).map(|i| format!("item {i}")).collect()),
                tags: IdMap::from_names(vec!["rock".into(), "jazz".into()]),
            },
        };
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&ds, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert!(dir.path().join("stats.json").exists());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.imct");
        std::fs::write(&path, b"NOPE0000000000000000000000000000").unwrap();
        assert!(matches!(read_incidence(&path), Err(DataError::CorruptBundle { .. })));
    }
}
