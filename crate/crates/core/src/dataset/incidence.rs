//! Compressed-row binary incidence matrix.
//!
//! Rows index the "owning" entity (users for user-item, items for item-tag);
//! column indices within a row are sorted and deduplicated. The structure is
//! immutable after construction and safe to share across threads.

/// Sparse binary matrix in compressed row layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incidence {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl Incidence {
    /// Build from an unordered pair list. Duplicates collapse to one entry.
    pub fn from_pairs(n_rows: usize, n_cols: usize, pairs: &[(u32, u32)]) -> Self {
        let mut by_row: Vec<Vec<u32>> = vec![Vec::new(); n_rows];
        for &(r, c) in pairs {
            debug_assert!((r as usize) < n_rows && (c as usize) < n_cols);
            by_row[r as usize].push(c);
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(pairs.len());
        row_ptr.push(0);
        for row in &mut by_row {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self { n_rows, n_cols, row_ptr, col_idx }
    }

    /// Reassemble from raw compressed-row parts (used by bundle IO).
    pub fn from_parts(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>) -> Self {
        assert_eq!(row_ptr.len(), n_rows + 1, "row pointer length");
        assert_eq!(*row_ptr.last().unwrap_or(&0), col_idx.len(), "nnz mismatch");
        Self { n_rows, n_cols, row_ptr, col_idx }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Sorted column indices of row `r`.
    pub fn row(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn degree(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn contains(&self, r: usize, c: u32) -> bool {
        self.row(r).binary_search(&c).is_ok()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    /// All stored pairs in row-major order.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r as u32, c)))
    }

    /// Column degrees (number of rows touching each column).
    pub fn col_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_cols];
        for &c in &self.col_idx {
            deg[c as usize] += 1;
        }
        deg
    }

    /// Transposed incidence (columns become rows).
    pub fn transpose(&self) -> Incidence {
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            row_ptr[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut cursor = row_ptr.clone();
        let mut col_idx = vec![0u32; self.nnz()];
        for r in 0..self.n_rows {
            for &c in self.row(r) {
                col_idx[cursor[c as usize]] = r as u32;
                cursor[c as usize] += 1;
            }
        }
        Incidence { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_sorted_deduped_rows() {
        let m = Incidence::from_pairs(3, 4, &[(0, 3), (0, 1), (0, 3), (2, 0)]);
        assert_eq!(m.row(0), &[1, 3]);
        assert_eq!(m.row(1), &[] as &[u32]);
        assert_eq!(m.row(2), &[0]);
        assert_eq!(m.nnz(), 3);
        assert!(m.contains(0, 3));
        assert!(!m.contains(0, 2));
    }

    #[test]
    fn transpose_round_trips() {
        let m = Incidence::from_pairs(3, 5, &[(0, 4), (1, 2), (1, 4), (2, 0)]);
        let t = m.transpose();
        assert_eq!(t.n_rows(), 5);
        assert_eq!(t.row(4), &[0, 1]);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn col_degrees_count_rows() {
        let m = Incidence::from_pairs(2, 3, &[(0, 0), (1, 0), (1, 2)]);
        assert_eq!(m.col_degrees(), vec![2, 0, 1]);
    }
}
