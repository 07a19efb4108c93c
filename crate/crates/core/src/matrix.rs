//! Sparse symmetric coefficient matrix with zero diagonal.
//!
//! Entries are kept as a coordinate list of the strict upper triangle
//! (`row < col`), plus a row index covering both triangles so that the
//! solvers can walk one full row of `M` at a time.

use crate::error::{Error, Result};

/// One stored off-diagonal weight, `row < col`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

/// A neighbour in a row of the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowItem {
    pub col: usize,
    pub weight: f64,
    /// Position of the underlying entry in [`CoefficientMatrix::entries`].
    pub entry: usize,
}

/// Symmetric `n x n` matrix with zero diagonal and nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    n: usize,
    entries: Vec<Entry>,
    row_ptr: Vec<usize>,
    row_items: Vec<RowItem>,
}

impl CoefficientMatrix {
    /// Builds the matrix from `(row, col, weight)` triples with `row < col`.
    ///
    /// Entry order is preserved, so entry positions can be used to attach
    /// per-entry data (such as ownership).
    pub fn new(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMatrix("dimension must be positive".into()));
        }
        let mut entries = Vec::new();
        for (row, col, weight) in triples {
            if row >= n || col >= n {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({row}, {col}) out of bounds for n = {n}"
                )));
            }
            if row == col {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal entry ({row}, {col}) is not allowed"
                )));
            }
            if row > col {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({row}, {col}) must be given with row < col"
                )));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({row}, {col}) has weight {weight}; weights must be finite and >= 0"
                )));
            }
            entries.push(Entry { row, col, weight });
        }

        let mut degree = vec![0usize; n];
        for e in &entries {
            degree[e.row] += 1;
            degree[e.col] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill = row_ptr.clone();
        let placeholder = RowItem {
            col: 0,
            weight: 0.0,
            entry: 0,
        };
        let mut row_items = vec![placeholder; row_ptr[n]];
        for (k, e) in entries.iter().enumerate() {
            row_items[fill[e.row]] = RowItem {
                col: e.col,
                weight: e.weight,
                entry: k,
            };
            fill[e.row] += 1;
            row_items[fill[e.col]] = RowItem {
                col: e.row,
                weight: e.weight,
                entry: k,
            };
            fill[e.col] += 1;
        }
        for j in 0..n {
            let row = &mut row_items[row_ptr[j]..row_ptr[j + 1]];
            row.sort_by_key(|item| item.col);
            if row.windows(2).any(|w| w[0].col == w[1].col) {
                let dup = row.windows(2).find(|w| w[0].col == w[1].col).unwrap()[0].col;
                return Err(Error::InvalidMatrix(format!(
                    "entry ({}, {}) is listed more than once",
                    j.min(dup),
                    j.max(dup)
                )));
            }
        }

        Ok(Self {
            n,
            entries,
            row_ptr,
            row_items,
        })
    }

    /// The all-zero matrix.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, std::iter::empty())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored upper-triangle entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Full row `j` (both triangles), sorted by column.
    pub fn row(&self, j: usize) -> &[RowItem] {
        &self.row_items[self.row_ptr[j]..self.row_ptr[j + 1]]
    }

    /// `M[j][l]`; zero when no entry is stored.
    pub fn weight(&self, j: usize, l: usize) -> f64 {
        if j >= self.n || l >= self.n {
            return 0.0;
        }
        let row = self.row(j);
        match row.binary_search_by_key(&l, |item| item.col) {
            Ok(pos) => row[pos].weight,
            Err(_) => 0.0,
        }
    }

    pub fn row_l1_norm(&self, j: usize) -> f64 {
        self.row(j).iter().fold(0.0, |acc, item| acc + item.weight)
    }

    /// `sum_{j,l} M[j][l]`, i.e. twice the sum of stored weights.
    pub fn total_weight(&self) -> f64 {
        2.0 * self.entries.iter().fold(0.0, |acc, e| acc + e.weight)
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut dense = DenseMatrix::zeros(self.n);
        for e in &self.entries {
            dense.set(e.row, e.col, e.weight);
            dense.set(e.col, e.row, e.weight);
        }
        dense
    }

    /// Relabels indices: old index `i` becomes `forward[i]`.
    ///
    /// Entry order is preserved so per-entry data stays aligned.
    pub fn relabel(&self, forward: &[usize]) -> Result<Self> {
        if forward.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for n = {}",
                forward.len(),
                self.n
            )));
        }
        Self::new(
            self.n,
            self.entries.iter().map(|e| {
                let (a, b) = (forward[e.row], forward[e.col]);
                (a.min(b), a.max(b), e.weight)
            }),
        )
    }
}

/// Small dense square matrix, row-major. Used by oracles and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> CoefficientMatrix {
        CoefficientMatrix::new(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn symmetric_lookup() {
        let m = CoefficientMatrix::new(4, [(0, 3, 2.5), (1, 2, 0.5)]).unwrap();
        assert_eq!(m.weight(0, 3), 2.5);
        assert_eq!(m.weight(3, 0), 2.5);
        assert_eq!(m.weight(2, 1), 0.5);
        assert_eq!(m.weight(0, 1), 0.0);
        assert_eq!(m.weight(2, 2), 0.0);
    }

    #[test]
    fn rows_cover_both_triangles() {
        let m = triangle();
        let cols: Vec<usize> = m.row(1).iter().map(|r| r.col).collect();
        assert_eq!(cols, vec![0, 2]);
        assert_eq!(m.row_l1_norm(2), 2.0);
        assert_eq!(m.total_weight(), 6.0);
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(CoefficientMatrix::new(3, [(1, 1, 1.0)]).is_err());
        assert!(CoefficientMatrix::new(3, [(2, 1, 1.0)]).is_err());
        assert!(CoefficientMatrix::new(3, [(0, 1, -1.0)]).is_err());
        assert!(CoefficientMatrix::new(3, [(0, 3, 1.0)]).is_err());
        assert!(CoefficientMatrix::new(3, [(0, 1, f64::NAN)]).is_err());
        assert!(CoefficientMatrix::new(3, [(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(CoefficientMatrix::new(0, []).is_err());
    }

    #[test]
    fn dense_copy_is_symmetric_with_zero_diagonal() {
        let d = triangle().to_dense();
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn relabel_keeps_entry_order() {
        let m = CoefficientMatrix::new(3, [(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let r = m.relabel(&[2, 0, 1]).unwrap();
        assert_eq!(
            r.entries()[0],
            Entry {
                row: 0,
                col: 2,
                weight: 1.0
            }
        );
        assert_eq!(
            r.entries()[1],
            Entry {
                row: 0,
                col: 1,
                weight: 2.0
            }
        );
    }
}
