//! Compressed-row sparse matrices sized for lattice autoregressions.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::Path;

/// Sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Build from per-row (column, value) entries; columns within a row
    /// need not be sorted.
    pub fn from_rows(n_rows: usize, n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n_rows {
            return Err(Error::Shape(format!("expected {n_rows} rows, got {}", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(c, _)| c);
            for win in row.windows(2) {
                if win[0].0 == win[1].0 {
                    return Err(Error::Shape(format!("duplicate column {} in row {i}", win[0].0)));
                }
            }
            for (c, v) in row {
                if c >= n_cols {
                    return Err(Error::Shape(format!("column {c} out of bounds in row {i}")));
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseOperator { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        let mut row_ptr = Vec::with_capacity(self.n_cols + 1);
        row_ptr.push(0);
        for c in 0..self.n_cols {
            row_ptr.push(row_ptr[c] + counts[c]);
        }
        let mut next = row_ptr[..self.n_cols].to_vec();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                col_idx[slot] = i;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SparseOperator { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    /// Sparse-sparse product `self * other` via row-wise gather/scatter.
    pub fn matmul(&self, other: &SparseOperator) -> Result<SparseOperator> {
        if self.n_cols != other.n_rows {
            return Err(Error::Shape(format!(
                "product dimension mismatch: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut accum = vec![0.0; other.n_cols];
        let mut marked: Vec<usize> = Vec::new();
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&k, &v) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &ov) in ocols.iter().zip(ovals) {
                    if accum[c] == 0.0 && !marked.contains(&c) {
                        marked.push(c);
                    }
                    accum[c] += v * ov;
                }
            }
            marked.sort_unstable();
            for &c in &marked {
                col_idx.push(c);
                values.push(accum[c]);
                accum[c] = 0.0;
            }
            marked.clear();
            row_ptr.push(col_idx.len());
        }
        Ok(SparseOperator { n_rows: self.n_rows, n_cols: other.n_cols, row_ptr, col_idx, values })
    }

    /// Normal matrix `selfᵀ * self`.
    pub fn normal_matrix(&self) -> SparseOperator {
        self.transpose().matmul(self).expect("dimensions agree by construction")
    }

    /// Scale row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> SparseOperator {
        debug_assert_eq!(factors.len(), self.n_rows);
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= factors[i];
            }
        }
        out
    }

    /// Maximum of `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n_rows {
            let (cols, _) = self.row(i);
            for &c in cols {
                bw = bw.max(i.abs_diff(c));
            }
        }
        bw
    }

    /// Strict row diagonal dominance: `|a_ii| > Σ_{j≠i} |a_ij|` for all rows.
    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut diag = 0.0;
            let mut off = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == i {
                    diag = v.abs();
                } else {
                    off += v.abs();
                }
            }
            if diag <= off {
                return false;
            }
        }
        true
    }

    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = t.row(i);
            let mut a = 0;
            let mut b = 0;
            while a < c1.len() || b < c2.len() {
                if b >= c2.len() || (a < c1.len() && c1[a] < c2[b]) {
                    worst = worst.max(v1[a].abs());
                    a += 1;
                } else if a >= c1.len() || c2[b] < c1[a] {
                    worst = worst.max(v2[b].abs());
                    b += 1;
                } else {
                    worst = worst.max((v1[a] - v2[b]).abs());
                    a += 1;
                    b += 1;
                }
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(i, c)] = v;
            }
        }
        m
    }

    /// Debug dump in MatrixMarket coordinate text format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}
