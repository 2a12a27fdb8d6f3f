//! Compressed sparse row matrices and the kernels used by propagation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, SscError};

/// A real matrix in CSR layout.
///
/// Column indices are sorted and unique within each row. Explicit zeros are
/// allowed but never produced by the constructors in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn try_new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 {
            return Err(SscError::DimensionMismatch(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                rows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(SscError::InvalidParameter(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(SscError::DimensionMismatch(format!(
                "{} column indices but {} values",
                col_indices.len(),
                values.len()
            )));
        }
        for r in 0..rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return Err(SscError::InvalidParameter(format!(
                    "row_offsets decrease at row {r}"
                )));
            }
            let row = &col_indices[start..end];
            if row.iter().any(|&c| c >= cols) {
                return Err(SscError::InvalidParameter(format!(
                    "column index out of bounds in row {r}"
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SscError::InvalidParameter(format!(
                    "column indices of row {r} are not strictly increasing"
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SscError::InvalidParameter(format!("non-finite value {v}")));
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(SscError::DimensionMismatch(format!(
                "entry ({r}, {c}) outside a {rows}x{cols} matrix"
            )));
        }
        entries.sort_unstable_by_key(|e| (e.0, e.1));

        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::try_new(rows, cols, row_offsets, col_indices, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Converts a dense matrix, keeping only nonzero entries.
    pub fn from_dense(dense: ArrayView2<'_, f64>) -> Result<Self> {
        let (rows, cols) = dense.dim();
        let triplets = dense
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((r, c), &v)| (r, c, v));
        Self::from_triplets(rows, cols, triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    /// Iterates stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Returns a copy with `f(row, col, value)` applied to each stored value.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let (s, e) = (self.row_offsets[r], self.row_offsets[r + 1]);
            for k in s..e {
                out.values[k] = f(r, self.col_indices[k], self.values[k]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.iter().map(|(r, c, v)| (c, r, v));
        Self::from_triplets(self.cols, self.rows, triplets).expect("transpose of a valid matrix")
    }

    /// Checks `|a_ij − a_ji| ≤ tol` over all stored entries of both triangles.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && self.iter().all(|(r, c, v)| (v - self.get(c, r)).abs() <= tol)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.iter() {
            out[[r, c]] = v;
        }
        out
    }

    /// `y = M x`, with a fixed per-row accumulation order.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(y.len(), self.rows, "matvec output length");
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *out = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// Sparse × dense product.
    pub fn spmm(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.cols {
            return Err(SscError::DimensionMismatch(format!(
                "spmm: {}x{} sparse times {}x{} dense",
                self.rows,
                self.cols,
                x.nrows(),
                x.ncols()
            )));
        }
        let d = x.ncols();
        let mut out = Array2::<f64>::zeros((self.rows, d));
        if d == 0 {
            return Ok(out);
        }
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let os = out.as_slice_mut().expect("fresh array");
        for (r, acc) in os.chunks_exact_mut(d).enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let src = &xs[c * d..(c + 1) * d];
                acc.iter_mut().zip(src).for_each(|(a, &b)| *a += v * b);
            }
        }
        Ok(out)
    }

    /// Writes the little-endian binary container: `rows, cols, nnz` as u64,
    /// then `rows + 1` u64 offsets, `nnz` u64 column indices, `nnz` f64 values.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for h in [self.rows, self.cols, self.nnz()] {
            w.write_all(&(h as u64).to_le_bytes())?;
        }
        for &o in &self.row_offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in &self.col_indices {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        fn u64_at(r: &mut impl Read) -> std::io::Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        }
        let rows = u64_at(r)? as usize;
        let cols = u64_at(r)? as usize;
        let nnz = u64_at(r)? as usize;
        let row_offsets = (0..=rows)
            .map(|_| u64_at(r).map(|v| v as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let col_indices = (0..nnz)
            .map(|_| u64_at(r).map(|v| v as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let values = (0..nnz)
            .map(|_| u64_at(r).map(f64::from_bits))
            .collect::<std::io::Result<Vec<_>>>()?;
        Self::try_new(rows, cols, row_offsets, col_indices, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(SscError::MissingFile(path.to_path_buf()));
        }
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r).map_err(|e| match e {
            SscError::Io(io) => SscError::Format {
                path: path.to_path_buf(),
                message: io.to_string(),
            },
            other => other,
        })
    }
}
