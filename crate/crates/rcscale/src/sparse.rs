//! Minimal CSR storage for the nonnegative input matrix A.

use crate::error::{Result, ScaleError};

/// Compressed sparse row matrix with f64 values.
///
/// Column indices within each row are strictly increasing; duplicate
/// triplets are summed at construction and explicit zeros are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, v) in &triplets {
            if i >= nrows || j >= ncols {
                return Err(ScaleError::DimensionMismatch(format!(
                    "triplet ({i}, {j}) out of bounds for {nrows}x{ncols}"
                )));
            }
            if !v.is_finite() {
                return Err(ScaleError::NonFinite("matrix entry"));
            }
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        // drop entries that summed to exactly zero
        let mut out = CsrMatrix { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() };
        let mut pos = 0usize;
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
            for k in row_ptr[i]..row_ptr[i + 1] {
                if values[k] != 0.0 {
                    out.col_idx.push(col_idx[k]);
                    out.values.push(values[k]);
                }
            }
            let _ = pos;
            pos = out.col_idx.len();
            out.row_ptr[i + 1] = pos;
        }
        Ok(out)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(ScaleError::DimensionMismatch("ragged dense input".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(nrows, ncols, triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> CsrMatrix {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[i][j] = v;
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

pub fn norm2_sq(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum()
}

/// Weighted squared norm sum_i w_i v_i^2.
pub fn norm_w_sq(v: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(v.len(), w.len());
    v.iter().zip(w).map(|(&x, &wi)| wi * x * x).sum()
}
