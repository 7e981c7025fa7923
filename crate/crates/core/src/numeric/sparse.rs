use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and explicit zeros
/// are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<T>,
    symmetric: bool,
}

impl<T: Real> SparseMatrix<T> {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            symmetric: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![T::one(); n],
            symmetric: true,
        }
    }

    /// Builds a matrix from (row, col, value) triplets in any order.
    /// Duplicates are summed and resulting zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::Dimension {
                op: "from_triplets",
                left: (rows, cols),
                right: (r, c),
            });
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_idx.push(c as u32);
                values.push(v);
                row_of.push(r);
                last = Some((r, c));
            }
        }
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((c, v), r) in col_idx.into_iter().zip(values).zip(row_of) {
            if v != T::zero() {
                keep_cols.push(c);
                keep_vals.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
            symmetric: false,
        })
    }

    /// Builds from rows already sorted by column with no zeros or duplicates.
    pub(crate) fn from_sorted_rows(cols: usize, rows: Vec<Vec<(u32, T)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(c, v) in row {
                debug_assert!(v != T::zero() && (c as usize) < cols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
            symmetric: false,
        }
    }

    pub fn from_dense(t: &Tensor<T>) -> Self {
        let rows = (0..t.rows())
            .map(|r| {
                t.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != T::zero())
                    .map(|(c, &v)| (c as u32, v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(t.cols(), rows)
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// Marks the matrix as symmetric after checking that it is.
    pub fn into_symmetric(mut self) -> Result<Self> {
        if !self.is_exactly_symmetric() {
            return Err(Error::Internal("matrix is not symmetric".into()));
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn is_exactly_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|r| {
            self.row(r)
                .all(|(c, v)| self.get(c, r).is_some_and(|w| w.to_bits_eq(v)))
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row(&self, r: usize) -> impl ExactSizeIterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub(crate) fn row_cols(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> Option<T> {
        let cols = self.row_cols(r);
        cols.binary_search(&(c as u32))
            .ok()
            .map(|k| self.values[self.row_ptr[r] + k])
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_cols(r).binary_search(&(c as u32)).is_ok()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Same sparsity pattern with new values; zeros produced by `f` are dropped.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, T) -> T) -> Self {
        let rows = (0..self.rows)
            .map(|r| {
                self.row(r)
                    .filter_map(|(c, v)| {
                        let w = f(r, c, v);
                        (w != T::zero()).then_some((c as u32, w))
                    })
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(self.cols, rows)
    }

    pub fn cast<U: Real>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self
                .values
                .iter()
                .map(|&v| U::of(v.to_f64_lossless()))
                .collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        let mut t = Self::from_triplets(self.cols, self.rows, triplets)
            .expect("transposed indices are in range");
        t.symmetric = self.symmetric;
        t
    }

    /// Sparse-dense product `self · dense`.
    pub fn spmm(&self, dense: &Tensor<T>) -> Result<Tensor<T>> {
        if self.cols != dense.rows() {
            return Err(Error::Dimension {
                op: "spmm",
                left: self.shape(),
                right: dense.shape(),
            });
        }
        let n = dense.cols();
        let mut out = Tensor::zeros(self.rows, n);
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (o, &d) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, scattering rows instead of building the transpose.
    pub fn t_spmm(&self, dense: &Tensor<T>) -> Result<Tensor<T>> {
        if self.rows != dense.rows() {
            return Err(Error::Dimension {
                op: "t_spmm",
                left: self.shape(),
                right: dense.shape(),
            });
        }
        if self.symmetric {
            return self.spmm(dense);
        }
        let n = dense.cols();
        let mut out = Tensor::zeros(self.cols, n);
        for r in 0..self.rows {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                for (o, &d) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * d;
                }
            }
        }
        Ok(out)
    }
}

trait BitsEq {
    fn to_bits_eq(self, other: Self) -> bool;
}

impl<T: Real> BitsEq for T {
    fn to_bits_eq(self, other: Self) -> bool {
        self.to_f64_lossless().to_bits() == other.to_f64_lossless().to_bits()
    }
}
