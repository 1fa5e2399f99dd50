// SPDX-License-Identifier: Apache-2.0

//! Square sparse matrices in compressed row form.
//!
//! Rows keep strictly increasing column indices and never store an explicit
//! zero, so structural equality (`==`) is value equality. All arithmetic is
//! checked: integer overflow and non-finite float results surface as
//! [`ArithmeticOverflow`].
//!
//! The product runs row by row with a dense accumulator; rows are independent,
//! so the rayon split cannot change the per-entry summation order and results
//! are bit-identical for any thread count.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Marker error for checked sparse arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArithmeticOverflow;

/// Below this dimension products run on the calling thread.
const PAR_MIN_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![T::one(); dim],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicates are summed; entries that end up zero are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.max(c) + 1,
                });
            }
            if !v.is_finite_s() {
                return Err(Error::InvalidParameter(format!("non-finite value at ({r}, {c})")));
            }
            rows[r].push((c, v));
        }
        let mut out = Self::zeros(dim);
        out.row_ptr.clear();
        out.row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut acc = row[i].1;
                i += 1;
                while i < row.len() && row[i].0 == c {
                    acc = acc.checked_add_s(row[i].1).ok_or(Error::Overflow { iteration: 0 })?;
                    i += 1;
                }
                if !acc.is_zero() {
                    out.col_idx.push(c);
                    out.values.push(acc);
                }
            }
            out.row_ptr.push(out.col_idx.len());
        }
        Ok(out)
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::from_triplets(
            dim,
            rows.iter()
                .enumerate()
                .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v))),
        )
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.dim]; self.dim];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    fn from_row_parts(dim: usize, rows: Vec<(Vec<usize>, Vec<T>)>) -> Self {
        let nnz = rows.iter().map(|(c, _)| c.len()).sum();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (c, v) in rows {
            col_idx.extend(c);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Reassembles a matrix from raw CSR arrays, validating every invariant.
    pub fn from_csr(dim: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let bad = |m: &str| Err(Error::Container(m.to_string()));
        if row_ptr.len() != dim + 1 || row_ptr[0] != 0 {
            return bad("row pointer length");
        }
        if *row_ptr.last().unwrap() != col_idx.len() || col_idx.len() != values.len() {
            return bad("nnz mismatch");
        }
        if row_ptr.windows(2).any(|w| w[1] < w[0]) {
            return bad("row pointer not monotone");
        }
        for w in row_ptr.windows(2) {
            let cols = &col_idx[w[0]..w[1]];
            if cols.windows(2).any(|p| p[1] <= p[0]) || cols.iter().any(|&c| c >= dim) {
                return bad("columns not strictly increasing or out of range");
            }
        }
        if values.iter().any(|v| v.is_zero() || !v.is_finite_s()) {
            return bad("explicit zero or non-finite value");
        }
        Ok(Self {
            dim,
            row_ptr,
            col_idx,
            values,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    /// Applies `f` to every stored value; zeros produced by `f` are dropped.
    pub fn map_values<U: Scalar>(&self, mut f: impl FnMut(usize, usize, T) -> U) -> SparseMatrix<U> {
        let rows = (0..self.dim)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut c_out = Vec::with_capacity(cols.len());
                let mut v_out = Vec::with_capacity(cols.len());
                for (&c, &v) in cols.iter().zip(vals) {
                    let u = f(i, c, v);
                    if !u.is_zero() {
                        c_out.push(c);
                        v_out.push(u);
                    }
                }
                (c_out, v_out)
            })
            .collect();
        SparseMatrix::from_row_parts(self.dim, rows)
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        Ok(())
    }

    fn merge_with(
        &self,
        other: &Self,
        op: impl Fn(T, T) -> Option<T>,
    ) -> Result<std::result::Result<Self, ArithmeticOverflow>> {
        self.check_dim(other)?;
        let mut rows = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            let mut c_out = Vec::with_capacity(ca.len() + cb.len());
            let mut v_out = Vec::with_capacity(ca.len() + cb.len());
            while p < ca.len() || q < cb.len() {
                let (c, v) = match (ca.get(p), cb.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        (x, op(va[p - 1], vb[q - 1]))
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        (x, op(va[p - 1], T::zero()))
                    }
                    (Some(&x), None) => {
                        p += 1;
                        (x, op(va[p - 1], T::zero()))
                    }
                    (_, Some(&y)) => {
                        q += 1;
                        (y, op(T::zero(), vb[q - 1]))
                    }
                    (None, None) => unreachable!(),
                };
                let Some(v) = v else {
                    return Ok(Err(ArithmeticOverflow));
                };
                if !v.is_zero() {
                    c_out.push(c);
                    v_out.push(v);
                }
            }
            rows.push((c_out, v_out));
        }
        Ok(Ok(Self::from_row_parts(self.dim, rows)))
    }

    /// `self + other`; the outer error is a dimension mismatch.
    pub fn checked_add(&self, other: &Self) -> Result<std::result::Result<Self, ArithmeticOverflow>> {
        self.merge_with(other, |a, b| a.checked_add_s(b))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<std::result::Result<Self, ArithmeticOverflow>> {
        self.merge_with(other, |a, b| a.checked_sub_s(b))
    }

    /// Sparse product `self · other`.
    pub fn checked_matmul(&self, other: &Self) -> Result<std::result::Result<Self, ArithmeticOverflow>> {
        self.matmul_impl(other, None)
    }

    /// Product that drops entries with `|v| <= eps` after accumulation.
    pub fn checked_matmul_pruned(
        &self,
        other: &Self,
        eps: f64,
    ) -> Result<std::result::Result<Self, ArithmeticOverflow>> {
        self.matmul_impl(other, Some(eps))
    }

    fn matmul_impl(&self, other: &Self, prune: Option<f64>) -> Result<std::result::Result<Self, ArithmeticOverflow>> {
        self.check_dim(other)?;
        let n = self.dim;
        let row_job = |scratch: &mut (Vec<T>, Vec<bool>, Vec<usize>), i: usize| {
            let (acc, seen, touched) = scratch;
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    let prod = a.checked_mul_s(b).ok_or(ArithmeticOverflow)?;
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                        acc[j] = prod;
                    } else {
                        acc[j] = acc[j].checked_add_s(prod).ok_or(ArithmeticOverflow)?;
                    }
                }
            }
            touched.sort_unstable();
            let mut c_out = Vec::with_capacity(touched.len());
            let mut v_out = Vec::with_capacity(touched.len());
            for &j in touched.iter() {
                let v = acc[j];
                seen[j] = false;
                let keep = match prune {
                    Some(eps) => v.to_f64().is_none_or(|f| f.abs() > eps),
                    None => !v.is_zero(),
                };
                if keep {
                    c_out.push(j);
                    v_out.push(v);
                }
            }
            touched.clear();
            Ok::<_, ArithmeticOverflow>((c_out, v_out))
        };
        let init = || (vec![T::zero(); n], vec![false; n], Vec::new());
        let rows: std::result::Result<Vec<_>, ArithmeticOverflow> = if n >= PAR_MIN_DIM {
            (0..n)
                .into_par_iter()
                .map_init(init, |s, i| {
                    let r = row_job(s, i);
                    if r.is_err() {
                        // Leave the scratch clean for the next row on this thread.
                        s.1.iter_mut().for_each(|b| *b = false);
                        s.2.clear();
                    }
                    r
                })
                .collect()
        } else {
            let mut s = init();
            (0..n).map(|i| row_job(&mut s, i)).collect()
        };
        Ok(rows.map(|rows| Self::from_row_parts(n, rows)))
    }

    /// Largest absolute entrywise difference, as f64.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            let (ca, va) = self.row(i);
            for (&c, &v) in ca.iter().zip(va) {
                let d = (v.to_f64().unwrap_or(f64::NAN) - other.get(i, c).to_f64().unwrap_or(f64::NAN)).abs();
                worst = worst.max(d);
            }
            let (cb, vb) = other.row(i);
            for (&c, &v) in cb.iter().zip(vb) {
                if ca.binary_search(&c).is_err() {
                    worst = worst.max(v.to_f64().unwrap_or(f64::NAN).abs());
                }
            }
        }
        Ok(worst)
    }
}

impl<F: Real> SparseMatrix<F> {
    /// Dense row-major copy as an ndarray.
    pub fn to_array(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for (i, j, v) in self.iter() {
            out[[i, j]] = v;
        }
        out
    }

    pub fn from_array(a: ArrayView2<'_, F>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, actual: c });
        }
        Self::from_triplets(r, a.indexed_iter().map(|((i, j), &v)| (i, j, v)))
    }

    /// `self · h` for a dense `h` with `dim` rows.
    pub fn mul_dense(&self, h: ArrayView2<'_, F>) -> Result<Array2<F>> {
        if h.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: h.nrows(),
            });
        }
        let mut out = Array2::zeros((self.dim, h.ncols()));
        for (i, mut out_row) in out.outer_iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out_row.scaled_add(v, &h.row(c));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · h` without materializing the transpose.
    pub fn transpose_mul_dense(&self, h: ArrayView2<'_, F>) -> Result<Array2<F>> {
        if h.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: h.nrows(),
            });
        }
        let mut out = Array2::zeros((self.dim, h.ncols()));
        for i in 0..self.dim {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out.row_mut(c).scaled_add(v, &h.row(i));
            }
        }
        Ok(out)
    }
}
