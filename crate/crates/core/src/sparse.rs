//! Compressed-row sparse matrices and a banded direct solver.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::{norm2, Error, Result};

/// Entries with magnitude below this fraction of the largest entry are
/// treated as cancellation residue and dropped on finalization.
const DROP_RELATIVE: f64 = 1e-14;

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    /// Empty `nrows x ncols` accumulator.
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    /// Adds `value` at `(row, col)`.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Sorts, merges duplicates and drops cancellation residue. An entry is
    /// only dropped when its transposed partner is dropped (or absent) too,
    /// so symmetric patterns stay symmetric.
    pub fn into_csr(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let max_abs = merged.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
        let cut = DROP_RELATIVE * max_abs;
        let small = |v: f64| v.abs() <= cut;
        let lookup = |r: usize, c: usize| {
            merged
                .binary_search_by(|e| (e.0, e.1).cmp(&(r, c)))
                .ok()
                .map(|k| merged[k].2)
        };
        let keep: Vec<bool> = merged
            .iter()
            .map(|&(r, c, v)| {
                if !small(v) {
                    return true;
                }
                if self.nrows != self.ncols {
                    return false;
                }
                matches!(lookup(c, r), Some(m) if !small(m))
            })
            .collect();

        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (&(r, c, v), &k) in merged.iter().zip(&keep) {
            if k {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Row-compressed sparse matrix with strictly increasing column ids per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Matrix with no stored entries.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// `n x n` identity.
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from raw CSR arrays, validating the layout.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidArgument(String::from(msg)));
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 {
            return bad("row offsets have the wrong length or do not start at 0");
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != values.len() {
            return bad("column ids, values and row offsets disagree");
        }
        for r in 0..nrows {
            if row_ptr[r] > row_ptr[r + 1] {
                return bad("row offsets decrease");
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return bad("column ids not strictly increasing or out of range");
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Row count.
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Column count.
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Stored entry count.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row offsets.
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Column ids.
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Stored values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored values, mutable; the pattern is fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry lookup (zero when not stored).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Rows that hold at least one stored entry.
    pub fn nonempty_rows(&self) -> Vec<usize> {
        (0..self.nrows)
            .filter(|&r| self.row_ptr[r + 1] > self.row_ptr[r])
            .collect()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = A x` into a caller buffer.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let range = self.row_ptr[r]..self.row_ptr[r + 1];
            *yr = self.col_idx[range.clone()]
                .iter()
                .zip(&self.values[range])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    /// `y = A^T x`.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// Transposed copy.
    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletMatrix::new(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.entries.push((c, r, v));
            }
        }
        t.into_csr_exact()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `self + scale * other`, entrywise over the union pattern.
    pub fn add_scaled(&self, scale: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletMatrix::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.entries.push((r, c, v));
            }
            for (c, v) in other.row(r) {
                t.entries.push((r, c, scale * v));
            }
        }
        t.into_csr_exact()
    }

    /// Largest entrywise difference `max |A - B|`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        self.add_scaled(-1.0, other).max_abs()
    }

    /// Submatrix on `rows x cols`, both given as maps from the original
    /// index to the new one.
    pub fn restrict(
        &self,
        row_map: &[Option<usize>],
        col_map: &[Option<usize>],
        nrows: usize,
        ncols: usize,
    ) -> CsrMatrix {
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut rows: Vec<(usize, usize)> = row_map
            .iter()
            .enumerate()
            .filter_map(|(old, new)| new.map(|n| (n, old)))
            .collect();
        rows.sort_unstable();
        for (new_r, old_r) in rows {
            let mut entries: Vec<(usize, f64)> = self
                .row(old_r)
                .filter_map(|(c, v)| col_map[c].map(|nc| (nc, v)))
                .collect();
            entries.sort_unstable_by_key(|e| e.0);
            row_ptr[new_r + 1] = entries.len();
            for (c, v) in entries {
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Whether the stored pattern is symmetric.
    pub fn has_symmetric_pattern(&self) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|r| {
                self.row(r).all(|(c, _)| {
                    let range = self.row_ptr[c]..self.row_ptr[c + 1];
                    self.col_idx[range].binary_search(&r).is_ok()
                })
            })
    }

    /// Lower and upper bandwidth of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for r in 0..self.nrows {
            for (c, _) in self.row(r) {
                if c < r {
                    lower = lower.max(r - c);
                } else {
                    upper = upper.max(c - r);
                }
            }
        }
        (lower, upper)
    }

    /// Matrix Market coordinate text (`real general`, 1-based ids).
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "%%MatrixMarket matrix coordinate real general");
        let _ = writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let _ = writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v);
            }
        }
        out
    }
}

impl TripletMatrix {
    /// Merge duplicates without dropping anything but exact zeros that have
    /// no partner. Used for derived matrices (transposes, differences).
    fn into_csr_exact(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// LU factors of a banded matrix, computed without pivoting.
///
/// Rows are stored densely over the band `[i - lower, i + upper]`; fill
/// stays inside the band because no rows are exchanged.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    band: Vec<f64>,
}

impl BandedLu {
    /// Factors a square matrix. Fails on a pivot below `1e-13 * max|A|`.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot factor a {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let (lower, upper) = a.bandwidths();
        let width = lower + upper + 1;
        let mut band = vec![0.0; n * width];
        for r in 0..n {
            for (c, v) in a.row(r) {
                band[r * width + c + lower - r] = v;
            }
        }
        let tiny = 1e-13 * a.max_abs();
        for k in 0..n {
            let pivot = band[k * width + lower];
            if !(pivot.abs() > tiny) {
                return Err(Error::SingularMatrix {
                    row: k,
                    pivot: pivot.abs(),
                });
            }
            let ncols = upper.min(n - 1 - k);
            let last_row = (k + lower).min(n - 1);
            let (head, tail) = band.split_at_mut((k + 1) * width);
            let pivot_row = &head[k * width + lower + 1..k * width + lower + 1 + ncols];
            for i in k + 1..=last_row {
                let row = &mut tail[(i - k - 1) * width..(i - k) * width];
                let lk = k + lower - i;
                let factor = row[lk];
                if factor == 0.0 {
                    continue;
                }
                let factor = factor / pivot;
                row[lk] = factor;
                for (dst, &src) in row[lk + 1..lk + 1 + ncols].iter_mut().zip(pivot_row) {
                    *dst -= factor * src;
                }
            }
        }
        Ok(Self {
            n,
            lower,
            upper,
            width,
            band,
        })
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L U x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, w, lo, up) = (self.n, self.width, self.lower, self.upper);
        for i in 0..n {
            let start = i.saturating_sub(lo);
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = x[i];
            for j in start..i {
                s -= row[j + lo - i] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + up).min(n - 1);
            let row = &self.band[i * w..(i + 1) * w];
            let mut s = x[i];
            for j in i + 1..=end {
                s -= row[j + lo - i] * x[j];
            }
            x[i] = s / row[lo];
        }
    }
}

/// Contracted relative residual of [`solve_sparse`].
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Solves `A x = b` by banded LU with up to three steps of iterative
/// refinement; fails when `||Ax - b|| / ||b||` stays above
/// [`SOLVE_TOLERANCE`].
pub fn solve_sparse(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = BandedLu::factor(a)?;
    solve_factored(a, &lu, b)
}

/// Solve with an existing factorization of `a`, refining against `a`.
pub fn solve_factored(a: &CsrMatrix, lu: &BandedLu, b: &[f64]) -> Result<Vec<f64>> {
    let bnorm = norm2(b);
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = vec![0.0; b.len()];
    let mut rel = f64::INFINITY;
    for _ in 0..4 {
        a.mul_vec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        rel = norm2(&r) / bnorm;
        if rel <= 1e-3 * SOLVE_TOLERANCE {
            break;
        }
        lu.solve_in_place(&mut r);
        for (xi, di) in x.iter_mut().zip(&r) {
            *xi += di;
        }
    }
    if rel > SOLVE_TOLERANCE {
        a.mul_vec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        rel = norm2(&r) / bnorm;
        if rel > SOLVE_TOLERANCE {
            return Err(Error::InaccurateSolve {
                residual: rel,
                tolerance: SOLVE_TOLERANCE,
            });
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(n: usize) -> CsrMatrix {
        let mut t = TripletMatrix::new(n, n);
        for i in 0..n {
            t.push(i, i, 4.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.push(i, i + 1, -2.0);
            }
        }
        t.into_csr()
    }

    #[test]
    fn triplets_merge_and_sort() {
        let mut t = TripletMatrix::new(2, 3);
        t.push(1, 2, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 0, 3.0);
        t.push(0, 1, 0.5);
        let m = t.into_csr();
        assert_eq!(m.row_ptr(), &[0, 1, 3]);
        assert_eq!(m.col_idx(), &[1, 0, 2]);
        assert_eq!(m.values(), &[2.5, 3.0, 1.0]);
    }

    #[test]
    fn cancellation_residue_dropped_in_pairs() {
        let mut t = TripletMatrix::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 1, 1.0);
        t.push(0, 1, 0.1 + 0.2);
        t.push(0, 1, -0.3);
        t.push(1, 0, 1e-30);
        let m = t.into_csr();
        assert_eq!(m.nnz(), 2);
        assert!(m.has_symmetric_pattern());
    }

    #[test]
    fn from_parts_validates() {
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 2.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = [1.0, -2.0, 3.5];
        let x = solve_sparse(&CsrMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn banded_solve_matches_residual_contract() {
        let a = tridiagonal(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = solve_sparse(&a, &b).unwrap();
        let r = a.mul_vec(&x);
        let err: f64 = r
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn singular_pivot_reported() {
        let mut t = TripletMatrix::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 1, 1.0);
        t.push(1, 0, 1.0);
        t.push(1, 1, 1.0);
        let err = solve_sparse(&t.into_csr(), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { row: 1, .. }));
    }

    #[test]
    fn matrix_market_header() {
        let text = tridiagonal(3).to_matrix_market();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("%%MatrixMarket matrix coordinate real general")
        );
        assert_eq!(lines.next(), Some("3 3 7"));
    }

    #[test]
    fn transpose_and_matvec_agree() {
        let a = tridiagonal(6);
        let x: Vec<f64> = (0..6).map(|i| i as f64 + 0.5).collect();
        let y1 = a.mul_vec_transposed(&x);
        let y2 = a.transpose().mul_vec(&x);
        assert_eq!(y1, y2);
    }
}
