//! Dense row-major matrices and the in-place blocked primitives used by the
//! adaptive Cholesky driver.
//!
//! Storage convention: every matrix is row-major with an explicit row stride.
//! For triangular factors only the lower triangle (including the diagonal) is
//! significant; routines never read the strict upper triangle.
//!
//! Reduction order: all dot products are accumulated in four interleaved
//! partial sums (`k mod 4`) that are combined as `(s0 + s1) + (s2 + s3)` and
//! then the tail is added sequentially. Matrix products go through
//! `matrixmultiply`, which is single-threaded and deterministic for a given
//! CPU feature set. Results are therefore bit-reproducible on one machine.

use std::ops::{Index, IndexMut};

use crate::error::{AcgpError, Result};

/// Tile width used by the blocked routines.
pub const TILE: usize = 64;

/// Owned dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AcgpError::DimensionMismatch(format!(
                "{} values cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(AcgpError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A column vector (N×1) from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies the given rows (in order) into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies the contiguous row range `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Plain triple-loop product, used where clarity matters more than speed.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(AcgpError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Lower triangle (with diagonal), strict upper triangle zeroed.
    pub fn lower_triangle(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                out[(i, j)] = 0.0;
            }
        }
        out
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            stride: self.cols,
        }
    }

    pub fn view_mut(&mut self) -> MatMut<'_> {
        MatMut {
            rows: self.rows,
            cols: self.cols,
            stride: self.cols,
            data: &mut self.data,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Borrowed strided view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize, stride: usize) -> Self {
        assert!(cols <= stride || rows <= 1);
        assert!(rows == 0 || data.len() >= (rows - 1) * stride + cols);
        Self {
            data,
            rows,
            cols,
            stride,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.stride..i * self.stride + self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride + j]
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatRef<'a> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let start = r0 * self.stride + c0;
        let data = if rows == 0 {
            &self.data[..0]
        } else {
            &self.data[start..]
        };
        MatRef::new(data, rows, cols, self.stride)
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(self.row(i));
        }
        out
    }
}

/// Mutable strided view.
#[derive(Debug)]
pub struct MatMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    stride: usize,
}

impl<'a> MatMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize, stride: usize) -> Self {
        assert!(cols <= stride || rows <= 1);
        assert!(rows == 0 || data.len() >= (rows - 1) * stride + cols);
        Self {
            data,
            rows,
            cols,
            stride,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.stride + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..i * self.stride + self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.stride..i * self.stride + self.cols]
    }

    pub fn rb(&self) -> MatRef<'_> {
        MatRef {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            stride: self.stride,
        }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_> {
        MatMut {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            stride: self.stride,
        }
    }

    pub fn submatrix_mut(&mut self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatMut<'_> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        let start = r0 * self.stride + c0;
        let data = if rows == 0 {
            &mut self.data[..0]
        } else {
            &mut self.data[start..]
        };
        MatMut::new(data, rows, cols, self.stride)
    }

    pub fn to_matrix(&self) -> Matrix {
        self.rb().to_matrix()
    }
}

/// Dot product with the documented four-lane reduction order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `C[0..m, 0..n] -= A[0..m, 0..k] * B[0..n, 0..k]^T`, all row-major with strides.
///
/// # Safety
/// The three regions must be valid for the given shapes and strides, and the
/// region written through `c` must not overlap the regions read through `a`
/// and `b`.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_nt_sub(
    m: usize,
    n: usize,
    k: usize,
    a: *const f64,
    lda: usize,
    b: *const f64,
    ldb: usize,
    c: *mut f64,
    ldc: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // B^T has shape k x n: element (p, j) = B[j, p] at b + j*ldb + p.
    matrixmultiply::dgemm(
        m,
        k,
        n,
        -1.0,
        a,
        lda as isize,
        1,
        b,
        1,
        ldb as isize,
        1.0,
        c,
        ldc as isize,
        1,
    );
}

/// Raw-pointer view of a region of one buffer, used to express the in-place
/// updates whose operands share rows (e.g. `T` and `C` in the factor buffer).
#[derive(Clone, Copy)]
struct Region {
    ptr: *mut f64,
    stride: usize,
}

impl Region {
    unsafe fn at(self, i: usize, j: usize) -> *mut f64 {
        self.ptr.add(i * self.stride + j)
    }

    unsafe fn row<'a>(self, i: usize, start: usize, len: usize) -> &'a [f64] {
        std::slice::from_raw_parts(self.at(i, start), len)
    }
}

/// Unblocked lower Cholesky of the `n×n` tile at `a`; `offset` only shifts
/// the index reported on failure.
unsafe fn chol_tile(a: Region, n: usize, offset: usize) -> Result<()> {
    for i in 0..n {
        for j in 0..=i {
            let s = *a.at(i, j) - dot(a.row(i, 0, j), a.row(j, 0, j));
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(AcgpError::NotPositiveDefinite {
                        index: offset + i,
                        pivot: s,
                    });
                }
                *a.at(i, i) = s.sqrt();
            } else {
                *a.at(i, j) = s / *a.at(j, j);
            }
        }
    }
    Ok(())
}

/// Row-wise substitution `T[0..m, 0..n] <- T L^{-T}` for an `n×n` lower tile
/// `l` that is already reduced for columns before the tile.
unsafe fn trsm_tile(t: Region, m: usize, l: Region, n: usize) -> Result<()> {
    for k in 0..n {
        let d = *l.at(k, k);
        if d == 0.0 || !d.is_finite() {
            return Err(AcgpError::SingularTriangular { index: k });
        }
    }
    for r in 0..m {
        for k in 0..n {
            let s = *t.at(r, k) - dot(t.row(r, 0, k), l.row(k, 0, k));
            *t.at(r, k) = s / *l.at(k, k);
        }
    }
    Ok(())
}

/// `C <- C - T T^T` on the lower triangle of the `m×m` region `c`, with `t`
/// of shape `m×k`. `c` and `t` may share rows but must not overlap.
unsafe fn syrk_lower_sub(c: Region, m: usize, t: Region, k: usize) {
    if k == 0 {
        return;
    }
    let mut i0 = 0;
    while i0 < m {
        let i1 = (i0 + TILE).min(m);
        // strictly-below-diagonal rectangle of this row tile
        gemm_nt_sub(
            i1 - i0,
            i0,
            k,
            t.at(i0, 0),
            t.stride,
            t.at(0, 0),
            t.stride,
            c.at(i0, 0),
            c.stride,
        );
        // diagonal triangle
        for i in i0..i1 {
            let ti = t.row(i, 0, k);
            for j in i0..=i {
                *c.at(i, j) -= dot(ti, t.row(j, 0, k));
            }
        }
        i0 = i1;
    }
}

/// Blocked right-looking Cholesky on an `n×n` region, strict upper untouched.
unsafe fn chol_blocked(a: Region, n: usize) -> Result<()> {
    let mut k0 = 0;
    while k0 < n {
        let kb = TILE.min(n - k0);
        let diag = Region {
            ptr: a.at(k0, k0),
            stride: a.stride,
        };
        chol_tile(diag, kb, k0)?;
        let rest = n - k0 - kb;
        if rest > 0 {
            let panel = Region {
                ptr: a.at(k0 + kb, k0),
                stride: a.stride,
            };
            trsm_tile(panel, rest, diag, kb)?;
            let trailing = Region {
                ptr: a.at(k0 + kb, k0 + kb),
                stride: a.stride,
            };
            syrk_lower_sub(trailing, rest, panel, kb);
        }
        k0 += kb;
    }
    Ok(())
}

/// Blocked `T <- T L^{-T}` where `t` is `m×n` and `l` is `n×n` lower.
unsafe fn trsm_blocked(t: Region, m: usize, l: Region, n: usize) -> Result<()> {
    let mut k0 = 0;
    while k0 < n {
        let kb = TILE.min(n - k0);
        gemm_nt_sub(
            m,
            kb,
            k0,
            t.at(0, 0),
            t.stride,
            l.at(k0, 0),
            l.stride,
            t.at(0, k0),
            t.stride,
        );
        let tt = Region {
            ptr: t.at(0, k0),
            stride: t.stride,
        };
        let ll = Region {
            ptr: l.at(k0, k0),
            stride: l.stride,
        };
        trsm_tile(tt, m, ll, kb).map_err(|e| match e {
            AcgpError::SingularTriangular { index } => {
                AcgpError::SingularTriangular { index: index + k0 }
            }
            other => other,
        })?;
        k0 += kb;
    }
    Ok(())
}

/// In-place lower Cholesky: the lower triangle of `block` is replaced by `L`
/// with `L L^T = block`, and the strict upper triangle is set to zero.
pub fn chol_in_place(block: &mut MatMut<'_>) -> Result<()> {
    let n = block.nrows();
    if block.ncols() != n {
        return Err(AcgpError::DimensionMismatch(format!(
            "Cholesky needs a square block, got {}x{}",
            n,
            block.ncols()
        )));
    }
    let region = Region {
        ptr: block.data.as_mut_ptr(),
        stride: block.stride,
    };
    // SAFETY: the region is exactly the borrowed view; reads and writes inside
    // chol_blocked stay within the n×n block and GEMM operands never overlap
    // the tile they update.
    unsafe { chol_blocked(region, n)? };
    for i in 0..n {
        for j in (i + 1)..n {
            block.set(i, j, 0.0);
        }
    }
    Ok(())
}

/// `T <- T L^{-T}`, i.e. the solution `X` of `X L^T = T`.
pub fn solve_right_transposed(t: &mut MatMut<'_>, l: MatRef<'_>) -> Result<()> {
    let n = l.nrows();
    if l.ncols() != n || t.ncols() != n {
        return Err(AcgpError::DimensionMismatch(format!(
            "triangular solve: T is {}x{}, L is {}x{}",
            t.nrows(),
            t.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let tr = Region {
        ptr: t.data.as_mut_ptr(),
        stride: t.stride,
    };
    let lr = Region {
        ptr: l.data.as_ptr() as *mut f64,
        stride: l.stride,
    };
    // SAFETY: `t` is exclusively borrowed and `l` is shared, so the two cannot
    // overlap; `l` is only ever read.
    unsafe { trsm_blocked(tr, t.nrows(), lr, n) }
}

/// `C <- C - T T^T` on the lower triangle of `c`.
pub fn symmetric_downdate(c: &mut MatMut<'_>, t: MatRef<'_>) -> Result<()> {
    let m = c.nrows();
    if c.ncols() != m || t.nrows() != m {
        return Err(AcgpError::DimensionMismatch(format!(
            "downdate: C is {}x{}, T is {}x{}",
            m,
            c.ncols(),
            t.nrows(),
            t.ncols()
        )));
    }
    let cr = Region {
        ptr: c.data.as_mut_ptr(),
        stride: c.stride,
    };
    let tr = Region {
        ptr: t.data.as_ptr() as *mut f64,
        stride: t.stride,
    };
    // SAFETY: disjoint borrows; `t` only read.
    unsafe { syrk_lower_sub(cr, m, tr, t.ncols()) };
    Ok(())
}

/// Downdate of the pending block inside a slab of rows that store
/// `T` in columns `0..s` and the block in columns `s..s+m`.
pub(crate) fn downdate_pending_block(slab: &mut [f64], stride: usize, s: usize, m: usize) {
    assert!(s + m <= stride);
    assert!(m == 0 || slab.len() >= (m - 1) * stride + s + m);
    let base = slab.as_mut_ptr();
    let t = Region { ptr: base, stride };
    // SAFETY: `c` starts at column `s` and spans `m` columns, `t` spans
    // columns `0..s`; the regions are disjoint and inside `slab`.
    let c = Region {
        ptr: unsafe { base.add(s) },
        stride,
    };
    unsafe { syrk_lower_sub(c, m, t, s) };
}

/// Returns `L^{-1} v` by forward substitution.
pub fn forward_solve(l: MatRef<'_>, v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    forward_solve_in_place(l, &mut out)?;
    Ok(out)
}

pub fn forward_solve_in_place(l: MatRef<'_>, v: &mut [f64]) -> Result<()> {
    let n = l.nrows();
    if l.ncols() != n || v.len() != n {
        return Err(AcgpError::DimensionMismatch(format!(
            "forward solve: L is {}x{}, v has {}",
            n,
            l.ncols(),
            v.len()
        )));
    }
    for i in 0..n {
        let d = l.get(i, i);
        if d == 0.0 || !d.is_finite() {
            return Err(AcgpError::SingularTriangular { index: i });
        }
        let s = v[i] - dot(&l.row(i)[..i], &v[..i]);
        v[i] = s / d;
    }
    Ok(())
}

/// `2 Σ log L_nn`.
pub fn logdet_from_chol(l: MatRef<'_>) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..l.nrows().min(l.ncols()) {
        let d = l.get(i, i);
        if !(d > 0.0) {
            return Err(AcgpError::NotPositiveDefinite { index: i, pivot: d });
        }
        acc += 2.0 * d.ln();
    }
    Ok(acc)
}

/// `Σ α_n²`.
pub fn quad_from_alpha(alpha: &[f64]) -> f64 {
    alpha.iter().map(|a| a * a).sum()
}

/// Pre-allocated working storage of the adaptive decomposition.
///
/// Rows `0..s` of `a` hold the Cholesky factor of `K[:s,:s]` in their lower
/// triangle; rows `s..t` hold `T = K[s:t,:s] L^{-T}` in columns `0..s` and the
/// downdated block in columns `s..t`. `alpha[..s]` is `L^{-1}(y - mean)` and
/// `alpha[s..t]` holds the residuals `y - m*` of the pending block.
#[derive(Clone, Debug)]
pub struct FactorBuffer {
    a: Vec<f64>,
    alpha: Vec<f64>,
    capacity: usize,
    s: usize,
    t: usize,
}

impl FactorBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            a: vec![0.0; capacity * capacity],
            alpha: vec![0.0; capacity],
            capacity,
            s: 0,
            t: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of fully factorized rows.
    pub fn processed(&self) -> usize {
        self.s
    }

    /// Number of rows with the downdate applied.
    pub fn downdated(&self) -> usize {
        self.t
    }

    pub(crate) fn set_counts(&mut self, s: usize, t: usize) {
        debug_assert!(s <= t && t <= self.capacity);
        self.s = s;
        self.t = t;
    }

    /// `L[:s,:s]`.
    pub fn factor(&self) -> MatRef<'_> {
        MatRef::new(&self.a, self.s, self.s, self.capacity)
    }

    /// `α[:s]`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha[..self.s]
    }

    pub(crate) fn raw(&self) -> (&[f64], &[f64]) {
        (&self.a, &self.alpha)
    }

    pub(crate) fn raw_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.a, &mut self.alpha)
    }

    /// Drops rows beyond `s` (the pending block) from the logical view.
    pub(crate) fn truncate_pending(&mut self) {
        self.t = self.s;
    }
}
