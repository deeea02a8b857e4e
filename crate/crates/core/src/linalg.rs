//! Dense linear algebra kernels.
//!
//! Everything is `f64`, row-major, with explicit dimensions. The SVD is a
//! one-sided (Hestenes) Jacobi iteration, which is accurate for the small
//! and medium matrices handled here and needs no external BLAS.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};

/// A dense vector. Plain `Vec<f64>`; the operations that need finiteness
/// check it at their boundary.
pub type DenseVector = Vec<f64>;

const MAX_JACOBI_SWEEPS: usize = 80;

/// Residuals at or below this fraction of `‖c‖` are treated as "already in
/// the span" by [`inc_svd`].
pub const INC_SVD_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps row-major data, rejecting wrong lengths and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid!(
                "expected {} entries for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            ));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if let Some(bad) = columns.iter().position(|c| c.len() != rows) {
            return Err(invalid!(
                "column {} has length {}, expected {}",
                bad,
                columns[bad].len(),
                rows
            ));
        }
        let cols = columns.len();
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Copies columns `start..end`.
    pub fn columns_range(&self, start: usize, end: usize) -> Self {
        Self::from_fn(self.rows, end - start, |i, j| self.get(i, start + j))
    }

    /// Returns `[self c]`.
    pub fn with_column(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.rows {
            return Err(invalid!(
                "appended column has length {}, expected {}",
                c.len(),
                self.rows
            ));
        }
        let cols = self.cols + 1;
        Ok(Self::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                c[i]
            }
        }))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(invalid!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, a) in self.row(i).iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(l)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(invalid!(
                "vector of length {} does not match {} columns",
                x.len(),
                self.cols
            ));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(invalid!(
                "vector of length {} does not match {} rows",
                y.len(),
                self.rows
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            axpy(*yi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(invalid!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(full_svd(self)?.singular_values.first().copied().unwrap_or(0.0))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Euclidean distance between two equal-length slices.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Thin singular value decomposition `A = U · diag(σ) · Vᵀ`.
///
/// `u` is `rows × k`, `v` is `cols × k`; singular values are nonnegative and
/// sorted nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    /// Number of singular triplets held.
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        scaled_product(&self.u, &self.singular_values, &self.v, self.v.rows())
    }

    /// Drops triplets whose singular value is at most `rel_tol · σ₁`.
    ///
    /// The product is unchanged up to the dropped values; the result is a
    /// rank-revealing thin factorization.
    pub fn truncate_negligible(&self, rel_tol: f64) -> SvdFactors {
        let cutoff = self.singular_values.first().copied().unwrap_or(0.0) * rel_tol;
        let keep = self
            .singular_values
            .iter()
            .take_while(|s| **s > cutoff)
            .count();
        self.leading(keep)
    }

    /// The first `k` triplets.
    pub fn leading(&self, k: usize) -> SvdFactors {
        let k = k.min(self.len());
        SvdFactors {
            u: self.u.columns_range(0, k),
            singular_values: self.singular_values[..k].to_vec(),
            v: self.v.columns_range(0, k),
        }
    }
}

/// `U · diag(s) · V[..v_rows, :]ᵀ` over the first `s.len()` columns.
fn scaled_product(u: &DenseMatrix, s: &[f64], v: &DenseMatrix, v_rows: usize) -> DenseMatrix {
    let k = s.len();
    let mut out = DenseMatrix::zeros(u.rows(), v_rows);
    for i in 0..u.rows() {
        let urow = u.row(i);
        let orow = out.row_mut(i);
        for l in 0..k {
            let coeff = urow[l] * s[l];
            if coeff == 0.0 {
                continue;
            }
            for (j, o) in orow.iter_mut().enumerate() {
                *o += coeff * v.get(j, l);
            }
        }
    }
    out
}

/// Thin SVD of `a` by one-sided Jacobi rotations.
///
/// Returns `k = min(rows, cols)` triplets. Left singular vectors belonging to
/// exactly-zero singular values are completed to an orthonormal set.
pub fn full_svd(a: &DenseMatrix) -> Result<SvdFactors> {
    if a.rows == 0 || a.cols == 0 {
        return Err(invalid!("SVD of an empty {}x{} matrix", a.rows, a.cols));
    }
    if !a.is_finite() {
        return Err(invalid!("SVD input contains non-finite entries"));
    }
    if a.rows >= 2 * a.cols {
        qr_jacobi(a)
    } else if a.rows >= a.cols {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(SvdFactors {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

fn jacobi_tall(a: &DenseMatrix) -> Result<SvdFactors> {
    let (n, p) = (a.rows, a.cols);
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..p).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * libm::sqrt(n as f64).max(1.0);
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();

    let mut converged = false;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&w[i], &w[j]);
                if gamma.abs() <= tol * libm::sqrt(alpha) * libm::sqrt(beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_pair(&mut w, i, j, c, s);
                rotate_pair(&mut v, i, j, c, s);
                norms[i] = dot(&w[i], &w[i]);
                norms[j] = dot(&w[j], &w[j]);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericFailure {
            iterations: MAX_JACOBI_SWEEPS,
            reason: "one-sided Jacobi SVD did not converge",
        });
    }

    let sigma: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut missing = Vec::new();
    for (slot, &idx) in order.iter().enumerate() {
        let s = sigma[idx];
        if s > 0.0 && s.is_normal() {
            u_cols.push(w[idx].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; n]);
            missing.push(slot);
        }
    }
    for slot in missing {
        let filled: Vec<&[f64]> = u_cols
            .iter()
            .enumerate()
            .filter(|(i, c)| *i != slot && c.iter().any(|x| *x != 0.0))
            .map(|(_, c)| c.as_slice())
            .collect();
        let q = orthogonal_complement_vector(n, &filled).ok_or_else(|| {
            Error::Internal(alloc::string::String::from(
                "no room to complete the left singular basis",
            ))
        })?;
        u_cols[slot] = q;
    }

    let u = DenseMatrix::from_fn(n, p, |i, j| u_cols[j][i]);
    let vm = DenseMatrix::from_fn(p, p, |i, j| v[order[j]][i]);
    let singular_values = order.iter().map(|&i| sigma[i]).collect();
    Ok(SvdFactors {
        u,
        singular_values,
        v: vm,
    })
}

/// Householder QR first, then Jacobi on the square triangular factor:
/// `A = Q R`, `R = U_r Σ Vᵀ`, `U = Q [U_r; 0]`. Rotations then cost `O(cols)`
/// instead of `O(rows)`.
fn qr_jacobi(a: &DenseMatrix) -> Result<SvdFactors> {
    let (m, n) = (a.rows, a.cols);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    // reflector k acts on rows k.. and is stored as a unit vector
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &cols[k][k..];
        let norm = norm2(x);
        let mut h = x.to_vec();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        h[0] -= alpha;
        let hn = norm2(&h);
        if hn == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        h.iter_mut().for_each(|v| *v /= hn);
        for col in cols.iter_mut().skip(k) {
            let tail = &mut col[k..];
            let proj = 2.0 * dot(&h, tail);
            axpy(-proj, &h, tail);
        }
        cols[k][k] = alpha;
        cols[k][k + 1..].iter_mut().for_each(|v| *v = 0.0);
        reflectors.push(h);
    }
    let r = DenseMatrix::from_fn(n, n, |i, j| if i <= j { cols[j][i] } else { 0.0 });
    let small = jacobi_tall(&r)?;
    let mut u_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = vec![0.0; m];
            for i in 0..n {
                c[i] = small.u.get(i, j);
            }
            c
        })
        .collect();
    for (k, h) in reflectors.iter().enumerate().rev() {
        if h.is_empty() {
            continue;
        }
        for c in u_cols.iter_mut() {
            let tail = &mut c[k..];
            let proj = 2.0 * dot(h, tail);
            axpy(-proj, h, tail);
        }
    }
    Ok(SvdFactors {
        u: DenseMatrix::from_fn(m, n, |i, j| u_cols[j][i]),
        singular_values: small.singular_values,
        v: small.v,
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (wi, wj) = (&mut lo[i], &mut hi[0]);
    for (a, b) in wi.iter_mut().zip(wj.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// A unit vector of length `n` orthogonal to every vector in `basis`
/// (assumed orthonormal), chosen among projected standard basis vectors.
fn orthogonal_complement_vector(n: usize, basis: &[&[f64]]) -> Option<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..n {
        let mut cand = vec![0.0; n];
        cand[e] = 1.0;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for b in basis {
                let proj = dot(b, &cand);
                axpy(-proj, b, &mut cand);
            }
        }
        let norm = norm2(&cand);
        if best.as_ref().map_or(true, |(bn, _)| norm > *bn) {
            best = Some((norm, cand));
        }
        if norm > 0.7 {
            break;
        }
    }
    match best {
        Some((norm, cand)) if norm > 1e-8 => Some(cand.iter().map(|x| x / norm).collect()),
        _ => None,
    }
}

/// Thin SVD of `[B c]` from the thin SVD of `B`, following Brand's
/// column-append update.
///
/// `c` is split into its projection `p = Uᵀc` and residual `r = c − Up`.
/// When `‖r‖ > 1e-10·‖c‖` and `U` is not square, the basis is extended by
/// `r/‖r‖` and the `(k+1)×(k+1)` core `[[diag σ, p], [0, ‖r‖]]` is
/// diagonalised; otherwise the `k×(k+1)` core `[diag σ, p]` is used. The
/// cost is one small core SVD plus `O(n k²)` basis rotations.
pub fn inc_svd(b: &SvdFactors, c: &[f64]) -> Result<SvdFactors> {
    let n = b.u.rows();
    let k = b.len();
    let d = b.v.rows();
    if c.len() != n {
        return Err(invalid!(
            "appended column has length {}, factors have {} rows",
            c.len(),
            n
        ));
    }
    if b.u.cols() != k || b.v.cols() != k {
        return Err(invalid!("inconsistent SVD factor shapes"));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(invalid!("appended column contains non-finite entries"));
    }

    // p = Uᵀc, r = c − Up, with one re-orthogonalisation pass
    let mut p = b.u.tr_mul_vec(c)?;
    let mut r = c.to_vec();
    for (l, pl) in p.iter().enumerate() {
        for i in 0..n {
            r[i] -= b.u.get(i, l) * pl;
        }
    }
    let p2 = b.u.tr_mul_vec(&r)?;
    for (l, pl) in p2.iter().enumerate() {
        for i in 0..n {
            r[i] -= b.u.get(i, l) * pl;
        }
        p[l] += pl;
    }
    let rho = norm2(&r);
    let extend = k < n && rho > INC_SVD_RESIDUAL_TOL * norm2(c) && rho > 0.0;

    let core_rows = if extend { k + 1 } else { k };
    if core_rows == 0 {
        return Ok(SvdFactors {
            u: DenseMatrix::zeros(n, 0),
            singular_values: Vec::new(),
            v: DenseMatrix::zeros(d + 1, 0),
        });
    }
    let mut core = DenseMatrix::zeros(core_rows, k + 1);
    for l in 0..k {
        core.set(l, l, b.singular_values[l]);
        core.set(l, k, p[l]);
    }
    if extend {
        core.set(k, k, rho);
    }
    let small = full_svd(&core)?;
    let kk = small.len();

    // U' = [U q] · Uc
    let mut u_new = DenseMatrix::zeros(n, kk);
    for i in 0..n {
        let urow = b.u.row(i);
        let qi = if extend { r[i] / rho } else { 0.0 };
        let out = u_new.row_mut(i);
        for (l, ul) in urow.iter().enumerate() {
            if *ul == 0.0 {
                continue;
            }
            axpy(*ul, small.u.row(l), out);
        }
        if extend && qi != 0.0 {
            axpy(qi, small.u.row(k), out);
        }
    }
    // V' = blockdiag(V, 1) · Vc
    let mut v_new = DenseMatrix::zeros(d + 1, kk);
    for i in 0..d {
        let vrow = b.v.row(i);
        let out = v_new.row_mut(i);
        for (l, vl) in vrow.iter().enumerate() {
            if *vl == 0.0 {
                continue;
            }
            axpy(*vl, small.v.row(l), out);
        }
    }
    v_new.row_mut(d).copy_from_slice(small.v.row(k));

    Ok(SvdFactors {
        u: u_new,
        singular_values: small.singular_values,
        v: v_new,
    })
}

/// Singular values shrunk by `tau` and clipped at zero.
pub fn shrink_singular_values(sigma: &[f64], tau: f64) -> Vec<f64> {
    sigma.iter().map(|s| (s - tau).max(0.0)).collect()
}

/// Nuclear-norm proximal operator: `U · diag(max(σ − τ, 0)) · Vᵀ`.
pub fn svt(factors: &SvdFactors, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid!("threshold must be a finite nonnegative number, got {}", tau));
    }
    let shrunk = shrink_singular_values(&factors.singular_values, tau);
    Ok(scaled_product(
        &factors.u,
        &shrunk,
        &factors.v,
        factors.v.rows(),
    ))
}

/// Column `j` of `svt(factors, tau)` without forming the whole matrix.
pub fn svt_column(factors: &SvdFactors, tau: f64, j: usize) -> Vec<f64> {
    let n = factors.u.rows();
    let mut out = vec![0.0; n];
    for (l, s) in factors.singular_values.iter().enumerate() {
        let coeff = (s - tau).max(0.0) * factors.v.get(j, l);
        if coeff == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += coeff * factors.u.get(i, l);
        }
    }
    out
}

/// Elementwise shrinkage `sign(u)·max(|u| − τ, 0)`.
pub fn soft_threshold(u: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    if u.len() != tau.len() {
        return Err(invalid!(
            "soft threshold length mismatch: {} values, {} thresholds",
            u.len(),
            tau.len()
        ));
    }
    if let Some(bad) = tau.iter().position(|t| !(*t >= 0.0)) {
        return Err(invalid!("threshold {} is negative or NaN", bad));
    }
    Ok(u.iter().zip(tau).map(|(x, t)| shrink(*x, *t)).collect())
}

#[inline]
pub(crate) fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Orthonormalises the rows of `a` in place (modified Gram-Schmidt with one
/// re-orthogonalisation pass). Requires `rows ≤ cols` and full row rank.
pub fn orthonormalize_rows(a: &mut DenseMatrix) -> Result<()> {
    let (m, n) = (a.rows, a.cols);
    if m > n {
        return Err(invalid!("cannot orthonormalise {} rows in dimension {}", m, n));
    }
    for i in 0..m {
        for _pass in 0..2 {
            for l in 0..i {
                let (head, tail) = a.data.split_at_mut(i * n);
                let prev = &head[l * n..(l + 1) * n];
                let cur = &mut tail[..n];
                let proj = dot(prev, cur);
                axpy(-proj, prev, cur);
            }
        }
        let row = a.row_mut(i);
        let norm = norm2(row);
        if !(norm > 1e-12) {
            return Err(Error::NumericFailure {
                iterations: i,
                reason: "rows are numerically dependent",
            });
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_error(u: &DenseMatrix) -> f64 {
        let g = u.transpose().matmul(u).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    /// Symmetric Jacobi eigenvalue iteration, kept independent of the
    /// one-sided SVD path.
    fn symmetric_eigenvalues(mut a: DenseMatrix) -> Vec<f64> {
        let n = a.rows();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.get(p, q) * a.get(p, q);
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let f = full_svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_matrix_keeps_identity_factors() {
        let f = full_svd(&DenseMatrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(f.singular_values, vec![3.0, 2.0, 1.0]);
        assert_eq!(f.u, DenseMatrix::identity(3));
        assert_eq!(f.v, DenseMatrix::identity(3));
    }

    #[test]
    fn random_svd_matches_gram_eigenvalues() {
        let a = random_matrix(6, 4, 7);
        let f = full_svd(&a).unwrap();
        let rec = f.reconstruct();
        assert!(rec.sub(&a).unwrap().frobenius_norm() <= 1e-10 * a.frobenius_norm());
        let gram = a.transpose().matmul(&a).unwrap();
        let ev = symmetric_eigenvalues(gram);
        for (s, e) in f.singular_values.iter().zip(&ev) {
            assert!((s - e.max(0.0).sqrt()).abs() < 1e-10, "{s} vs {e}");
        }
        assert!(orthonormality_error(&f.u) < 1e-10);
        assert!(orthonormality_error(&f.v) < 1e-10);
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let a = random_matrix(3, 7, 11);
        let f = full_svd(&a).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12);

        // rank one, with exact zero columns in the Jacobi workspace
        let mut z = DenseMatrix::zeros(5, 3);
        for i in 0..5 {
            z.set(i, 0, i as f64 + 1.0);
        }
        let f = full_svd(&z).unwrap();
        assert!(f.singular_values[1] == 0.0 && f.singular_values[2] == 0.0);
        assert!(orthonormality_error(&f.u) < 1e-12);
        assert!(f.reconstruct().sub(&z).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_bad_input() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.data[1] = f64::NAN;
        assert!(matches!(full_svd(&a), Err(Error::InvalidInput(_))));
        assert!(DenseMatrix::from_row_major(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(DenseMatrix::from_row_major(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn inc_svd_zero_column() {
        let b = full_svd(&DenseMatrix::identity(2)).unwrap();
        let f = inc_svd(&b, &[0.0, 0.0]).unwrap();
        // U is square, so the thin factorization of the 2x3 result has two
        // values; the third singular value of the padded form is zero.
        assert_eq!(f.singular_values.len(), 2);
        for s in &f.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(f.v.rows(), 3);
    }

    #[test]
    fn inc_svd_in_span_column_matches_full_svd() {
        let b = full_svd(&DenseMatrix::identity(2)).unwrap();
        let f = inc_svd(&b, &[1.0, 0.0]).unwrap();
        let explicit = DenseMatrix::from_row_major(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let oracle = full_svd(&explicit).unwrap();
        assert!((f.singular_values[0] - 2f64.sqrt()).abs() < 1e-14);
        assert!((f.singular_values[1] - 1.0).abs() < 1e-14);
        for (a, b) in f.singular_values.iter().zip(&oracle.singular_values) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(f.reconstruct().sub(&explicit).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn inc_svd_random_matches_concatenation() {
        let bm = random_matrix(20, 5, 3);
        let c: Vec<f64> = random_matrix(20, 1, 4).into_vec();
        let f = inc_svd(&full_svd(&bm).unwrap(), &c).unwrap();
        let full = bm.with_column(&c).unwrap();
        let oracle = full_svd(&full).unwrap();
        assert_eq!(f.len(), 6);
        for (a, b) in f.singular_values.iter().zip(&oracle.singular_values) {
            assert!((a - b).abs() <= 1e-8 * b.max(1e-300), "{a} vs {b}");
        }
        assert!(orthonormality_error(&f.u) < 1e-8);
        assert!(f.reconstruct().sub(&full).unwrap().frobenius_norm() < 1e-8 * full.frobenius_norm());
    }

    #[test]
    fn inc_svd_length_mismatch() {
        let b = full_svd(&DenseMatrix::identity(2)).unwrap();
        assert!(matches!(inc_svd(&b, &[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn inc_svd_on_truncated_factors() {
        // rank-2 matrix with 6 columns, truncated to its 2 nonzero triplets
        let u = random_matrix(10, 2, 21);
        let v = random_matrix(6, 2, 22);
        let bm = u.matmul(&v.transpose()).unwrap();
        let t = full_svd(&bm).unwrap().truncate_negligible(1e-12);
        assert_eq!(t.len(), 2);
        let c = random_matrix(10, 1, 23).into_vec();
        let f = inc_svd(&t, &c).unwrap();
        assert_eq!(f.len(), 3);
        let full = bm.with_column(&c).unwrap();
        assert!(f.reconstruct().sub(&full).unwrap().frobenius_norm() < 1e-10 * full.frobenius_norm());
    }

    #[test]
    fn svt_examples() {
        let f = SvdFactors {
            u: DenseMatrix::identity(3),
            singular_values: vec![3.0, 1.0, 0.2],
            v: DenseMatrix::identity(3),
        };
        let out = svt(&f, 0.5).unwrap();
        assert_eq!(out, DenseMatrix::diag(&[2.5, 0.5, 0.0]));
        assert!(matches!(svt(&f, -1.0), Err(Error::InvalidInput(_))));

        let a = random_matrix(8, 4, 5);
        let fa = full_svd(&a).unwrap();
        assert!(svt(&fa, 0.0).unwrap().sub(&a).unwrap().frobenius_norm() < 1e-12);
        let top = fa.singular_values[0];
        assert_eq!(svt(&fa, top).unwrap().frobenius_norm(), 0.0);
        let col = svt_column(&fa, 0.3, 2);
        let whole = svt(&fa, 0.3).unwrap();
        for i in 0..8 {
            assert!((col[i] - whole.get(i, 2)).abs() < 1e-14);
        }
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[2.0, -2.0], &[0.5, 0.5]).unwrap(), vec![1.5, -1.5]);
        assert_eq!(soft_threshold(&[2.0, -0.1], &[0.0, 0.0]).unwrap(), vec![2.0, -0.1]);
        assert_eq!(soft_threshold(&[0.3], &[0.4]).unwrap(), vec![0.0]);
        assert!(soft_threshold(&[1.0], &[1.0, 2.0]).is_err());
        assert!(soft_threshold(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn orthonormal_rows() {
        let mut a = random_matrix(4, 9, 8);
        orthonormalize_rows(&mut a).unwrap();
        let g = a.matmul(&a.transpose()).unwrap();
        assert!(g.sub(&DenseMatrix::identity(4)).unwrap().frobenius_norm() < 1e-12);
    }
}
