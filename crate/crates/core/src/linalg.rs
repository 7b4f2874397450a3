//! Dense complex linear algebra for small Hermitian generators.
//!
//! Everything here operates on [`CMatrix`], a row-major dense matrix of
//! `Complex64`. The kernels are sized for the operators that appear in
//! few-qubit control problems (dimension 64 and below), so no blocking or
//! BLAS is involved.
//!
//! Propagators are formed through the spectral decomposition
//! `H = Q diag(lambda) Q^dagger`, so `exp(-i H t) = Q diag(exp(-i lambda t)) Q^dagger`.
//! The decomposition is computed once by [`hermitian_eig`] and reused for any
//! duration via [`expm_from_eig`]; the Frechet derivative of the same map is a
//! divided-difference (Daleckii-Krein) formula in the eigenbasis.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity tolerance (max-norm of `H - H^dagger`) accepted on input.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Maximum number of cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;

/// Convergence threshold of the Jacobi iteration, relative to `||H||_F`.
pub const JACOBI_REL_TOL: f64 = 1e-12;

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting NaN and infinities.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    /// Real matrix from nested rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(d, 0.0);
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &CMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b * s;
        }
    }

    pub fn matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension mismatch");
        let (n, m, p) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![ZERO; n * p];
        for i in 0..n {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * p..(k + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        CMatrix {
            rows: n,
            cols: p,
            data: out,
        }
    }

    /// `self * rhs^dagger` without forming the adjoint.
    pub fn matmul_adjoint(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.cols, "matmul_adjoint dimension mismatch");
        let (n, m, p) = (self.rows, self.cols, rhs.rows);
        let mut out = vec![ZERO; n * p];
        for i in 0..n {
            let a = &self.data[i * m..(i + 1) * m];
            for j in 0..p {
                let b = &rhs.data[j * m..(j + 1) * m];
                let mut acc = ZERO;
                for (&x, &y) in a.iter().zip(b) {
                    acc += x * y.conj();
                }
                out[i * p + j] = acc;
            }
        }
        CMatrix {
            rows: n,
            cols: p,
            data: out,
        }
    }

    /// `self^dagger * rhs` without forming the adjoint.
    pub fn adjoint_matmul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, rhs.rows, "adjoint_matmul dimension mismatch");
        let (m, n, p) = (self.rows, self.cols, rhs.cols);
        let mut out = vec![ZERO; n * p];
        for k in 0..m {
            let a_row = &self.data[k * n..(k + 1) * n];
            let b_row = &rhs.data[k * p..(k + 1) * p];
            for (i, &a) in a_row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let a = a.conj();
                let out_row = &mut out[i * p..(i + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        CMatrix {
            rows: n,
            cols: p,
            data: out,
        }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(ZERO, |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `self^dagger * v`.
    pub fn adjoint_mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.rows, v.len(), "adjoint_mul_vec dimension mismatch");
        let mut out = vec![ZERO; self.cols];
        for (k, &vk) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(k)) {
                *o += a.conj() * vk;
            }
        }
        out
    }

    pub fn kron(&self, rhs: &CMatrix) -> CMatrix {
        let (r1, c1) = self.shape();
        let (r2, c2) = rhs.shape();
        let mut out = CMatrix::zeros(r1 * r2, c1 * c2);
        for i1 in 0..r1 {
            for j1 in 0..c1 {
                let a = self.data[i1 * c1 + j1];
                if a == ZERO {
                    continue;
                }
                for i2 in 0..r2 {
                    for j2 in 0..c2 {
                        out.data[(i1 * r2 + i2) * (c1 * c2) + j1 * c2 + j2] =
                            a * rhs.data[i2 * c2 + j2];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).sum()
    }

    /// `tr(self^dagger * rhs)`, the Frobenius inner product.
    pub fn inner(&self, rhs: &CMatrix) -> Complex64 {
        assert_eq!(self.shape(), rhs.shape(), "inner shape mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(ZERO, |acc, (&a, &b)| acc + a.conj() * b)
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum())
    }

    /// `max |self - rhs|` entrywise.
    pub fn max_diff(&self, rhs: &CMatrix) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "max_diff shape mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// `max |H - H^dagger|`; infinite for non-square input.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                d = d.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// `max |U^dagger U - I|`; infinite for non-square input.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.adjoint_matmul(self)
            .max_diff(&CMatrix::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn hermitian_part(&self) -> CMatrix {
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            out.data[i * n + i] = Complex64::new(self.data[i * n + i].re, 0.0);
            for j in i + 1..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg.conj();
            }
        }
        out
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += *b;
        }
    }
}

/// `<a|b>` with the conjugate on the left.
pub fn vdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(ZERO, |acc, (&x, &y)| acc + x.conj() * y)
}

pub fn vnorm(a: &[Complex64]) -> f64 {
    libm::sqrt(a.iter().map(|z| z.norm_sqr()).sum())
}

/// Spectral decomposition `H = Q diag(eigenvalues) Q^dagger` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Ascending; ties keep the order of the diagonal they came from.
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub basis: CMatrix,
}

impl HermitianEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Q diag(lambda) Q^dagger`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.basis.clone();
        scale_columns(&mut scaled, |a| Complex64::new(self.eigenvalues[a], 0.0));
        scaled.matmul_adjoint(&self.basis)
    }

    /// Eigenvector `a` as a column.
    pub fn vector(&self, a: usize) -> Vec<Complex64> {
        self.basis.column(a)
    }
}

fn scale_columns(m: &mut CMatrix, f: impl Fn(usize) -> Complex64) {
    let cols = m.cols;
    let factors: Vec<Complex64> = (0..cols).map(f).collect();
    for row in m.data.chunks_mut(cols) {
        for (z, &s) in row.iter_mut().zip(&factors) {
            *z *= s;
        }
    }
}

fn check_hermitian(h: &CMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            expected: (h.rows, h.rows),
            found: h.shape(),
        });
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("Hermitian input"));
    }
    let defect = h.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { defect });
    }
    Ok(())
}

/// Cyclic Jacobi diagonalisation of a Hermitian matrix.
///
/// Each rotation first removes the phase of the pivot `h_pq` and then applies
/// the real symmetric Jacobi rotation to the resulting 2x2 block. Sweeps stop
/// once the off-diagonal Frobenius norm falls below `1e-12 * ||H||_F`.
pub fn hermitian_eig(h: &CMatrix) -> Result<HermitianEig> {
    check_hermitian(h)?;
    let n = h.rows;
    let mut a = h.hermitian_part();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm();
    let target = JACOBI_REL_TOL * scale;

    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&a);
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their diagonal order
    order.sort_by(|&x, &y| a.data[x * n + x].re.total_cmp(&a.data[y * n + y].re));
    let eigenvalues = order.iter().map(|&k| a.data[k * n + k].re).collect();
    let mut basis = CMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            basis.data[i * n + new_col] = v.data[i * n + old_col];
        }
    }
    Ok(HermitianEig { eigenvalues, basis })
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.data[i * n + j].norm_sqr();
            }
        }
    }
    libm::sqrt(s)
}

/// One complex Jacobi rotation annihilating `a[p][q]`; accumulates into `v`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let n = a.rows;
    let apq = a.data[p * n + q];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r;
    let app = a.data[p * n + p].re;
    let aqq = a.data[q * n + q].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta.is_finite() {
        let t = 1.0 / (theta.abs() + libm::sqrt(theta * theta + 1.0));
        if theta < 0.0 {
            -t
        } else {
            t
        }
    } else {
        0.0
    };
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    let s = t * c;
    // G = D R with D = diag(1, conj(phase)) on (p, q), R the real rotation.
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;

    for k in 0..n {
        let x = a.data[k * n + p];
        let y = a.data[k * n + q];
        a.data[k * n + p] = x * c + y * g_qp;
        a.data[k * n + q] = x * s + y * g_qq;
    }
    for k in 0..n {
        let x = a.data[p * n + k];
        let y = a.data[q * n + k];
        a.data[p * n + k] = x * c + y * g_qp.conj();
        a.data[q * n + k] = x * s + y * g_qq.conj();
    }
    a.data[p * n + q] = ZERO;
    a.data[q * n + p] = ZERO;
    a.data[p * n + p] = Complex64::new(app - t * r, 0.0);
    a.data[q * n + q] = Complex64::new(aqq + t * r, 0.0);

    for k in 0..n {
        let x = v.data[k * n + p];
        let y = v.data[k * n + q];
        v.data[k * n + p] = x * c + y * g_qp;
        v.data[k * n + q] = x * s + y * g_qq;
    }
}

/// `exp(-i H t)` for Hermitian `H`, through the spectral decomposition.
pub fn expm_skew(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = hermitian_eig(h)?;
    Ok(expm_from_eig(&eig, t))
}

/// `Q diag(exp(-i lambda t)) Q^dagger` from a precomputed decomposition.
pub fn expm_from_eig(eig: &HermitianEig, t: f64) -> CMatrix {
    let mut scaled = eig.basis.clone();
    scale_columns(&mut scaled, |a| phase_factor(eig.eigenvalues[a], t));
    scaled.matmul_adjoint(&eig.basis)
}

/// `exp(-i lambda t)`.
#[inline]
pub fn phase_factor(lambda: f64, t: f64) -> Complex64 {
    let (s, c) = libm::sincos(lambda * t);
    Complex64::new(c, -s)
}

/// Divided differences of `f(x) = exp(-i x t)` over the spectrum.
fn divided_differences(eigenvalues: &[f64], t: f64) -> Vec<Complex64> {
    let n = eigenvalues.len();
    let mut phi = vec![ZERO; n * n];
    for (a, &la) in eigenvalues.iter().enumerate() {
        for (b, &lb) in eigenvalues.iter().enumerate() {
            let gap = la - lb;
            let mid = 0.5 * (la + lb);
            phi[a * n + b] = if gap.abs() <= 1e-8 * (1.0 + la.abs() + lb.abs()) {
                // f'(mid)
                -I * t * phase_factor(mid, t)
            } else {
                // (f(a) - f(b)) / (a - b), written as -i t f(mid) sinc(t gap / 2)
                // to stay accurate when the gap is small
                let half = 0.5 * t * gap;
                let sinc = if half == 0.0 {
                    1.0
                } else {
                    libm::sin(half) / half
                };
                -I * t * phase_factor(mid, t) * sinc
            };
        }
    }
    phi
}

fn check_direction(eig: &HermitianEig, d: &CMatrix) -> Result<()> {
    let n = eig.dim();
    if d.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            found: d.shape(),
        });
    }
    Ok(())
}

/// Frechet derivative of `H -> exp(-i H t)` at `H` in direction `D`.
///
/// Returns `Q (Phi o (Q^dagger D Q)) Q^dagger`, where `Phi` holds the divided
/// differences of `exp(-i x t)` over the spectrum.
pub fn expm_frechet(eig: &HermitianEig, d: &CMatrix, t: f64) -> Result<CMatrix> {
    check_direction(eig, d)?;
    let n = eig.dim();
    let phi = divided_differences(&eig.eigenvalues, t);
    let mut rotated = eig.basis.adjoint_matmul(d).matmul(&eig.basis);
    for (z, p) in rotated.data.iter_mut().zip(&phi) {
        *z *= *p;
    }
    let out = eig.basis.matmul(&rotated).matmul_adjoint(&eig.basis);
    debug_assert_eq!(out.shape(), (n, n));
    Ok(out)
}

/// Adjoint of the Frechet map with respect to `Re tr(A^dagger B)`.
///
/// For every direction `D`, `Re tr(M^dagger L(D)) = Re tr(L*(M)^dagger D)`,
/// where `L` is [`expm_frechet`] and `L*` is this function. Gradients then
/// need one adjoint application per step instead of one derivative per
/// control direction.
pub fn expm_frechet_adjoint(eig: &HermitianEig, m: &CMatrix, t: f64) -> Result<CMatrix> {
    check_direction(eig, m)?;
    let phi = divided_differences(&eig.eigenvalues, t);
    let mut rotated = eig.basis.adjoint_matmul(m).matmul(&eig.basis);
    for (z, p) in rotated.data.iter_mut().zip(&phi) {
        *z *= p.conj();
    }
    Ok(eig.basis.matmul(&rotated).matmul_adjoint(&eig.basis))
}
