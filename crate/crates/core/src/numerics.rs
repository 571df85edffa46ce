//! Dense real and complex linear algebra for the small matrices used by the
//! codes (at most 32×16).
//!
//! Storage is row-major. The QR factorization is modified Gram-Schmidt, so the
//! entries of `R` are exactly the inner products `⟨q_j, h_k⟩` that the
//! structural analysis reasons about, and the diagonal is nonnegative.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::{Error, Result};

/// Numeric tolerances shared by factorization checks and algebraic identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance for factorization properties (orthogonality,
    /// reconstruction, structural zeros of `R`).
    pub factorization: f64,
    /// Relative tolerance for exact algebraic identities.
    pub identity: f64,
    /// A Gram-Schmidt residual below `rank * ‖h_j‖` is treated as rank loss.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            factorization: 1e-10,
            identity: 1e-12,
            rank: 1e-12,
        }
    }
}

static TOLERANCES: OnceLock<Tolerances> = OnceLock::new();

/// Process-wide tolerances; defaults unless [`set_tolerances`] ran first.
pub fn tolerances() -> Tolerances {
    *TOLERANCES.get_or_init(Tolerances::default)
}

/// Installs process-wide tolerances. Fails (returning the active value) once
/// they have been read or set.
pub fn set_tolerances(t: Tolerances) -> std::result::Result<(), Tolerances> {
    TOLERANCES.set(t).map_err(|_| tolerances())
}

/// Scalar field for [`Mat`]: implemented for `f64` and [`Complex64`].
pub trait Scalar:
    Copy
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn zero() -> Self;
    fn one() -> Self;
    fn conj(self) -> Self;
    fn abs_sqr(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn conj(self) -> Self {
        self
    }
    fn abs_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Complex matrix (codewords, channels, weight matrices).
pub type CMat = Mat<Complex64>;
/// Real matrix (generator, equivalent channel, Q and R).
pub type RMat = Mat<f64>;

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// # Panics
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Column vector.
    pub fn column_vector(v: &[T]) -> Self {
        Mat::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn conj(&self) -> Self {
        self.map(Scalar::conj)
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] =
                        out.data[i * other.cols + j] + a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// Copies the `nr × nc` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(
            r0 + nr <= self.rows && c0 + nc <= self.cols,
            "block out of range"
        );
        Mat::from_fn(nr, nc, |r, c| self[(r0 + r, c0 + c)])
    }

    /// Writes `block` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(
            r0 + block.rows <= self.rows && c0 + block.cols <= self.cols,
            "block out of range"
        );
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|x| x.abs_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Largest entrywise magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|x| x.abs_sqr().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs_sqr().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Scalar> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: Self) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }
}

impl<T: Scalar> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: Self) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }
}

impl<T: Scalar> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: Self) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Scalar + fmt::Display> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:>10.4} ", self[(r, c)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// The 2×2 real image `[[x^R, −x^I], [x^I, x^R]]` of a complex scalar.
pub fn realify(x: Complex64) -> RMat {
    RMat::from_vec(2, 2, vec![x.re, -x.im, x.im, x.re])
}

/// Replaces every complex entry by its 2×2 [`realify`] block.
pub fn realify_matrix(h: &CMat) -> RMat {
    let mut out = RMat::zeros(2 * h.rows(), 2 * h.cols());
    for r in 0..h.rows() {
        for c in 0..h.cols() {
            let x = h[(r, c)];
            out[(2 * r, 2 * c)] = x.re;
            out[(2 * r, 2 * c + 1)] = -x.im;
            out[(2 * r + 1, 2 * c)] = x.im;
            out[(2 * r + 1, 2 * c + 1)] = x.re;
        }
    }
    out
}

/// Interleaves real and imaginary parts: `[x_1^R, x_1^I, …, x_n^R, x_n^I]`.
pub fn tilde_vec(x: &[Complex64]) -> Vec<f64> {
    x.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Inverse of [`tilde_vec`].
///
/// # Panics
///
/// Panics on odd-length input.
pub fn untilde_vec(x: &[f64]) -> Vec<Complex64> {
    assert!(x.len().is_multiple_of(2), "odd-length real vector");
    x.chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}

/// Column-major stacking of a matrix.
pub fn vec_stack<T: Scalar>(x: &Mat<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(x.rows() * x.cols());
    for c in 0..x.cols() {
        for r in 0..x.rows() {
            out.push(x[(r, c)]);
        }
    }
    out
}

/// Kronecker product.
pub fn kron<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (br, bc) = b.shape();
    Mat::from_fn(a.rows() * br, a.cols() * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin QR factorization `A = Q R` of a tall or square real matrix.
#[derive(Debug, Clone)]
pub struct QrFactorization {
    /// `rows × cols`, orthonormal columns `q_j`.
    pub q: RMat,
    /// `cols × cols`, upper triangular with nonnegative diagonal.
    pub r: RMat,
    /// `‖r_j‖`, the Gram-Schmidt residual norms (equal to `R[j][j]`).
    pub colnorms: Vec<f64>,
}

impl QrFactorization {
    pub fn reconstruct(&self) -> RMat {
        self.q.matmul(&self.r)
    }

    /// `max |QᵀQ − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let qtq = self.q.transpose().matmul(&self.q);
        qtq.max_abs_diff(&RMat::identity(qtq.rows()))
    }

    /// `‖h_k‖`, the norm of the k-th input column, recovered from `R`.
    pub fn input_column_norm(&self, k: usize) -> f64 {
        (0..=k).map(|j| self.r[(j, k)].powi(2)).sum::<f64>().sqrt()
    }
}

/// Modified Gram-Schmidt QR.
///
/// `R[k][j] = ⟨q_k, h_j⟩` for `k < j`, `R[j][j] = ‖r_j‖ > 0` and the strict
/// lower triangle is exactly zero. Fails with [`Error::RankDeficient`] when a
/// residual falls below `tolerances().rank · ‖h_j‖`.
pub fn qr_decompose(a: &RMat) -> Result<QrFactorization> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "QR needs a tall or square matrix, got {m}x{n}"
        )));
    }
    let rank_tol = tolerances().rank;
    let mut q_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = RMat::zeros(n, n);
    let mut colnorms = Vec::with_capacity(n);

    for j in 0..n {
        let mut v = a.column(j);
        let h_norm = norm(&v);
        for (k, qk) in q_cols.iter().enumerate() {
            let rkj = dot(qk, &v);
            r[(k, j)] = rkj;
            for (vi, qi) in v.iter_mut().zip(qk) {
                *vi -= rkj * qi;
            }
        }
        let rjj = norm(&v);
        if rjj == 0.0 || rjj < rank_tol * h_norm || !rjj.is_finite() {
            return Err(Error::RankDeficient {
                column: j,
                residual: rjj,
                norm: h_norm,
            });
        }
        r[(j, j)] = rjj;
        colnorms.push(rjj);
        v.iter_mut().for_each(|x| *x /= rjj);
        q_cols.push(v);
    }

    let q = RMat::from_fn(m, n, |i, j| q_cols[j][i]);
    Ok(QrFactorization { q, r, colnorms })
}

/// Determinant of an `n × n` row-major complex matrix by LU with partial
/// pivoting, overwriting `a`.
pub fn det_in_place(a: &mut [Complex64], n: usize) -> Complex64 {
    debug_assert_eq!(a.len(), n * n);
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let mut pivot_row = k;
        let mut best = a[k * n + k].norm_sqr();
        for i in k + 1..n {
            let v = a[i * n + k].norm_sqr();
            if v > best {
                best = v;
                pivot_row = i;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot_row != k {
            for j in 0..n {
                a.swap(k * n + j, pivot_row * n + j);
            }
            det = -det;
        }
        let pivot = a[k * n + k];
        det *= pivot;
        let inv = pivot.inv();
        for i in k + 1..n {
            let f = a[i * n + k] * inv;
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for j in k + 1..n {
                let t = a[k * n + j];
                a[i * n + j] -= f * t;
            }
        }
    }
    det
}

/// Determinant of a square complex matrix.
///
/// # Panics
///
/// Panics if `a` is not square.
pub fn det_complex(a: &CMat) -> Complex64 {
    assert!(a.is_square(), "determinant of a non-square matrix");
    let mut work = a.data().to_vec();
    det_in_place(&mut work, a.rows())
}
