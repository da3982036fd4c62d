//! Dense matrices, activations, and the deterministic RNG used everywhere.
//!
//! Everything numerical is generic over [`Scalar`] so the same network code
//! runs in f32 (fast path for real use) and f64 (reference path for gradient
//! checks and oracle comparisons).

mod gemm;
mod rng;

use std::fmt;
use std::iter::Sum;

use num_traits::Float;

pub use rng::{mix_seed, SeededRng};

/// Floating point element type for all network math.
///
/// The defaults are exact for f64. f32 overrides the transcendentals with a
/// range-reduced polynomial `exp` (a few ulp of libm, branch-free, so the
/// elementwise gate loops autovectorize) and routes matrix products through
/// the SIMD kernel picked at runtime in [`gemm`].
pub trait Scalar:
    Float + Sum + Default + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    fn from_f64(x: f64) -> Self {
        Self::from(x).expect("f64 conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }

    /// exp(x), allowed to be a few ulp off libm in f32.
    fn exp_elem(self) -> Self {
        self.exp()
    }

    /// Logistic sigmoid. Saturates cleanly to 0 and 1, never produces NaN
    /// for finite input.
    fn sigmoid_elem(self) -> Self {
        Self::one() / (Self::one() + (-self).exp_elem())
    }

    fn tanh_elem(self) -> Self {
        self.tanh()
    }

    /// C[m x n] += A[m x k] * B[k x n], all row-major. `a_trans` reads A as
    /// its transpose, i.e. A is stored k x m and the product is A^T * B.
    fn gemm_acc(c: &mut [Self], m: usize, n: usize, a: &[Self], a_trans: bool, b: &[Self], k: usize) {
        gemm::gemm_scalar(c, m, n, a, a_trans, b, k);
    }
}

impl Scalar for f64 {}

impl Scalar for f32 {
    #[inline]
    fn exp_elem(self) -> Self {
        exp_f32(self)
    }

    #[inline]
    fn tanh_elem(self) -> Self {
        // tanh(x) = (e^{2x} - 1) / (e^{2x} + 1); near zero the subtraction
        // cancels, but there tanh(x) = x to well below f32 precision.
        // Written as a select, not an early return, so loops over slices
        // stay branch-free and vectorizable.
        let e = exp_f32(2.0 * self);
        let y = (e - 1.0) / (e + 1.0);
        if self.abs() < 2e-4 {
            self
        } else {
            y
        }
    }

    fn gemm_acc(c: &mut [Self], m: usize, n: usize, a: &[Self], a_trans: bool, b: &[Self], k: usize) {
        gemm::gemm_f32(c, m, n, a, a_trans, b, k);
    }
}

/// Branch-free expf: x = n*ln2 + r with |r| <= ln2/2, e^x = 2^n * p(r).
/// Max relative error is about 2 ulp over the clamped range; inputs beyond
/// +-87 saturate instead of overflowing.
#[inline]
fn exp_f32(x: f32) -> f32 {
    const LOG2_E: f32 = std::f32::consts::LOG2_E;
    // ln2 split so n*ln2 subtracts exactly in the leading bits.
    const LN2_HI: f32 = 0.693_359_375;
    const LN2_LO: f32 = -2.121_944_4e-4;

    // Round to nearest integer via the 2^23 shift; f32::round() lowers to a
    // libm call on baseline x86-64, which would keep callers scalar. Ties go
    // to even instead of away from zero, which only moves |r| across the
    // half-ln2 boundary by one ulp.
    const MAGIC: f32 = 12_582_912.0;

    let x = x.clamp(-87.0, 87.0);
    let s = x * LOG2_E + MAGIC;
    let n = s - MAGIC;
    let r = (x - n * LN2_HI) - n * LN2_LO;

    // Degree-6 Taylor polynomial, Horner form; |r| <= 0.3466 keeps the
    // truncation error below 1 ulp.
    let mut p = 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;

    // 2^n via exponent bits; n is in [-126, 126] after the clamp. The
    // integer n is recovered from the mantissa of s (exponent 150, mantissa
    // 2^22 + n) rather than by `n as i32`: Rust's saturating float-to-int
    // cast scalarizes an otherwise packed loop.
    let bits = ((s.to_bits() & 0x7F_FFFF) as i32 - 0x40_0000 + 127) << 23;
    p * f32::from_bits(bits as u32)
}

/// Logistic sigmoid over a vector.
pub fn sigmoid<S: Scalar>(v: &[S]) -> Vec<S> {
    v.iter().map(|&x| x.sigmoid_elem()).collect()
}

/// Hyperbolic tangent over a vector.
pub fn tanh_act<S: Scalar>(v: &[S]) -> Vec<S> {
    v.iter().map(|&x| x.tanh_elem()).collect()
}

pub(crate) fn sigmoid_in_place<S: Scalar>(v: &mut [S]) {
    for x in v {
        *x = x.sigmoid_elem();
    }
}

pub(crate) fn tanh_in_place<S: Scalar>(v: &mut [S]) {
    for x in v {
        *x = x.tanh_elem();
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length must be rows*cols");
        Matrix { rows, cols, data }
    }

    /// Fills the matrix from a uniform distribution on [-bound, bound].
    /// Draws in row-major order so the layout is part of the seeded contract.
    pub fn uniform(rng: &mut SeededRng, rows: usize, cols: usize, bound: f64) -> Self {
        let data = (0..rows * cols).map(|_| S::from_f64(rng.uniform(-bound, bound))).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: S) {
        self.data.fill(v);
    }

    pub fn transposed(&self) -> Matrix<S> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// self += other, elementwise.
    pub fn add_assign(&mut self, other: &Matrix<S>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        for a in &mut self.data {
            *a = *a * factor;
        }
    }
}

/// m[rows x cols] * v[cols] -> [rows]. Panics on dimension mismatch; callers
/// validate shapes at configuration time.
pub fn mat_vec_mul<S: Scalar>(m: &Matrix<S>, v: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); m.rows()];
    mat_vec_acc(&mut out, m, v);
    out
}

/// out += m * v. Accumulates over columns in ascending order, matching the
/// scalar gemm loop so batch-of-one and single-vector paths agree bitwise in
/// f64.
pub(crate) fn mat_vec_acc<S: Scalar>(out: &mut [S], m: &Matrix<S>, v: &[S]) {
    assert_eq!(v.len(), m.cols(), "mat_vec_mul: vector length {} != matrix cols {}", v.len(), m.cols());
    assert_eq!(out.len(), m.rows(), "mat_vec_mul: output length {} != matrix rows {}", out.len(), m.rows());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols)) {
        let mut acc = *o;
        for (&a, &b) in row.iter().zip(v) {
            acc = acc + a * b;
        }
        *o = acc;
    }
}

/// dot(a, b) with ascending accumulation order.
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// C += A * B with runtime kernel dispatch (see [`Scalar::gemm_acc`]).
pub fn gemm_acc<S: Scalar>(c: &mut Matrix<S>, a: &Matrix<S>, a_trans: bool, b: &Matrix<S>) {
    let (am, ak) = if a_trans { (a.cols, a.rows) } else { (a.rows, a.cols) };
    assert_eq!(am, c.rows, "gemm: A rows != C rows");
    assert_eq!(ak, b.rows, "gemm: A cols != B rows");
    assert_eq!(b.cols, c.cols, "gemm: B cols != C cols");
    S::gemm_acc(&mut c.data, c.rows, c.cols, &a.data, a_trans, &b.data, b.rows);
}
