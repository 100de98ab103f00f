//! Dense complex linear algebra helpers shared by every module.
//!
//! All operators in this crate are N x N (or 2N x 2N) dense complex matrices;
//! the routines here wrap LAPACK (via `ndarray-linalg`) and add the few
//! primitives LAPACK does not provide directly: a matrix exponential and
//! functional calculus for operators that are Hermitian up to a similarity.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, Inverse, Norm, UPLO, SVD};
use num_complex::Complex64;

use crate::error::KgError;

pub type CMat = Array2<Complex64>;
pub type CVec = Array1<Complex64>;

pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn eye(n: usize) -> CMat {
    Array2::eye(n)
}

pub fn zeros(n: usize) -> CMat {
    Array2::zeros((n, n))
}

/// Largest singular value.
pub fn op_norm(a: &CMat) -> f64 {
    match a.svd(false, false) {
        Ok((_, s, _)) => s.iter().cloned().fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

/// Frobenius norm.
pub fn fro_norm(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// All singular values, descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    match a.svd(false, false) {
        Ok((_, s, _)) => {
            let mut v: Vec<f64> = s.to_vec();
            v.sort_by(|x, y| y.partial_cmp(x).unwrap());
            v
        }
        Err(_) => vec![f64::NAN],
    }
}

pub fn inv(a: &CMat) -> Result<CMat, KgError> {
    a.inv().map_err(|e| KgError::Linalg(format!("inverse failed: {e}")))
}

/// Matrix 1-norm (max column sum), used for exponential scaling.
fn one_norm(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// exp(A) by scaling-and-squaring with a degree-12 Taylor polynomial in
/// Paterson-Stockmeyer form. The scaling keeps the argument below 0.25 in
/// 1-norm, where the truncation error is ~1e-19.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let nrm = one_norm(a);
    let mut s = 0u32;
    if nrm > 0.25 {
        s = (nrm / 0.25).log2().ceil() as u32;
    }
    let scale = Complex64::new(0.5f64.powi(s as i32), 0.0);
    let b = a.mapv(|z| z * scale);

    // Taylor-12 via x^4 blocks: E = sum_{k=0}^{12} B^k/k!
    let b2 = b.dot(&b);
    let b3 = b2.dot(&b);
    let b4 = b3.dot(&b);
    let c = |k: u64| Complex64::new(1.0 / factorial(k), 0.0);
    let id = eye(n);
    // p0 + p1*B4 + p2*B4^2 + p3*B4^3 with pj cubic polynomials in B
    let p0 = &id + &b.mapv(|z| z * c(1)) + &b2.mapv(|z| z * c(2)) + &b3.mapv(|z| z * c(3));
    let p1 = &id.mapv(|z| z * c(4))
        + &b.mapv(|z| z * c(5))
        + &b2.mapv(|z| z * c(6))
        + &b3.mapv(|z| z * c(7));
    let p2 = &id.mapv(|z| z * c(8))
        + &b.mapv(|z| z * c(9))
        + &b2.mapv(|z| z * c(10))
        + &b3.mapv(|z| z * c(11));
    let p3 = id.mapv(|z| z * c(12));
    let mut e = p3.dot(&b4);
    e += &p2;
    e = e.dot(&b4);
    e += &p1;
    e = e.dot(&b4);
    e += &p0;

    for _ in 0..s {
        e = e.dot(&e);
    }
    e
}

fn factorial(k: u64) -> f64 {
    (1..=k).map(|i| i as f64).product::<f64>().max(1.0)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
///
/// LAPACK sees the row-major buffer as the transposed (= conjugated) matrix,
/// so the returned vectors are conjugated back; the unit test pins A v = w v.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat), KgError> {
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| KgError::Linalg(format!("eigh failed: {e}")))?;
    Ok((vals.to_vec(), vecs.mapv(|z| z.conj())))
}

/// f(A) for Hermitian A via eigendecomposition: A = V diag(w) V^H.
pub fn hermitian_fn(a: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat, KgError> {
    let (vals, vecs) = eigh(a)?;
    Ok(rebuild(&vecs, &vals.iter().map(|&w| Complex64::new(f(w), 0.0)).collect::<Vec<_>>()))
}

/// V diag(d) V^H.
pub fn rebuild(vecs: &CMat, d: &[Complex64]) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (j, col) in scaled.columns_mut().into_iter().enumerate() {
        let dj = d[j];
        for z in col {
            *z *= dj;
        }
    }
    let vh = conj_transpose(vecs);
    let mut out = zeros(n);
    ndarray::linalg::general_mat_mul(ONE, &scaled, &vh, ZERO, &mut out);
    out
}

pub fn conj_transpose(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Assemble a 2x2 block matrix from N x N blocks.
pub fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = zeros(2 * n);
    out.slice_mut(ndarray::s![..n, ..n]).assign(a);
    out.slice_mut(ndarray::s![..n, n..]).assign(b);
    out.slice_mut(ndarray::s![n.., ..n]).assign(c);
    out.slice_mut(ndarray::s![n.., n..]).assign(d);
    out
}

/// The four N x N blocks of a 2N x 2N matrix.
pub fn split2(m: &CMat) -> [CMat; 4] {
    let n = m.nrows() / 2;
    [
        m.slice(ndarray::s![..n, ..n]).to_owned(),
        m.slice(ndarray::s![..n, n..]).to_owned(),
        m.slice(ndarray::s![n.., ..n]).to_owned(),
        m.slice(ndarray::s![n.., n..]).to_owned(),
    ]
}

/// diag(a, b) as a 2N x 2N matrix.
pub fn block_diag2(a: &CMat, b: &CMat) -> CMat {
    let z = zeros(a.nrows());
    block2(a, &z, &z, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_matches_scalar_exponential() {
        // 2x2 rotation generator: exp(i t H) with H = [[0,1],[1,0]]
        let t = 1.3;
        let h = ndarray::array![[ZERO, ONE], [ONE, ZERO]];
        let e = expm(&h.mapv(|z| z * I * t));
        // exp(itH) = cos t + i sin t H
        assert!((e[[0, 0]] - Complex64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((e[[0, 1]] - Complex64::new(0.0, t.sin())).norm() < 1e-14);
    }

    #[test]
    fn expm_large_argument_uses_squaring() {
        let h = ndarray::array![[ZERO, ONE], [ONE, ZERO]];
        let t = 97.0;
        let e = expm(&h.mapv(|z| z * I * t));
        assert!((e[[0, 0]] - Complex64::new(t.cos(), 0.0)).norm() < 1e-11);
    }

    #[test]
    fn hermitian_fn_square_root() {
        let a = ndarray::array![
            [Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.1)],
            [Complex64::new(0.5, -0.1), Complex64::new(3.0, 0.0)]
        ];
        let r = hermitian_fn(&a, f64::sqrt).unwrap();
        let rr = r.dot(&r);
        assert!(max_abs(&(&rr - &a)) < 1e-12);
    }
}
