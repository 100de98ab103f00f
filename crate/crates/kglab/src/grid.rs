//! Periodic spatial grid, Fourier spectral calculus, weighted inner products
//! and the Sobolev/position weight ladders used as decay gauges.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::KgError;
use crate::linalg::{self, CMat, I, ONE, ZERO};

/// Uniform periodic grid on a circle of circumference `length`.
///
/// Points are x_j = j L / N and wavenumbers follow the FFT layout
/// k_j = 2 pi j' / L with signed index j' in [-N/2, N/2).
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub n_points: usize,
    pub length: f64,
    pub points: Vec<f64>,
    pub wavenumbers: Vec<f64>,
}

impl SpatialGrid {
    pub fn build(n_points: usize, length: f64) -> Result<Self, KgError> {
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(KgError::Grid(format!(
                "n_points must be a power of two >= 8, got {n_points}"
            )));
        }
        if !(length > 0.0) {
            return Err(KgError::Grid(format!("length must be positive, got {length}")));
        }
        let n = n_points;
        let points = (0..n).map(|j| j as f64 * length / n as f64).collect();
        let wavenumbers = (0..n)
            .map(|j| {
                let signed = if j <= n / 2 - 1 { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * signed / length
            })
            .collect();
        Ok(Self { n_points, length, points, wavenumbers })
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n_points as f64
    }

    /// Signed distance of each point from the grid center (torus treated as a
    /// windowed line for decay diagnostics).
    pub fn centered(&self) -> Vec<f64> {
        let c = self.length / 2.0;
        self.points.iter().map(|&x| x - c).collect()
    }

    /// Forward FFT, unitary normalization.
    pub fn fft(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut buf = v.to_vec();
        FftPlanner::new().plan_fft_forward(self.n_points).process(&mut buf);
        let s = 1.0 / (self.n_points as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    /// Inverse FFT, unitary normalization.
    pub fn ifft(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut buf = v.to_vec();
        FftPlanner::new().plan_fft_inverse(self.n_points).process(&mut buf);
        let s = 1.0 / (self.n_points as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    /// Dense unitary DFT matrix F with (F v)_k = fft(v)_k.
    pub fn dft_matrix(&self) -> CMat {
        let n = self.n_points;
        let s = 1.0 / (n as f64).sqrt();
        Array2::from_shape_fn((n, n), |(k, j)| {
            let phase = -2.0 * PI * (k as f64) * (j as f64) / n as f64;
            Complex64::from_polar(s, phase)
        })
    }

    /// Dense operator F^H diag(f(k)) F acting in position space.
    pub fn fourier_multiplier(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let fmat = self.dft_matrix();
        let d: Vec<Complex64> = self.wavenumbers.iter().map(|&k| f(k)).collect();
        let mut scaled = fmat.clone();
        for (row, dk) in scaled.rows_mut().into_iter().zip(d.iter()) {
            let dk = *dk;
            for z in row {
                *z *= dk;
            }
        }
        linalg::conj_transpose(&fmat).dot(&scaled)
    }

    /// Spectral differentiation matrix d/dx. The Nyquist mode keeps its
    /// signed multiplier i k (fields here are complex, so the matrix is
    /// exactly anti-Hermitian and the dispersion stays monotone across the
    /// whole band).
    pub fn derivative_matrix(&self) -> CMat {
        self.fourier_multiplier(|k| I * k)
    }

    /// Largest resolved |k| (below Nyquist).
    pub fn k_band(&self) -> f64 {
        2.0 * PI * (self.n_points as f64 / 2.0 - 1.0) / self.length
    }
}

/// Grid samples of the slice density |h_t|^(1/2) times the quadrature weight.
#[derive(Debug, Clone)]
pub struct WeightedProduct {
    pub density: Vec<f64>,
}

impl WeightedProduct {
    pub fn new(density: Vec<f64>) -> Result<Self, KgError> {
        if density.iter().any(|&d| !(d > 0.0)) {
            return Err(KgError::Grid("weighted product requires strictly positive density".into()));
        }
        Ok(Self { density })
    }

    /// Uniform weights L/N (flat metric).
    pub fn uniform(grid: &SpatialGrid) -> Self {
        Self { density: vec![grid.spacing(); grid.n_points] }
    }

    /// From |h|^(1/2) samples on the grid.
    pub fn from_sqrt_h(grid: &SpatialGrid, sqrt_h: &[f64]) -> Result<Self, KgError> {
        let w = grid.spacing();
        Self::new(sqrt_h.iter().map(|&s| s * w).collect())
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_uniform(&self) -> bool {
        let d0 = self.density[0];
        self.density.iter().all(|&d| (d - d0).abs() < 1e-14 * d0.abs())
    }

    /// <u, v> = sum_j conj(u_j) d_j v_j.
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        u.iter()
            .zip(v.iter())
            .zip(self.density.iter())
            .map(|((a, b), &d)| a.conj() * b * d)
            .sum()
    }

    /// Adjoint of `a` with respect to this product: D^{-1} A^H D.
    pub fn adjoint(&self, a: &CMat) -> CMat {
        let mut ah = linalg::conj_transpose(a);
        for (i, mut row) in ah.rows_mut().into_iter().enumerate() {
            let di = self.density[i];
            for (j, z) in row.iter_mut().enumerate() {
                *z *= self.density[j] / di;
            }
        }
        ah
    }

    /// Block-diagonal extension diag(D, D) adjoint for 2N x 2N operators.
    pub fn adjoint_block(&self, a: &CMat) -> CMat {
        let n = self.len();
        let d = |i: usize| self.density[i % n];
        let mut ah = linalg::conj_transpose(a);
        for (i, mut row) in ah.rows_mut().into_iter().enumerate() {
            let di = d(i);
            for (j, z) in row.iter_mut().enumerate() {
                *z *= d(j) / di;
            }
        }
        ah
    }

    /// Conjugate A -> D^{1/2} A D^{-1/2}; maps product-Hermitian to Hermitian.
    pub fn hermitianize(&self, a: &CMat) -> CMat {
        let mut out = a.clone();
        let blocks = a.nrows() / self.len();
        debug_assert!(blocks * self.len() == a.nrows());
        let n = self.len();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let si = self.density[i % n].sqrt();
            for (j, z) in row.iter_mut().enumerate() {
                *z *= si / self.density[j % n].sqrt();
            }
        }
        out
    }

    /// Inverse of `hermitianize`.
    pub fn dehermitianize(&self, a: &CMat) -> CMat {
        let mut out = a.clone();
        let n = self.len();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let si = self.density[i % n].sqrt();
            for (j, z) in row.iter_mut().enumerate() {
                *z *= self.density[j % n].sqrt() / si;
            }
        }
        out
    }
}

/// A dense operator together with the inner product its adjoints refer to.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: CMat,
    pub product: Arc<WeightedProduct>,
}

impl OperatorMatrix {
    pub fn new(entries: CMat, product: Arc<WeightedProduct>) -> Self {
        Self { entries, product }
    }

    pub fn identity(n: usize, product: Arc<WeightedProduct>) -> Self {
        Self::new(linalg::eye(n), product)
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.product.adjoint(&self.entries), self.product.clone())
    }

    /// || A - A* || / max(||A||, 1).
    pub fn self_adjoint_defect(&self) -> f64 {
        let diff = &self.entries - &self.product.adjoint(&self.entries);
        linalg::op_norm(&diff) / linalg::op_norm(&self.entries).max(1.0)
    }

    pub fn symmetrize(&self) -> Self {
        let adj = self.product.adjoint(&self.entries);
        Self::new((&self.entries + &adj).mapv(|z| z * 0.5), self.product.clone())
    }

    /// Eigenvalues (real) of a product-Hermitian operator.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, KgError> {
        let h = self.product.hermitianize(&self.entries);
        let h = (&h + &linalg::conj_transpose(&h)).mapv(|z| z * 0.5);
        Ok(linalg::eigh(&h)?.0)
    }

    /// f(A) by spectral calculus in the weighted product (A must be
    /// product-Hermitian within roundoff; the Hermitian part is used).
    pub fn spectral_fn(&self, f: impl Fn(f64) -> f64) -> Result<Self, KgError> {
        let h = self.product.hermitianize(&self.entries);
        let h = (&h + &linalg::conj_transpose(&h)).mapv(|z| z * 0.5);
        let fh = linalg::hermitian_fn(&h, f)?;
        Ok(Self::new(self.product.dehermitianize(&fh), self.product.clone()))
    }

    /// Positive square root; errors if the spectrum is not strictly positive.
    pub fn sqrt(&self) -> Result<Self, KgError> {
        self.checked_power(0.5)
    }

    pub fn inv_sqrt(&self) -> Result<Self, KgError> {
        self.checked_power(-0.5)
    }

    pub fn checked_power(&self, alpha: f64) -> Result<Self, KgError> {
        let h = self.product.hermitianize(&self.entries);
        let h = (&h + &linalg::conj_transpose(&h)).mapv(|z| z * 0.5);
        let (vals, vecs) = linalg::eigh(&h)?;
        if let Some((index, &value)) = vals.iter().enumerate().find(|(_, &w)| w <= 0.0) {
            if alpha < 0.0 || alpha.fract() != 0.0 {
                return Err(KgError::NonPositiveSpectrum { value, index });
            }
        }
        let d: Vec<Complex64> =
            vals.iter().map(|&w| Complex64::new(w.powf(alpha), 0.0)).collect();
        let fh = linalg::rebuild(&vecs, &d);
        Ok(Self::new(self.product.dehermitianize(&fh), self.product.clone()))
    }

    /// Floor the spectrum at `c0`; returns the floored operator and the norm
    /// of the modification (a finite-rank, hence smoothing, correction).
    pub fn floor_spectrum(&self, c0: f64) -> Result<(Self, f64), KgError> {
        let h = self.product.hermitianize(&self.entries);
        let h = (&h + &linalg::conj_transpose(&h)).mapv(|z| z * 0.5);
        let (vals, vecs) = linalg::eigh(&h)?;
        let modification = vals.iter().map(|&w| (c0 - w).max(0.0)).fold(0.0, f64::max);
        let d: Vec<Complex64> =
            vals.iter().map(|&w| Complex64::new(w.max(c0), 0.0)).collect();
        let fh = linalg::rebuild(&vecs, &d);
        Ok((Self::new(self.product.dehermitianize(&fh), self.product.clone()), modification))
    }

    pub fn min_eigenvalue(&self) -> Result<f64, KgError> {
        Ok(self.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Weighted operator norms || <D>^m A <D>^m || over a ladder of Sobolev
/// orders, optionally with position weights <x>^k. This is the numerical
/// stand-in for membership in a smoothing/decay operator class: a report,
/// not a constraint.
#[derive(Debug, Clone)]
pub struct SmoothingGauge {
    pub orders: Vec<i32>,
    pub values: Vec<f64>,
    pub spatial: Option<Vec<((i32, i32), f64)>>,
    /// (1 + k_band^2)^m, the band-limit growth at each order; `values[i]`
    /// staying far below `band_limit[i] * values_at_0` certifies smoothing.
    pub band_limit: Vec<f64>,
}

impl SmoothingGauge {
    /// Gauge value at order m divided by the band-limit growth, normalized so
    /// order 0 gives 1 when values[0] != 0. Decay of this ratio across the
    /// ladder is the smoothing certificate.
    pub fn normalized(&self) -> Vec<f64> {
        let v0 = self.values.first().copied().unwrap_or(0.0);
        if v0 == 0.0 {
            return vec![0.0; self.values.len()];
        }
        self.values
            .iter()
            .zip(self.band_limit.iter())
            .map(|(&v, &b)| v / (b * v0))
            .collect()
    }

    pub fn value_at(&self, m: i32) -> Option<f64> {
        self.orders.iter().position(|&o| o == m).map(|i| self.values[i])
    }
}

/// Diagonal-in-Fourier Sobolev weight <D>^m with the flat reference metric.
pub fn sobolev_weight(grid: &SpatialGrid, m: f64) -> CMat {
    grid.fourier_multiplier(|k| Complex64::new((1.0 + k * k).powf(m / 2.0), 0.0))
}

/// Diagonal position weight <x̃>^k in the centered window coordinate.
pub fn position_weight(grid: &SpatialGrid, k: f64) -> CMat {
    let n = grid.n_points;
    let xc = grid.centered();
    let mut out = linalg::zeros(n);
    for j in 0..n {
        out[[j, j]] = Complex64::new((1.0 + xc[j] * xc[j]).powf(k / 2.0), 0.0);
    }
    out
}

/// || <D>^m A <D>^m || over the requested ladder. For 2N x 2N operators the
/// weights act block-diagonally.
pub fn smoothing_gauge(grid: &SpatialGrid, a: &CMat, orders: &[i32]) -> SmoothingGauge {
    smoothing_gauge_spatial(grid, a, orders, &[])
}

pub fn smoothing_gauge_spatial(
    grid: &SpatialGrid,
    a: &CMat,
    orders: &[i32],
    spatial_orders: &[(i32, i32)],
) -> SmoothingGauge {
    let blocks = a.nrows() / grid.n_points;
    assert!(blocks * grid.n_points == a.nrows(), "operator size incompatible with grid");
    let lift = |w: &CMat| -> CMat {
        if blocks == 1 {
            w.clone()
        } else {
            linalg::block_diag2(w, w)
        }
    };
    let kb = grid.k_band();
    let mut values = Vec::new();
    let mut band = Vec::new();
    for &m in orders {
        let w = lift(&sobolev_weight(grid, m as f64));
        values.push(linalg::op_norm(&w.dot(a).dot(&w)));
        band.push((1.0 + kb * kb).powi(m));
    }
    let spatial = if spatial_orders.is_empty() {
        None
    } else {
        Some(
            spatial_orders
                .iter()
                .map(|&(m, k)| {
                    let wd = lift(&sobolev_weight(grid, m as f64));
                    let wx = lift(&position_weight(grid, k as f64));
                    let w = wd.dot(&wx);
                    ((m, k), linalg::op_norm(&w.dot(a).dot(&linalg::conj_transpose(&w).mapv(|z| z.conj()))))
                })
                .collect(),
        )
    };
    SmoothingGauge { orders: orders.to_vec(), values, spatial, band_limit: band }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn rand_mat(n: usize, seed: u64) -> CMat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn grid_points_and_wavenumbers() {
        let g = SpatialGrid::build(8, 2.0 * PI).unwrap();
        assert!((g.points[1] - PI / 4.0).abs() < 1e-15);
        assert!((g.points[7] - 7.0 * PI / 4.0).abs() < 1e-15);
        // FFT layout: 0,1,2,3,-4,-3,-2,-1
        let expect = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (k, e) in g.wavenumbers.iter().zip(expect.iter()) {
            assert!((k - e).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_spacing_and_kmax() {
        let g = SpatialGrid::build(16, 1.0).unwrap();
        assert!((g.spacing() - 1.0 / 16.0).abs() < 1e-16);
        let kmax = g.wavenumbers.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!((kmax - 16.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(SpatialGrid::build(6, 2.0 * PI).is_err());
        assert!(SpatialGrid::build(4, 2.0 * PI).is_err());
        assert!(SpatialGrid::build(8, -1.0).is_err());
    }

    #[test]
    fn fft_round_trip() {
        let g = SpatialGrid::build(64, 5.0).unwrap();
        let v: Vec<Complex64> =
            (0..64).map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.3).cos())).collect();
        let w = g.ifft(&g.fft(&v));
        let err: f64 = v
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale: f64 = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err / scale < 1e-12);
    }

    #[test]
    fn sobolev_weight_values() {
        let g = SpatialGrid::build(8, 2.0 * PI).unwrap();
        // m = 0 -> identity
        let w0 = sobolev_weight(&g, 0.0);
        assert!(linalg::max_abs(&(&w0 - &linalg::eye(8))) < 1e-12);
        // m = 2, k = 1 mode -> eigenvalue 2
        let w2 = sobolev_weight(&g, 2.0);
        let f = g.dft_matrix();
        let diag = f.dot(&w2).dot(&linalg::conj_transpose(&f));
        assert!((diag[[1, 1]] - Complex64::new(2.0, 0.0)).norm() < 1e-10);
        // m = -1, k = 3 -> 10^{-1/2}
        let wm = sobolev_weight(&g, -1.0);
        let diag = f.dot(&wm).dot(&linalg::conj_transpose(&f));
        assert!((diag[[3, 3]] - Complex64::new(10.0f64.powf(-0.5), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn sobolev_weights_invert() {
        let g = SpatialGrid::build(32, 3.0).unwrap();
        let p = sobolev_weight(&g, 1.7).dot(&sobolev_weight(&g, -1.7));
        assert!(linalg::max_abs(&(&p - &linalg::eye(32))) < 1e-12);
    }

    #[test]
    fn position_weight_values() {
        let g = SpatialGrid::build(8, 8.0).unwrap();
        let w0 = position_weight(&g, 0.0);
        assert!(linalg::max_abs(&(&w0 - &linalg::eye(8))) < 1e-14);
        // center point x = L/2 -> x̃ = 0 -> <0> = 1
        let w1 = position_weight(&g, 1.0);
        assert!((w1[[4, 4]] - ONE).norm() < 1e-14);
        // x̃ = 2 with k = 2 -> 1 + 4 = 5
        let w2 = position_weight(&g, 2.0);
        let j = g.centered().iter().position(|&x| (x - 2.0).abs() < 1e-12).unwrap();
        assert!((w2[[j, j]] - Complex64::new(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn weighted_adjoint_uniform_is_conjugate_transpose() {
        let g = SpatialGrid::build(16, 2.0 * PI).unwrap();
        let p = WeightedProduct::uniform(&g);
        let a = rand_mat(16, 7);
        let adj = p.adjoint(&a);
        assert!(linalg::max_abs(&(&adj - &linalg::conj_transpose(&a))) < 1e-13);
    }

    #[test]
    fn weighted_adjoint_single_entry() {
        // A with a single 1 at (row i, col j): A* = (d_i/d_j) at (j, i),
        // verified directly against <u, Av> = <A*u, v>.
        let d = vec![2.0, 3.0, 5.0, 7.0, 1.0, 1.0, 1.0, 1.0];
        let p = WeightedProduct::new(d.clone()).unwrap();
        let mut a = linalg::zeros(8);
        a[[0, 1]] = ONE;
        let adj = p.adjoint(&a);
        assert!((adj[[1, 0]] - Complex64::new(d[0] / d[1], 0.0)).norm() < 1e-14);
        let off = adj.iter().map(|z| z.norm()).sum::<f64>() - d[0] / d[1];
        assert!(off.abs() < 1e-14, "exactly one nonzero entry expected");
    }

    #[test]
    fn weighted_adjoint_involution_and_product_rule() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let d: Vec<f64> = (0..16).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let p = WeightedProduct::new(d).unwrap();
        let a = rand_mat(16, 1);
        let b = rand_mat(16, 2);
        let adj_adj = p.adjoint(&p.adjoint(&a));
        assert!(linalg::max_abs(&(&adj_adj - &a)) < 1e-12);
        let lhs = p.adjoint(&a.dot(&b));
        let rhs = p.adjoint(&b).dot(&p.adjoint(&a));
        assert!(linalg::max_abs(&(&lhs - &rhs)) < 1e-12);
    }

    #[test]
    fn adjoint_is_adjoint_for_inner_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d: Vec<f64> = (0..8).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let p = WeightedProduct::new(d).unwrap();
        let a = rand_mat(8, 5);
        let u: Vec<Complex64> =
            (0..8).map(|_| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let v: Vec<Complex64> =
            (0..8).map(|_| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let au: Vec<Complex64> = {
            let m = ndarray::Array1::from_vec(u.clone());
            a.dot(&m).to_vec()
        };
        let adj_v: Vec<Complex64> = {
            let m = ndarray::Array1::from_vec(v.clone());
            p.adjoint(&a).dot(&m).to_vec()
        };
        let lhs = p.inner(&au, &v);
        let rhs = p.inner(&u, &adj_v);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn smoothing_gauge_of_zero_is_zero() {
        let g = SpatialGrid::build(16, 2.0 * PI).unwrap();
        let gauge = smoothing_gauge(&g, &linalg::zeros(16), &[0, 1, 2]);
        assert!(gauge.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothing_gauge_identity_and_projector() {
        let g = SpatialGrid::build(8, 2.0 * PI).unwrap();
        // identity at m=1: norm = sup_k (1+k^2) >= 2 (attained well above 2 here)
        let gauge = smoothing_gauge(&g, &linalg::eye(8), &[1]);
        assert!(gauge.values[0] >= 2.0);
        // projector onto k=0 mode: weight is 1 there for every m
        let f = g.dft_matrix();
        let mut pi0 = linalg::zeros(8);
        pi0[[0, 0]] = ONE;
        let proj = linalg::conj_transpose(&f).dot(&pi0).dot(&f);
        let gauge = smoothing_gauge(&g, &proj, &[0, 1, 3]);
        for v in gauge.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn smoothing_gauge_inverse_fourth_power() {
        let g = SpatialGrid::build(16, 2.0 * PI).unwrap();
        let a = sobolev_weight(&g, -4.0);
        let gauge = smoothing_gauge(&g, &a, &[1]);
        // <D>^1 <D>^{-4} <D>^1 = <D>^{-2}: sup_k (1+k^2)^{-1} = 1 at k=0
        assert!((gauge.values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_fn_respects_weighted_product() {
        let g = SpatialGrid::build(16, 2.0 * PI).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d: Vec<f64> = (0..16).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let p = Arc::new(WeightedProduct::new(d).unwrap());
        // product-Hermitian SPD operator: A = B* B + 1 (B random)
        let b = rand_mat(16, 9);
        let a = p.adjoint(&b).dot(&b) + &linalg::eye(16);
        let om = OperatorMatrix::new(a.clone(), p.clone());
        assert!(om.self_adjoint_defect() < 1e-12);
        let r = om.sqrt().unwrap();
        let rr = r.entries.dot(&r.entries);
        assert!(linalg::op_norm(&(&rr - &a)) < 1e-10 * linalg::op_norm(&a));
    }

    #[test]
    fn floor_spectrum_hard_floor() {
        let g = SpatialGrid::build(8, 2.0 * PI).unwrap();
        let p = Arc::new(WeightedProduct::uniform(&g));
        let mut a = linalg::zeros(8);
        let diag = [0.1, 2.0, 5.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        for (j, &v) in diag.iter().enumerate() {
            a[[j, j]] = Complex64::new(v, 0.0);
        }
        let om = OperatorMatrix::new(a, p);
        let (floored, modification) = om.floor_spectrum(1.0).unwrap();
        let eigs = floored.eigenvalues().unwrap();
        assert!(eigs.iter().all(|&w| w >= 1.0 - 1e-12));
        assert!((modification - 0.9).abs() < 1e-12);
        // untouched spectrum stays put
        let (same, m0) = floored.floor_spectrum(0.5).unwrap();
        assert!(m0 == 0.0);
        assert!(linalg::op_norm(&(&same.entries - &floored.entries)) < 1e-12);
    }
}
