//! Uniform time grids, finite-difference stencils in t and cubic
//! interpolation of matrix-valued families between nodes.

use crate::linalg::CMat;
use num_complex::Complex64;

/// Uniform grid t_i = t0 + i dt, i = 0..n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Self {
        assert!(dt > 0.0 && n >= 2);
        Self { t0, dt, n }
    }

    /// Symmetric grid covering [-t_max, t_max] with at least the requested
    /// resolution (node count rounded up to keep dt <= dt_max).
    pub fn symmetric(t_max: f64, dt_max: f64) -> Self {
        let half = (t_max / dt_max).ceil() as usize;
        let n = 2 * half + 1;
        Self { t0: -t_max, dt: 2.0 * t_max / (n - 1) as f64, n }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.t0 + i as f64 * self.dt).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.n - 1) as f64 * self.dt
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 - 1e-9 * self.dt && t <= self.t_end() + 1e-9 * self.dt
    }

    /// Index of the last node <= t, clamped to [0, n-2].
    pub fn floor_index(&self, t: f64) -> usize {
        let i = ((t - self.t0) / self.dt).floor() as isize;
        i.clamp(0, self.n as isize - 2) as usize
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// 4th-order finite-difference derivative of a sampled family at node `i`,
/// centered where possible and one-sided at the ends.
pub fn fd4_weights(i: usize, n: usize, dt: f64) -> Vec<(usize, f64)> {
    assert!(n >= 5, "need at least 5 nodes for 4th-order stencils");
    let c = 1.0 / (12.0 * dt);
    if i >= 2 && i + 2 < n {
        vec![
            (i - 2, c),
            (i - 1, -8.0 * c),
            (i + 1, 8.0 * c),
            (i + 2, -c),
        ]
    } else if i < 2 {
        // forward one-sided 5-point stencils at offsets 0..=4 from base
        let base = i;
        let w: [f64; 5] = if i == 0 {
            [-25.0, 48.0, -36.0, 16.0, -3.0]
        } else {
            // i == 1: offsets -1..=3
            [-3.0, -10.0, 18.0, -6.0, 1.0]
        };
        let start = if i == 0 { 0 } else { base - 1 };
        w.iter().enumerate().map(|(j, &wj)| (start + j, wj / (12.0 * dt))).collect()
    } else {
        // mirror of the forward stencils
        let w: [f64; 5] = if i == n - 1 {
            [3.0, -16.0, 36.0, -48.0, 25.0]
        } else {
            // i == n - 2: offsets -3..=1
            [-1.0, 6.0, -18.0, 10.0, 3.0]
        };
        let start = if i == n - 1 { n - 5 } else { i - 3 };
        w.iter().enumerate().map(|(j, &wj)| (start + j, wj / (12.0 * dt))).collect()
    }
}

/// Bitwise check that every slice equals the first one (static scenarios
/// assemble identical slices, so exact equality is the right test).
pub fn family_is_constant(slices: &[CMat]) -> bool {
    slices.iter().skip(1).all(|s| s == &slices[0])
}

/// d/dt of a family of matrices sampled on a uniform grid. A constant family
/// returns exact zeros so static data stays exactly static under repeated
/// differentiation.
pub fn fd4_derivative(slices: &[CMat], dt: f64) -> Vec<CMat> {
    let n = slices.len();
    if family_is_constant(slices) {
        return slices.iter().map(|s| s.mapv(|_| Complex64::new(0.0, 0.0))).collect();
    }
    (0..n)
        .map(|i| {
            let mut out = slices[0].mapv(|_| Complex64::new(0.0, 0.0));
            for (j, w) in fd4_weights(i, n, dt) {
                out.scaled_add(Complex64::new(w, 0.0), &slices[j]);
            }
            out
        })
        .collect()
}

/// Cubic (4-point Lagrange) interpolation of a matrix family at time t.
/// Falls back to the available points near the ends.
pub fn interp_cubic(grid: &TimeGrid, slices: &[CMat], t: f64) -> CMat {
    let n = slices.len();
    debug_assert_eq!(n, grid.n);
    if n == 1 {
        return slices[0].clone();
    }
    let i = grid.floor_index(t);
    let i0 = i.saturating_sub(1).min(n.saturating_sub(4));
    let count = 4.min(n);
    let mut out = slices[0].mapv(|_| Complex64::new(0.0, 0.0));
    for a in 0..count {
        let ja = i0 + a;
        let mut w = 1.0;
        for b in 0..count {
            if a == b {
                continue;
            }
            let jb = i0 + b;
            w *= (t - grid.time_at(jb)) / (grid.time_at(ja) - grid.time_at(jb));
        }
        out.scaled_add(Complex64::new(w, 0.0), &slices[ja]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn scalar_family(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Vec<CMat> {
        grid.times()
            .iter()
            .map(|&t| Array2::from_elem((1, 1), Complex64::new(f(t), 0.0)))
            .collect()
    }

    #[test]
    fn fd4_exact_on_quartics() {
        let grid = TimeGrid::new(0.0, 0.1, 12);
        let fam = scalar_family(&grid, |t| 1.0 + t + t.powi(2) - 0.5 * t.powi(3) + t.powi(4));
        let der = fd4_derivative(&fam, grid.dt);
        for (i, &t) in grid.times().iter().enumerate() {
            let exact = 1.0 + 2.0 * t - 1.5 * t * t + 4.0 * t.powi(3);
            assert!(
                (der[i][[0, 0]].re - exact).abs() < 1e-10,
                "node {i}: {} vs {exact}",
                der[i][[0, 0]].re
            );
        }
    }

    #[test]
    fn fd4_convergence_order() {
        let err = |dt: f64| {
            let n = (1.0 / dt) as usize + 1;
            let grid = TimeGrid::new(0.0, dt, n);
            let fam = scalar_family(&grid, |t| (3.0 * t).sin());
            let der = fd4_derivative(&fam, grid.dt);
            grid.times()
                .iter()
                .enumerate()
                .map(|(i, &t)| (der[i][[0, 0]].re - 3.0 * (3.0 * t).cos()).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err(0.02);
        let e2 = err(0.01);
        let order = (e1 / e2).log2();
        assert!(order > 3.7, "observed order {order}");
    }

    #[test]
    fn cubic_interp_reproduces_cubics() {
        let grid = TimeGrid::new(-1.0, 0.25, 9);
        let fam = scalar_family(&grid, |t| 2.0 - t + 0.3 * t.powi(2) + 0.7 * t.powi(3));
        for &t in &[-0.93, -0.4, 0.11, 0.62, 0.99] {
            let v = interp_cubic(&grid, &fam, t)[[0, 0]].re;
            let exact = 2.0 - t + 0.3 * t * t + 0.7 * t.powi(3);
            assert!((v - exact).abs() < 1e-12);
        }
    }
}
