// error profile of the factorization identity vs node and dt
use kglab::diagonalize::riccati_solve;
use kglab::geometry::assemble_model;
use kglab::grid::SpatialGrid;
use kglab::linalg::{self};
use kglab::presets;
use kglab::timeline::{fd4_weights, TimeGrid};
use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn main() {
    let grid = SpatialGrid::build(32, 2.0 * std::f64::consts::PI).unwrap();
    for dt in [0.02f64, 0.01, 0.005] {
        let tg = TimeGrid::symmetric(3.0, dt);
        let model = assemble_model(&presets::sech_td(1.0, 0.4, 0.2), &grid, &tg).unwrap();
        let sol = riccati_solve(&model, 3, 0.5, 0.25).unwrap();
        let n = grid.n_points;
        let nt = tg.n;
        let i_c = Complex64::new(0.0, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let f = grid.dft_matrix();
        let fh = linalg::conj_transpose(&f);
        let modes = [0usize, 1, 2, 30, 31];
        let coeffs: Vec<(usize, Complex64, f64)> = modes.iter().map(|&m| {
            (m, Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5), 3.0 * (rng.gen::<f64>() - 0.5))
        }).collect();
        let mut phi: Vec<Array1<Complex64>> = Vec::with_capacity(nt);
        for &t in &tg.times() {
            let mut hat = Array1::zeros(n);
            for &(m, c, nu) in &coeffs { hat[m] = c * Complex64::from_polar(1.0, nu * t); }
            phi.push(fh.dot(&hat));
        }
        let dmat = |v: &[Array1<Complex64>]| -> Vec<Array1<Complex64>> {
            (0..nt).map(|i| {
                let mut out = Array1::zeros(n);
                for (j, w) in fd4_weights(i, nt, tg.dt) { out = out + v[j].mapv(|z| z * Complex64::new(w, 0.0)); }
                out
            }).collect()
        };
        let dphi = dmat(&phi);
        let psi: Vec<Array1<Complex64>> = (0..nt).map(|i| &dphi[i] - &sol.b_plus.slices[i].dot(&phi[i]).mapv(|z| z * i_c)).collect();
        let dpsi = dmat(&psi);
        let lhs: Vec<Array1<Complex64>> = (0..nt).map(|i| {
            &dpsi[i] + &sol.b_plus.slices[i].dot(&psi[i]).mapv(|z| z * i_c) + &model.r.slices[i].dot(&psi[i])
        }).collect();
        let ddphi = dmat(&dphi);
        let rhs: Vec<Array1<Complex64>> = (0..nt).map(|i| {
            &(&ddphi[i] + &model.r.slices[i].dot(&dphi[i]) + &sol.a_floored.slices[i].dot(&phi[i])) - &sol.residual_plus.slices[i].dot(&phi[i])
        }).collect();
        let errs: Vec<f64> = (0..nt).map(|i| (&lhs[i] - &rhs[i]).iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
        let mid = nt / 2;
        println!("dt={dt}: err[8]={:.2e} err[mid]={:.2e} err[3nt/4]={:.2e} max_interior={:.2e}",
            errs[8], errs[mid], errs[3 * nt / 4],
            errs[8..nt-8].iter().cloned().fold(0.0, f64::max));
    }
}
