use kglab::diagonalize::riccati_solve;
use kglab::geometry::assemble_model;
use kglab::grid::SpatialGrid;
use kglab::linalg::{self};
use kglab::presets;
use kglab::timeline::{fd4_derivative, TimeGrid};
use num_complex::Complex64;

fn main() {
    let grid = SpatialGrid::build(32, 2.0 * std::f64::consts::PI).unwrap();
    for dt in [0.02f64, 0.005] {
        let tg = TimeGrid::symmetric(3.0, dt);
        let model = assemble_model(&presets::sech_td(1.0, 0.4, 0.2), &grid, &tg).unwrap();
        let sol = riccati_solve(&model, 3, 0.5, 0.25).unwrap();
        println!("dt={dt} gap_modification={:.3e}", sol.gap_modification);
        // smoothness probe of b: second differences at mid
        let nt = tg.n;
        let mid = nt / 2;
        let d2 = |s: &Vec<kglab::linalg::CMat>, i: usize| -> f64 {
            linalg::max_abs(&(&(&s[i + 1] + &s[i - 1]) - &s[i].mapv(|z| z * 2.0)))
        };
        println!("  second-diff b at mid: {:.3e} (expect ~b''*dt^2 = {:.1e})",
                 d2(&sol.b_plus.slices, mid), 0.4 * dt * dt);
        println!("  second-diff eps at mid: {:.3e}", d2(&sol.epsilon.slices, mid));
        // d/dt commutation: fd4(b) smooth?
        let db = fd4_derivative(&sol.b_plus.slices, tg.dt);
        println!("  second-diff db at mid: {:.3e}", d2(&db, mid));
        let _ = Complex64::new(0.0, 0.0);
    }
}
