use kglab::diagonalize::riccati_solve;
use kglab::geometry::assemble_model;
use kglab::grid::SpatialGrid;
use kglab::linalg::{self};
use kglab::presets;
use kglab::timeline::TimeGrid;

fn main() {
    let grid = SpatialGrid::build(32, 2.0 * std::f64::consts::PI).unwrap();
    let tg = TimeGrid::symmetric(4.0, 0.05);
    let model = assemble_model(&presets::sech_td(1.0, 0.4, 0.2), &grid, &tg).unwrap();
    let f = grid.dft_matrix();
    let fh = linalg::conj_transpose(&f);
    let i0 = tg.n / 2;
    for p in 0..=4 {
        let sol = riccati_solve(&model, p, 0.5, 0.25).unwrap();
        let r = &sol.residual_plus.slices[i0];
        let rf = f.dot(r).dot(&fh);
        // row sup by |k|
        let prof: Vec<f64> = (0..32)
            .map(|i| (0..32).map(|j| rf[[i, j]].norm()).fold(0.0, f64::max))
            .collect();
        println!(
            "p={p} diverged={} |r|_0={:.3e}  rows k=0,1,2,8,14,15,16(ny) = {:.1e} {:.1e} {:.1e} {:.1e} {:.1e} {:.1e} {:.1e}",
            sol.diverged,
            linalg::op_norm(r),
            prof[0], prof[1], prof[2], prof[8], prof[14], prof[15], prof[16]
        );
    }
}
