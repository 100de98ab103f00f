use kglab::diagonalize::riccati_solve;
use kglab::geometry::assemble_model;
use kglab::grid::SpatialGrid;
use kglab::linalg;
use kglab::presets;
use kglab::timeline::TimeGrid;

fn main() {
    let grid = SpatialGrid::build(32, 2.0 * std::f64::consts::PI).unwrap();
    let tg = TimeGrid::symmetric(2.0, 0.1);
    let model = assemble_model(&presets::static_flat(1.0), &grid, &tg).unwrap();
    for p in [0usize, 2, 4] {
        let sol = riccati_solve(&model, p, 0.5, 0.25).unwrap();
        let eps = &sol.epsilon.slices[0];
        let db = linalg::op_norm(&(&sol.b_plus.slices[3] - eps));
        let r0 = linalg::op_norm(&sol.residual_plus.slices[3]);
        println!("p={p} diverged={} |b-eps|={:.2e} |res|={:.2e} gapmod={:.2e}", sol.diverged, db, r0, sol.gap_modification);
    }
}
