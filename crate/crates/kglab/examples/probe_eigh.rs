use kglab::linalg::{self, CMat};
use num_complex::Complex64;

fn main() {
    let a: CMat = ndarray::array![
        [Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.1)],
        [Complex64::new(0.5, -0.1), Complex64::new(3.0, 0.0)]
    ];
    let (vals, vecs) = linalg::eigh(&a).unwrap();
    println!("vals {:?}", vals);
    let d: Vec<Complex64> = vals.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    let re = linalg::rebuild(&vecs, &d);
    println!("rebuild error {:.3e}", linalg::max_abs(&(&re - &a)));
    let v0 = vecs.column(0).to_owned();
    let av = a.dot(&v0);
    let wv = v0.mapv(|z| z * vals[0]);
    println!("residual Av-wv {:.3e}", (&av - &wv).iter().map(|z| z.norm()).fold(0.0, f64::max));
}
