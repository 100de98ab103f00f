use std::env;
use std::path::Path;

// netlib-src's `system` feature links `-lcblas`, which Debian does not ship as a
// separate library when OpenBLAS provides the CBLAS symbols. Shim it with a
// symlink inside OUT_DIR so the link line resolves against OpenBLAS.
fn main() {
    let out_dir = env::var("OUT_DIR").unwrap();
    let shim = Path::new(&out_dir).join("libcblas.so");
    if !shim.exists() {
        for candidate in [
            "/usr/lib/x86_64-linux-gnu/libopenblas.so",
            "/usr/lib/x86_64-linux-gnu/libblas.so",
            "/usr/lib/libopenblas.so",
        ] {
            if Path::new(candidate).exists() {
                #[cfg(unix)]
                std::os::unix::fs::symlink(candidate, &shim).ok();
                break;
            }
        }
    }
    println!("cargo:rustc-link-search=native={out_dir}");
}
