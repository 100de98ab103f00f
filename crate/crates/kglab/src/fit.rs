//! Log-log decay-rate fits for scattering and residual diagnostics.

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    /// exponent p in value ~ C <t>^{-p} (positive = decay)
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of log(value) against log(t); returns the decay
/// exponent (positive when the values fall). Points with non-positive value
/// or t are skipped; needs at least two usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<FitResult> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(t, v)| t > 0.0 && v > 0.0)
        .map(|&(t, v)| (t.ln(), v.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = usable.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = usable.iter().map(|p| (p.1 - (a + b * p.0)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(FitResult { slope: -b, intercept: a, r_squared: r2 })
}
