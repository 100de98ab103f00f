//! Metric scenarios, reduction to the model wave operator, and the geometric
//! checks: ray-tracing non-trapping, flow straightening of the shift, the
//! conformal rescaling of the lapse, and asymptotic positivity.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::KgError;
use crate::family::{FamilyMeta, OperatorFamily};
use crate::grid::{OperatorMatrix, SpatialGrid, WeightedProduct};
use crate::linalg::{self, CMat};
use crate::timeline::{fd4_weights, TimeGrid};

// ---------------------------------------------------------------------------
// scalar fields (t, x) -> R with analytic derivatives
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum TimeProfile {
    One,
    /// sech(t/scale)
    Sech { scale: f64 },
    /// sech^2(t/scale)
    SechSq { scale: f64 },
    /// (1 + (t/scale)^2)^(-delta/2)
    PolyTail { delta: f64, scale: f64 },
    /// exp(-(t/scale)^2)
    Gaussian { scale: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::One => 1.0,
            TimeProfile::Sech { scale } => 1.0 / (t / scale).cosh(),
            TimeProfile::SechSq { scale } => {
                let s = 1.0 / (t / scale).cosh();
                s * s
            }
            TimeProfile::PolyTail { delta, scale } => {
                (1.0 + (t / scale).powi(2)).powf(-delta / 2.0)
            }
            TimeProfile::Gaussian { scale } => (-(t / scale).powi(2)).exp(),
        }
    }

    pub fn dt(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::One => 0.0,
            TimeProfile::Sech { scale } => {
                let u = t / scale;
                -u.tanh() / u.cosh() / scale
            }
            TimeProfile::SechSq { scale } => {
                let u = t / scale;
                let s = 1.0 / u.cosh();
                -2.0 * s * s * u.tanh() / scale
            }
            TimeProfile::PolyTail { delta, scale } => {
                let u = t / scale;
                -delta * u / scale * (1.0 + u * u).powf(-delta / 2.0 - 1.0)
            }
            TimeProfile::Gaussian { scale } => {
                let u = t / scale;
                -2.0 * u / scale * (-u * u).exp()
            }
        }
    }

    /// limit t -> +-infinity
    pub fn asymptote(&self) -> f64 {
        match *self {
            TimeProfile::One => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum SpaceProfile {
    One,
    /// cos(2 pi mode x / L)
    CosMode { mode: i32 },
    /// exp(-(x̃/width)^2) in the centered window coordinate x̃ = x - L/2
    GaussWindow { width: f64 },
    /// (1 + (x̃/width)^2)^(-power/2)
    LorentzWindow { power: f64, width: f64 },
}

impl SpaceProfile {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        let xc = x - length / 2.0;
        match *self {
            SpaceProfile::One => 1.0,
            SpaceProfile::CosMode { mode } => (2.0 * PI * mode as f64 * x / length).cos(),
            SpaceProfile::GaussWindow { width } => (-(xc / width).powi(2)).exp(),
            SpaceProfile::LorentzWindow { power, width } => {
                (1.0 + (xc / width).powi(2)).powf(-power / 2.0)
            }
        }
    }

    pub fn dx(&self, x: f64, length: f64) -> f64 {
        let xc = x - length / 2.0;
        match *self {
            SpaceProfile::One => 0.0,
            SpaceProfile::CosMode { mode } => {
                let k = 2.0 * PI * mode as f64 / length;
                -k * (k * x).sin()
            }
            SpaceProfile::GaussWindow { width } => {
                -2.0 * xc / (width * width) * (-(xc / width).powi(2)).exp()
            }
            SpaceProfile::LorentzWindow { power, width } => {
                let u = xc / width;
                -power * u / width * (1.0 + u * u).powf(-power / 2.0 - 1.0)
            }
        }
    }

    pub fn d2x(&self, x: f64, length: f64) -> f64 {
        let xc = x - length / 2.0;
        match *self {
            SpaceProfile::One => 0.0,
            SpaceProfile::CosMode { mode } => {
                let k = 2.0 * PI * mode as f64 / length;
                -k * k * (k * x).cos()
            }
            SpaceProfile::GaussWindow { width } => {
                let w2 = width * width;
                let g = (-(xc * xc) / w2).exp();
                (4.0 * xc * xc / (w2 * w2) - 2.0 / w2) * g
            }
            SpaceProfile::LorentzWindow { power, width } => {
                let u = xc / width;
                let b = 1.0 + u * u;
                let p = power;
                (p * (p + 2.0) * u * u / b - p) / (width * width) * b.powf(-p / 2.0 - 1.0)
            }
        }
    }
}

/// Sampled field on a (time grid x spatial grid) lattice, produced by the
/// flow straightening; time derivatives are taken by 4th-order stencils.
#[derive(Debug, Clone)]
pub struct TabulatedField {
    pub tgrid: TimeGrid,
    pub values: Array2<f64>,
    pub asympt_out: Vec<f64>,
    pub asympt_in: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Field {
    Constant(f64),
    /// base + amp * time(t) * space(x)
    Separable { base: f64, amp: f64, time: TimeProfile, space: SpaceProfile },
    /// base + amp * (1 + (t^2 + x̃^2)/scale^2)^(-delta/2): joint space-time decay
    JointBump { base: f64, amp: f64, delta: f64, scale: f64 },
    /// exp(2 s0 tanh(t/tau)): uniform scale factor (FLRW-type)
    ExpScale { s0: f64, tau: f64 },
    Product(Box<Field>, Box<Field>),
    /// field^p (pointwise power; field must stay positive)
    Power(Box<Field>, f64),
    Tabulated(Arc<TabulatedField>),
}

impl Field {
    pub fn constant(v: f64) -> Self {
        Field::Constant(v)
    }

    pub fn eval(&self, t: f64, x: f64, length: f64) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Separable { base, amp, time, space } => {
                base + amp * time.eval(t) * space.eval(x, length)
            }
            Field::JointBump { base, amp, delta, scale } => {
                let xc = x - length / 2.0;
                base + amp * (1.0 + (t * t + xc * xc) / (scale * scale)).powf(-delta / 2.0)
            }
            Field::ExpScale { s0, tau } => (2.0 * s0 * (t / tau).tanh()).exp(),
            Field::Product(a, b) => a.eval(t, x, length) * b.eval(t, x, length),
            Field::Power(a, p) => a.eval(t, x, length).powf(*p),
            Field::Tabulated(tf) => {
                // nodes only in practice; nearest node lookup with linear blend
                let g = &tf.tgrid;
                let i = g.floor_index(t);
                let lam = ((t - g.time_at(i)) / g.dt).clamp(0.0, 1.0);
                let nx = tf.values.ncols();
                let j = ((x / length * nx as f64).round() as usize) % nx;
                (1.0 - lam) * tf.values[[i, j]] + lam * tf.values[[i + 1, j]]
            }
        }
    }

    pub fn dt(&self, t: f64, x: f64, length: f64) -> f64 {
        match self {
            Field::Constant(_) => 0.0,
            Field::Separable { amp, time, space, .. } => {
                amp * time.dt(t) * space.eval(x, length)
            }
            Field::JointBump { amp, delta, scale, .. } => {
                let xc = x - length / 2.0;
                let s2 = scale * scale;
                let b = 1.0 + (t * t + xc * xc) / s2;
                -amp * delta * t / s2 * b.powf(-delta / 2.0 - 1.0)
            }
            Field::ExpScale { s0, tau } => {
                let sech = 1.0 / (t / tau).cosh();
                2.0 * s0 / tau * sech * sech * self.eval(t, x, length)
            }
            Field::Product(a, b) => {
                a.dt(t, x, length) * b.eval(t, x, length)
                    + a.eval(t, x, length) * b.dt(t, x, length)
            }
            Field::Power(a, p) => {
                p * a.eval(t, x, length).powf(p - 1.0) * a.dt(t, x, length)
            }
            Field::Tabulated(tf) => {
                let g = &tf.tgrid;
                let i = g.floor_index(t);
                let nx = tf.values.ncols();
                let j = ((x / length * nx as f64).round() as usize) % nx;
                let col: Vec<f64> = (0..g.n).map(|r| tf.values[[r, j]]).collect();
                fd4_weights(i, g.n, g.dt).iter().map(|&(r, w)| w * col[r]).sum()
            }
        }
    }

    pub fn dx(&self, t: f64, x: f64, length: f64) -> f64 {
        match self {
            Field::Constant(_) => 0.0,
            Field::Separable { amp, time, space, .. } => {
                amp * time.eval(t) * space.dx(x, length)
            }
            Field::JointBump { amp, delta, scale, .. } => {
                let xc = x - length / 2.0;
                let s2 = scale * scale;
                let b = 1.0 + (t * t + xc * xc) / s2;
                -amp * delta * xc / s2 * b.powf(-delta / 2.0 - 1.0)
            }
            Field::ExpScale { .. } => 0.0,
            Field::Product(a, b) => {
                a.dx(t, x, length) * b.eval(t, x, length)
                    + a.eval(t, x, length) * b.dx(t, x, length)
            }
            Field::Power(a, p) => {
                p * a.eval(t, x, length).powf(p - 1.0) * a.dx(t, x, length)
            }
            Field::Tabulated(_) => {
                unimplemented!("tabulated fields are sampled on grid nodes; use spectral derivatives")
            }
        }
    }

    pub fn d2x(&self, t: f64, x: f64, length: f64) -> f64 {
        match self {
            Field::Constant(_) => 0.0,
            Field::Separable { amp, time, space, .. } => {
                amp * time.eval(t) * space.d2x(x, length)
            }
            Field::ExpScale { .. } => 0.0,
            Field::Product(a, b) => {
                a.d2x(t, x, length) * b.eval(t, x, length)
                    + 2.0 * a.dx(t, x, length) * b.dx(t, x, length)
                    + a.eval(t, x, length) * b.d2x(t, x, length)
            }
            Field::Power(a, p) => {
                let v = a.eval(t, x, length);
                let d1 = a.dx(t, x, length);
                let d2 = a.d2x(t, x, length);
                p * (p - 1.0) * v.powf(p - 2.0) * d1 * d1 + p * v.powf(p - 1.0) * d2
            }
            _ => {
                // central difference fallback for shapes without closed form
                let h = 1e-5 * length;
                (self.dx(t, x + h, length) - self.dx(t, x - h, length)) / (2.0 * h)
            }
        }
    }

    /// Value in the limit t -> +infinity (dir = +1) or t -> -infinity (-1).
    pub fn asymptote(&self, dir: i8, x: f64, length: f64) -> f64 {
        match self {
            Field::Constant(v) => *v,
            Field::Separable { base, amp, time, space } => {
                base + amp * time.asymptote() * space.eval(x, length)
            }
            Field::JointBump { base, .. } => *base,
            Field::ExpScale { s0, .. } => (2.0 * s0 * dir as f64).exp(),
            Field::Product(a, b) => {
                a.asymptote(dir, x, length) * b.asymptote(dir, x, length)
            }
            Field::Power(a, p) => a.asymptote(dir, x, length).powf(*p),
            Field::Tabulated(tf) => {
                let nx = tf.values.ncols();
                let j = ((x / length * nx as f64).round() as usize) % nx;
                if dir > 0 {
                    tf.asympt_out[j]
                } else {
                    tf.asympt_in[j]
                }
            }
        }
    }

    pub fn is_identically(&self, v: f64) -> bool {
        match self {
            Field::Constant(c) => *c == v,
            Field::Separable { base, amp, .. } => *base == v && *amp == 0.0,
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// metric scenarios
// ---------------------------------------------------------------------------

/// Declarative description of the metric data
/// g = -c^2 dt^2 + (dx + b dt) h (dx + b dt) and the potential V, with the
/// declared decay exponents of the asymptotically static hypothesis.
#[derive(Debug, Clone)]
pub struct MetricScenario {
    pub name: String,
    /// spacetime dimension n = 1 + d; curvature terms vanish identically at
    /// n = 2, which is the only dimension the pipeline propagates
    pub dim_n: usize,
    pub h: Field,
    pub c: Field,
    pub b: Field,
    pub v: Field,
    /// time-decay exponent of h, c, V toward their asymptotic profiles
    pub delta: f64,
    /// shift decay exponent; must exceed 1 for the flow straightening
    pub mu_prime: f64,
    /// lower bound required of the asymptotic Klein-Gordon operators
    pub mass_floor: f64,
    /// whether the scenario decays jointly in (t, x) (hypothesis std proxy)
    pub std_tagged: bool,
}

impl MetricScenario {
    pub fn is_model_form(&self) -> bool {
        self.b.is_identically(0.0) && self.c.is_identically(1.0)
    }

    /// Numeric sanity of the declared invariants on a sampling window.
    pub fn validate(&self, grid: &SpatialGrid, tgrid: &TimeGrid) -> Result<(), KgError> {
        let l = grid.length;
        let mut violations = Vec::new();
        for &t in &tgrid.times() {
            for &x in &grid.points {
                let h = self.h.eval(t, x, l);
                let c = self.c.eval(t, x, l);
                if !(h > 0.0) || !h.is_finite() {
                    violations.push(format!("h({t:.2},{x:.2}) = {h} not positive"));
                }
                if !(c > 0.0) || !c.is_finite() {
                    violations.push(format!("c({t:.2},{x:.2}) = {c} not positive"));
                }
                if violations.len() > 4 {
                    break;
                }
            }
        }
        // decay envelopes: sup over window of |f - f_asympt| * <t>^delta finite
        // (checked as: envelope at the window edge below 10x envelope at t=0)
        let envelope = |f: &Field, dir: i8, delta: f64| -> f64 {
            tgrid
                .times()
                .iter()
                .filter(|&&t| (dir as f64) * t >= 0.0)
                .map(|&t| {
                    grid.points
                        .iter()
                        .map(|&x| {
                            (f.eval(t, x, l) - f.asymptote(dir, x, l)).abs()
                                * (1.0 + t * t).powf(delta / 2.0)
                        })
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        };
        for (nm, f) in [("h", &self.h), ("c", &self.c), ("V", &self.v)] {
            for dir in [1i8, -1] {
                let c = envelope(f, dir, self.delta);
                if !c.is_finite() {
                    violations.push(format!("{nm} decay envelope (dir {dir}) diverges"));
                }
            }
        }
        let cb = envelope(&self.b, 1, self.mu_prime).max(envelope(&self.b, -1, self.mu_prime));
        if !cb.is_finite() {
            violations.push("b decay envelope diverges".into());
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(KgError::Scenario(violations.join("; ")))
        }
    }
}

// ---------------------------------------------------------------------------
// model operator assembly
// ---------------------------------------------------------------------------

/// Assembled model data: a(t) spatial operators, the friction term r(t), the
/// asymptotic operators and the per-slice weighted products.
#[derive(Debug, Clone)]
pub struct ModelOperatorData {
    pub grid: SpatialGrid,
    pub a: OperatorFamily,
    /// r(t) as diagonal multiplication operators
    pub r: OperatorFamily,
    pub a_out: OperatorMatrix,
    pub a_in: OperatorMatrix,
    pub densities: Vec<Arc<WeightedProduct>>,
    pub density_out: Arc<WeightedProduct>,
    pub density_in: Arc<WeightedProduct>,
    pub symmetrization_defect: f64,
    pub delta: f64,
    pub std_tagged: bool,
    pub mass_floor: f64,
}

/// a = -h^{-1/2} d/dx (h^{-1/2} d/dx .) + V as a dense matrix, self-adjoint
/// for the density h^{1/2} dx.
fn assemble_spatial(
    grid: &SpatialGrid,
    dx_mat: &CMat,
    h_samples: &[f64],
    v_samples: &[f64],
) -> CMat {
    let n = grid.n_points;
    let mut lhs = dx_mat.clone();
    // M_{h^{-1/2}} Dx
    for (i, mut row) in lhs.rows_mut().into_iter().enumerate() {
        let s = h_samples[i].sqrt().recip();
        for z in row.iter_mut() {
            *z *= s;
        }
    }
    let mut out = linalg::zeros(n);
    ndarray::linalg::general_mat_mul(
        Complex64::new(-1.0, 0.0),
        &lhs,
        &lhs,
        Complex64::new(0.0, 0.0),
        &mut out,
    );
    for j in 0..n {
        out[[j, j]] += Complex64::new(v_samples[j], 0.0);
    }
    out
}

pub fn assemble_model(
    scenario: &MetricScenario,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> Result<ModelOperatorData, KgError> {
    if !scenario.is_model_form() {
        return Err(KgError::Scenario(format!(
            "scenario '{}' has nontrivial shift or lapse; apply flow_straighten / conformal_reduce first",
            scenario.name
        )));
    }
    let l = grid.length;
    let n = grid.n_points;
    let dx_mat = grid.derivative_matrix();

    let sample =
        |f: &Field, t: f64| -> Vec<f64> { grid.points.iter().map(|&x| f.eval(t, x, l)).collect() };

    let mut slices = Vec::with_capacity(tgrid.n);
    let mut r_slices = Vec::with_capacity(tgrid.n);
    let mut densities: Vec<Arc<WeightedProduct>> = Vec::with_capacity(tgrid.n);
    let mut sym_defect = 0.0f64;

    for &t in &tgrid.times() {
        let h = sample(&scenario.h, t);
        let v = sample(&scenario.v, t);
        let sqrt_h: Vec<f64> = h.iter().map(|&x| x.sqrt()).collect();
        let prod = Arc::new(WeightedProduct::from_sqrt_h(grid, &sqrt_h)?);
        let raw = assemble_spatial(grid, &dx_mat, &h, &v);
        let om = OperatorMatrix::new(raw, prod.clone());
        sym_defect = sym_defect.max(om.self_adjoint_defect());
        slices.push(om.symmetrize().entries);

        // r = d/dt log |h|^{1/2} = h_t / (2h), analytic from the field
        let mut r_mat = linalg::zeros(n);
        for (j, &x) in grid.points.iter().enumerate() {
            let ht = scenario.h.dt(t, x, l);
            r_mat[[j, j]] = Complex64::new(ht / (2.0 * scenario.h.eval(t, x, l)), 0.0);
        }
        r_slices.push(r_mat);
        densities.push(prod);
    }

    let asympt = |dir: i8| -> Result<(OperatorMatrix, Arc<WeightedProduct>), KgError> {
        let h: Vec<f64> = grid.points.iter().map(|&x| scenario.h.asymptote(dir, x, l)).collect();
        let v: Vec<f64> = grid.points.iter().map(|&x| scenario.v.asymptote(dir, x, l)).collect();
        let sqrt_h: Vec<f64> = h.iter().map(|&x| x.sqrt()).collect();
        let prod = Arc::new(WeightedProduct::from_sqrt_h(grid, &sqrt_h)?);
        let raw = assemble_spatial(grid, &dx_mat, &h, &v);
        Ok((OperatorMatrix::new(raw, prod.clone()).symmetrize(), prod))
    };
    let (a_out, density_out) = asympt(1)?;
    let (a_in, density_in) = asympt(-1)?;

    for (label, a) in [("a_out", &a_out), ("a_in", &a_in)] {
        let min = a.min_eigenvalue()?;
        if min < scenario.mass_floor - 1e-10 {
            return Err(KgError::Scenario(format!(
                "{label} has minimal eigenvalue {min:.6e} below the mass floor {:.6e}",
                scenario.mass_floor
            )));
        }
    }

    let meta = FamilyMeta { order: 2.0, decay: -scenario.delta };
    Ok(ModelOperatorData {
        grid: grid.clone(),
        a: OperatorFamily::new(tgrid.clone(), slices, densities.clone(), meta),
        r: OperatorFamily::new(
            tgrid.clone(),
            r_slices,
            densities.clone(),
            FamilyMeta { order: 0.0, decay: -1.0 - scenario.delta },
        ),
        a_out,
        a_in,
        densities,
        density_out,
        density_in,
        symmetrization_defect: sym_defect,
        delta: scenario.delta,
        std_tagged: scenario.std_tagged,
        mass_floor: scenario.mass_floor,
    })
}

// ---------------------------------------------------------------------------
// conformal reduction (lapse removal)
// ---------------------------------------------------------------------------

/// Record of the multipliers used in the conformal rescaling; at n = 2 both
/// exponents vanish and the Cauchy-data conversion block is the identity.
#[derive(Debug, Clone)]
pub struct ConformalRecord {
    pub dim_n: usize,
    /// exponent of the field multiplier c^(n/2 - 1)
    pub field_exponent: f64,
    /// whether the Cauchy-data conversion block R(t) is exactly the identity
    pub data_block_is_identity: bool,
}

/// Remove a nontrivial lapse (b must already vanish). At n = 2 the scalar
/// curvature term in the transformed potential vanishes identically, so
/// h -> c^{-2} h and V -> c^2 V exactly.
pub fn conformal_reduce(
    scenario: &MetricScenario,
) -> Result<(MetricScenario, ConformalRecord), KgError> {
    if !scenario.b.is_identically(0.0) {
        return Err(KgError::Scenario(
            "conformal_reduce requires b = 0; run flow_straighten first".into(),
        ));
    }
    if scenario.dim_n != 2 {
        return Err(KgError::Scenario(format!(
            "conformal_reduce implements the n = 2 case; scenario has n = {}",
            scenario.dim_n
        )));
    }
    let record = ConformalRecord {
        dim_n: 2,
        field_exponent: 0.0,
        data_block_is_identity: true,
    };
    if scenario.c.is_identically(1.0) {
        return Ok((scenario.clone(), record));
    }
    let c2 = Field::Power(Box::new(scenario.c.clone()), 2.0);
    let c_m2 = Field::Power(Box::new(scenario.c.clone()), -2.0);
    let reduced = MetricScenario {
        name: format!("{}~conformal", scenario.name),
        dim_n: scenario.dim_n,
        h: Field::Product(Box::new(c_m2), Box::new(scenario.h.clone())),
        c: Field::Constant(1.0),
        b: Field::Constant(0.0),
        v: Field::Product(Box::new(c2), Box::new(scenario.v.clone())),
        delta: scenario.delta,
        mu_prime: scenario.mu_prime,
        mass_floor: scenario.mass_floor,
        std_tagged: scenario.std_tagged,
    };
    // reject if the reduced asymptotic potential dips below the mass floor
    let probe = SpatialGrid::build(64, 8.0).unwrap();
    for dir in [1i8, -1] {
        let min = probe
            .points
            .iter()
            .map(|&x| reduced.v.asymptote(dir, x, probe.length))
            .fold(f64::INFINITY, f64::min);
        if min < scenario.mass_floor - 1e-12 {
            return Err(KgError::Scenario(format!(
                "reduced asymptotic potential reaches {min:.6e}, below the mass floor {:.6e}",
                scenario.mass_floor
            )));
        }
    }
    Ok((reduced, record))
}

// ---------------------------------------------------------------------------
// flow straightening (shift removal)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FlowRecord {
    /// y(t_i, 0, x_j) on the (time x space) lattice
    pub flow: Array2<f64>,
    /// dy/dx along the flow (variational solution)
    pub jacobian: Array2<f64>,
    pub y_out: Vec<f64>,
    pub y_in: Vec<f64>,
    /// observed convergence rate of y(t) toward y_out (log-log slope)
    pub convergence_rate: Option<f64>,
    pub identity: bool,
}

/// Integrate dy/dt = b(t, y) with an RK4 stepper, together with the
/// variational equation for J = dy/dx.
fn integrate_flow(
    scenario: &MetricScenario,
    length: f64,
    x0: f64,
    t_from: f64,
    t_to: f64,
    step: f64,
    y0: f64,
    j0: f64,
) -> (f64, f64) {
    let nsteps = ((t_to - t_from).abs() / step).ceil().max(1.0) as usize;
    let h = (t_to - t_from) / nsteps as f64;
    let mut y = y0;
    let mut jac = j0;
    let _ = x0;
    let f = |t: f64, y: f64, j: f64| -> (f64, f64) {
        (scenario.b.eval(t, y, length), scenario.b.dx(t, y, length) * j)
    };
    let mut t = t_from;
    for _ in 0..nsteps {
        let (k1y, k1j) = f(t, y, jac);
        let (k2y, k2j) = f(t + h / 2.0, y + h / 2.0 * k1y, jac + h / 2.0 * k1j);
        let (k3y, k3j) = f(t + h / 2.0, y + h / 2.0 * k2y, jac + h / 2.0 * k2j);
        let (k4y, k4j) = f(t + h, y + h * k3y, jac + h * k3j);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        jac += h / 6.0 * (k1j + 2.0 * k2j + 2.0 * k3j + k4j);
        t += h;
    }
    (y, jac)
}

/// Remove the shift vector by pulling every field back along the flow of b.
/// Returns the reduced scenario (tabulated fields when b is nontrivial) and
/// the diffeomorphism record with its asymptotic limits.
pub fn flow_straighten(
    scenario: &MetricScenario,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
    ode_step: f64,
) -> Result<(MetricScenario, FlowRecord), KgError> {
    if scenario.mu_prime <= 1.0 {
        return Err(KgError::Scenario(format!(
            "flow_straighten requires shift decay mu' > 1, got {}",
            scenario.mu_prime
        )));
    }
    let l = grid.length;
    let n = grid.n_points;

    if scenario.b.is_identically(0.0) {
        let mut flow = Array2::zeros((tgrid.n, n));
        for (i, _t) in tgrid.times().iter().enumerate() {
            for (j, &x) in grid.points.iter().enumerate() {
                flow[[i, j]] = x;
            }
        }
        let record = FlowRecord {
            flow,
            jacobian: Array2::ones((tgrid.n, n)),
            y_out: grid.points.clone(),
            y_in: grid.points.clone(),
            convergence_rate: None,
            identity: true,
        };
        return Ok((scenario.clone(), record));
    }

    let times = tgrid.times();
    let i0 = times
        .iter()
        .position(|&t| t.abs() < tgrid.dt / 2.0)
        .ok_or_else(|| KgError::Scenario("time grid must contain t = 0".into()))?;

    let mut flow = Array2::zeros((tgrid.n, n));
    let mut jacobian = Array2::ones((tgrid.n, n));
    for (j, &x) in grid.points.iter().enumerate() {
        flow[[i0, j]] = x;
        // march forward from 0
        let (mut y, mut jc) = (x, 1.0);
        for i in i0 + 1..tgrid.n {
            let (yn, jn) =
                integrate_flow(scenario, l, x, times[i - 1], times[i], ode_step, y, jc);
            y = yn;
            jc = jn;
            flow[[i, j]] = y;
            jacobian[[i, j]] = jc;
        }
        // march backward from 0
        let (mut y, mut jc) = (x, 1.0);
        for i in (0..i0).rev() {
            let (yn, jn) =
                integrate_flow(scenario, l, x, times[i + 1], times[i], ode_step, y, jc);
            y = yn;
            jc = jn;
            flow[[i, j]] = y;
            jacobian[[i, j]] = jc;
        }
    }

    // injectivity on the grid: x -> y(t, x) strictly monotone (d = 1)
    for i in 0..tgrid.n {
        for j in 0..n {
            if jacobian[[i, j]] <= 0.0 {
                return Err(KgError::Scenario(format!(
                    "flow map loses injectivity at t = {:.3}, x index {j}",
                    times[i]
                )));
            }
        }
    }

    // asymptotic diffeomorphisms: continue the integration beyond the window
    // until the tail bound <t>^(1-mu') falls below tolerance
    let t_edge = times[tgrid.n - 1];
    let mut asympt = |dir: f64| -> (Vec<f64>, Vec<(f64, f64)>) {
        let mut ys: Vec<f64> = (0..n)
            .map(|j| flow[[if dir > 0.0 { tgrid.n - 1 } else { 0 }, j]])
            .collect();
        let mut jc: Vec<f64> = (0..n)
            .map(|j| jacobian[[if dir > 0.0 { tgrid.n - 1 } else { 0 }, j]])
            .collect();
        let mut history = Vec::new();
        let mut t = dir * t_edge.abs();
        let mut horizon = t_edge.abs().max(1.0);
        for _ in 0..24 {
            horizon *= 2.0;
            let t_next = dir * horizon;
            let mut max_move = 0.0f64;
            for j in 0..n {
                let (yn, jn) =
                    integrate_flow(scenario, l, 0.0, t, t_next, ode_step * 4.0, ys[j], jc[j]);
                max_move = max_move.max((yn - ys[j]).abs());
                ys[j] = yn;
                jc[j] = jn;
            }
            history.push((horizon, max_move));
            t = t_next;
            if max_move < 1e-12 {
                break;
            }
        }
        (ys, history)
    };
    let (y_out, hist_out) = asympt(1.0);
    let (y_in, _) = asympt(-1.0);

    let rate = crate::fit::loglog_slope(
        &hist_out
            .iter()
            .filter(|&&(_, d)| d > 1e-14)
            .map(|&(h, d)| (h, d))
            .collect::<Vec<_>>(),
    )
    .map(|f| f.slope);

    // pull back fields: f̂(t, x) = f(t, y(t,x)); ĥ additionally by J^2
    let tab = |f: &Field, with_jac: bool| -> Arc<TabulatedField> {
        let mut values = Array2::zeros((tgrid.n, n));
        for i in 0..tgrid.n {
            for j in 0..n {
                let y = flow[[i, j]];
                let mut v = f.eval(times[i], y, l);
                if with_jac {
                    v *= jacobian[[i, j]] * jacobian[[i, j]];
                }
                values[[i, j]] = v;
            }
        }
        let asy = |ys: &[f64], dir: i8| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let mut v = f.asymptote(dir, ys[j], l);
                    if with_jac {
                        // jacobian converges with the flow
                        let i = if dir > 0 { tgrid.n - 1 } else { 0 };
                        v *= jacobian[[i, j]] * jacobian[[i, j]];
                    }
                    v
                })
                .collect()
        };
        Arc::new(TabulatedField {
            tgrid: tgrid.clone(),
            values,
            asympt_out: asy(&y_out, 1),
            asympt_in: asy(&y_in, -1),
        })
    };

    let reduced = MetricScenario {
        name: format!("{}~straightened", scenario.name),
        dim_n: scenario.dim_n,
        h: Field::Tabulated(tab(&scenario.h, true)),
        c: if scenario.c.is_identically(1.0) {
            Field::Constant(1.0)
        } else {
            Field::Tabulated(tab(&scenario.c, false))
        },
        b: Field::Constant(0.0),
        v: Field::Tabulated(tab(&scenario.v, false)),
        delta: scenario.delta.min(scenario.mu_prime - 1.0),
        mu_prime: scenario.mu_prime,
        mass_floor: scenario.mass_floor,
        std_tagged: scenario.std_tagged,
    };
    let record = FlowRecord {
        flow,
        jacobian,
        y_out,
        y_in,
        convergence_rate: rate,
        identity: false,
    };
    Ok((reduced, record))
}

// ---------------------------------------------------------------------------
// non-trapping ray tracer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RayBox {
    pub t_center: f64,
    pub x_center: f64,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct NontrappingReport {
    pub trapped: bool,
    pub escape_times: Vec<Option<f64>>,
    /// affine-parameter budget the verdict is relative to
    pub budget: f64,
}

/// Integrate the Hamiltonian flow of p(y, xi) = xi . g^{-1}(y) xi for seeds
/// on the characteristic set p = 0, |xi| = 1; a ray is trapped when it stays
/// inside the box for the whole affine-parameter budget.
pub fn nontrapping_check(
    scenario: &MetricScenario,
    length: f64,
    ray_box: &RayBox,
    n_rays: usize,
    budget_factor: f64,
) -> Result<NontrappingReport, KgError> {
    let budget = budget_factor * ray_box.radius;
    let mut escape_times = Vec::with_capacity(2 * n_rays);
    let mut trapped_any = false;

    let ginv = |t: f64, x: f64| -> (f64, f64) {
        let c = scenario.c.eval(t, x, length);
        let h = scenario.h.eval(t, x, length);
        (-1.0 / (c * c), 1.0 / h)
    };
    let dginv = |t: f64, x: f64| -> (f64, f64, f64, f64) {
        // (d/dt, d/dx) of the two inverse-metric entries
        let c = scenario.c.eval(t, x, length);
        let h = scenario.h.eval(t, x, length);
        let ct = scenario.c.dt(t, x, length);
        let cx = scenario.c.dx(t, x, length);
        let ht = scenario.h.dt(t, x, length);
        let hx = scenario.h.dx(t, x, length);
        (2.0 * ct / (c * c * c), 2.0 * cx / (c * c * c), -ht / (h * h), -hx / (h * h))
    };

    for ray in 0..n_rays {
        let frac = (ray as f64 + 0.5) / n_rays as f64;
        let x0 = ray_box.x_center + (frac - 0.5) * ray_box.radius;
        let t0 = ray_box.t_center;
        for branch in [1.0f64, -1.0] {
            // seed on p = 0 with euclidean normalization |(tau, xi)| = 1
            let (gtt, gxx) = ginv(t0, x0);
            if !gtt.is_finite() || !gxx.is_finite() || gxx <= 0.0 {
                return Err(KgError::Scenario(format!(
                    "degenerate metric at seed {ray} (t={t0}, x={x0})"
                )));
            }
            // -tau^2/c^2 + xi^2/h = 0  =>  tau = (c/sqrt h) xi
            let ratio = ((-gxx) / gtt).sqrt(); // = c / sqrt(h)
            let xi0 = 1.0 / (1.0 + ratio * ratio).sqrt() * branch;
            let tau0 = ratio * xi0.abs();
            let mut state = [t0, x0, tau0, xi0];
            let mut s = 0.0;
            let mut escaped = None;
            let ds = 0.002 * ray_box.radius;
            while s < budget {
                // Hamilton: dy/ds = dp/dxi, dxi/ds = -dp/dy
                let rhs = |st: &[f64; 4]| -> Result<[f64; 4], KgError> {
                    let (gtt, gxx) = ginv(st[0], st[1]);
                    let (dt_gtt, dx_gtt, dt_gxx, dx_gxx) = dginv(st[0], st[1]);
                    if !gtt.is_finite() || !gxx.is_finite() {
                        return Err(KgError::Scenario(format!(
                            "step-size underflow near degenerate metric for seed {ray}"
                        )));
                    }
                    Ok([
                        2.0 * gtt * st[2],
                        2.0 * gxx * st[3],
                        -(dt_gtt * st[2] * st[2] + dt_gxx * st[3] * st[3]),
                        -(dx_gtt * st[2] * st[2] + dx_gxx * st[3] * st[3]),
                    ])
                };
                let k1 = rhs(&state)?;
                let advance = |st: &[f64; 4], k: &[f64; 4], f: f64| {
                    [st[0] + f * k[0], st[1] + f * k[1], st[2] + f * k[2], st[3] + f * k[3]]
                };
                let k2 = rhs(&advance(&state, &k1, ds / 2.0))?;
                let k3 = rhs(&advance(&state, &k2, ds / 2.0))?;
                let k4 = rhs(&advance(&state, &k3, ds))?;
                for i in 0..4 {
                    state[i] += ds / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                s += ds;
                let dt_off = (state[0] - ray_box.t_center).abs();
                let dx_off = (state[1] - ray_box.x_center).abs();
                if dt_off > ray_box.radius || dx_off > ray_box.radius {
                    escaped = Some((state[0] - t0).abs());
                    break;
                }
            }
            if escaped.is_none() {
                trapped_any = true;
            }
            escape_times.push(escaped);
        }
    }
    Ok(NontrappingReport { trapped: trapped_any, escape_times, budget })
}

// ---------------------------------------------------------------------------
// asymptotic positivity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PositivityReport {
    pub min_out: f64,
    pub min_in: f64,
    pub pass: bool,
}

/// Scalar curvature of the static warped Lorentzian metric
/// g = -c(x)^2 dt^2 + h(x) dx^2 + flat transverse, at n = 4.
pub fn warped_lorentzian_curvature_n4(c: f64, cx: f64, cxx: f64, h: f64, hx: f64) -> f64 {
    (-2.0 * h * cxx + cx * hx) / (c * h * h)
}

/// Scalar curvature of the Riemannian metric c^{-2}(h dx^2 + dy^2 + dz^2)
/// (d = 3) for x-dependent profiles.
pub fn warped_riemannian_curvature_d3(c: f64, cx: f64, cxx: f64, h: f64, hx: f64) -> f64 {
    2.0 * (2.0 * c * h * cxx - c * cx * hx - 3.0 * h * cx * cx) / (h * h)
}

/// Evaluate the asymptotic positivity expression
/// (n-2)/(4(n-1)) (R_{c^{-2}h} - c^2 R_g) + c^2 V on the out/in profiles.
pub fn positivity_check(
    scenario: &MetricScenario,
    grid: &SpatialGrid,
) -> Result<PositivityReport, KgError> {
    let l = grid.length;
    let value = |dir: i8, x: f64| -> Result<f64, KgError> {
        let c = scenario.c.asymptote(dir, x, l);
        let v = scenario.v.asymptote(dir, x, l);
        match scenario.dim_n {
            2 => Ok(c * c * v),
            4 => {
                // static profiles: use the t -> +-infinity fields frozen at a
                // large |t| sample for derivatives (profiles are x-functions)
                let t_frozen = dir as f64 * 1e8;
                let cx = scenario.c.dx(t_frozen, x, l);
                let cxx = scenario.c.d2x(t_frozen, x, l);
                let h = scenario.h.asymptote(dir, x, l);
                let hx = scenario.h.dx(t_frozen, x, l);
                let rg = warped_lorentzian_curvature_n4(c, cx, cxx, h, hx);
                let rh = warped_riemannian_curvature_d3(c, cx, cxx, h, hx);
                Ok((4.0 - 2.0) / (4.0 * 3.0) * (rh - c * c * rg) + c * c * v)
            }
            n => Err(KgError::Scenario(format!("positivity check supports n = 2 or 4, got {n}"))),
        }
    };
    let scan = |dir: i8| -> Result<f64, KgError> {
        let mut min = f64::INFINITY;
        for &x in &grid.points {
            min = min.min(value(dir, x)?);
        }
        Ok(min)
    };
    let min_out = scan(1)?;
    let min_in = scan(-1)?;
    let floor = scenario.mass_floor;
    Ok(PositivityReport { min_out, min_in, pass: min_out >= floor && min_in >= floor })
}
