//! Named scenario presets. Analytic shapes are selected by name with numeric
//! parameters; nothing is ever parsed as code.

use crate::geometry::{Field, MetricScenario, SpaceProfile, TimeProfile};

/// Flat static cylinder: h = 1, c = 1, b = 0, V = m^2.
pub fn static_flat(m2: f64) -> MetricScenario {
    MetricScenario {
        name: "static".into(),
        dim_n: 2,
        h: Field::Constant(1.0),
        c: Field::Constant(1.0),
        b: Field::Constant(0.0),
        v: Field::Constant(m2),
        delta: 2.0,
        mu_prime: 2.0,
        mass_floor: 0.5 * m2,
        std_tagged: true,
    }
}

/// Exponentially fast perturbation of potential and spatial metric
/// (hypothesis (td); the decay is faster than any polynomial rate):
/// h = 1 + amp_h sech(t) cos(2 pi x / L), V = m^2 + amp_v sech(t) cos(2 pi x / L).
pub fn sech_td(m2: f64, amp_v: f64, amp_h: f64) -> MetricScenario {
    MetricScenario {
        name: "sech-td".into(),
        dim_n: 2,
        h: Field::Separable {
            base: 1.0,
            amp: amp_h,
            time: TimeProfile::Sech { scale: 1.0 },
            space: SpaceProfile::CosMode { mode: 1 },
        },
        c: Field::Constant(1.0),
        b: Field::Constant(0.0),
        v: Field::Separable {
            base: m2,
            amp: amp_v,
            time: TimeProfile::Sech { scale: 1.0 },
            space: SpaceProfile::CosMode { mode: 1 },
        },
        delta: 2.0,
        mu_prime: 2.0,
        mass_floor: 0.5 * m2,
        std_tagged: false,
    }
}

/// Polynomially decaying perturbation with the declared rate delta
/// (hypothesis (td) with a clean power-law tail for decay-rate fits).
pub fn poly_td(m2: f64, amp_v: f64, amp_h: f64, delta: f64) -> MetricScenario {
    MetricScenario {
        name: "poly-td".into(),
        dim_n: 2,
        h: Field::Separable {
            base: 1.0,
            amp: amp_h,
            time: TimeProfile::PolyTail { delta, scale: 2.0 },
            space: SpaceProfile::CosMode { mode: 1 },
        },
        c: Field::Constant(1.0),
        b: Field::Constant(0.0),
        v: Field::Separable {
            base: m2,
            amp: amp_v,
            time: TimeProfile::PolyTail { delta, scale: 2.0 },
            space: SpaceProfile::CosMode { mode: 1 },
        },
        delta,
        mu_prime: 2.0,
        mass_floor: 0.5 * m2,
        std_tagged: false,
    }
}

/// Jointly (t, x)-decaying bump (hypothesis (std) proxy on the windowed
/// line); short-range when delta > 1.
pub fn std_joint(m2: f64, amp_v: f64, delta: f64, scale: f64) -> MetricScenario {
    MetricScenario {
        name: "std-joint".into(),
        dim_n: 2,
        h: Field::Constant(1.0),
        c: Field::Constant(1.0),
        b: Field::Constant(0.0),
        v: Field::JointBump { base: m2, amp: amp_v, delta, scale },
        delta,
        mu_prime: 2.0,
        mass_floor: 0.5 * m2,
        std_tagged: true,
    }
}

/// Uniform scale factor h = exp(2 s0 tanh(t/tau)) (FLRW-type); every Fourier
/// mode closes into a scalar Riccati equation, used as an oracle.
pub fn flrw(s0: f64, tau: f64, m2: f64) -> MetricScenario {
    MetricScenario {
        name: "flrw".into(),
        dim_n: 2,
        h: Field::ExpScale { s0, tau },
        c: Field::Constant(1.0),
        b: Field::Constant(0.0),
        v: Field::Constant(m2),
        delta: 2.0,
        mu_prime: 2.0,
        mass_floor: 0.25 * m2,
        std_tagged: false,
    }
}

/// Spatially uniform shift pulse b = beta sech^2(t); the flow is
/// y(t, 0, x) = x + beta tanh(t), an exact straightening oracle.
pub fn shift_sech(beta: f64, m2: f64) -> MetricScenario {
    MetricScenario {
        name: "shift-sech".into(),
        dim_n: 2,
        h: Field::Constant(1.0),
        c: Field::Constant(1.0),
        b: Field::Separable {
            base: 0.0,
            amp: beta,
            time: TimeProfile::SechSq { scale: 1.0 },
            space: SpaceProfile::One,
        },
        v: Field::Constant(m2),
        delta: 2.0,
        mu_prime: 2.0,
        mass_floor: 0.5 * m2,
        std_tagged: false,
    }
}

/// Static lapse well c = c(x) with V chosen so the conformally reduced
/// potential is exactly m^2.
pub fn lapse_well(m2: f64, depth: f64, width: f64) -> MetricScenario {
    let c = Field::Separable {
        base: 1.0,
        amp: depth,
        time: TimeProfile::One,
        space: SpaceProfile::GaussWindow { width },
    };
    MetricScenario {
        name: "lapse-well".into(),
        dim_n: 2,
        h: Field::Constant(1.0),
        c: c.clone(),
        b: Field::Constant(0.0),
        v: Field::Product(
            Box::new(Field::Power(Box::new(c), -2.0)),
            Box::new(Field::Constant(m2)),
        ),
        delta: 2.0,
        mu_prime: 2.0,
        mass_floor: 0.5 * m2,
        std_tagged: false,
    }
}

pub fn by_name(name: &str) -> Option<MetricScenario> {
    match name {
        "static" => Some(static_flat(1.0)),
        "sech-td" => Some(sech_td(1.0, 0.4, 0.2)),
        "poly-td" => Some(poly_td(1.0, 0.4, 0.2, 2.0)),
        "std-joint" => Some(std_joint(1.0, 0.5, 2.0, 2.0)),
        "flrw" => Some(flrw(0.3, 1.5, 1.0)),
        "shift-sech" => Some(shift_sech(0.35, 1.0)),
        "lapse-well" => Some(lapse_well(1.0, 0.3, 1.0)),
        _ => None,
    }
}

pub fn names() -> &'static [&'static str] {
    &["static", "sech-td", "poly-td", "std-joint", "flrw", "shift-sech", "lapse-well"]
}
