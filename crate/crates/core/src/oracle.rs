//! Navier series for the simply supported unit square with loads centred at
//! `(1/2, 1/2)`, and energy-norm errors derived from them.

use std::f64::consts::PI;

use thiserror::Error;

use crate::assembly::Solution;
use crate::element::{edge_quadrature, triangle_quadrature, QuadratureError};
use crate::model::Material;

/// Default truncation for pointwise double series.
pub const DEFAULT_TERMS: usize = 2000;
/// Default truncation for the single series at the plate centre.
pub const DEFAULT_MAX_TERMS: usize = 100;

/// Apery's constant `zeta(3)`.
const ZETA3: f64 = 1.202_056_903_159_594_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid series case: {0}")]
    InvalidCase(String),
    #[error("energy radicand {0:e} is negative; the solution does not match the problem")]
    NegativeRadicand(f64),
    #[error("point ({0}, {1}) lies outside the unit square")]
    OutsideSquare(f64, f64),
    #[error("at least one series term is required")]
    NoTerms,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Load carried by the centred Navier problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NavierLoad {
    /// Density `f0` on `[1/2 - c, 1/2 + c] x [1/2 - d, 1/2 + d]`.
    Square { c: f64, d: f64, f0: f64 },
    /// Density `g0` on the segment `x = 1/2`, `|y - 1/2| <= d`.
    Line { d: f64, g0: f64 },
    /// Force `f0` at the centre.
    Point { f0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavierCase {
    pub load: NavierLoad,
    pub material: Material,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    /// Upper bound on the magnitude of the neglected terms.
    pub tail_bound: f64,
}

/// `sin(k pi / 2)` without rounding noise.
fn half_sine(k: usize) -> f64 {
    match k % 4 {
        1 => 1.0,
        3 => -1.0,
        _ => 0.0,
    }
}

fn check_half_width(name: &str, v: f64) -> Result<(), OracleError> {
    if v > 0.0 && v <= 0.5 {
        Ok(())
    } else {
        Err(OracleError::InvalidCase(format!(
            "{name} must lie in (0, 1/2], got {v}"
        )))
    }
}

impl NavierCase {
    pub fn new(load: NavierLoad, material: Material) -> Result<Self, OracleError> {
        match load {
            NavierLoad::Square { c, d, .. } => {
                check_half_width("c", c)?;
                check_half_width("d", d)?;
            }
            NavierLoad::Line { d, .. } => check_half_width("d", d)?,
            NavierLoad::Point { .. } => {}
        }
        Ok(Self { load, material })
    }

    /// Prefactor `C` and per-index factors: the coefficient of
    /// `sin(m pi x) sin(n pi y)` is `C a_m b_n / (m^2 + n^2)^2`.
    fn factors(&self, terms: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let dd = self.material.bending_stiffness();
        let idx = 1..=terms;
        match self.load {
            NavierLoad::Point { f0 } => (
                4.0 * f0 / (dd * PI.powi(4)),
                idx.clone().map(half_sine).collect(),
                idx.map(half_sine).collect(),
            ),
            NavierLoad::Line { d, g0 } => (
                8.0 * g0 / (dd * PI.powi(5)),
                idx.clone().map(half_sine).collect(),
                idx.map(|n| half_sine(n) * (n as f64 * PI * d).sin() / n as f64)
                    .collect(),
            ),
            NavierLoad::Square { c, d, f0 } => (
                16.0 * f0 / (dd * PI.powi(6)),
                idx.clone()
                    .map(|m| half_sine(m) * (m as f64 * PI * c).sin() / m as f64)
                    .collect(),
                idx.map(|n| half_sine(n) * (n as f64 * PI * d).sin() / n as f64)
                    .collect(),
            ),
        }
    }
}

/// `sum_{max(m,n) > M} 1 / (m^2 + n^2)^2 <= pi / (4 (M - 1)^2)`, by comparing
/// each term with the integral over the unit cell below and to its left.
fn lattice_tail(terms: usize) -> f64 {
    let r = (terms as f64 - 1.0).max(0.5);
    PI / (4.0 * r * r)
}

/// Deflection at `(x, y)` from the double series truncated at `m, n <= M`.
pub fn navier_deflection(case: &NavierCase, x: f64, y: f64, terms: usize) -> Result<SeriesValue, OracleError> {
    if terms == 0 {
        return Err(OracleError::NoTerms);
    }
    if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
        return Err(OracleError::OutsideSquare(x, y));
    }
    let (c, a, b) = case.factors(terms);
    let sx: Vec<f64> = (1..=terms).map(|m| (m as f64 * PI * x).sin()).collect();
    let sy: Vec<f64> = (1..=terms).map(|n| (n as f64 * PI * y).sin()).collect();
    let mut sum = 0.0;
    for m in 1..=terms {
        let am = a[m - 1] * sx[m - 1];
        if am == 0.0 {
            continue;
        }
        let m2 = (m * m) as f64;
        for n in 1..=terms {
            let bn = b[n - 1] * sy[n - 1];
            if bn == 0.0 {
                continue;
            }
            let r = m2 + (n * n) as f64;
            sum += am * bn / (r * r);
        }
    }
    Ok(SeriesValue {
        value: c * sum,
        terms,
        tail_bound: c.abs() * lattice_tail(terms),
    })
}

/// `(sinh x - x) / (1 + cosh x)` scaled by `e^{-x}` top and bottom.
fn hyperbolic_ratio(x: f64) -> f64 {
    let e = (-x).exp();
    ((1.0 - e * e) / 2.0 - x * e) / (e + (1.0 + e * e) / 2.0)
}

/// `1 - hyperbolic_ratio(x)` without cancellation.
fn hyperbolic_defect(x: f64) -> f64 {
    let e = (-x).exp();
    (e + e * e + x * e) / (e + (1.0 + e * e) / 2.0)
}

/// Centre deflection of the point-loaded plate from the single series
/// `F0/(2 D pi^3) sum sin^2(m pi/2) (sinh m pi - m pi) / (m^3 (1 + cosh m pi))`.
///
/// The ratio tends to one exponentially fast, so the series is summed as
/// `(7/8) zeta(3) - sum_{m odd} (1 - ratio) / m^3`; the remaining sum is
/// truncated after `M` terms.
pub fn max_deflection_point_load(f0: f64, material: &Material, terms: usize) -> Result<SeriesValue, OracleError> {
    if terms == 0 {
        return Err(OracleError::NoTerms);
    }
    let c = f0 / (2.0 * material.bending_stiffness() * PI.powi(3));
    let mut defect = 0.0;
    for m in (1..=terms).step_by(2) {
        let mf = m as f64;
        defect += hyperbolic_defect(mf * PI) / (mf * mf * mf);
    }
    // Neglected terms: (1 - ratio) <= 2 (2 + x) e^{-x}, summed geometrically.
    let next = (terms + 1) as f64 + if terms.is_multiple_of(2) { 0.0 } else { 1.0 };
    let x = next * PI;
    let tail = 2.0 * (2.0 + x) * (-x).exp() / (next.powi(3) * (1.0 - (-2.0 * PI).exp()));
    Ok(SeriesValue {
        value: c * (0.875 * ZETA3 - defect),
        terms,
        tail_bound: c.abs() * tail,
    })
}

/// The plain truncated single series, kept for comparison.
pub fn max_deflection_partial_sum(f0: f64, material: &Material, terms: usize) -> f64 {
    let c = f0 / (2.0 * material.bending_stiffness() * PI.powi(3));
    let s: f64 = (1..=terms)
        .step_by(2)
        .map(|m| {
            let mf = m as f64;
            hyperbolic_ratio(mf * PI) / (mf * mf * mf)
        })
        .sum();
    c * s
}

fn radicand_sqrt(r: f64) -> Result<f64, OracleError> {
    if r < -1e-12 {
        Err(OracleError::NegativeRadicand(r))
    } else {
        Ok(r.max(0.0).sqrt())
    }
}

/// `sqrt(F0 (u(1/2,1/2) - u_h(1/2,1/2)))` for the centre point load.
pub fn energy_error_point_load(
    solution: &Solution,
    f0: f64,
    material: &Material,
    terms: usize,
) -> Result<f64, OracleError> {
    let exact = max_deflection_point_load(f0, material, terms)?.value;
    let uh = solution
        .evaluate([0.5, 0.5], 0)
        .map_err(|_| OracleError::OutsideSquare(0.5, 0.5))?
        .value();
    energy_error_from_center(f0, exact, uh)
}

pub fn energy_error_from_center(f0: f64, exact: f64, approx: f64) -> Result<f64, OracleError> {
    radicand_sqrt(f0 * (exact - approx))
}

/// Work of the load on the exact deflection, `l(u)`, from the closed-form
/// load moments of each sine mode. Truncated at `m, n <= M`.
pub fn load_work(case: &NavierCase, terms: usize) -> Result<SeriesValue, OracleError> {
    if terms == 0 {
        return Err(OracleError::NoTerms);
    }
    let (c, a, b) = case.factors(terms);
    // The load moment against sin(m pi x) sin(n pi y) is `scale a_m b_n`.
    let scale = match case.load {
        NavierLoad::Point { f0 } => f0,
        NavierLoad::Line { g0, .. } => 2.0 * g0 / PI,
        NavierLoad::Square { f0, .. } => 4.0 * f0 / (PI * PI),
    };
    let mut sum = 0.0;
    for m in 1..=terms {
        let am = a[m - 1];
        if am == 0.0 {
            continue;
        }
        let m2 = (m * m) as f64;
        for n in 1..=terms {
            let bn = b[n - 1];
            if bn == 0.0 {
                continue;
            }
            let r = m2 + (n * n) as f64;
            sum += am * am * bn * bn / (r * r);
        }
    }
    Ok(SeriesValue {
        value: c * scale * sum,
        terms,
        tail_bound: (c * scale).abs() * lattice_tail(terms),
    })
}

/// `|||u - u_h||| = sqrt(l(u) - l(u_h))` for a distributed or line load.
///
/// `l(u_h)` is integrated with a rule of the given degree over the loaded
/// triangles (centroid inside the load region) or line-load edges.
pub fn energy_error_general(
    solution: &Solution,
    case: &NavierCase,
    terms: usize,
    degree: usize,
) -> Result<f64, OracleError> {
    let mesh = solution.mesh();
    let work = load_work(case, terms)?.value;
    let approx = match case.load {
        NavierLoad::Point { f0 } => {
            let uh = solution
                .evaluate([0.5, 0.5], 0)
                .map_err(|_| OracleError::OutsideSquare(0.5, 0.5))?
                .value();
            f0 * uh
        }
        NavierLoad::Square { c, d, f0 } => {
            let rule = triangle_quadrature(degree)?;
            let mut s = 0.0;
            for t in 0..mesh.num_triangles() {
                let g = mesh.centroid(t);
                if (g[0] - 0.5).abs() > c || (g[1] - 0.5).abs() > d {
                    continue;
                }
                let poly = solution.local(t);
                for (p, w) in crate::assembly::map_triangle_rule(mesh, t, &rule) {
                    s += w * f0 * poly.eval(p, 0).value();
                }
            }
            s
        }
        NavierLoad::Line { g0, .. } => {
            let rule = edge_quadrature(degree)?;
            let mut s = 0.0;
            for edge in mesh.edges().iter().filter(|e| e.on_line_load) {
                let poly = solution.local(edge.triangles.0);
                let [a, b] = edge.vertices.map(|v| mesh.vertex(v));
                for (q, w) in rule.points.iter().zip(&rule.weights) {
                    let p = [a[0] + q[0] * (b[0] - a[0]), a[1] + q[0] * (b[1] - a[1])];
                    s += w * edge.length * g0 * poly.eval(p, 0).value();
                }
            }
            s
        }
    };
    radicand_sqrt(work - approx)
}
