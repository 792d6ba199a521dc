//! Gauss rules on the unit interval and collapsed (Duffy) Gauss rules on the
//! reference triangle `{x >= 0, y >= 0, x + y <= 1}`.

use thiserror::Error;

/// Highest polynomial degree the generators accept.
pub const MAX_DEGREE: usize = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuadratureError {
    #[error("quadrature degree {0} unsupported (maximum {MAX_DEGREE})")]
    UnsupportedDegree(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TriangleRule = QuadratureRule<2>;
pub type EdgeRule = QuadratureRule<1>;

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; D]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss rule on `[0, 1]` exact for polynomials of the given degree.
pub fn edge_quadrature(degree: usize) -> Result<EdgeRule, QuadratureError> {
    if degree > MAX_DEGREE {
        return Err(QuadratureError::UnsupportedDegree(degree));
    }
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [0.5 * (t + 1.0)]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        degree,
    })
}

/// Collapsed Gauss rule on the reference triangle exact for total degree
/// `degree`. Weights are positive and sum to `1/2`.
pub fn triangle_quadrature(degree: usize) -> Result<TriangleRule, QuadratureError> {
    if degree > MAX_DEGREE {
        return Err(QuadratureError::UnsupportedDegree(degree));
    }
    // The Duffy Jacobian (1 - s) raises the degree in s by one.
    let n = (degree + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&si, &wi) in x.iter().zip(&w) {
        let s = 0.5 * (si + 1.0);
        for (&ti, &wj) in x.iter().zip(&w) {
            let t = 0.5 * (ti + 1.0);
            points.push([s, t * (1.0 - s)]);
            weights.push(0.25 * wi * wj * (1.0 - s));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}
