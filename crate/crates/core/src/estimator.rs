//! Residual a posteriori error estimator.
//!
//! All terms are accumulated as squares. Interior-edge contributions are split
//! evenly between the two neighbours and boundary-edge contributions go to
//! the single neighbour, so the element indicators partition the global
//! estimate exactly.

use rayon::prelude::*;

use crate::assembly::{map_triangle_rule, Solution};
use crate::element::{edge_quadrature, triangle_quadrature, ElementError, LocalPolynomial};
use crate::mesh::{EdgeTag, Mesh};
use crate::model::{pointwise_mechanics, Material, Mechanics, PlateProblem};

const ELEMENT_DEGREE: usize = 10;
const EDGE_DEGREE: usize = 9;

/// Load data seen by the estimator.
pub trait LoadData: Sync {
    /// Distributed load density at `p` inside triangle `t`.
    fn density(&self, t: usize, p: [f64; 2]) -> f64;
    /// Line load density at `p` on line-load edge `e`.
    fn line_density(&self, e: usize, p: [f64; 2]) -> f64;
}

impl LoadData for PlateProblem {
    fn density(&self, t: usize, _p: [f64; 2]) -> f64 {
        PlateProblem::density(self, t)
    }

    fn line_density(&self, _e: usize, _p: [f64; 2]) -> f64 {
        self.loads.line_density()
    }
}

/// Loads given by closures, for manufactured solutions.
pub struct FieldLoad<F, G> {
    pub density: F,
    pub line: G,
}

impl<F, G> LoadData for FieldLoad<F, G>
where
    F: Fn([f64; 2]) -> f64 + Sync,
    G: Fn([f64; 2]) -> f64 + Sync,
{
    fn density(&self, _t: usize, p: [f64; 2]) -> f64 {
        (self.density)(p)
    }

    fn line_density(&self, _e: usize, p: [f64; 2]) -> f64 {
        (self.line)(p)
    }
}

/// Squared contributions to one element indicator (or global totals).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndicatorBreakdown {
    /// `h_K^4 ||A u_h - f||^2`.
    pub residual: f64,
    /// `h_E ||[[M_nn]]||^2` on interior edges.
    pub moment_jump: f64,
    /// `h_E^3 ||[[V_n]]||^2` on interior edges off the line load.
    pub shear_jump: f64,
    /// `h_E ||M_nn||^2` on free and simply supported edges.
    pub boundary_moment: f64,
    /// `h_E^3 ||V_n||^2` on free edges.
    pub boundary_shear: f64,
    /// `h_E^3 ||[[V_n]] - g||^2` on line-load edges.
    pub line_load: f64,
}

impl IndicatorBreakdown {
    pub fn total(&self) -> f64 {
        self.residual + self.moment_jump + self.shear_jump + self.boundary_moment + self.boundary_shear + self.line_load
    }

    fn add_scaled(&mut self, other: &IndicatorBreakdown, s: f64) {
        self.residual += s * other.residual;
        self.moment_jump += s * other.moment_jump;
        self.shear_jump += s * other.shear_jump;
        self.boundary_moment += s * other.boundary_moment;
        self.boundary_shear += s * other.boundary_shear;
        self.line_load += s * other.line_load;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    /// Element indicators `eta_K`.
    pub eta_k: Vec<f64>,
    pub eta: f64,
    pub breakdown: Vec<IndicatorBreakdown>,
    /// Global squared totals of each term.
    pub totals: IndicatorBreakdown,
    pub osc_f: f64,
    pub osc_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub f: f64,
    pub g: f64,
}

/// Which estimator terms an edge contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Interior,
    LineLoad,
    Clamped,
    SimplySupported,
    Free,
}

impl EdgeClass {
    pub fn of(mesh: &Mesh, e: usize) -> Self {
        let edge = &mesh.edges()[e];
        match edge.tag {
            EdgeTag::Interior if edge.on_line_load => EdgeClass::LineLoad,
            EdgeTag::Interior => EdgeClass::Interior,
            EdgeTag::Clamped => EdgeClass::Clamped,
            EdgeTag::SimplySupported => EdgeClass::SimplySupported,
            EdgeTag::Free => EdgeClass::Free,
        }
    }
}

/// Squared, weighted edge terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeIndicator {
    /// `h_E ||[[M_nn]]||^2` or `h_E ||M_nn||^2`.
    pub moment: f64,
    /// `h_E^3 ||.||^2` of the shear quantity belonging to the edge class.
    pub shear: f64,
}

/// `h_K^2 ||A u_h - f||_{0,K}`.
pub fn element_residual(
    solution: &Solution,
    material: &Material,
    loads: &impl LoadData,
    t: usize,
) -> Result<f64, ElementError> {
    let rule = triangle_quadrature(ELEMENT_DEGREE)?;
    Ok(element_residual_sq(solution, material, loads, t, &rule).sqrt())
}

fn element_residual_sq(
    solution: &Solution,
    material: &Material,
    loads: &impl LoadData,
    t: usize,
    rule: &crate::element::QuadratureRule<2>,
) -> f64 {
    let mesh = solution.mesh();
    let poly = solution.local(t);
    let d = material.bending_stiffness();
    let h = mesh.diameter(t);
    let mut sum = 0.0;
    for (p, w) in map_triangle_rule(mesh, t, rule) {
        let r = d * poly.eval(p, 4).bilaplacian() - loads.density(t, p);
        sum += w * r * r;
    }
    h.powi(4) * sum
}

/// One-sided mechanics on triangle `t` at `p`, with `t`'s outward normal.
fn side(poly: &LocalPolynomial, material: &Material, p: [f64; 2], n: [f64; 2]) -> Mechanics {
    let s = [-n[1], n[0]];
    pointwise_mechanics(&poly.eval(p, 3), material, n, s).expect("order 3 requested")
}

/// Weighted squared edge terms for edge `e`.
pub fn edge_indicator(
    solution: &Solution,
    material: &Material,
    loads: &impl LoadData,
    e: usize,
) -> Result<EdgeIndicator, ElementError> {
    let rule = edge_quadrature(EDGE_DEGREE)?;
    Ok(edge_indicator_with(solution, material, loads, e, &rule))
}

fn edge_indicator_with(
    solution: &Solution,
    material: &Material,
    loads: &impl LoadData,
    e: usize,
    rule: &crate::element::QuadratureRule<1>,
) -> EdgeIndicator {
    let mesh = solution.mesh();
    let edge = &mesh.edges()[e];
    let class = EdgeClass::of(mesh, e);
    if class == EdgeClass::Clamped {
        return EdgeIndicator::default();
    }
    let h = edge.length;
    let [a, b] = edge.vertices.map(|v| mesh.vertex(v));
    let n = mesh.edge_normal(e);
    let t0 = edge.triangles.0;
    let s0 = mesh.outward_sign(e, t0);
    let n0 = [s0 * n[0], s0 * n[1]];
    let p0 = solution.local(t0);
    let other = edge.triangles.1.map(|t1| (solution.local(t1), [-n0[0], -n0[1]]));
    let mut moment = 0.0;
    let mut shear = 0.0;
    for (q, w) in rule.points.iter().zip(&rule.weights) {
        let p = [a[0] + q[0] * (b[0] - a[0]), a[1] + q[0] * (b[1] - a[1])];
        let w = w * h;
        let m0 = side(&p0, material, p, n0);
        let (mj, vj) = match &other {
            Some((p1, n1)) => {
                let m1 = side(p1, material, p, *n1);
                let g = if class == EdgeClass::LineLoad {
                    loads.line_density(e, p)
                } else {
                    0.0
                };
                (m0.m_nn - m1.m_nn, m0.v_n + m1.v_n - g)
            }
            None => (m0.m_nn, if class == EdgeClass::Free { m0.v_n } else { 0.0 }),
        };
        moment += w * mj * mj;
        shear += w * vj * vj;
    }
    EdgeIndicator {
        moment: h * moment,
        shear: h.powi(3) * shear,
    }
}

/// Data oscillation against piecewise-constant projections.
pub fn oscillation(mesh: &Mesh, loads: &impl LoadData) -> Result<Oscillation, ElementError> {
    let rule = triangle_quadrature(ELEMENT_DEGREE)?;
    let erule = edge_quadrature(EDGE_DEGREE)?;
    let f: f64 = (0..mesh.num_triangles())
        .map(|t| {
            let pts = map_triangle_rule(mesh, t, &rule);
            let area: f64 = pts.iter().map(|(_, w)| w).sum();
            let mean = pts.iter().map(|&(p, w)| w * loads.density(t, p)).sum::<f64>() / area;
            let dev: f64 = pts.iter().map(|&(p, w)| w * (loads.density(t, p) - mean).powi(2)).sum();
            mesh.diameter(t).powi(4) * dev
        })
        .sum();
    let g: f64 = mesh
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, edge)| edge.on_line_load)
        .map(|(e, edge)| {
            let [a, b] = edge.vertices.map(|v| mesh.vertex(v));
            let pts: Vec<([f64; 2], f64)> = erule
                .points
                .iter()
                .zip(&erule.weights)
                .map(|(q, w)| {
                    (
                        [a[0] + q[0] * (b[0] - a[0]), a[1] + q[0] * (b[1] - a[1])],
                        w * edge.length,
                    )
                })
                .collect();
            let mean = pts.iter().map(|&(p, w)| w * loads.line_density(e, p)).sum::<f64>() / edge.length;
            let dev: f64 = pts
                .iter()
                .map(|&(p, w)| w * (loads.line_density(e, p) - mean).powi(2))
                .sum();
            edge.length.powi(3) * dev
        })
        .sum();
    Ok(Oscillation {
        f: f.sqrt(),
        g: g.sqrt(),
    })
}

/// Estimator for a solved problem.
pub fn global_estimate(solution: &Solution, problem: &PlateProblem) -> Result<EstimatorReport, ElementError> {
    estimate_with(solution, &problem.material, problem)
}

/// Estimator with arbitrary load data.
pub fn estimate_with(
    solution: &Solution,
    material: &Material,
    loads: &impl LoadData,
) -> Result<EstimatorReport, ElementError> {
    let mesh = solution.mesh();
    let rule = triangle_quadrature(ELEMENT_DEGREE)?;
    let erule = edge_quadrature(EDGE_DEGREE)?;
    let residuals: Vec<f64> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| element_residual_sq(solution, material, loads, t, &rule))
        .collect();
    let edges: Vec<EdgeIndicator> = (0..mesh.num_edges())
        .into_par_iter()
        .map(|e| edge_indicator_with(solution, material, loads, e, &erule))
        .collect();

    let mut breakdown: Vec<IndicatorBreakdown> = residuals
        .iter()
        .map(|&r| IndicatorBreakdown {
            residual: r,
            ..Default::default()
        })
        .collect();
    let mut totals = IndicatorBreakdown {
        residual: residuals.iter().sum(),
        ..Default::default()
    };
    for (e, ind) in edges.iter().enumerate() {
        let edge = &mesh.edges()[e];
        let mut term = IndicatorBreakdown::default();
        match EdgeClass::of(mesh, e) {
            EdgeClass::Interior => {
                term.moment_jump = ind.moment;
                term.shear_jump = ind.shear;
            }
            EdgeClass::LineLoad => {
                term.moment_jump = ind.moment;
                term.line_load = ind.shear;
            }
            EdgeClass::SimplySupported => term.boundary_moment = ind.moment,
            EdgeClass::Free => {
                term.boundary_moment = ind.moment;
                term.boundary_shear = ind.shear;
            }
            EdgeClass::Clamped => continue,
        }
        totals.add_scaled(&term, 1.0);
        match edge.triangles {
            (t0, Some(t1)) => {
                breakdown[t0].add_scaled(&term, 0.5);
                breakdown[t1].add_scaled(&term, 0.5);
            }
            (t0, None) => breakdown[t0].add_scaled(&term, 1.0),
        }
    }
    let eta_k: Vec<f64> = breakdown.iter().map(|b| b.total().sqrt()).collect();
    let eta = breakdown.iter().map(|b| b.total()).sum::<f64>().sqrt();
    let osc = oscillation(mesh, loads)?;
    Ok(EstimatorReport {
        eta_k,
        eta,
        breakdown,
        totals,
        osc_f: osc.f,
        osc_g: osc.g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{solve, Discretization};
    use crate::element::interpolate;
    use crate::mesh::{classify_boundary, BcKind, BoundarySegment, Vertex};
    use crate::model::{DistributedLoad, LoadSpec, PointLoad, Region};

    fn material() -> Material {
        Material::new(1.0, 0.3, 1.0).unwrap()
    }

    fn grid(n: usize, kind: BcKind) -> Mesh {
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vertex::new(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut tris = Vec::new();
        for j in 0..n {
            for i in 0..n {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let segs = classify_boundary(&vertices, &tris, |_| kind);
        Mesh::build(vertices, &tris, segs, None).unwrap()
    }

    fn zero_solution(mesh: &Mesh) -> Solution {
        let disc = Discretization::new(mesh).unwrap();
        let n = disc.dofs.len();
        Solution::from_coefficients(disc, vec![0.0; n]).unwrap()
    }

    fn jet(c: &[(i32, i32, f64)], p: [f64; 2]) -> [f64; 6] {
        let d = |i: i32, j: i32| -> f64 {
            c.iter()
                .filter(|&&(a, b, _)| a >= i && b >= j)
                .map(|&(a, b, w)| {
                    let fa: f64 = (0..i).map(|k| (a - k) as f64).product();
                    let fb: f64 = (0..j).map(|k| (b - k) as f64).product();
                    w * fa * fb * p[0].powi(a - i) * p[1].powi(b - j)
                })
                .sum()
        };
        [d(0, 0), d(1, 0), d(0, 1), d(2, 0), d(1, 1), d(0, 2)]
    }

    #[test]
    fn zero_solution_residual() {
        let mesh = grid(2, BcKind::Clamped);
        let sol = zero_solution(&mesh);
        let loads = FieldLoad {
            density: |_: [f64; 2]| 1.0,
            line: |_: [f64; 2]| 0.0,
        };
        for t in 0..mesh.num_triangles() {
            let r = element_residual(&sol, &material(), &loads, t).unwrap();
            let expect = mesh.diameter(t).powi(2) * mesh.area(t).sqrt();
            assert!((r - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn x4_residual() {
        let mesh = grid(2, BcKind::Clamped);
        let disc = Discretization::new(&mesh).unwrap();
        let c = interpolate(&mesh, &disc.dofs, |p| jet(&[(4, 0, 1.0)], p));
        let sol = Solution::from_coefficients(disc, c).unwrap();
        let loads = FieldLoad {
            density: |_: [f64; 2]| 0.0,
            line: |_: [f64; 2]| 0.0,
        };
        let d = material().bending_stiffness();
        for t in 0..mesh.num_triangles() {
            let r = element_residual(&sol, &material(), &loads, t).unwrap();
            let expect = mesh.diameter(t).powi(2) * 24.0 * d * mesh.area(t).sqrt();
            assert!((r - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn quintic_gives_zero_estimate() {
        let mesh = grid(2, BcKind::Clamped).refine_uniform_red();
        let disc = Discretization::new(&mesh).unwrap();
        let c = [(5, 0, 0.3), (2, 3, -0.7), (1, 4, 0.2), (3, 1, 1.1), (0, 2, 0.5)];
        let coeffs = interpolate(&mesh, &disc.dofs, |p| jet(&c, p));
        let sol = Solution::from_coefficients(disc, coeffs).unwrap();
        let mat = material();
        let d = mat.bending_stiffness();
        // Bilaplacian of the quintic above: 40.8 x - 16.8 y.
        let loads = FieldLoad {
            density: move |p: [f64; 2]| d * (40.8 * p[0] - 16.8 * p[1]),
            line: |_: [f64; 2]| 0.0,
        };
        let rep = estimate_with(&sol, &mat, &loads).unwrap();
        assert!(rep.eta < 1e-9, "eta = {}", rep.eta);
    }

    #[test]
    fn piecewise_cubic_shear_jump() {
        // Two triangles sharing the edge x = 0; u = x^3 on the left only.
        let vertices = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(0.0, 1.0),
            Vertex::new(-1.0, 0.5),
            Vertex::new(1.0, 0.5),
        ];
        let tris = [[0, 1, 2], [0, 3, 1]];
        let segs = vec![BoundarySegment {
            path: vec![0, 3, 1, 2, 0],
            kind: BcKind::Free,
        }];
        let mesh = Mesh::build(vertices, &tris, segs, None).unwrap();
        let d3 = 12.0f64;
        let mat = Material::new(1.0, 0.0, d3.cbrt()).unwrap();
        let disc = Discretization::new(&mesh).unwrap();
        let e = (0..mesh.num_edges()).find(|&e| !mesh.edges()[e].is_boundary()).unwrap();
        let left = mesh.edges()[e].triangles.0;
        let geom = crate::element::ElementGeometry::from_mesh(&mesh, left);
        let local: [f64; 21] = std::array::from_fn(|l| {
            let mut d = [0.0; 15];
            d[..6].copy_from_slice(&jet(&[(3, 0, 1.0)], geom.functional_point(l)));
            geom.apply_functional(l, &crate::element::DerivativeBundle { order: 2, d })
        });
        let left_poly = disc.bases[left].combine(&local);
        let right_poly = LocalPolynomial {
            coeffs: [0.0; 21],
            ..left_poly
        };
        let h = mesh.edges()[e].length;
        let rule = edge_quadrature(EDGE_DEGREE).unwrap();
        let n = [1.0, 0.0];
        let mut v2 = 0.0;
        let mut m2 = 0.0;
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let p = [0.0, q[0]];
            let l = side(&left_poly, &mat, p, n);
            let r = side(&right_poly, &mat, p, [-1.0, 0.0]);
            v2 += w * h * (l.v_n + r.v_n).powi(2);
            m2 += w * h * (l.m_nn - r.m_nn).powi(2);
        }
        let shear_term = h.powf(1.5) * v2.sqrt();
        assert!((shear_term - 6.0 * h * h).abs() < 1e-9);
        assert!(m2.sqrt() < 1e-9);
    }

    #[test]
    fn clamped_edges_contribute_nothing() {
        let mesh = grid(2, BcKind::Clamped);
        let problem = PlateProblem::new(
            mesh.clone(),
            material(),
            LoadSpec {
                distributed: vec![DistributedLoad {
                    region: Region::Whole,
                    value: 1.0,
                }],
                ..Default::default()
            },
        )
        .unwrap();
        let sol = solve(&problem).unwrap();
        for (e, edge) in mesh.edges().iter().enumerate() {
            if edge.is_boundary() {
                let ind = edge_indicator(&sol, &problem.material, &problem, e).unwrap();
                assert_eq!(ind, EdgeIndicator::default());
            }
        }
    }

    #[test]
    fn partition_and_point_load_independence() {
        let mesh = grid(2, BcKind::SimplySupported).refine_uniform_red();
        let point = |m: f64| {
            PlateProblem::new(
                mesh.clone(),
                material(),
                LoadSpec {
                    points: vec![PointLoad {
                        at: [0.5, 0.5],
                        magnitude: m,
                    }],
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let problem = point(1.0);
        let sol = solve(&problem).unwrap();
        let rep = global_estimate(&sol, &problem).unwrap();
        let sum: f64 = rep.eta_k.iter().map(|x| x * x).sum();
        assert!((sum - rep.eta * rep.eta).abs() <= 1e-14 * sum);
        assert!((rep.totals.total() - sum).abs() <= 1e-12 * sum);
        assert!(rep.breakdown.iter().all(|b| b.residual >= 0.0 && b.moment_jump >= 0.0));
        let rep0 = global_estimate(&sol, &point(0.0)).unwrap();
        assert_eq!(rep.eta_k, rep0.eta_k);
    }

    #[test]
    fn oscillation_cases() {
        let mesh = grid(2, BcKind::Clamped);
        let constant = FieldLoad {
            density: |_: [f64; 2]| 2.0,
            line: |_: [f64; 2]| 1.0,
        };
        let o = oscillation(&mesh, &constant).unwrap();
        assert!(o.f.abs() < 1e-14 && o.g == 0.0);
        // f = x on one triangle, from the exact second moment
        // |K|/6 (x1^2 + x2^2 + x3^2 + x1 x2 + x2 x3 + x3 x1).
        let tri = Mesh::build(
            vec![Vertex::new(0.0, 0.0), Vertex::new(2.0, 0.0), Vertex::new(0.5, 1.0)],
            &[[0, 1, 2]],
            vec![BoundarySegment {
                path: vec![0, 1, 2, 0],
                kind: BcKind::Clamped,
            }],
            None,
        )
        .unwrap();
        let lin = FieldLoad {
            density: |p: [f64; 2]| p[0],
            line: |_: [f64; 2]| 0.0,
        };
        let o = oscillation(&tri, &lin).unwrap();
        let (x1, x2, x3): (f64, f64, f64) = (0.0, 2.0, 0.5);
        let area: f64 = 1.0;
        let second = area / 6.0 * (x1 * x1 + x2 * x2 + x3 * x3 + x1 * x2 + x2 * x3 + x3 * x1);
        let mean = (x1 + x2 + x3) / 3.0;
        let var = second - area * mean * mean;
        let h = tri.diameter(0);
        assert!((o.f - h * h * var.sqrt()).abs() < 1e-13);
    }
}
