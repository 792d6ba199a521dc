//! Material law, loads, and pointwise plate mechanics.

use thiserror::Error;

use crate::element::DerivativeBundle;
use crate::mesh::{BcKind, Mesh};

/// Symmetric 2x2 tensor stored as `[a_xx, a_xy, a_yy]`.
pub type Sym2 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid material: {0}")]
    Material(String),
    #[error("point load {index} at ({x}, {y}) is not at a mesh vertex")]
    PointNotAtVertex { index: usize, x: f64, y: f64 },
    #[error("line load requires the mesh to be built with the same polyline")]
    LineLoadMismatch,
    #[error("distributed load region {region} cuts through triangle {triangle}")]
    RegionNotAligned { region: usize, triangle: usize },
    #[error("invalid load: {0}")]
    Load(String),
    #[error("every boundary edge is free; the plate can move rigidly")]
    UnconstrainedPlate,
}

/// Isotropic linearly elastic plate material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub thickness: f64,
}

impl Material {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, thickness: f64) -> Result<Self, ModelError> {
        if !(youngs_modulus > 0.0 && youngs_modulus.is_finite()) {
            return Err(ModelError::Material(format!(
                "Young's modulus must be positive, got {youngs_modulus}"
            )));
        }
        // nu = 1/2 keeps every formula finite, so it is admitted.
        if !(0.0..=0.5).contains(&poisson_ratio) {
            return Err(ModelError::Material(format!(
                "Poisson ratio must lie in [0, 1/2], got {poisson_ratio}"
            )));
        }
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(ModelError::Material(format!(
                "thickness must be positive, got {thickness}"
            )));
        }
        Ok(Self {
            youngs_modulus,
            poisson_ratio,
            thickness,
        })
    }

    /// `D = E d^3 / (12 (1 - nu^2))`.
    pub fn bending_stiffness(&self) -> f64 {
        let nu = self.poisson_ratio;
        self.youngs_modulus * self.thickness.powi(3) / (12.0 * (1.0 - nu * nu))
    }

    /// `d^3 / 12`.
    pub fn section_factor(&self) -> f64 {
        self.thickness.powi(3) / 12.0
    }

    /// Plane-stress elasticity tensor applied to `a`:
    /// `E/(1+nu) (A + nu/(1-nu) tr(A) I)`.
    pub fn constitutive_apply(&self, a: Sym2) -> Sym2 {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        let s = e / (1.0 + nu);
        let tr = nu / (1.0 - nu) * (a[0] + a[2]);
        [s * (a[0] + tr), s * a[1], s * (a[2] + tr)]
    }
}

pub fn bending_stiffness(material: &Material) -> f64 {
    material.bending_stiffness()
}

pub fn constitutive_apply(a: Sym2, material: &Material) -> Sym2 {
    material.constitutive_apply(a)
}

/// Area over which a distributed load acts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Whole,
    /// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    Rect {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    },
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Region::Whole => true,
            Region::Rect { x0, x1, y0, y1 } => p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributedLoad {
    pub region: Region,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineLoad {
    pub polyline: Vec<[f64; 2]>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoad {
    pub at: [f64; 2],
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadSpec {
    pub distributed: Vec<DistributedLoad>,
    pub line: Option<LineLoad>,
    pub points: Vec<PointLoad>,
}

impl LoadSpec {
    /// Distributed load density at a point.
    pub fn density_at(&self, p: [f64; 2]) -> f64 {
        self.distributed
            .iter()
            .filter(|d| d.region.contains(p))
            .map(|d| d.value)
            .sum()
    }

    /// Line load density (zero when no line load is present).
    pub fn line_density(&self) -> f64 {
        self.line.as_ref().map_or(0.0, |l| l.value)
    }
}

/// A fully specified plate bending problem.
#[derive(Debug, Clone)]
pub struct PlateProblem {
    pub mesh: Mesh,
    pub material: Material,
    pub loads: LoadSpec,
    /// Pin the value and gradient of vertex 0 when every boundary edge is
    /// free.
    pub pin_rigid_motion: bool,
    /// Constant distributed density per triangle.
    density: Vec<f64>,
    /// Vertex id of each point load.
    point_vertices: Vec<usize>,
}

impl PlateProblem {
    pub fn new(mesh: Mesh, material: Material, loads: LoadSpec) -> Result<Self, ModelError> {
        Self::build(mesh, material, loads, false)
    }

    /// Accepts an entirely free plate by pinning vertex 0.
    pub fn new_pinned(mesh: Mesh, material: Material, loads: LoadSpec) -> Result<Self, ModelError> {
        Self::build(mesh, material, loads, true)
    }

    fn build(mesh: Mesh, material: Material, loads: LoadSpec, pin_rigid_motion: bool) -> Result<Self, ModelError> {
        let all_free = mesh
            .edges()
            .iter()
            .filter(|e| e.is_boundary())
            .all(|e| e.tag.bc() == Some(BcKind::Free));
        if all_free && !pin_rigid_motion {
            return Err(ModelError::UnconstrainedPlate);
        }
        let mut point_vertices = Vec::with_capacity(loads.points.len());
        for (index, p) in loads.points.iter().enumerate() {
            if !p.magnitude.is_finite() {
                return Err(ModelError::Load(format!("point load {index} is not finite")));
            }
            let v = mesh.find_vertex(p.at).ok_or(ModelError::PointNotAtVertex {
                index,
                x: p.at[0],
                y: p.at[1],
            })?;
            point_vertices.push(v);
        }
        if let Some(line) = &loads.line {
            if !line.value.is_finite() {
                return Err(ModelError::Load("line load value is not finite".into()));
            }
            match mesh.line_load_polyline() {
                Some(poly)
                    if poly.len() == line.polyline.len()
                        && poly
                            .iter()
                            .zip(&line.polyline)
                            .all(|(a, b)| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12) => {}
                _ => return Err(ModelError::LineLoadMismatch),
            }
        }
        for (r, d) in loads.distributed.iter().enumerate() {
            if !d.value.is_finite() {
                return Err(ModelError::Load(format!("distributed load {r} is not finite")));
            }
            if let Region::Rect { x0, x1, y0, y1 } = d.region {
                if !(x0 < x1 && y0 < y1) {
                    return Err(ModelError::Load(format!("region {r} is empty")));
                }
            }
        }
        let density = (0..mesh.num_triangles())
            .map(|t| triangle_density(&mesh, &loads, t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mesh,
            material,
            loads,
            pin_rigid_motion,
            density,
            point_vertices,
        })
    }

    /// Same material and loads on another mesh of the same domain.
    pub fn with_mesh(&self, mesh: Mesh) -> Result<Self, ModelError> {
        Self::build(mesh, self.material, self.loads.clone(), self.pin_rigid_motion)
    }

    /// Distributed load density on triangle `t` (constant by construction).
    pub fn density(&self, t: usize) -> f64 {
        self.density[t]
    }

    pub fn point_load_vertices(&self) -> &[usize] {
        &self.point_vertices
    }
}

/// Density on a triangle, rejecting regions that cut through it.
fn triangle_density(mesh: &Mesh, loads: &LoadSpec, t: usize) -> Result<f64, ModelError> {
    let p = mesh.triangle_coords(t);
    let tol = 1e-10 * mesh.diameter(t);
    let mut f = 0.0;
    for (r, d) in loads.distributed.iter().enumerate() {
        match d.region {
            Region::Whole => f += d.value,
            Region::Rect { x0, x1, y0, y1 } => {
                let inside = p
                    .iter()
                    .all(|q| q[0] >= x0 - tol && q[0] <= x1 + tol && q[1] >= y0 - tol && q[1] <= y1 + tol);
                if inside {
                    f += d.value;
                    continue;
                }
                if !rect_overlaps_triangle([x0, x1, y0, y1], &p, tol) {
                    continue;
                }
                return Err(ModelError::RegionNotAligned { region: r, triangle: t });
            }
        }
    }
    Ok(f)
}

/// Separating-axis test for open interiors of a rectangle and a triangle.
fn rect_overlaps_triangle(r: [f64; 4], p: &[[f64; 2]; 3], tol: f64) -> bool {
    let [x0, x1, y0, y1] = r;
    let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
    if max_x <= x0 + tol || min_x >= x1 - tol || max_y <= y0 + tol || min_y >= y1 - tol {
        return false;
    }
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let n = [b[1] - a[1], a[0] - b[0]];
        let side = |q: [f64; 2]| n[0] * (q[0] - a[0]) + n[1] * (q[1] - a[1]);
        let s = side(c).signum();
        let len = n[0].hypot(n[1]);
        if corners.iter().all(|&q| s * side(q) >= -tol * len) {
            continue;
        }
        if corners.iter().all(|&q| s * side(q) <= tol * len) {
            return false;
        }
    }
    true
}

/// Mechanical quantities at a point of an edge with unit normal `n` and unit
/// tangent `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mechanics {
    /// Moment tensor `[M_xx, M_xy, M_yy]`.
    pub moment: Sym2,
    /// Shear force `Q = div M`.
    pub shear: [f64; 2],
    /// `D (u_xxxx + 2 u_xxyy + u_yyyy)`, present when fourth derivatives are.
    pub plate_operator: Option<f64>,
    pub q_n: f64,
    pub m_nn: f64,
    pub m_ns: f64,
    /// Kirchhoff shear `q_n + dM_ns/ds`.
    pub v_n: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("pointwise mechanics need derivatives up to order 3, got {0}")]
pub struct InsufficientOrder(pub usize);

/// Moments, shear forces and the plate operator from a derivative bundle.
pub fn pointwise_mechanics(
    u: &DerivativeBundle,
    material: &Material,
    n: [f64; 2],
    s: [f64; 2],
) -> Result<Mechanics, InsufficientOrder> {
    if u.order < 3 {
        return Err(InsufficientOrder(u.order));
    }
    let k = material.section_factor();
    let neg = |a: Sym2| a.map(|x| -k * x);
    // M = (d^3/12) E K(u) with K(u) = -Hess u; linear, so derivatives of M
    // follow from the third derivatives of u.
    let moment = neg(material.constitutive_apply(u.hessian()));
    let [uxxx, uxxy, uxyy, uyyy] = u.third();
    let dmx = neg(material.constitutive_apply([uxxx, uxxy, uxyy]));
    let dmy = neg(material.constitutive_apply([uxxy, uxyy, uyyy]));
    let shear = [dmx[0] + dmy[1], dmx[1] + dmy[2]];
    let contract =
        |m: Sym2, a: [f64; 2], b: [f64; 2]| a[0] * (m[0] * b[0] + m[1] * b[1]) + a[1] * (m[1] * b[0] + m[2] * b[1]);
    let q_n = shear[0] * n[0] + shear[1] * n[1];
    let m_nn = contract(moment, n, n);
    let m_ns = contract(moment, s, n);
    let ds_m = [
        s[0] * dmx[0] + s[1] * dmy[0],
        s[0] * dmx[1] + s[1] * dmy[1],
        s[0] * dmx[2] + s[1] * dmy[2],
    ];
    let v_n = q_n + contract(ds_m, s, n);
    let plate_operator = (u.order >= 4).then(|| material.bending_stiffness() * u.bilaplacian());
    Ok(Mechanics {
        moment,
        shear,
        plate_operator,
        q_n,
        m_nn,
        m_ns,
        v_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::deriv_index;

    fn paper_material() -> Material {
        Material::new(1.0, 0.3, 1.0).unwrap()
    }

    fn bundle(entries: &[((usize, usize), f64)], order: usize) -> DerivativeBundle {
        let mut b = DerivativeBundle { order, d: [0.0; 15] };
        for &((i, j), v) in entries {
            b.d[deriv_index(i, j)] = v;
        }
        b
    }

    #[test]
    fn stiffness_values() {
        assert!((paper_material().bending_stiffness() - 1.0 / 10.92).abs() < 1e-15);
        let m = Material::new(3.0, 0.0, 2.0).unwrap();
        assert!((m.bending_stiffness() - 3.0 * 8.0 / 12.0).abs() < 1e-15);
        let m = Material::new(2.0, 0.5, 1.0).unwrap();
        assert!((bending_stiffness(&m) - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn material_validation() {
        assert!(Material::new(0.0, 0.3, 1.0).is_err());
        assert!(Material::new(1.0, -0.1, 1.0).is_err());
        assert!(Material::new(1.0, 0.6, 1.0).is_err());
        assert!(Material::new(1.0, 0.3, -1.0).is_err());
    }

    #[test]
    fn constitutive_cases() {
        let a = [0.7, -0.2, 1.3];
        let m0 = Material::new(2.5, 0.0, 1.0).unwrap();
        let r = constitutive_apply(a, &m0);
        for k in 0..3 {
            assert!((r[k] - 2.5 * a[k]).abs() < 1e-15);
        }
        let m = paper_material();
        let r = m.constitutive_apply([1.0, 0.0, 1.0]);
        let expect = 1.0 / (1.0 - 0.3);
        assert!((r[0] - expect).abs() < 1e-14 && r[1].abs() < 1e-15 && (r[2] - expect).abs() < 1e-14);
        let tf = [0.4, 0.9, -0.4];
        let r = m.constitutive_apply(tf);
        for k in 0..3 {
            assert!((r[k] - tf[k] / 1.3).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_has_no_shear() {
        let u = bundle(&[((2, 0), 1.0), ((1, 1), 0.3), ((0, 2), -2.0)], 3);
        let n = [0.6, 0.8];
        let s = [-0.8, 0.6];
        let m = pointwise_mechanics(&u, &paper_material(), n, s).unwrap();
        assert_eq!(m.q_n, 0.0);
        assert_eq!(m.v_n, 0.0);
    }

    #[test]
    fn quartic_plate_operator() {
        let u = bundle(&[((4, 0), 24.0)], 4);
        let mat = paper_material();
        let m = pointwise_mechanics(&u, &mat, [1.0, 0.0], [0.0, 1.0]).unwrap();
        assert!((m.plate_operator.unwrap() - 24.0 * mat.bending_stiffness()).abs() < 1e-14);
    }

    #[test]
    fn x3y_matches_hand_expansion() {
        // u = x^3 y at (x, y) = (0.5, 0.25): u_xx = 6xy, u_xy = 3x^2, u_yy = 0,
        // u_xxx = 6y, u_xxy = 6x, u_xyy = u_yyy = 0.
        let (x, y) = (0.5, 0.25);
        let u = bundle(
            &[
                ((0, 0), x * x * x * y),
                ((1, 0), 3.0 * x * x * y),
                ((0, 1), x * x * x),
                ((2, 0), 6.0 * x * y),
                ((1, 1), 3.0 * x * x),
                ((3, 0), 6.0 * y),
                ((2, 1), 6.0 * x),
            ],
            3,
        );
        let mat = paper_material();
        let d = mat.bending_stiffness();
        let nu = 0.3;
        let m = pointwise_mechanics(&u, &mat, [1.0, 0.0], [0.0, 1.0]).unwrap();
        // M_xx = -D(u_xx + nu u_yy), M_xy = -D(1-nu)u_xy, M_yy = -D(u_yy + nu u_xx).
        assert!((m.moment[0] + d * 6.0 * x * y).abs() < 1e-15);
        assert!((m.moment[1] + d * (1.0 - nu) * 3.0 * x * x).abs() < 1e-15);
        assert!((m.moment[2] + d * nu * 6.0 * x * y).abs() < 1e-15);
        // Q = -D grad(Laplacian u) = -D (6y, 6x).
        assert!((m.shear[0] + d * 6.0 * y).abs() < 1e-15);
        assert!((m.shear[1] + d * 6.0 * x).abs() < 1e-15);
        assert!((m.q_n + d * 6.0 * y).abs() < 1e-15);
        assert!((m.m_nn + d * 6.0 * x * y).abs() < 1e-15);
        assert!((m.m_ns + d * (1.0 - nu) * 3.0 * x * x).abs() < 1e-15);
        // dM_xy/dy = -D(1-nu) u_xyy = 0, so V_n = q_n.
        assert!((m.v_n - m.q_n).abs() < 1e-15);
        // Along a horizontal edge: n = (0,1), s = (1,0):
        // V_n = Q_y + dM_xy/dx = -D 6x - D(1-nu) 6x.
        let h = pointwise_mechanics(&u, &mat, [0.0, 1.0], [1.0, 0.0]).unwrap();
        assert!((h.v_n + d * 6.0 * x * (2.0 - nu)).abs() < 1e-14);
    }

    #[test]
    fn frame_flip_parities() {
        let u = bundle(
            &[
                ((2, 0), 0.3),
                ((1, 1), -1.1),
                ((0, 2), 0.8),
                ((3, 0), 1.7),
                ((2, 1), -0.4),
                ((1, 2), 2.2),
                ((0, 3), 0.9),
            ],
            3,
        );
        let mat = paper_material();
        let n = [0.28, 0.96];
        let s = [-0.96, 0.28];
        let a = pointwise_mechanics(&u, &mat, n, s).unwrap();
        let b = pointwise_mechanics(&u, &mat, n.map(|x| -x), s.map(|x| -x)).unwrap();
        assert!((a.m_nn - b.m_nn).abs() < 1e-15);
        assert!((a.m_ns - b.m_ns).abs() < 1e-15);
        assert!((a.q_n + b.q_n).abs() < 1e-15);
        assert!((a.v_n + b.v_n).abs() < 1e-15);
    }

    #[test]
    fn isotropic_bowl() {
        let u = bundle(&[((2, 0), 1.0), ((0, 2), 1.0)], 3);
        let mat = paper_material();
        let m = pointwise_mechanics(&u, &mat, [1.0, 0.0], [0.0, 1.0]).unwrap();
        let expect = -mat.section_factor() * 1.0 / (1.0 - 0.3);
        assert!((m.moment[0] - expect).abs() < 1e-15);
        assert!(m.moment[1].abs() < 1e-15);
        assert!((m.moment[2] - expect).abs() < 1e-15);
    }

    #[test]
    fn low_order_rejected() {
        let u = bundle(&[], 2);
        assert_eq!(
            pointwise_mechanics(&u, &paper_material(), [1.0, 0.0], [0.0, 1.0]).unwrap_err(),
            InsufficientOrder(2)
        );
    }

    #[test]
    fn rect_overlap() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(rect_overlaps_triangle([0.2, 0.4, 0.2, 0.4], &tri, 1e-12));
        assert!(!rect_overlaps_triangle([0.6, 0.9, 0.6, 0.9], &tri, 1e-12));
        assert!(!rect_overlaps_triangle([1.0, 2.0, 0.0, 1.0], &tri, 1e-12));
        assert!(!rect_overlaps_triangle([0.5, 1.0, 0.5, 1.0], &tri, 1e-12));
    }
}
