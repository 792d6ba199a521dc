//! The Argyris quintic triangle.
//!
//! Each element's nodal basis is built directly in physical coordinates by
//! inverting the 21x21 matrix of degree-of-freedom functionals applied to
//! monomials in a local frame `xi = (x - c) / h_K` centred at the centroid.
//! Functionals are scaled by `h_K^k` (k = derivative order) while the matrix
//! is formed, so its conditioning depends only on the element shape.
//!
//! Edge functionals use the mesh's canonical edge normal, so both neighbours
//! of an edge share the same global functional.

pub mod quadrature;

use thiserror::Error;

use crate::assembly::DofMap;
use crate::mesh::Mesh;

pub use quadrature::{edge_quadrature, triangle_quadrature, QuadratureError, QuadratureRule};

/// Number of local degrees of freedom (and of quintic monomials).
pub const NDOF: usize = 21;

/// Number of distinct partial derivatives of order 0 through 4.
pub const NDERIV: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DofKind {
    VertexValue,
    VertexDx,
    VertexDy,
    VertexDxx,
    VertexDxy,
    VertexDyy,
    EdgeNormal,
}

impl DofKind {
    pub const VERTEX: [DofKind; 6] = [
        DofKind::VertexValue,
        DofKind::VertexDx,
        DofKind::VertexDy,
        DofKind::VertexDxx,
        DofKind::VertexDxy,
        DofKind::VertexDyy,
    ];

    /// Derivative order of the functional.
    pub fn order(self) -> i32 {
        match self {
            DofKind::VertexValue => 0,
            DofKind::VertexDx | DofKind::VertexDy | DofKind::EdgeNormal => 1,
            DofKind::VertexDxx | DofKind::VertexDxy | DofKind::VertexDyy => 2,
        }
    }
}

/// A degree of freedom: functional kind plus the vertex or edge it lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DofKey {
    pub kind: DofKind,
    pub anchor: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("element {triangle}: Argyris functional matrix is singular (condition estimate {condition:e})")]
    Singular { triangle: usize, condition: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Index of `d^(i+j) / dx^i dy^j` in a [`DerivativeBundle`], and of the
/// monomial `x^i y^j` in a coefficient array.
#[inline]
pub const fn deriv_index(i: usize, j: usize) -> usize {
    let k = i + j;
    k * (k + 1) / 2 + j
}

/// Exponents `(a, b)` for each of the 21 quintic monomials.
pub const MONOMIALS: [(usize, usize); NDOF] = {
    let mut out = [(0, 0); NDOF];
    let mut k = 0;
    while k <= 5 {
        let mut j = 0;
        while j <= k {
            out[k * (k + 1) / 2 + j] = (k - j, j);
            j += 1;
        }
        k += 1;
    }
    out
};

/// Value and all distinct partial derivatives up to fourth order at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerivativeBundle {
    pub order: usize,
    pub d: [f64; NDERIV],
}

impl DerivativeBundle {
    /// `d^(i+j) u / dx^i dy^j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i + j <= self.order);
        self.d[deriv_index(i, j)]
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.d[1], self.d[2]]
    }

    /// `[u_xx, u_xy, u_yy]`.
    pub fn hessian(&self) -> [f64; 3] {
        [self.d[3], self.d[4], self.d[5]]
    }

    /// `[u_xxx, u_xxy, u_xyy, u_yyy]`.
    pub fn third(&self) -> [f64; 4] {
        [self.d[6], self.d[7], self.d[8], self.d[9]]
    }

    /// `[u_xxxx, u_xxxy, u_xxyy, u_xyyy, u_yyyy]`.
    pub fn fourth(&self) -> [f64; 5] {
        [self.d[10], self.d[11], self.d[12], self.d[13], self.d[14]]
    }

    pub fn bilaplacian(&self) -> f64 {
        debug_assert!(self.order >= 4);
        self.d[10] + 2.0 * self.d[12] + self.d[14]
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.d.iter_mut().for_each(|x| *x *= s);
        self
    }

    pub fn add_scaled(&mut self, other: &DerivativeBundle, s: f64) {
        for (a, b) in self.d.iter_mut().zip(&other.d) {
            *a += s * b;
        }
    }
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Derivatives (physical coordinates) of every local monomial at `p`.
fn monomial_table(center: [f64; 2], h: f64, p: [f64; 2], order: usize) -> [[f64; NDERIV]; NDOF] {
    let xi = (p[0] - center[0]) / h;
    let eta = (p[1] - center[1]) / h;
    let mut px = [1.0; 6];
    let mut py = [1.0; 6];
    for k in 1..6 {
        px[k] = px[k - 1] * xi;
        py[k] = py[k - 1] * eta;
    }
    let inv_h: [f64; 5] = std::array::from_fn(|k| h.powi(-(k as i32)));
    let mut table = [[0.0; NDERIV]; NDOF];
    for (m, &(a, b)) in MONOMIALS.iter().enumerate() {
        for k in 0..=order.min(a + b) {
            for j in 0..=k {
                let i = k - j;
                if i > a || j > b {
                    continue;
                }
                table[m][deriv_index(i, j)] = falling(a, i) * falling(b, j) * px[a - i] * py[b - j] * inv_h[k];
            }
        }
    }
    table
}

/// A quintic written in an element's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPolynomial {
    pub center: [f64; 2],
    pub h: f64,
    pub coeffs: [f64; NDOF],
}

impl LocalPolynomial {
    pub fn eval(&self, p: [f64; 2], max_order: usize) -> DerivativeBundle {
        assert!(max_order <= 4, "derivatives above fourth order are not stored");
        let table = monomial_table(self.center, self.h, p, max_order);
        let mut out = DerivativeBundle {
            order: max_order,
            d: [0.0; NDERIV],
        };
        for (c, row) in self.coeffs.iter().zip(&table) {
            if *c != 0.0 {
                for (o, r) in out.d.iter_mut().zip(row) {
                    *o += c * r;
                }
            }
        }
        out
    }
}

/// Nodal basis of one Argyris element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBasis {
    pub triangle: usize,
    pub center: [f64; 2],
    pub h: f64,
    /// `coeffs[i]`: local-frame monomial coefficients of basis function `i`.
    pub coeffs: [[f64; NDOF]; NDOF],
    /// Local order: six functionals per vertex, then the three edges
    /// (edge `i` opposite vertex `i`).
    pub keys: [DofKey; NDOF],
    /// 1-norm condition estimate of the scaled functional matrix.
    pub condition: f64,
}

/// Geometry needed to build one element basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub triangle: usize,
    pub vertex_ids: [usize; 3],
    pub coords: [[f64; 2]; 3],
    pub edge_ids: [usize; 3],
    /// Unit normals used by the edge functionals (mesh-canonical).
    pub edge_normals: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn from_mesh(mesh: &Mesh, t: usize) -> Self {
        let tri = &mesh.triangles()[t];
        Self {
            triangle: t,
            vertex_ids: tri.vertices,
            coords: mesh.triangle_coords(t),
            edge_ids: tri.edges,
            edge_normals: tri.edges.map(|e| mesh.edge_normal(e)),
        }
    }

    pub fn diameter(&self) -> f64 {
        (0..3)
            .map(|i| {
                let a = self.coords[i];
                let b = self.coords[(i + 1) % 3];
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .fold(0.0, f64::max)
    }

    /// Local DOF keys in element order.
    pub fn keys(&self) -> [DofKey; NDOF] {
        std::array::from_fn(|l| {
            if l < 18 {
                DofKey {
                    kind: DofKind::VERTEX[l % 6],
                    anchor: self.vertex_ids[l / 6],
                }
            } else {
                DofKey {
                    kind: DofKind::EdgeNormal,
                    anchor: self.edge_ids[l - 18],
                }
            }
        })
    }

    /// Point at which local functional `l` is evaluated.
    pub fn functional_point(&self, l: usize) -> [f64; 2] {
        if l < 18 {
            self.coords[l / 6]
        } else {
            let i = l - 18;
            let a = self.coords[(i + 1) % 3];
            let b = self.coords[(i + 2) % 3];
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        }
    }

    /// Applies local functional `l` to a derivative bundle evaluated at
    /// [`Self::functional_point`].
    pub fn apply_functional(&self, l: usize, d: &DerivativeBundle) -> f64 {
        if l < 18 {
            d.d[l % 6]
        } else {
            let n = self.edge_normals[l - 18];
            n[0] * d.d[1] + n[1] * d.d[2]
        }
    }
}

impl ElementBasis {
    pub fn build(geom: &ElementGeometry) -> Result<Self, ElementError> {
        let c = geom.coords;
        let center = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        let h = geom.diameter();
        let keys = geom.keys();

        // Rows: scaled functionals; columns: monomials. With h = 1 in the
        // table, derivatives are taken with respect to the local coordinates.
        let mut a = nalgebra::SMatrix::<f64, NDOF, NDOF>::zeros();
        for l in 0..NDOF {
            let p = geom.functional_point(l);
            let local = [center[0] + (p[0] - center[0]) / h, center[1] + (p[1] - center[1]) / h];
            let table = monomial_table(center, 1.0, local, 2);
            for m in 0..NDOF {
                let bundle = DerivativeBundle { order: 2, d: table[m] };
                a[(l, m)] = geom.apply_functional(l, &bundle);
            }
        }
        let norm1 = |m: &nalgebra::SMatrix<f64, NDOF, NDOF>| {
            (0..NDOF)
                .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let singular = |condition| ElementError::Singular {
            triangle: geom.triangle,
            condition,
        };
        let inv = a.lu().try_inverse().ok_or_else(|| singular(f64::INFINITY))?;
        let condition = norm1(&a) * norm1(&inv);
        if !condition.is_finite() || condition > 1e13 {
            return Err(singular(condition));
        }
        let mut coeffs = [[0.0; NDOF]; NDOF];
        for (i, (ci, key)) in coeffs.iter_mut().zip(&keys).enumerate() {
            let scale = h.powi(key.kind.order());
            for (m, cm) in ci.iter_mut().enumerate() {
                *cm = inv[(m, i)] * scale;
            }
        }
        Ok(Self {
            triangle: geom.triangle,
            center,
            h,
            coeffs,
            keys,
            condition,
        })
    }

    pub fn for_triangle(mesh: &Mesh, t: usize) -> Result<Self, ElementError> {
        Self::build(&ElementGeometry::from_mesh(mesh, t))
    }

    /// Derivatives of all 21 basis functions at `p`.
    pub fn eval_derivatives(&self, p: [f64; 2], max_order: usize) -> [DerivativeBundle; NDOF] {
        assert!(max_order <= 4, "derivatives above fourth order are not stored");
        let table = monomial_table(self.center, self.h, p, max_order);
        std::array::from_fn(|i| {
            let mut out = DerivativeBundle {
                order: max_order,
                d: [0.0; NDERIV],
            };
            for (c, row) in self.coeffs[i].iter().zip(&table) {
                for (o, r) in out.d.iter_mut().zip(row) {
                    *o += c * r;
                }
            }
            out
        })
    }

    /// The polynomial with local degree-of-freedom values `dofs`.
    pub fn combine(&self, dofs: &[f64; NDOF]) -> LocalPolynomial {
        let mut coeffs = [0.0; NDOF];
        for (ci, &di) in self.coeffs.iter().zip(dofs) {
            if di != 0.0 {
                for (c, &b) in coeffs.iter_mut().zip(ci) {
                    *c += di * b;
                }
            }
        }
        LocalPolynomial {
            center: self.center,
            h: self.h,
            coeffs,
        }
    }
}

/// Global coefficient vector of the Argyris interpolant of a function given
/// through its value, gradient and Hessian `[u, u_x, u_y, u_xx, u_xy, u_yy]`.
pub fn interpolate(mesh: &Mesh, dofs: &DofMap, f: impl Fn([f64; 2]) -> [f64; 6]) -> Vec<f64> {
    let mut out = vec![0.0; dofs.len()];
    for v in 0..mesh.num_vertices() {
        let jet = f(mesh.vertex(v));
        let base = dofs.vertex(v);
        out[base..base + 6].copy_from_slice(&jet);
    }
    for e in 0..mesh.num_edges() {
        let jet = f(mesh.edge_midpoint(e));
        let n = mesh.edge_normal(e);
        out[dofs.edge(e)] = n[0] * jet[1] + n[1] * jet[2];
    }
    out
}
