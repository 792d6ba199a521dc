//! Global degrees of freedom, stiffness and load assembly, essential
//! constraints and the reduced symmetric solve.

use rayon::prelude::*;
use thiserror::Error;

use crate::element::{
    edge_quadrature, triangle_quadrature, DerivativeBundle, ElementBasis, ElementError, LocalPolynomial, NDOF,
};
use crate::mesh::{BcKind, Mesh};
use crate::model::{Material, PlateProblem};

pub mod solver;

pub use solver::{solve_spd, SolverDiagnostics, SolverError, SolverMethod};

/// Degree used for the stiffness and load integrals (Hessian products are
/// sextic).
const STIFFNESS_DEGREE: usize = 6;
const LINE_LOAD_DEGREE: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("point ({0}, {1}) lies outside the mesh")]
    OutsideDomain(f64, f64),
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// Vertex `v` owns indices `6v..6v+6`; edge `e` owns `6V + e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    num_vertices: usize,
    num_edges: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            num_vertices: mesh.num_vertices(),
            num_edges: mesh.num_edges(),
        }
    }

    pub fn len(&self) -> usize {
        6 * self.num_vertices + self.num_edges
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First of the six indices of vertex `v`.
    pub fn vertex(&self, v: usize) -> usize {
        6 * v
    }

    pub fn edge(&self, e: usize) -> usize {
        6 * self.num_vertices + e
    }

    /// Global indices of triangle `t` in local element order.
    pub fn element_dofs(&self, mesh: &Mesh, t: usize) -> [usize; NDOF] {
        let tri = &mesh.triangles()[t];
        std::array::from_fn(|l| {
            if l < 18 {
                self.vertex(tri.vertices[l / 6]) + l % 6
            } else {
                self.edge(tri.edges[l - 18])
            }
        })
    }
}

/// A mesh together with its element bases.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub bases: Vec<ElementBasis>,
}

impl Discretization {
    pub fn new(mesh: &Mesh) -> Result<Self, ElementError> {
        let bases = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| ElementBasis::for_triangle(mesh, t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mesh: mesh.clone(),
            dofs: DofMap::new(mesh),
            bases,
        })
    }

    /// Local polynomial of the finite element function `coeffs` on `t`.
    pub fn local(&self, coeffs: &[f64], t: usize) -> LocalPolynomial {
        let ids = self.dofs.element_dofs(&self.mesh, t);
        let local = ids.map(|i| coeffs[i]);
        self.bases[t].combine(&local)
    }

    /// Physical quadrature points and weights on triangle `t`.
    pub fn triangle_points(&self, t: usize, rule: &crate::element::QuadratureRule<2>) -> Vec<([f64; 2], f64)> {
        map_triangle_rule(&self.mesh, t, rule)
    }
}

pub(crate) fn map_triangle_rule(
    mesh: &Mesh,
    t: usize,
    rule: &crate::element::QuadratureRule<2>,
) -> Vec<([f64; 2], f64)> {
    let [a, b, c] = mesh.triangle_coords(t);
    let jac = 2.0 * mesh.area(t);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(q, w)| {
            let p = [
                a[0] + (b[0] - a[0]) * q[0] + (c[0] - a[0]) * q[1],
                a[1] + (b[1] - a[1]) * q[0] + (c[1] - a[1]) * q[1],
            ];
            (p, w * jac)
        })
        .collect()
}

/// Compressed sparse row matrix holding every stored entry (both triangles
/// for symmetric matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Sums duplicate entries in their order of appearance, so the result is
    /// independent of how the triplets were produced in parallel.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `max |a_ij - a_ji| / max |a_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Stiffness matrix of one element in local order.
pub fn element_stiffness(
    disc: &Discretization,
    t: usize,
    material: &Material,
) -> Result<[[f64; NDOF]; NDOF], ElementError> {
    let rule = triangle_quadrature(STIFFNESS_DEGREE)?;
    let d = material.bending_stiffness();
    let nu = material.poisson_ratio;
    let basis = &disc.bases[t];
    let mut k = [[0.0; NDOF]; NDOF];
    for (p, w) in disc.triangle_points(t, &rule) {
        let h = basis.eval_derivatives(p, 2).map(|b| b.hessian());
        for i in 0..NDOF {
            let hi = h[i];
            for j in i..NDOF {
                let hj = h[j];
                let contraction = hi[0] * hj[0] + 2.0 * hi[1] * hj[1] + hi[2] * hj[2];
                let traces = (hi[0] + hi[2]) * (hj[0] + hj[2]);
                k[i][j] += w * d * ((1.0 - nu) * contraction + nu * traces);
            }
        }
    }
    for i in 0..NDOF {
        for j in 0..i {
            k[i][j] = k[j][i];
        }
    }
    Ok(k)
}

/// Full (unconstrained) stiffness matrix.
pub fn assemble_stiffness(disc: &Discretization, material: &Material) -> Result<SparseMatrix, ElementError> {
    let nt = disc.mesh.num_triangles();
    let locals = (0..nt)
        .into_par_iter()
        .map(|t| element_stiffness(disc, t, material))
        .collect::<Result<Vec<_>, _>>()?;
    let mut triplets = Vec::with_capacity(nt * NDOF * NDOF);
    for (t, k) in locals.iter().enumerate() {
        let ids = disc.dofs.element_dofs(&disc.mesh, t);
        for i in 0..NDOF {
            for j in 0..NDOF {
                triplets.push((ids[i], ids[j], k[i][j]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(disc.dofs.len(), triplets))
}

/// Load vector `l(phi_i)` for every global basis function.
pub fn assemble_load(problem: &PlateProblem, disc: &Discretization) -> Result<Vec<f64>, ElementError> {
    let mesh = &disc.mesh;
    let rule = triangle_quadrature(STIFFNESS_DEGREE)?;
    let locals: Vec<Option<[f64; NDOF]>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let f = problem.density(t);
            if f == 0.0 {
                return None;
            }
            let mut out = [0.0; NDOF];
            for (p, w) in disc.triangle_points(t, &rule) {
                let phi = disc.bases[t].eval_derivatives(p, 0);
                for (o, b) in out.iter_mut().zip(&phi) {
                    *o += w * f * b.value();
                }
            }
            Some(out)
        })
        .collect();
    let mut rhs = vec![0.0; disc.dofs.len()];
    for (t, local) in locals.iter().enumerate() {
        if let Some(local) = local {
            for (&i, v) in disc.dofs.element_dofs(mesh, t).iter().zip(local) {
                rhs[i] += v;
            }
        }
    }
    let g = problem.loads.line_density();
    if g != 0.0 {
        let erule = edge_quadrature(LINE_LOAD_DEGREE)?;
        for edge in mesh.edges() {
            if !edge.on_line_load {
                continue;
            }
            // Traces of the basis agree from both sides; use the first.
            let t = edge.triangles.0;
            let [a, b] = edge.vertices.map(|v| mesh.vertex(v));
            let ids = disc.dofs.element_dofs(mesh, t);
            for (s, w) in erule.points.iter().zip(&erule.weights) {
                let p = [a[0] + s[0] * (b[0] - a[0]), a[1] + s[0] * (b[1] - a[1])];
                let phi = disc.bases[t].eval_derivatives(p, 0);
                for (&i, ph) in ids.iter().zip(&phi) {
                    rhs[i] += w * edge.length * g * ph.value();
                }
            }
        }
    }
    for (p, &v) in problem.loads.points.iter().zip(problem.point_load_vertices()) {
        rhs[disc.dofs.vertex(v)] += p.magnitude;
    }
    Ok(rhs)
}

/// Homogeneous essential constraints, eliminated through an orthonormal
/// basis `T` of the admissible subspace: `x = T y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    full_len: usize,
    reduced_len: usize,
    /// Row `i` of `T`: pairs `(reduced index, weight)`.
    rows: Vec<Vec<(usize, f64)>>,
    /// Independent relations `c . x = 0` (orthonormal within each vertex).
    relations: Vec<Vec<(usize, f64)>>,
}

const RANK_TOL: f64 = 1e-10;

/// Relations on the six vertex DOFs `[u, u_x, u_y, u_xx, u_xy, u_yy]` along an
/// edge with unit tangent `s` and unit normal `n`.
fn vertex_relations(kind: BcKind, s: [f64; 2], n: [f64; 2]) -> Vec<[f64; 6]> {
    let value = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let ds = [0.0, s[0], s[1], 0.0, 0.0, 0.0];
    let dn = [0.0, n[0], n[1], 0.0, 0.0, 0.0];
    let dss = [0.0, 0.0, 0.0, s[0] * s[0], 2.0 * s[0] * s[1], s[1] * s[1]];
    let dsn = [0.0, 0.0, 0.0, s[0] * n[0], s[0] * n[1] + s[1] * n[0], s[1] * n[1]];
    match kind {
        BcKind::Clamped => vec![value, ds, dn, dss, dsn],
        BcKind::SimplySupported => vec![value, ds, dss],
        BcKind::Free => Vec::new(),
    }
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of the span of `rows` (modified Gram-Schmidt, rows
/// normalized first) and an orthonormal basis of its complement.
fn split_space(rows: &[[f64; 6]]) -> (Vec<[f64; 6]>, Vec<[f64; 6]>) {
    let mut basis: Vec<[f64; 6]> = Vec::new();
    for r in rows {
        let norm = dot6(r, r).sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v = r.map(|x| x / norm);
        for b in &basis {
            let c = dot6(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let res = dot6(&v, &v).sqrt();
        if res > RANK_TOL {
            basis.push(v.map(|x| x / res));
        }
    }
    let rank = basis.len();
    let mut all = basis.clone();
    let mut complement = Vec::new();
    while complement.len() < 6 - rank {
        // Greedy: the unit vector with the largest remaining component.
        let mut best: Option<([f64; 6], f64)> = None;
        for k in 0..6 {
            let mut v = [0.0; 6];
            v[k] = 1.0;
            for b in &all {
                let c = dot6(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let res = dot6(&v, &v).sqrt();
            if best.is_none_or(|(_, r)| res > r) {
                best = Some((v, res));
            }
        }
        let (v, res) = best.unwrap();
        let v = v.map(|x| if (x / res).abs() < 1e-15 { 0.0 } else { x / res });
        all.push(v);
        complement.push(v);
    }
    (basis, complement)
}

impl ConstraintSet {
    pub fn build(problem: &PlateProblem, dofs: &DofMap) -> Self {
        let mesh = &problem.mesh;
        let nv = mesh.num_vertices();
        let mut per_vertex: Vec<Vec<[f64; 6]>> = vec![Vec::new(); nv];
        let mut edge_fixed = vec![false; mesh.num_edges()];
        for (e, edge) in mesh.edges().iter().enumerate() {
            let Some(kind) = edge.tag.bc() else { continue };
            let rel = vertex_relations(kind, mesh.edge_tangent(e), mesh.edge_normal(e));
            for &v in &edge.vertices {
                per_vertex[v].extend_from_slice(&rel);
            }
            edge_fixed[e] = kind == BcKind::Clamped;
        }
        let all_free = mesh
            .edges()
            .iter()
            .filter(|e| e.is_boundary())
            .all(|e| e.tag.bc() == Some(BcKind::Free));
        if all_free && problem.pin_rigid_motion {
            per_vertex[0].push([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            per_vertex[0].push([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
            per_vertex[0].push([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        }

        let n = dofs.len();
        let mut rows = vec![Vec::new(); n];
        let mut relations = Vec::new();
        let mut next = 0;
        for (v, rel) in per_vertex.iter().enumerate() {
            let base = dofs.vertex(v);
            if rel.is_empty() {
                for k in 0..6 {
                    rows[base + k].push((next, 1.0));
                    next += 1;
                }
                continue;
            }
            let (span, complement) = split_space(rel);
            for c in &complement {
                for k in 0..6 {
                    if c[k] != 0.0 {
                        rows[base + k].push((next, c[k]));
                    }
                }
                next += 1;
            }
            for r in &span {
                relations.push((0..6).filter(|&k| r[k] != 0.0).map(|k| (base + k, r[k])).collect());
            }
        }
        for (e, &fixed) in edge_fixed.iter().enumerate() {
            let i = dofs.edge(e);
            if fixed {
                relations.push(vec![(i, 1.0)]);
            } else {
                rows[i].push((next, 1.0));
                next += 1;
            }
        }
        Self {
            full_len: n,
            reduced_len: next,
            rows,
            relations,
        }
    }

    pub fn full_len(&self) -> usize {
        self.full_len
    }

    pub fn reduced_len(&self) -> usize {
        self.reduced_len
    }

    pub fn num_constrained(&self) -> usize {
        self.full_len - self.reduced_len
    }

    pub fn relations(&self) -> &[Vec<(usize, f64)>] {
        &self.relations
    }

    /// `T y`.
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, w)| w * y[j]).sum())
            .collect()
    }

    /// `T^T x`.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.reduced_len];
        for (r, &xi) in self.rows.iter().zip(x) {
            for &(j, w) in r {
                out[j] += w * xi;
            }
        }
        out
    }

    /// `T^T K T`.
    pub fn reduce(&self, k: &SparseMatrix) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(k.nnz());
        for i in 0..k.n {
            for (j, v) in k.row(i) {
                for &(a, wa) in &self.rows[i] {
                    for &(b, wb) in &self.rows[j] {
                        triplets.push((a, b, wa * v * wb));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(self.reduced_len, triplets)
    }

    /// Largest `|c . x|` over all relations.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.relations
            .iter()
            .map(|r| r.iter().map(|&(i, w)| w * x[i]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

pub fn build_constraints(problem: &PlateProblem, dofs: &DofMap) -> ConstraintSet {
    ConstraintSet::build(problem, dofs)
}

/// Discrete solution with its discretization.
#[derive(Debug, Clone)]
pub struct Solution {
    pub discretization: Discretization,
    pub coefficients: Vec<f64>,
    pub diagnostics: SolverDiagnostics,
}

impl Solution {
    /// Wraps an arbitrary coefficient vector (for example an interpolant).
    pub fn from_coefficients(discretization: Discretization, coefficients: Vec<f64>) -> Result<Self, AssemblyError> {
        let expected = discretization.dofs.len();
        if coefficients.len() != expected {
            return Err(AssemblyError::DimensionMismatch {
                got: coefficients.len(),
                expected,
            });
        }
        Ok(Self {
            discretization,
            coefficients,
            diagnostics: SolverDiagnostics::default(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.discretization.mesh
    }

    pub fn local(&self, t: usize) -> LocalPolynomial {
        self.discretization.local(&self.coefficients, t)
    }

    /// Derivatives of `u_h` restricted to triangle `t`.
    pub fn evaluate_in(&self, t: usize, p: [f64; 2], max_order: usize) -> DerivativeBundle {
        self.local(t).eval(p, max_order)
    }

    pub fn evaluate(&self, p: [f64; 2], max_order: usize) -> Result<DerivativeBundle, AssemblyError> {
        evaluate_solution(self, p, max_order)
    }

    /// Nodal deflection at every vertex.
    pub fn vertex_deflections(&self) -> Vec<f64> {
        (0..self.mesh().num_vertices())
            .map(|v| self.coefficients[self.discretization.dofs.vertex(v)])
            .collect()
    }

    /// `x^T K y` for two coefficient vectors.
    pub fn energy_product(k: &SparseMatrix, x: &[f64], y: &[f64]) -> f64 {
        k.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

pub fn evaluate_solution(
    solution: &Solution,
    p: [f64; 2],
    max_order: usize,
) -> Result<DerivativeBundle, AssemblyError> {
    let (t, _) = solution
        .mesh()
        .locate(p)
        .ok_or(AssemblyError::OutsideDomain(p[0], p[1]))?;
    Ok(solution.evaluate_in(t, p, max_order))
}

/// Assembled and constrained linear system of a problem.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub discretization: Discretization,
    pub stiffness: SparseMatrix,
    pub load: Vec<f64>,
    pub constraints: ConstraintSet,
    pub reduced_matrix: SparseMatrix,
    pub reduced_load: Vec<f64>,
}

impl LinearSystem {
    pub fn assemble(problem: &PlateProblem) -> Result<Self, AssemblyError> {
        let discretization = Discretization::new(&problem.mesh)?;
        let stiffness = assemble_stiffness(&discretization, &problem.material)?;
        let load = assemble_load(problem, &discretization)?;
        let constraints = build_constraints(problem, &discretization.dofs);
        let reduced_matrix = constraints.reduce(&stiffness);
        let reduced_load = constraints.restrict(&load);
        Ok(Self {
            discretization,
            stiffness,
            load,
            constraints,
            reduced_matrix,
            reduced_load,
        })
    }

    pub fn solve(self) -> Result<Solution, AssemblyError> {
        let (y, diagnostics) = solve_spd(&self.reduced_matrix, &self.reduced_load)?;
        Ok(Solution {
            coefficients: self.constraints.expand(&y),
            discretization: self.discretization,
            diagnostics,
        })
    }
}

/// Assemble, constrain and solve.
pub fn solve(problem: &PlateProblem) -> Result<Solution, AssemblyError> {
    LinearSystem::assemble(problem)?.solve()
}
