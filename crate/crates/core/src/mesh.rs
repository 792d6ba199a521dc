//! Conforming triangle meshes with edge connectivity, boundary-condition tags
//! and line-load tags.
//!
//! Triangles are stored counterclockwise with `vertices[0]` opposite the
//! refinement edge. Edge `i` of a triangle is the edge opposite `vertices[i]`,
//! so `edges[0]` is always the refinement edge used by newest-vertex bisection.
//! Every edge runs from its lower vertex id to its higher one; that tangent and
//! its counterclockwise rotation are the canonical tangent and normal.
//!
//! Meshes are immutable. Both refinement routines return a fresh mesh that
//! keeps every existing vertex id and appends new midpoints.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

/// Support condition on a boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BcKind {
    Clamped,
    SimplySupported,
    Free,
}

impl BcKind {
    pub fn name(self) -> &'static str {
        match self {
            BcKind::Clamped => "clamped",
            BcKind::SimplySupported => "simply_supported",
            BcKind::Free => "free",
        }
    }
}

/// Classification of a mesh edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeTag {
    Interior,
    Clamped,
    SimplySupported,
    Free,
}

impl EdgeTag {
    pub fn boundary(kind: BcKind) -> Self {
        match kind {
            BcKind::Clamped => EdgeTag::Clamped,
            BcKind::SimplySupported => EdgeTag::SimplySupported,
            BcKind::Free => EdgeTag::Free,
        }
    }

    pub fn bc(self) -> Option<BcKind> {
        match self {
            EdgeTag::Interior => None,
            EdgeTag::Clamped => Some(BcKind::Clamped),
            EdgeTag::SimplySupported => Some(BcKind::SimplySupported),
            EdgeTag::Free => Some(BcKind::Free),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    /// Counterclockwise; `vertices[0]` is the newest vertex.
    pub vertices: [usize; 3],
    /// `edges[i]` is opposite `vertices[i]`.
    pub edges: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Canonical order: lower vertex id first.
    pub vertices: [usize; 2],
    /// First adjacent triangle and, for interior edges, the second one.
    pub triangles: (usize, Option<usize>),
    pub tag: EdgeTag,
    pub on_line_load: bool,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles.1.is_none()
    }
}

/// A boundary path (consecutive vertex ids) with a single support condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySegment {
    pub path: Vec<usize>,
    pub kind: BcKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStatistics {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    /// Argyris degrees of freedom, `6 V + E`.
    pub dofs: usize,
    pub h_max: f64,
    /// Smallest interior angle in degrees.
    pub min_angle: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("triangle {triangle} references vertex {vertex}, but only {count} vertices exist")]
    VertexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("triangle {0} has zero area")]
    DegenerateTriangle(usize),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("boundary segment {segment}: ({a}, {b}) is not a boundary edge")]
    SegmentNotOnBoundary { segment: usize, a: usize, b: usize },
    #[error("boundary edge ({a}, {b}) is assigned both {first} and {second}")]
    ConflictingBoundaryTag {
        a: usize,
        b: usize,
        first: &'static str,
        second: &'static str,
    },
    #[error("boundary edge ({a}, {b}) has no boundary condition")]
    UntaggedBoundaryEdge { a: usize, b: usize },
    #[error("line-load polyline point {0} is not a mesh vertex")]
    LineLoadPointNotVertex(usize),
    #[error("line-load segment {0} is not covered by mesh edges")]
    LineLoadNotCovered(usize),
    #[error("line-load edge ({a}, {b}) lies on the boundary")]
    LineLoadOnBoundary { a: usize, b: usize },
    #[error("marked triangle {id} out of range ({count} triangles)")]
    MarkedOutOfRange { id: usize, count: usize },
}

type EdgeKey = (usize, usize);

fn key(a: usize, b: usize) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeLabel {
    tag: EdgeTag,
    on_line_load: bool,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vertex>,
    triangles: Vec<Triangle>,
    edges: Vec<Edge>,
    segments: Vec<BoundarySegment>,
    line_load: Option<Vec<[f64; 2]>>,
    diameters: Vec<f64>,
    min_angle: f64,
    labels: HashMap<EdgeKey, EdgeLabel>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn midpoint(a: Vertex, b: Vertex) -> Vertex {
    Vertex::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
}

/// Whether `p` lies on the closed segment `a`-`b` within `tol`.
fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    let len = dist(a, b);
    if len == 0.0 {
        return dist(p, a) <= tol;
    }
    let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / len;
    let cross = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / len;
    cross.abs() <= tol && t >= -tol && t <= len + tol
}

fn angles_deg(p: [[f64; 2]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
        out[i] = cos.clamp(-1.0, 1.0).acos().to_degrees();
    }
    out
}

impl Mesh {
    /// Builds a mesh from raw input, validating conformity, boundary tags and
    /// line-load coverage.
    ///
    /// Triangles may be given in either orientation; they are stored
    /// counterclockwise with the longest edge (ties broken by vertex ids) as
    /// the refinement edge.
    pub fn build(
        vertices: Vec<Vertex>,
        triangles: &[[usize; 3]],
        boundary: Vec<BoundarySegment>,
        line_load: Option<Vec<[f64; 2]>>,
    ) -> Result<Mesh, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }
        let nv = vertices.len();
        let scale = bbox_diameter(&vertices).max(f64::MIN_POSITIVE);
        let tol = 1e-10 * scale;

        let mut tris = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange {
                        triangle: t,
                        vertex: v,
                        count: nv,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::RepeatedVertex(t));
            }
            let p = tri.map(|v| vertices[v].coords());
            let area = signed_area(p[0], p[1], p[2]);
            if area.abs() <= tol * scale {
                return Err(MeshError::DegenerateTriangle(t));
            }
            let mut tri = *tri;
            if area < 0.0 {
                tri.swap(1, 2);
            }
            tris.push(label_longest_edge(tri, &vertices));
        }

        // Conformity: every vertex pair used by at most two triangles, with
        // opposite orientations, and no vertex hanging inside a boundary edge.
        let mut uses: HashMap<EdgeKey, Vec<(usize, usize)>> = HashMap::new();
        for tri in &tris {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                uses.entry(key(a, b)).or_default().push((a, b));
            }
        }
        for (k, u) in &uses {
            match u.len() {
                1 => {}
                2 if u[0] != u[1] => {}
                2 => {
                    return Err(MeshError::NonConforming(format!(
                        "edge ({}, {}) is traversed twice in the same direction",
                        k.0, k.1
                    )))
                }
                n => {
                    return Err(MeshError::NonConforming(format!(
                        "edge ({}, {}) is shared by {n} triangles",
                        k.0, k.1
                    )))
                }
            }
        }
        for (k, u) in &uses {
            if u.len() != 1 {
                continue;
            }
            let a = vertices[k.0].coords();
            let b = vertices[k.1].coords();
            for (v, vert) in vertices.iter().enumerate() {
                if v == k.0 || v == k.1 {
                    continue;
                }
                let p = vert.coords();
                if on_segment(p, a, b, tol) && dist(p, a) > tol && dist(p, b) > tol {
                    return Err(MeshError::NonConforming(format!(
                        "vertex {v} hangs on edge ({}, {})",
                        k.0, k.1
                    )));
                }
            }
        }

        let mut labels: HashMap<EdgeKey, EdgeLabel> = HashMap::new();
        for (s, seg) in boundary.iter().enumerate() {
            for w in seg.path.windows(2) {
                let k = key(w[0], w[1]);
                match uses.get(&k) {
                    Some(u) if u.len() == 1 => {}
                    _ => {
                        return Err(MeshError::SegmentNotOnBoundary {
                            segment: s,
                            a: w[0],
                            b: w[1],
                        })
                    }
                }
                let tag = EdgeTag::boundary(seg.kind);
                if let Some(prev) = labels.get(&k) {
                    if prev.tag != tag {
                        return Err(MeshError::ConflictingBoundaryTag {
                            a: k.0,
                            b: k.1,
                            first: prev.tag.bc().map_or("interior", BcKind::name),
                            second: seg.kind.name(),
                        });
                    }
                }
                labels.insert(
                    k,
                    EdgeLabel {
                        tag,
                        on_line_load: false,
                    },
                );
            }
        }
        let mut boundary_keys: Vec<EdgeKey> = uses.iter().filter(|(_, u)| u.len() == 1).map(|(k, _)| *k).collect();
        boundary_keys.sort_unstable();
        for k in &boundary_keys {
            if !labels.contains_key(k) {
                return Err(MeshError::UntaggedBoundaryEdge { a: k.0, b: k.1 });
            }
        }

        if let Some(poly) = &line_load {
            for (i, p) in poly.iter().enumerate() {
                if !vertices.iter().any(|v| dist(v.coords(), *p) <= tol) {
                    return Err(MeshError::LineLoadPointNotVertex(i));
                }
            }
            let mut keys: Vec<EdgeKey> = uses.keys().copied().collect();
            keys.sort_unstable();
            for (s, w) in poly.windows(2).enumerate() {
                let mut covered = 0.0;
                for k in &keys {
                    let a = vertices[k.0].coords();
                    let b = vertices[k.1].coords();
                    if on_segment(a, w[0], w[1], tol) && on_segment(b, w[0], w[1], tol) {
                        if uses[k].len() == 1 {
                            return Err(MeshError::LineLoadOnBoundary { a: k.0, b: k.1 });
                        }
                        covered += dist(a, b);
                        labels.insert(
                            *k,
                            EdgeLabel {
                                tag: EdgeTag::Interior,
                                on_line_load: true,
                            },
                        );
                    }
                }
                let len = dist(w[0], w[1]);
                if (covered - len).abs() > 1e-9 * scale.max(len) {
                    return Err(MeshError::LineLoadNotCovered(s));
                }
            }
        }

        Ok(Mesh::from_parts(vertices, tris, labels, boundary, line_load))
    }

    /// Assembles a mesh from already validated, labelled triangles.
    fn from_parts(
        vertices: Vec<Vertex>,
        tris: Vec<[usize; 3]>,
        labels: HashMap<EdgeKey, EdgeLabel>,
        segments: Vec<BoundarySegment>,
        line_load: Option<Vec<[f64; 2]>>,
    ) -> Mesh {
        let mut edge_ids: HashMap<EdgeKey, usize> = HashMap::with_capacity(tris.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(tris.len() * 2);
        let mut triangles = Vec::with_capacity(tris.len());
        for (t, tri) in tris.iter().enumerate() {
            let mut tedges = [0usize; 3];
            for (i, te) in tedges.iter_mut().enumerate() {
                let k = key(tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let id = *edge_ids.entry(k).or_insert_with(|| {
                    let label = labels.get(&k).copied().unwrap_or(EdgeLabel {
                        tag: EdgeTag::Interior,
                        on_line_load: false,
                    });
                    edges.push(Edge {
                        vertices: [k.0, k.1],
                        triangles: (t, None),
                        tag: label.tag,
                        on_line_load: label.on_line_load,
                        length: dist(vertices[k.0].coords(), vertices[k.1].coords()),
                    });
                    edges.len() - 1
                });
                if edges[id].triangles.0 != t {
                    edges[id].triangles.1 = Some(t);
                }
                *te = id;
            }
            triangles.push(Triangle {
                vertices: *tri,
                edges: tedges,
            });
        }
        let diameters = triangles
            .iter()
            .map(|t| t.edges.iter().map(|&e| edges[e].length).fold(0.0, f64::max))
            .collect();
        let min_angle = triangles
            .iter()
            .flat_map(|t| angles_deg(t.vertices.map(|v| vertices[v].coords())))
            .fold(180.0, f64::min);
        // Keep only labels of edges that exist in this mesh.
        let labels = labels.into_iter().filter(|(k, _)| edge_ids.contains_key(k)).collect();
        Mesh {
            vertices,
            triangles,
            edges,
            segments,
            line_load,
            diameters,
            min_angle,
            labels,
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary_segments(&self) -> &[BoundarySegment] {
        &self.segments
    }

    pub fn line_load_polyline(&self) -> Option<&[[f64; 2]]> {
        self.line_load.as_deref()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v].coords()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v].coords())
    }

    pub fn area(&self, t: usize) -> f64 {
        let p = self.triangle_coords(t);
        signed_area(p[0], p[1], p[2])
    }

    /// Element diameter `h_K` (longest edge).
    pub fn diameter(&self, t: usize) -> f64 {
        self.diameters[t]
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let p = self.triangle_coords(t);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    pub fn min_angle(&self) -> f64 {
        self.min_angle
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertex(a), self.vertex(b));
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Unit tangent from the lower to the higher vertex id.
    pub fn edge_tangent(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertex(a), self.vertex(b));
        let len = self.edges[e].length;
        [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len]
    }

    /// Canonical unit normal: the tangent rotated 90 degrees counterclockwise.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let t = self.edge_tangent(e);
        [-t[1], t[0]]
    }

    /// `+1` if the canonical normal of `e` points out of triangle `t`, `-1`
    /// otherwise.
    pub fn outward_sign(&self, e: usize, t: usize) -> f64 {
        let n = self.edge_normal(e);
        let m = self.edge_midpoint(e);
        let c = self.centroid(t);
        if n[0] * (m[0] - c[0]) + n[1] * (m[1] - c[1]) > 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Finds a triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in 0..self.triangles.len() {
            let v = self.triangle_coords(t);
            let area = signed_area(v[0], v[1], v[2]);
            let l0 = signed_area(p, v[1], v[2]) / area;
            let l1 = signed_area(v[0], p, v[2]) / area;
            let l2 = 1.0 - l0 - l1;
            let worst = l0.min(l1).min(l2);
            if worst >= -tol {
                return Some((t, [l0, l1, l2]));
            }
            if worst >= -1e-9 && best.is_none_or(|b| worst > b.2) {
                best = Some((t, [l0, l1, l2], worst));
            }
        }
        best.map(|(t, l, _)| (t, l))
    }

    /// Triangles sharing vertex `v`, in id order.
    pub fn triangles_at_vertex(&self, v: usize) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&t| self.triangles[t].vertices.contains(&v))
            .collect()
    }

    /// Vertex whose coordinates coincide with `p` up to a relative tolerance.
    pub fn find_vertex(&self, p: [f64; 2]) -> Option<usize> {
        let tol = 1e-10 * bbox_diameter(&self.vertices).max(1.0);
        self.vertices.iter().position(|v| dist(v.coords(), p) <= tol)
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            lo[0] = lo[0].min(v.x);
            lo[1] = lo[1].min(v.y);
            hi[0] = hi[0].max(v.x);
            hi[1] = hi[1].max(v.y);
        }
        (lo, hi)
    }

    pub fn statistics(&self) -> MeshStatistics {
        MeshStatistics {
            vertices: self.num_vertices(),
            edges: self.num_edges(),
            triangles: self.num_triangles(),
            dofs: 6 * self.num_vertices() + self.num_edges(),
            h_max: self.diameters.iter().copied().fold(0.0, f64::max),
            min_angle: self.min_angle,
        }
    }

    /// Splits every triangle into four similar children through its edge
    /// midpoints.
    pub fn refine_uniform_red(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        let mut mids: HashMap<EdgeKey, usize> = HashMap::with_capacity(self.edges.len());
        for (e, edge) in self.edges.iter().enumerate() {
            let [a, b] = edge.vertices;
            vertices.push(midpoint(self.vertices[a], self.vertices[b]));
            mids.insert((a, b), nv + e);
        }
        let mut tris = Vec::with_capacity(4 * self.triangles.len());
        for tri in &self.triangles {
            let [v0, v1, v2] = tri.vertices;
            let m12 = nv + tri.edges[0];
            let m20 = nv + tri.edges[1];
            let m01 = nv + tri.edges[2];
            // Children keep the parent orientation; each refinement edge is
            // parallel to the parent's.
            tris.push([v0, m01, m20]);
            tris.push([m01, v1, m12]);
            tris.push([m20, m12, v2]);
            tris.push([m12, m20, m01]);
        }
        self.rebuild(vertices, tris, &mids)
    }

    /// Conforming newest-vertex bisection. Every marked triangle has all three
    /// edges bisected (two bisection levels, so its area is quartered); the
    /// closure bisects neighbours as needed to avoid hanging vertices.
    pub fn refine_marked(&self, marked: &BTreeSet<usize>) -> Result<Mesh, MeshError> {
        let nt = self.triangles.len();
        if let Some(&id) = marked.iter().find(|&&t| t >= nt) {
            return Err(MeshError::MarkedOutOfRange { id, count: nt });
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut edge_marked = vec![false; self.edges.len()];
        let mut queue = VecDeque::new();
        for &t in marked {
            for &e in &self.triangles[t].edges {
                if !edge_marked[e] {
                    edge_marked[e] = true;
                    queue.push_back(e);
                }
            }
        }
        // Closure: a triangle with any bisected edge must bisect its
        // refinement edge too.
        while let Some(e) = queue.pop_front() {
            let (t0, t1) = self.edges[e].triangles;
            for t in std::iter::once(t0).chain(t1) {
                let r = self.triangles[t].edges[0];
                if !edge_marked[r] {
                    edge_marked[r] = true;
                    queue.push_back(r);
                }
            }
        }

        let mut vertices = self.vertices.clone();
        let mut mids: HashMap<EdgeKey, usize> = HashMap::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if edge_marked[e] {
                let [a, b] = edge.vertices;
                mids.insert((a, b), vertices.len());
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
            }
        }
        let mut tris = Vec::with_capacity(nt + 4 * marked.len());
        for tri in &self.triangles {
            bisect(tri.vertices, &mids, &mut tris);
        }
        Ok(self.rebuild(vertices, tris, &mids))
    }

    /// Builds the refined mesh, inheriting boundary and line-load labels and
    /// splitting boundary segment paths at new midpoints.
    fn rebuild(&self, vertices: Vec<Vertex>, tris: Vec<[usize; 3]>, mids: &HashMap<EdgeKey, usize>) -> Mesh {
        let mut labels = HashMap::with_capacity(self.labels.len() * 2);
        for (&(a, b), &label) in &self.labels {
            match mids.get(&(a, b)) {
                Some(&m) => {
                    labels.insert(key(a, m), label);
                    labels.insert(key(m, b), label);
                }
                None => {
                    labels.insert((a, b), label);
                }
            }
        }
        let segments = self
            .segments
            .iter()
            .map(|seg| {
                let mut path = Vec::with_capacity(seg.path.len() * 2);
                for (i, &v) in seg.path.iter().enumerate() {
                    if i > 0 {
                        if let Some(&m) = mids.get(&key(seg.path[i - 1], v)) {
                            path.push(m);
                        }
                    }
                    path.push(v);
                }
                BoundarySegment { path, kind: seg.kind }
            })
            .collect();
        Mesh::from_parts(vertices, tris, labels, segments, self.line_load.clone())
    }
}

fn bisect(tri: [usize; 3], mids: &HashMap<EdgeKey, usize>, out: &mut Vec<[usize; 3]>) {
    let [v0, v1, v2] = tri;
    match mids.get(&key(v1, v2)) {
        Some(&m) => {
            bisect([m, v0, v1], mids, out);
            bisect([m, v2, v0], mids, out);
        }
        None => out.push(tri),
    }
}

/// Rotates a counterclockwise triangle so its longest edge is opposite
/// `vertices[0]`, using vertex ids to break ties deterministically.
fn label_longest_edge(tri: [usize; 3], vertices: &[Vertex]) -> [usize; 3] {
    let rank = |i: usize| {
        let a = tri[(i + 1) % 3];
        let b = tri[(i + 2) % 3];
        let len = dist(vertices[a].coords(), vertices[b].coords());
        (len, key(a, b))
    };
    let mut best = 0;
    for i in 1..3 {
        let (l, k) = rank(i);
        let (lb, kb) = rank(best);
        // Lengths within rounding are ties.
        if l > lb * (1.0 + 1e-12) || ((l - lb).abs() <= lb * 1e-12 && k > kb) {
            best = i;
        }
    }
    [tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]]
}

fn bbox_diameter(vertices: &[Vertex]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in vertices {
        lo[0] = lo[0].min(v.x);
        lo[1] = lo[1].min(v.y);
        hi[0] = hi[0].max(v.x);
        hi[1] = hi[1].max(v.y);
    }
    if vertices.is_empty() {
        0.0
    } else {
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }
}

/// Splits the boundary of a triangulation into single-edge segments, each
/// classified by `kind_at(midpoint)`.
pub fn classify_boundary(
    vertices: &[Vertex],
    triangles: &[[usize; 3]],
    kind_at: impl Fn([f64; 2]) -> BcKind,
) -> Vec<BoundarySegment> {
    let mut count: HashMap<EdgeKey, usize> = HashMap::new();
    for tri in triangles {
        for i in 0..3 {
            *count.entry(key(tri[i], tri[(i + 1) % 3])).or_default() += 1;
        }
    }
    let mut keys: Vec<EdgeKey> = count.into_iter().filter(|&(_, c)| c == 1).map(|(k, _)| k).collect();
    keys.sort_unstable();
    keys.into_iter()
        .map(|(a, b)| {
            let m = midpoint(vertices[a], vertices[b]);
            BoundarySegment {
                path: vec![a, b],
                kind: kind_at(m.coords()),
            }
        })
        .collect()
}
