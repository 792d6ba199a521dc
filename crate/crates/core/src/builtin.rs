//! Built-in benchmark problems: the centred point, line and patch loads on the
//! simply supported unit square, and a uniformly loaded L-shaped plate under
//! three boundary-condition sets.

use crate::mesh::{classify_boundary, BcKind, Mesh, MeshError, Vertex};
use crate::model::{DistributedLoad, LineLoad, LoadSpec, Material, PlateProblem, PointLoad, Region};
use crate::oracle::{NavierCase, NavierLoad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BuiltinCase {
    Point,
    Line,
    Square,
    LShapeSs,
    LShapeCc,
    LShapeFree,
}

/// Half-length of the line load and half-width of the square patch.
pub const HALF_WIDTH: f64 = 1.0 / 3.0;

impl BuiltinCase {
    pub const ALL: [BuiltinCase; 6] = [
        BuiltinCase::Point,
        BuiltinCase::Line,
        BuiltinCase::Square,
        BuiltinCase::LShapeSs,
        BuiltinCase::LShapeCc,
        BuiltinCase::LShapeFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinCase::Point => "point",
            BuiltinCase::Line => "line",
            BuiltinCase::Square => "square",
            BuiltinCase::LShapeSs => "lshape_ss",
            BuiltinCase::LShapeCc => "lshape_cc",
            BuiltinCase::LShapeFree => "lshape_free",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn material() -> Material {
        Material::new(1.0, 0.3, 1.0).expect("valid constants")
    }

    pub fn mesh(self) -> Result<Mesh, MeshError> {
        match self {
            BuiltinCase::Point => {
                let (v, t) = grid(&[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0], |_, _| true);
                let segs = classify_boundary(&v, &t, |_| BcKind::SimplySupported);
                Mesh::build(v, &t, segs, None)
            }
            BuiltinCase::Line | BuiltinCase::Square => {
                let lo = 0.5 - HALF_WIDTH;
                let hi = 0.5 + HALF_WIDTH;
                let ticks = [0.0, lo, 0.5, hi, 1.0];
                let (v, t) = grid(&ticks, &ticks, |_, _| true);
                let segs = classify_boundary(&v, &t, |_| BcKind::SimplySupported);
                let line = (self == BuiltinCase::Line).then(|| vec![[0.5, lo], [0.5, hi]]);
                Mesh::build(v, &t, segs, line)
            }
            BuiltinCase::LShapeSs | BuiltinCase::LShapeCc | BuiltinCase::LShapeFree => {
                let ticks: Vec<f64> = (0..=8).map(|i| i as f64 / 4.0).collect();
                let (v, t) = grid(&ticks, &ticks, |i, j| i < 4 || j < 4);
                let segs = classify_boundary(&v, &t, |p| match self {
                    BuiltinCase::LShapeCc => BcKind::Clamped,
                    // The two edges meeting at the re-entrant corner (1, 1).
                    BuiltinCase::LShapeFree
                        if ((p[1] - 1.0).abs() < 1e-12 && p[0] > 1.0) || ((p[0] - 1.0).abs() < 1e-12 && p[1] > 1.0) =>
                    {
                        BcKind::Free
                    }
                    _ => BcKind::SimplySupported,
                });
                Mesh::build(v, &t, segs, None)
            }
        }
    }

    pub fn loads(self) -> LoadSpec {
        match self {
            BuiltinCase::Point => LoadSpec {
                points: vec![PointLoad {
                    at: [0.5, 0.5],
                    magnitude: 1.0,
                }],
                ..Default::default()
            },
            BuiltinCase::Line => LoadSpec {
                line: Some(LineLoad {
                    polyline: vec![[0.5, 0.5 - HALF_WIDTH], [0.5, 0.5 + HALF_WIDTH]],
                    value: 1.0,
                }),
                ..Default::default()
            },
            BuiltinCase::Square => LoadSpec {
                distributed: vec![DistributedLoad {
                    region: Region::Rect {
                        x0: 0.5 - HALF_WIDTH,
                        x1: 0.5 + HALF_WIDTH,
                        y0: 0.5 - HALF_WIDTH,
                        y1: 0.5 + HALF_WIDTH,
                    },
                    value: 1.0,
                }],
                ..Default::default()
            },
            _ => LoadSpec {
                distributed: vec![DistributedLoad {
                    region: Region::Whole,
                    value: 1.0,
                }],
                ..Default::default()
            },
        }
    }

    pub fn problem(self) -> PlateProblem {
        let mesh = self.mesh().expect("built-in meshes are valid");
        PlateProblem::new(mesh, Self::material(), self.loads()).expect("built-in problems are valid")
    }

    /// Series solution, for the square-plate cases.
    pub fn navier(self) -> Option<NavierCase> {
        let load = match self {
            BuiltinCase::Point => NavierLoad::Point { f0: 1.0 },
            BuiltinCase::Line => NavierLoad::Line { d: HALF_WIDTH, g0: 1.0 },
            BuiltinCase::Square => NavierLoad::Square {
                c: HALF_WIDTH,
                d: HALF_WIDTH,
                f0: 1.0,
            },
            _ => return None,
        };
        NavierCase::new(load, Self::material()).ok()
    }
}

/// Tensor grid with every cell split along its `/` diagonal; `keep(i, j)`
/// selects cells by their lower-left index.
fn grid(xs: &[f64], ys: &[f64], keep: impl Fn(usize, usize) -> bool) -> (Vec<Vertex>, Vec<[usize; 3]>) {
    let nx = xs.len();
    let ny = ys.len();
    let cell_used = |i: usize, j: usize| i + 1 < nx && j + 1 < ny && keep(i, j);
    let mut ids = vec![usize::MAX; nx * ny];
    let mut vertices = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let touches = [
                (i, j),
                (i.wrapping_sub(1), j),
                (i, j.wrapping_sub(1)),
                (i.wrapping_sub(1), j.wrapping_sub(1)),
            ]
            .iter()
            .any(|&(a, b)| a < nx && b < ny && cell_used(a, b));
            if touches {
                ids[j * nx + i] = vertices.len();
                vertices.push(Vertex::new(xs[i], ys[j]));
            }
        }
    }
    let id = |i: usize, j: usize| ids[j * nx + i];
    let mut tris = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            if cell_used(i, j) {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    (vertices, tris)
}
