//! CSV and legacy VTK writers.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a CSV
//! read back with [`read_records`] reproduces the records bit for bit.

use std::fmt::Write as _;

use plate_core::adapt::{ConvergenceRecord, RateSummary};
use plate_core::assembly::Solution;
use plate_core::mesh::Mesh;
use thiserror::Error;

pub const CSV_HEADER: &str = "ndofs,nelems,eta,energynorm";

pub fn records_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let energy = r.energy.map(|e| e.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{},{}", r.ndofs, r.nelems, r.eta, energy).unwrap();
    }
    s
}

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("expected header `{CSV_HEADER}`, found `{0}`")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// Parses a CSV written by [`records_csv`]. Step numbers are the row order.
pub fn read_records(text: &str) -> Result<Vec<ConvergenceRecord>, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(CsvError::Header(header.to_string()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let row = |message: String| CsvError::Row { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(row(format!("expected 4 fields, found {}", fields.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| row(format!("`{s}`: {e}")));
        let float = |s: &str| s.parse::<f64>().map_err(|e| row(format!("`{s}`: {e}")));
        out.push(ConvergenceRecord {
            step: out.len(),
            ndofs: int(fields[0])?,
            nelems: int(fields[1])?,
            eta: float(fields[2])?,
            energy: if fields[3].is_empty() {
                None
            } else {
                Some(float(fields[3])?)
            },
        });
    }
    Ok(out)
}

/// One row of the reproduction summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub case: String,
    pub strategy: String,
    pub steps: usize,
    pub final_ndofs: usize,
    pub final_eta: f64,
    pub slope: Option<RateSummary>,
    pub energy_slope: Option<f64>,
}

pub const SUMMARY_HEADER: &str =
    "case,strategy,steps,final_ndofs,final_eta,slope_window,slope_full,energy_slope_window";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.case,
            r.strategy,
            r.steps,
            r.final_ndofs,
            r.final_eta,
            opt(r.slope.map(|x| x.window)),
            opt(r.slope.map(|x| x.full)),
            opt(r.energy_slope)
        )
        .unwrap();
    }
    s
}

/// Legacy ASCII VTK unstructured grid with `eta_K` per cell and the vertex
/// deflection per point.
pub fn vtk(mesh: &Mesh, eta_k: &[f64], deflection: &[f64], title: &str) -> String {
    assert_eq!(eta_k.len(), mesh.num_triangles());
    assert_eq!(deflection.len(), mesh.num_vertices());
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    // The title line may not contain a newline and is capped at 255 chars.
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(s, "{title}").unwrap();
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {nv} double").unwrap();
    for v in mesh.vertices() {
        writeln!(s, "{} {} 0", v.x, v.y).unwrap();
    }
    writeln!(s, "CELLS {nt} {}", 4 * nt).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t.vertices[0], t.vertices[1], t.vertices[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        s.push_str("5\n");
    }
    writeln!(s, "CELL_DATA {nt}").unwrap();
    s.push_str("SCALARS eta_K double 1\nLOOKUP_TABLE default\n");
    for e in eta_k {
        writeln!(s, "{e:e}").unwrap();
    }
    writeln!(s, "POINT_DATA {nv}").unwrap();
    s.push_str("SCALARS deflection double 1\nLOOKUP_TABLE default\n");
    for d in deflection {
        writeln!(s, "{d:e}").unwrap();
    }
    s
}

/// Deflection on an `nx` by `ny` grid over the bounding box; points outside
/// the mesh are skipped.
pub fn samples_csv(solution: &Solution, nx: usize, ny: usize) -> String {
    let (lo, hi) = solution.mesh().bounding_box();
    let mut s = String::from("x,y,deflection\n");
    for j in 0..ny {
        let y = lo[1] + (hi[1] - lo[1]) * j as f64 / (ny - 1) as f64;
        for i in 0..nx {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (nx - 1) as f64;
            if let Ok(b) = solution.evaluate([x, y], 0) {
                writeln!(s, "{x},{y},{:e}", b.value()).unwrap();
            }
        }
    }
    s
}
