//! Symmetric positive definite solves: reverse Cuthill-McKee ordering with an
//! envelope Cholesky factorization, falling back to Jacobi-preconditioned
//! conjugate gradients.

use std::collections::VecDeque;

use thiserror::Error;

use super::SparseMatrix;

const CG_TOLERANCE: f64 = 1e-12;
const REFINEMENT_STEPS: usize = 3;
/// Largest accepted backward error of a direct solve.
const BACKWARD_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("system matrix is not positive definite (pivot {pivot} is {value:e}); the plate may be insufficiently supported")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("right-hand side has length {got}, matrix has {n} rows")]
    DimensionMismatch { got: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// No solve was performed (for example, a wrapped interpolant).
    #[default]
    None,
    Cholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverDiagnostics {
    pub method: SolverMethod,
    pub size: usize,
    /// Stored entries of the Cholesky factor.
    pub factor_entries: usize,
    /// Refinement steps (Cholesky) or iterations (CG).
    pub iterations: usize,
    pub relative_residual: f64,
    /// Normwise backward error `|r| / (|A| |x| + |b|)` of the diagonally
    /// scaled system.
    pub backward_error: f64,
    /// Why the direct factorization was abandoned, if it was.
    pub fallback_reason: Option<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, seen: &mut Vec<bool>| -> Vec<usize> {
        let mut out = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < out.len() {
            let v = out[head];
            head += 1;
            let mut nb: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !seen[j]).collect();
            nb.sort_by_key(|&j| (degree[j], j));
            for j in nb {
                seen[j] = true;
                out.push(j);
            }
        }
        out
    };
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        // Two sweeps towards a pseudo-peripheral node.
        let mut start = seed;
        for _ in 0..2 {
            let mut eccentric = vec![usize::MAX; n];
            let mut queue = VecDeque::from([start]);
            eccentric[start] = 0;
            let mut far = start;
            while let Some(v) = queue.pop_front() {
                for (j, _) in a.row(v) {
                    if eccentric[j] == usize::MAX && !visited[j] {
                        eccentric[j] = eccentric[v] + 1;
                        queue.push_back(j);
                        if (eccentric[j], std::cmp::Reverse(degree[j]))
                            > (eccentric[far], std::cmp::Reverse(degree[far]))
                        {
                            far = j;
                        }
                    }
                }
            }
            start = far;
        }
        order.extend(bfs_levels(start, &mut visited));
    }
    order.reverse();
    order
}

/// Lower-triangular envelope (skyline) factor stored row by row.
struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Envelope {
    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.start[i]..self.start[i + 1]]
    }

    /// Builds the envelope of `P A P^T` scaled by `s` and factors it in place.
    fn factor(a: &SparseMatrix, perm: &[usize], scale: &[f64]) -> Result<Self, SolverError> {
        let n = a.n;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, &i) in inv.iter().enumerate() {
            for (c, _) in a.row(old) {
                let j = inv[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for (old, &i) in inv.iter().enumerate() {
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j <= i {
                    values[start[i] + j - first[i]] = v * scale[old] * scale[c];
                }
            }
        }
        let mut env = Envelope { first, start, values };
        for i in 0..n {
            let fi = env.first[i];
            let (done, rest) = env.values.split_at_mut(env.start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = env.first[j];
                let k0 = fi.max(fj);
                let row_j = &done[env.start[j]..env.start[j + 1]];
                let s = dot(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - s) / ljj;
            }
            let off = &row_i[..i - fi];
            let d = row_i[i - fi] - dot(off, off);
            // The scaled diagonal is one, so this threshold is relative.
            if d.is_nan() || d <= 1e-13 {
                return Err(SolverError::NotPositiveDefinite { pivot: i, value: d });
            }
            row_i[i - fi] = d.sqrt();
        }
        Ok(env)
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            let s = dot(&row[..i - fi], &x[fi..i]);
            x[i] = (x[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            x[i] /= row[i - fi];
            let xi = x[i];
            for (xk, l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *xk -= l * xi;
            }
        }
    }
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

fn relative(r: &[f64], b: &[f64]) -> f64 {
    let nb = norm(b);
    if nb == 0.0 {
        norm(r)
    } else {
        norm(r) / nb
    }
}

fn backward_error(a: &SparseMatrix, x: &[f64], b: &[f64], scale: &[f64]) -> f64 {
    let r = residual(a, x, b);
    let sr: Vec<f64> = r.iter().zip(scale).map(|(ri, s)| ri * s).collect();
    let sx: Vec<f64> = x.iter().zip(scale).map(|(xi, s)| xi / s).collect();
    let sb: Vec<f64> = b.iter().zip(scale).map(|(bi, s)| bi * s).collect();
    let a_norm = (0..a.n)
        .map(|i| a.row(i).map(|(j, v)| (v * scale[i] * scale[j]).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let denom = a_norm * norm(&sx) + norm(&sb);
    if denom == 0.0 {
        0.0
    } else {
        norm(&sr) / denom
    }
}

fn cholesky_solve(a: &SparseMatrix, b: &[f64], scale: &[f64]) -> Result<(Vec<f64>, SolverDiagnostics), SolverError> {
    let perm = reverse_cuthill_mckee(a);
    let env = Envelope::factor(a, &perm, scale)?;
    let n = a.n;
    let apply = |rhs: &[f64]| {
        let mut y: Vec<f64> = perm.iter().map(|&old| rhs[old] * scale[old]).collect();
        env.solve_in_place(&mut y);
        let mut out = vec![0.0; n];
        for (new, &old) in perm.iter().enumerate() {
            out[old] = y[new] * scale[old];
        }
        out
    };
    let mut x = apply(b);
    let mut r = residual(a, &x, b);
    let mut rel = relative(&r, b);
    let mut steps = 0;
    while steps < REFINEMENT_STEPS && rel > 1e-15 {
        let dx = apply(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, d)| xi + d).collect();
        let tr = residual(a, &trial, b);
        let trel = relative(&tr, b);
        steps += 1;
        if trel >= rel {
            break;
        }
        x = trial;
        r = tr;
        rel = trel;
    }
    let backward = backward_error(a, &x, b, scale);
    Ok((
        x,
        SolverDiagnostics {
            method: SolverMethod::Cholesky,
            size: n,
            factor_entries: env.values.len(),
            iterations: steps,
            relative_residual: rel,
            backward_error: backward,
            fallback_reason: None,
        },
    ))
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolverDiagnostics), SolverError> {
    let n = a.n;
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(SolverError::NotPositiveDefinite {
            pivot: i,
            value: diag[i],
        });
    }
    let nb = norm(b);
    let mut x = vec![0.0; n];
    let diagnostics = |x: Vec<f64>, iterations: usize, residual: f64| {
        (
            x,
            SolverDiagnostics {
                method: SolverMethod::ConjugateGradient,
                size: n,
                factor_entries: 0,
                iterations,
                relative_residual: residual,
                backward_error: 0.0,
                fallback_reason: None,
            },
        )
    };
    if nb == 0.0 {
        return Ok(diagnostics(x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap.is_nan() || pap <= 0.0 {
            return Err(SolverError::NotPositiveDefinite { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / nb;
        if rel <= tol {
            let true_rel = relative(&residual(a, &x, b), b);
            return Ok(diagnostics(x, it, true_rel));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::NoConvergence {
        iterations: max_iter,
        residual: norm(&r) / nb,
    })
}

/// Solves `A x = b` for a symmetric positive definite `A`.
pub fn solve_spd(a: &SparseMatrix, b: &[f64]) -> Result<(Vec<f64>, SolverDiagnostics), SolverError> {
    if b.len() != a.n {
        return Err(SolverError::DimensionMismatch { got: b.len(), n: a.n });
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(SolverError::NotPositiveDefinite {
            pivot: i,
            value: diag[i],
        });
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let reason = match cholesky_solve(a, b, &scale) {
        Ok((x, diag)) if diag.backward_error <= BACKWARD_TOLERANCE => return Ok((x, diag)),
        Ok((_, diag)) => format!("backward error {:e} too large", diag.backward_error),
        Err(e) => e.to_string(),
    };
    let (x, mut diag) = conjugate_gradient(a, b, CG_TOLERANCE, 20 * a.n.max(10))?;
    diag.backward_error = backward_error(a, &x, b, &scale);
    diag.fallback_reason = Some(reason);
    Ok((x, diag))
}
