//! Weighted stiffness assembly and a kernel-aware preconditioned CG.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryCache;

pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;
/// Relative size of the per-component rhs sum that is silently projected out.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Symmetric matrix in compressed-row layout.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    /// Panics if the result is not symmetric to 1e-12 relative.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let m = SparseSymMatrix { dim, row_ptr, cols, values };
        let asym = m.asymmetry();
        let scale = m.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        assert!(asym <= 1e-12 * scale, "assembled matrix is not symmetric ({asym:e})");
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(j, _)| *j == c).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }
}

/// `L_f` with off-diagonals `weight_ij · (f_i + f_j)/2` and zero row sums;
/// `(L_f u)_i ≈ w_i · div_Σ(f ∇u)(x_i)`.
pub fn assemble_weighted_laplacian(cache: &GeometryCache, f: &[f64]) -> Result<SparseSymMatrix> {
    crate::functionals::check_positive(f)?;
    let nv = cache.num_vertices();
    let mut triplets = Vec::with_capacity(nv + 2 * cache.edges().len());
    let mut diag = vec![0.0; nv];
    for (&[a, b], &w) in cache.edges().iter().zip(cache.edge_weights()) {
        let v = w * 0.5 * (f[a] + f[b]);
        triplets.push((a, b, v));
        triplets.push((b, a, v));
        diag[a] -= v;
        diag[b] -= v;
    }
    triplets.extend(diag.into_iter().enumerate().map(|(i, d)| (i, i, d)));
    Ok(SparseSymMatrix::from_triplets(nv, triplets))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub kernel_projection: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    /// Iteration cap; `None` means `20 · dim`.
    pub max_iterations: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_SOLVE_TOL, max_iterations: None }
    }
}

fn project_zero_sum(v: &mut [f64], labels: &[usize], components: usize) {
    let mut sums = vec![0.0; components];
    let mut counts = vec![0usize; components];
    for (x, &c) in v.iter().zip(labels) {
        sums[c] += x;
        counts[c] += 1;
    }
    for (x, &c) in v.iter_mut().zip(labels) {
        *x -= sums[c] / counts[c] as f64;
    }
}

/// Solves `L u = rhs` for a negative semidefinite Laplacian-type `L` whose
/// kernel is the per-component constants. Returns `u` with `Σ w_i u_i = 0`
/// on every component.
pub fn solve_mean_zero(
    matrix: &SparseSymMatrix,
    rhs: &[f64],
    weights: &[f64],
    labels: &[usize],
    options: SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(Error::FieldLength { expected: n, got: rhs.len() });
    }
    let components = labels.iter().copied().max().map_or(0, |c| c + 1);
    let l1: f64 = rhs.iter().map(|x| x.abs()).sum();
    let mut sums = vec![0.0; components];
    for (x, &c) in rhs.iter().zip(labels) {
        sums[c] += x;
    }
    let allowed = COMPATIBILITY_TOL * l1;
    for (c, s) in sums.iter().enumerate() {
        if s.abs() > allowed {
            return Err(Error::IncompatibleRhs { component: c, sum: *s, allowed });
        }
    }
    let mut b: Vec<f64> = rhs.iter().map(|x| -x).collect();
    project_zero_sum(&mut b, labels, components);
    let bnorm = norm(&b);
    let report = |iterations, relative_residual| SolveReport { iterations, relative_residual, kernel_projection: true };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], report(0, 0.0)));
    }

    // PCG on A = -L (positive semidefinite), Jacobi preconditioner, restarted
    // from the true residual when rounding drift leaves it above tolerance.
    let inv_diag: Vec<f64> = matrix.diagonal().iter().map(|d| if *d != 0.0 { -1.0 / d } else { 1.0 }).collect();
    let cap = options.max_iterations.unwrap_or(20 * n);
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut rel;
    loop {
        let lx = matrix.mul_vec(&x);
        let mut r: Vec<f64> = lx.iter().zip(&b).map(|(a, bb)| bb + a).collect();
        project_zero_sum(&mut r, labels, components);
        rel = norm(&r) / bnorm;
        if rel <= options.tol || iterations >= cap {
            break;
        }
        let before = iterations;
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < cap {
            let ap: Vec<f64> = matrix.mul_vec(&p).into_iter().map(|v| -v).collect();
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            project_zero_sum(&mut r, labels, components);
            iterations += 1;
            if norm(&r) / bnorm <= 0.5 * options.tol {
                break;
            }
            z = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        if iterations == before {
            let lx = matrix.mul_vec(&x);
            let mut r: Vec<f64> = lx.iter().zip(&b).map(|(a, bb)| bb + a).collect();
            project_zero_sum(&mut r, labels, components);
            rel = norm(&r) / bnorm;
            break;
        }
    }
    if !(rel <= options.tol) {
        return Err(Error::NoConvergence { iterations, residual: rel });
    }
    subtract_weighted_mean(&mut x, weights, labels, components);
    Ok((x, report(iterations, rel)))
}

/// Jacobi-preconditioned CG for a symmetric positive definite matrix.
pub fn solve_spd(matrix: &SparseSymMatrix, rhs: &[f64], options: SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(Error::FieldLength { expected: n, got: rhs.len() });
    }
    let bnorm = norm(rhs);
    let report = |iterations, relative_residual| SolveReport { iterations, relative_residual, kernel_projection: false };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], report(0, 0.0)));
    }
    let inv_diag: Vec<f64> = matrix.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let cap = options.max_iterations.unwrap_or(20 * n);
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < cap {
        let ap = matrix.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        iterations += 1;
        if norm(&r) / bnorm <= 0.5 * options.tol {
            break;
        }
        z = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let ax = matrix.mul_vec(&x);
    let res: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let rel = norm(&res) / bnorm;
    if !(rel <= options.tol) {
        return Err(Error::NoConvergence { iterations, residual: rel });
    }
    Ok((x, report(iterations, rel)))
}

pub(crate) fn subtract_weighted_mean(x: &mut [f64], weights: &[f64], labels: &[usize], components: usize) {
    let mut num = vec![0.0; components];
    let mut den = vec![0.0; components];
    for ((v, w), &c) in x.iter().zip(weights).zip(labels) {
        num[c] += w * v;
        den[c] += w;
    }
    for (v, &c) in x.iter_mut().zip(labels) {
        *v -= num[c] / den[c];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
