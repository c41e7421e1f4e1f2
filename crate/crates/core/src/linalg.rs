//! Fixed-size vector type for ambient points and closed-form routines for
//! the 1×1 / 2×2 symmetric matrices that live on tangent spaces.

use nalgebra::SVector;

/// Largest supported ambient dimension.
pub const MAX_AMBIENT: usize = 8;

/// A point or vector in the ambient space, zero-padded past the mesh's
/// ambient dimension.
pub type Vector = SVector<f64, MAX_AMBIENT>;

pub fn vector_from_slice(coords: &[f64]) -> Vector {
    let mut v = Vector::zeros();
    for (dst, src) in v.iter_mut().zip(coords) {
        *dst = *src;
    }
    v
}

/// Symmetric matrix on an `dim`-dimensional tangent space, `dim ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TangentMatrix {
    pub dim: usize,
    pub entries: [[f64; 2]; 2],
}

impl TangentMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "tangent dimension must be 1 or 2");
        Self { dim, entries: [[0.0; 2]; 2] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i][i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let mut m = Self::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len());
            for (j, v) in row.iter().enumerate() {
                m.entries[i][j] = *v;
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i][i]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.entries[i][j] * self.entries[i][j];
            }
        }
        s.sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = *self;
        for row in m.entries.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut m = *self;
        for i in 0..2 {
            for j in 0..2 {
                m.entries[i][j] += other.entries[i][j];
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    /// Adds `c` to every diagonal entry.
    pub fn shift(&self, c: f64) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            m.entries[i][i] += c;
        }
        m
    }
}

/// Smallest eigenvalue of a symmetric 1×1 or 2×2 matrix.
pub fn sym_eig_min(m: &TangentMatrix) -> f64 {
    sym_eigenvalues(m).0
}

/// Eigenvalues `(min, max)`; for `dim == 1` both equal the single entry.
pub fn sym_eigenvalues(m: &TangentMatrix) -> (f64, f64) {
    match m.dim {
        1 => (m.entries[0][0], m.entries[0][0]),
        _ => {
            let a = m.entries[0][0];
            let b = 0.5 * (m.entries[0][1] + m.entries[1][0]);
            let d = m.entries[1][1];
            let mean = 0.5 * (a + d);
            let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            (mean - radius, mean + radius)
        }
    }
}

pub fn sym_det(m: &TangentMatrix) -> f64 {
    match m.dim {
        1 => m.entries[0][0],
        _ => {
            let b = 0.5 * (m.entries[0][1] + m.entries[1][0]);
            m.entries[0][0] * m.entries[1][1] - b * b
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if order == 0 { 1.0 } else { p1 };
    let dp = order as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_known_matrix() {
        let id = TangentMatrix::identity(2);
        assert_eq!(sym_eig_min(&id), 1.0);
        assert_eq!(sym_det(&id), 1.0);
        let m = TangentMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert!((sym_eig_min(&m) - 1.0).abs() < 1e-15);
        assert!((sym_det(&m) - 3.0).abs() < 1e-15);
        let one = TangentMatrix::from_rows(&[&[-0.5]]);
        assert_eq!(sym_eig_min(&one), -0.5);
        assert_eq!(sym_det(&one), -0.5);
    }

    #[test]
    fn eigenvalues_are_characteristic_roots() {
        // brute force: scan det(M - λI) for sign changes and bisect
        let mats = [[0.3, -1.2, 2.5], [4.0, 0.0, -1.0], [1e-3, 5.0, 1e-3], [-2.0, 0.7, -2.0]];
        for [a, b, d] in mats {
            let m = TangentMatrix::from_rows(&[&[a, b], &[b, d]]);
            let charpoly = |l: f64| (a - l) * (d - l) - b * b;
            let mut roots = Vec::new();
            let (lo, hi, steps) = (-20.0, 20.0, 400_000);
            let dl = (hi - lo) / steps as f64;
            for k in 0..steps {
                let (x0, x1) = (lo + k as f64 * dl, lo + (k + 1) as f64 * dl);
                if charpoly(x0) == 0.0 {
                    roots.push(x0);
                } else if charpoly(x0) * charpoly(x1) < 0.0 {
                    let (mut l, mut r) = (x0, x1);
                    for _ in 0..80 {
                        let mid = 0.5 * (l + r);
                        if charpoly(l) * charpoly(mid) <= 0.0 { r = mid } else { l = mid }
                    }
                    roots.push(0.5 * (l + r));
                }
            }
            let (e0, e1) = sym_eigenvalues(&m);
            if roots.len() == 1 {
                roots.push(roots[0]);
            }
            assert!((roots[0] - e0).abs() < 1e-9, "{roots:?} vs {e0}");
            assert!((roots[roots.len() - 1] - e1).abs() < 1e-9);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(64);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((q - 2.0 / 11.0).abs() < 1e-13);
        let (x, w) = gauss_legendre(5);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((q - 2.0 / 9.0).abs() < 1e-13);
    }
}
