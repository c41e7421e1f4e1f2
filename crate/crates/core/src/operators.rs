//! First- and second-order operators on per-vertex fields.
//!
//! `gradient` and `divergence` are exact adjoints in the lumped inner
//! product `⟨a, b⟩_w = Σ_i w_i a_i b_i`. `laplace_beltrami` is the
//! cotangent (n = 2) or second-difference (n = 1) stiffness divided by the
//! pointwise vertex area; `weak_laplacian` divides by `w` instead and is the
//! exact composition `divergence_cells ∘ cell_gradients`.

use crate::geometry::GeometryCache;
use crate::linalg::{TangentMatrix, Vector};

pub type ScalarField = Vec<f64>;
pub type AmbientField = Vec<Vector>;

/// Per-cell gradient `∇_c f` of the piecewise-linear interpolant.
pub fn cell_gradients(cache: &GeometryCache, f: &[f64]) -> Vec<Vector> {
    let k = cache.intrinsic_dim() + 1;
    (0..cache.num_cells())
        .map(|c| {
            let cell = cache.cell(c);
            let base = f[cell[0]];
            (1..k).map(|a| cache.corner(c, a).1 * (f[cell[a]] - base)).sum()
        })
        .collect()
}

/// Tangential gradient at each vertex: corner-measure average of the
/// incident cell gradients, projected onto the vertex tangent space.
pub fn gradient(cache: &GeometryCache, f: &[f64]) -> AmbientField {
    let cell_grads = cell_gradients(cache, f);
    let k = cache.intrinsic_dim() + 1;
    (0..cache.num_vertices())
        .map(|v| {
            let mut g = Vector::zeros();
            for &c in cache.vertex_cells(v) {
                let slot = cache.cell(c).iter().position(|&x| x == v).unwrap();
                debug_assert!(slot < k);
                g += cell_grads[c] * cache.corner(c, slot).0;
            }
            cache.frame(v).tangential_part(&(g / cache.dual_measure()[v]))
        })
        .collect()
}

/// Lumped squared gradient norm: `(1/w_i) Σ_{c ∋ i} β_{c,i} |∇_c f|²`, with
/// `β` the corner shares of `w`. Unlike `|gradient(f)|²` it vanishes only on
/// constants, and `Σ_i w_i squared_gradient_i / f_i` bounds the Fisher
/// information of the piecewise-linear interpolant from above.
pub fn squared_gradient(cache: &GeometryCache, f: &[f64]) -> ScalarField {
    let cell_grads = cell_gradients(cache, f);
    let k = cache.intrinsic_dim() + 1;
    let mut out = vec![0.0; cache.num_vertices()];
    for (c, g) in cell_grads.iter().enumerate() {
        let g2 = g.norm_squared();
        for a in 0..k {
            out[cache.cell(c)[a]] += cache.corner(c, a).0 * g2;
        }
    }
    for (o, w) in out.iter_mut().zip(cache.dual_measure()) {
        *o /= w;
    }
    out
}

/// Negative adjoint of [`gradient`]: `Σ w g div(V) = -Σ w ⟨V, ∇g⟩` for all `g`.
pub fn divergence(cache: &GeometryCache, field: &[Vector]) -> ScalarField {
    let k = cache.intrinsic_dim() + 1;
    let projected: Vec<Vector> = field.iter().enumerate().map(|(v, x)| cache.frame(v).tangential_part(x)).collect();
    let mut out = vec![0.0; cache.num_vertices()];
    for c in 0..cache.num_cells() {
        let cell = cache.cell(c);
        let mut avg = Vector::zeros();
        for a in 0..k {
            avg += projected[cell[a]] * cache.corner(c, a).0;
        }
        for a in 0..k {
            out[cell[a]] -= avg.dot(&cache.corner(c, a).1);
        }
    }
    for (o, w) in out.iter_mut().zip(cache.dual_measure()) {
        *o /= w;
    }
    out
}

/// Weak divergence of a per-cell field with the lumped mass.
/// `divergence_cells(cell_gradients(u)) == weak_laplacian(u)`.
pub fn divergence_cells(cache: &GeometryCache, cell_field: &[Vector]) -> ScalarField {
    let k = cache.intrinsic_dim() + 1;
    let mut out = vec![0.0; cache.num_vertices()];
    for (c, field) in cell_field.iter().enumerate() {
        let cell = cache.cell(c);
        let measure = cache.cell_measure()[c];
        for a in 0..k {
            out[cell[a]] -= measure * field.dot(&cache.corner(c, a).1);
        }
    }
    for (o, w) in out.iter_mut().zip(cache.dual_measure()) {
        *o /= w;
    }
    out
}

fn stiffness_apply(cache: &GeometryCache, f: &[f64], area: &[f64]) -> ScalarField {
    (0..cache.num_vertices())
        .map(|i| {
            let s: f64 = cache.adjacency(i).iter().map(|&(j, w)| w * (f[j] - f[i])).sum();
            s / area[i]
        })
        .collect()
}

/// Pointwise Laplace–Beltrami; sign convention `Δ_Σ x = H`.
pub fn laplace_beltrami(cache: &GeometryCache, f: &[f64]) -> ScalarField {
    stiffness_apply(cache, f, cache.laplacian_area())
}

/// Stiffness divided by the integration measure `w`.
pub fn weak_laplacian(cache: &GeometryCache, f: &[f64]) -> ScalarField {
    stiffness_apply(cache, f, cache.dual_measure())
}

pub fn tangential_part(cache: &GeometryCache, field: &[Vector]) -> AmbientField {
    field.iter().enumerate().map(|(v, x)| cache.frame(v).tangential_part(x)).collect()
}

pub fn normal_part(cache: &GeometryCache, field: &[Vector]) -> AmbientField {
    field.iter().enumerate().map(|(v, x)| cache.frame(v).normal_part(x)).collect()
}

/// Raw quadric-fit Hessian of `u` in each vertex's tangent basis.
pub fn hessian_fit(cache: &GeometryCache, u: &[f64]) -> Vec<TangentMatrix> {
    (0..cache.num_vertices()).map(|v| cache.fit_scalar(u, v).1).collect()
}

/// Quadric-fit Hessian with its trace shifted onto `laplace_beltrami(u)`.
pub fn hessian(cache: &GeometryCache, u: &[f64]) -> Vec<TangentMatrix> {
    let lap = laplace_beltrami(cache, u);
    let n = cache.intrinsic_dim() as f64;
    hessian_fit(cache, u)
        .into_iter()
        .zip(lap)
        .map(|(h, l)| h.shift((l - h.trace()) / n))
        .collect()
}

/// `Σ_i w_i a_i`.
pub fn integrate(cache: &GeometryCache, values: &[f64]) -> f64 {
    values.iter().zip(cache.dual_measure()).map(|(a, w)| a * w).sum()
}

/// Weighted L² norm `(Σ_i w_i a_i²)^{1/2}`.
pub fn weighted_l2(cache: &GeometryCache, values: &[f64]) -> f64 {
    values.iter().zip(cache.dual_measure()).map(|(a, w)| w * a * a).sum::<f64>().sqrt()
}
