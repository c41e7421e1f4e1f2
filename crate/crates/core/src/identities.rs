//! Discrete residuals of the two identities behind the change of variables
//! `f = (4π)^{−n/2} e^{−|x|²/4} φ`, and the error scale they induce on the
//! difference between the two deficit forms.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::GeometryCache;
use crate::linalg::Vector;
use crate::operators::{
    cell_gradients, divergence, divergence_cells, gradient, integrate, squared_gradient, tangential_part, weighted_l2,
};
use crate::functionals::to_gaussian_form;

const ROUNDING_FACTOR: f64 = 256.0;

/// `div(x^tan) − n − ⟨H, x^⊥⟩` per vertex.
pub fn divergence_identity_residual(cache: &GeometryCache) -> Vec<f64> {
    let n = cache.intrinsic_dim() as f64;
    let xt = tangential_part(cache, cache.positions());
    let div = divergence(cache, &xt);
    (0..cache.num_vertices())
        .map(|i| {
            let xn = cache.frame(i).normal_part(&cache.positions()[i]);
            div[i] - n - cache.mean_curvature()[i].dot(&xn)
        })
        .collect()
}

/// `∇φ/φ − ∇f/f − x^tan/2` per vertex, with `φ` the Gaussian form of `f`.
pub fn gradient_identity_residual(cache: &GeometryCache, f: &[f64]) -> Result<Vec<Vector>> {
    let phi = to_gaussian_form(cache, f)?;
    let gf = gradient(cache, f);
    let gphi = gradient(cache, &phi);
    Ok((0..cache.num_vertices())
        .map(|i| {
            let xt = cache.frame(i).tangential_part(&cache.positions()[i]);
            gphi[i] / phi[i] - gf[i] / f[i] - xt * 0.5
        })
        .collect())
}

/// Cell form of the divergence identity, the one the lumped Fisher terms
/// integrate against: `div_cells(Y) − n − ⟨H, x^⊥⟩` where `Y` on a cell is
/// the mean of the vertex-tangential positions at its corners.
pub fn cell_divergence_identity_residual(cache: &GeometryCache) -> Vec<f64> {
    let n = cache.intrinsic_dim();
    let xt = tangential_part(cache, cache.positions());
    let y: Vec<Vector> = (0..cache.num_cells())
        .map(|c| cache.cell(c).iter().map(|&v| xt[v]).sum::<Vector>() / (n + 1) as f64)
        .collect();
    let div = divergence_cells(cache, &y);
    (0..cache.num_vertices())
        .map(|i| {
            let xn = cache.frame(i).normal_part(&cache.positions()[i]);
            div[i] - n as f64 - cache.mean_curvature()[i].dot(&xn)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormEquivalenceScale {
    /// `‖f‖_w · ‖r‖_w` with `r` the cell divergence-identity residual.
    pub divergence_part: f64,
    /// `Σ_{c,i} β f_i (2 |a| |e| + |e|²)` over corners, with
    /// `a = ∇_c f/f_i + x_i^tan/2` and `e = ∇_c φ/φ_i − ∇_c f/f_i − x_i^tan/2`.
    pub gradient_part: f64,
    /// Floating-point allowance proportional to the magnitude of the summed terms.
    pub rounding: f64,
    pub total: f64,
}

/// Bound on `|deficit_corollary2(φ) − deficit_theorem1(f)|` built from the
/// measured identity residuals.
///
/// Expanding both lumped Fisher terms corner by corner, the two deficits
/// differ by exactly `Σ_{c,i} β f_i (2⟨a, e⟩ + |e|²) − Σ_i w_i f_i r_i`;
/// the scale bounds each sum by its absolute value (Cauchy–Schwarz for the
/// second).
pub fn form_equivalence_scale(cache: &GeometryCache, f: &[f64]) -> Result<FormEquivalenceScale> {
    let phi = to_gaussian_form(cache, f)?;
    let r = cell_divergence_identity_residual(cache);
    let divergence_part = weighted_l2(cache, f) * weighted_l2(cache, &r);
    let gf = cell_gradients(cache, f);
    let gphi = cell_gradients(cache, &phi);
    let xt = tangential_part(cache, cache.positions());
    let k = cache.intrinsic_dim() + 1;
    let mut gradient_part = 0.0;
    for c in 0..cache.num_cells() {
        for slot in 0..k {
            let i = cache.cell(c)[slot];
            let beta = cache.corner(c, slot).0;
            let a = gf[c] / f[i] + xt[i] * 0.5;
            let e = gphi[c] / phi[i] - gf[c] / f[i] - xt[i] * 0.5;
            gradient_part += beta * f[i] * (2.0 * a.norm() * e.norm() + e.norm_squared());
        }
    }
    let n = cache.intrinsic_dim() as f64;
    let grad2 = squared_gradient(cache, f);
    let magnitude: Vec<f64> = (0..cache.num_vertices())
        .map(|i| {
            let x2 = cache.positions()[i].norm_squared();
            f[i] * (1.0 + f[i].ln().abs() + n + x2 + grad2[i] / (f[i] * f[i]) + cache.mean_curvature()[i].norm_squared())
        })
        .collect();
    let rounding = ROUNDING_FACTOR * f64::EPSILON * integrate(cache, &magnitude);
    Ok(FormEquivalenceScale {
        divergence_part,
        gradient_part,
        rounding,
        total: divergence_part + gradient_part + rounding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{deficit_corollary2, deficit_theorem1, to_density};
    use crate::geometry::build_geometry_cache;
    use crate::shapes::{generate_shape, ShapeSpec};

    fn ladder(spec: ShapeSpec, levels: usize) -> Vec<GeometryCache> {
        let mut out = Vec::new();
        let mut s = spec;
        for _ in 0..levels {
            out.push(build_geometry_cache(&generate_shape(&s).unwrap()).unwrap());
            s = s.refined();
        }
        out
    }

    #[test]
    fn divergence_identity_converges_on_translated_sphere() {
        let caches = ladder(ShapeSpec::sphere(1.0, 162).with_center(&[3.0, 0.0, 0.0]), 3);
        let norms: Vec<f64> = caches.iter().map(|c| weighted_l2(c, &divergence_identity_residual(c))).collect();
        for k in 1..norms.len() {
            let order = (norms[k - 1] / norms[k]).log2();
            assert!(order >= 1.0, "{norms:?}");
        }
    }

    #[test]
    fn divergence_identity_on_centered_circle() {
        let c = &ladder(ShapeSpec::circle(1.0, 64), 1)[0];
        let worst = divergence_identity_residual(c).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn gradient_identity_is_first_order() {
        let caches = ladder(ShapeSpec::sphere(2.0, 162), 3);
        let mut maxima = Vec::new();
        for c in &caches {
            let f: Vec<f64> = c.positions().iter().map(|x| (0.3 * x[0] - 0.2 * x[2]).exp()).collect();
            let e = gradient_identity_residual(c, &f).unwrap();
            maxima.push(e.iter().map(|v| v.norm()).fold(0.0, f64::max) / c.mesh_size());
        }
        // residual / h stays bounded
        assert!(maxima[2] <= 1.2 * maxima[0], "{maxima:?}");
    }

    #[test]
    fn scale_bounds_form_difference() {
        for spec in [
            ShapeSpec::sphere(2.0, 642).with_center(&[0.3, -0.2, 0.1]),
            ShapeSpec::circle(1.3, 64).with_center(&[0.2, 0.1]),
            ShapeSpec::clifford(1.0, 1.7, [24, 24]),
        ] {
            let c = &ladder(spec, 1)[0];
            let phi: Vec<f64> = c.positions().iter().map(|x| 1.0 + 0.3 * (x[0] + 0.5 * x[1]).sin()).collect();
            let f = to_density(c, &phi).unwrap();
            let gap = (deficit_theorem1(c, &f).unwrap().deficit - deficit_corollary2(c, &phi).unwrap().deficit).abs();
            let scale = form_equivalence_scale(c, &f).unwrap();
            assert!(gap <= scale.total, "{gap} > {scale:?}");
        }
    }
}
