//! Every term of the log-Sobolev inequality on a mesh, in both the plain
//! (`f dvol`) and the Gaussian (`φ dμ`) form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryCache;
use crate::linalg::Vector;
use crate::operators::{squared_gradient, AmbientField, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeficitForm {
    /// `∫ f (log f + n + n/2 log 4π) − ∫ |∇f|²/f − ∫ f|H|² ≤ M log M`.
    Theorem1,
    /// `∫ φ log φ dμ − ∫ |∇φ|²/φ dμ − ∫ φ |H + x^⊥/2|² dμ ≤ M log M`.
    Corollary2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTerms {
    pub component: usize,
    pub entropy_term: f64,
    pub fisher_term: f64,
    pub curvature_term: f64,
    pub mass: f64,
    pub rhs: f64,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshMetadata {
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub vertices: usize,
    pub cells: usize,
    pub components: usize,
    pub mesh_size: f64,
}

impl MeshMetadata {
    pub fn from_cache(cache: &GeometryCache) -> Self {
        Self {
            intrinsic_dim: cache.intrinsic_dim(),
            ambient_dim: cache.ambient_dim(),
            vertices: cache.num_vertices(),
            cells: cache.num_cells(),
            components: cache.num_components(),
            mesh_size: cache.mesh_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitReport {
    pub form: DeficitForm,
    pub entropy_term: f64,
    pub fisher_term: f64,
    pub curvature_term: f64,
    pub mass: f64,
    pub rhs: f64,
    /// `rhs − (entropy − fisher − curvature)`; nonnegative in the smooth setting.
    pub deficit: f64,
    pub components: Vec<ComponentTerms>,
    pub mesh: MeshMetadata,
}

impl DeficitReport {
    pub fn lhs(&self) -> f64 {
        self.entropy_term - self.fisher_term - self.curvature_term
    }
}

fn x_log_x(m: f64) -> f64 {
    if m == 0.0 { 0.0 } else { m * m.ln() }
}

fn deficit_of(entropy: f64, fisher: f64, curvature: f64, mass: f64) -> (f64, f64) {
    let rhs = x_log_x(mass);
    (rhs, rhs - (entropy - fisher - curvature))
}

/// `n + (n/2) log 4π`.
pub fn entropy_constant(n: usize) -> f64 {
    let n = n as f64;
    n + 0.5 * n * (4.0 * PI).ln()
}

pub fn check_positive(f: &[f64]) -> Result<()> {
    match f.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(vertex) => Err(Error::NonpositiveDensity { vertex, value: f[vertex] }),
        None => Ok(()),
    }
}

pub(crate) fn check_len(cache: &GeometryCache, f: &[f64]) -> Result<()> {
    if f.len() != cache.num_vertices() {
        return Err(Error::FieldLength { expected: cache.num_vertices(), got: f.len() });
    }
    Ok(())
}

/// Per-vertex integrands (before multiplying by `w_i`): mass, entropy,
/// Fisher and curvature densities.
struct Integrands {
    mass: Vec<f64>,
    entropy: Vec<f64>,
    fisher: Vec<f64>,
    curvature: Vec<f64>,
}

fn assemble(cache: &GeometryCache, form: DeficitForm, it: Integrands) -> DeficitReport {
    let w = cache.dual_measure();
    let labels = cache.component_labels();
    let k = cache.num_components();
    let mut per = vec![[0.0f64; 4]; k];
    let mut total = [0.0f64; 4];
    for i in 0..cache.num_vertices() {
        let vals = [it.entropy[i], it.fisher[i], it.curvature[i], it.mass[i]];
        for t in 0..4 {
            per[labels[i]][t] += w[i] * vals[t];
            total[t] += w[i] * vals[t];
        }
    }
    let components = per
        .iter()
        .enumerate()
        .map(|(c, t)| {
            let (rhs, deficit) = deficit_of(t[0], t[1], t[2], t[3]);
            ComponentTerms {
                component: c,
                entropy_term: t[0],
                fisher_term: t[1],
                curvature_term: t[2],
                mass: t[3],
                rhs,
                deficit,
            }
        })
        .collect();
    let (rhs, deficit) = deficit_of(total[0], total[1], total[2], total[3]);
    DeficitReport {
        form,
        entropy_term: total[0],
        fisher_term: total[1],
        curvature_term: total[2],
        mass: total[3],
        rhs,
        deficit,
        components,
        mesh: MeshMetadata::from_cache(cache),
    }
}

pub fn deficit_theorem1(cache: &GeometryCache, f: &[f64]) -> Result<DeficitReport> {
    check_len(cache, f)?;
    check_positive(f)?;
    let c = entropy_constant(cache.intrinsic_dim());
    let grad2 = squared_gradient(cache, f);
    let it = Integrands {
        mass: f.to_vec(),
        entropy: f.iter().map(|v| v * (v.ln() + c)).collect(),
        fisher: grad2.iter().zip(f).map(|(g, v)| g / v).collect(),
        curvature: cache.mean_curvature().iter().zip(f).map(|(h, v)| v * h.norm_squared()).collect(),
    };
    Ok(assemble(cache, DeficitForm::Theorem1, it))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianWeights {
    /// `(4π)^{−n/2} e^{−|x_i|²/4}`.
    pub values: Vec<f64>,
    /// `μ(Σ) = Σ_i w_i values_i`.
    pub total: f64,
}

pub fn gaussian_weights(cache: &GeometryCache) -> GaussianWeights {
    let n = cache.intrinsic_dim() as f64;
    let norm = (4.0 * PI).powf(-0.5 * n);
    let values: Vec<f64> = cache.positions().iter().map(|x| norm * (-0.25 * x.norm_squared()).exp()).collect();
    let total = values.iter().zip(cache.dual_measure()).map(|(g, w)| g * w).sum();
    GaussianWeights { values, total }
}

/// Gaussian density `μ(Σ)`.
pub fn gaussian_density(cache: &GeometryCache) -> f64 {
    gaussian_weights(cache).total
}

/// `H + x^⊥/2` per vertex; vanishes on self-shrinkers.
pub fn shrinker_residual(cache: &GeometryCache) -> AmbientField {
    cache
        .positions()
        .iter()
        .enumerate()
        .map(|(i, x)| cache.mean_curvature()[i] + cache.frame(i).normal_part(x) * 0.5)
        .collect()
}

pub fn deficit_corollary2(cache: &GeometryCache, phi: &[f64]) -> Result<DeficitReport> {
    check_len(cache, phi)?;
    check_positive(phi)?;
    let gauss = gaussian_weights(cache).values;
    let grad2 = squared_gradient(cache, phi);
    let residual = shrinker_residual(cache);
    let it = Integrands {
        mass: phi.iter().zip(&gauss).map(|(p, g)| g * p).collect(),
        entropy: phi.iter().zip(&gauss).map(|(p, g)| g * p * p.ln()).collect(),
        fisher: grad2.iter().zip(phi).zip(&gauss).map(|((d, p), g)| g * d / p).collect(),
        curvature: residual.iter().zip(phi).zip(&gauss).map(|((r, p), g)| g * p * r.norm_squared()).collect(),
    };
    Ok(assemble(cache, DeficitForm::Corollary2, it))
}

/// `f = (4π)^{−n/2} e^{−|x|²/4} φ`.
pub fn to_density(cache: &GeometryCache, phi: &[f64]) -> Result<ScalarField> {
    check_len(cache, phi)?;
    check_positive(phi)?;
    Ok(gaussian_weights(cache).values.iter().zip(phi).map(|(g, p)| g * p).collect())
}

pub fn to_gaussian_form(cache: &GeometryCache, f: &[f64]) -> Result<ScalarField> {
    check_len(cache, f)?;
    check_positive(f)?;
    Ok(gaussian_weights(cache).values.iter().zip(f).map(|(g, v)| v / g).collect())
}

/// `M log M − Σ a_k log a_k` for component masses `a_k`.
pub fn concavity_gap(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    x_log_x(total) - masses.iter().map(|a| x_log_x(*a)).sum::<f64>()
}

/// Term-wise sum of reports over disjoint pieces, with the right-hand side
/// recomputed from the total mass.
pub fn combine_components(reports: &[DeficitReport]) -> Result<DeficitReport> {
    let first = reports.first().ok_or(Error::MixedForms)?;
    if reports.iter().any(|r| r.form != first.form || r.mesh.intrinsic_dim != first.mesh.intrinsic_dim) {
        return Err(Error::MixedForms);
    }
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    let entropy = reports.iter().map(|r| r.entropy_term).sum();
    let fisher = reports.iter().map(|r| r.fisher_term).sum();
    let curvature = reports.iter().map(|r| r.curvature_term).sum();
    let mass = reports.iter().map(|r| r.mass).sum();
    let (rhs, deficit) = deficit_of(entropy, fisher, curvature, mass);
    let mut components = Vec::new();
    for r in reports {
        for c in &r.components {
            components.push(ComponentTerms { component: components.len(), ..c.clone() });
        }
    }
    let mesh = MeshMetadata {
        intrinsic_dim: first.mesh.intrinsic_dim,
        ambient_dim: first.mesh.ambient_dim,
        vertices: reports.iter().map(|r| r.mesh.vertices).sum(),
        cells: reports.iter().map(|r| r.mesh.cells).sum(),
        components: components.len(),
        mesh_size: reports.iter().map(|r| r.mesh.mesh_size).fold(0.0, f64::max),
    };
    Ok(DeficitReport {
        form: first.form,
        entropy_term: entropy,
        fisher_term: fisher,
        curvature_term: curvature,
        mass,
        rhs,
        deficit,
        components,
        mesh,
    })
}

/// Sum of the per-component deficits of a report.
pub fn component_deficit_sum(report: &DeficitReport) -> f64 {
    report.components.iter().map(|c| c.deficit).sum()
}

/// Squared norms, handy for integrands.
pub fn squared_norms(field: &[Vector]) -> Vec<f64> {
    field.iter().map(|v| v.norm_squared()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry_cache;
    use crate::shapes::{generate_shape, ShapeSpec};
    use std::f64::consts::{E, SQRT_2};

    fn cache(spec: ShapeSpec) -> GeometryCache {
        build_geometry_cache(&generate_shape(&spec).unwrap()).unwrap()
    }

    fn constant_density_deficit(n: usize, r: f64) -> f64 {
        if n == 1 {
            (2.0 * PI * r).ln() - 1.0 - 0.5 * (4.0 * PI).ln() + 1.0 / (r * r)
        } else {
            2.0 * r.ln() - 2.0 + 4.0 / (r * r)
        }
    }

    #[test]
    fn circle_constant_density() {
        for (r, expected) in [(1.0, 0.57236), (SQRT_2, 0.41894)] {
            let c = cache(ShapeSpec::circle(r, 256));
            let f = vec![1.0 / (2.0 * PI * r); c.num_vertices()];
            let rep = deficit_theorem1(&c, &f).unwrap();
            assert!((constant_density_deficit(1, r) - expected).abs() < 1e-5);
            assert!((rep.deficit - expected).abs() < 1e-3, "r={r}: {}", rep.deficit);
            assert!(rep.fisher_term.abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_constant_density() {
        let c = cache(ShapeSpec::sphere(2.0, 2562));
        let f = vec![1.0 / (16.0 * PI); c.num_vertices()];
        let rep = deficit_theorem1(&c, &f).unwrap();
        let expected = 2.0 * 2f64.ln() - 1.0;
        assert!((constant_density_deficit(2, 2.0) - expected).abs() < 1e-14);
        assert!((rep.deficit - expected).abs() < 5e-3, "{}", rep.deficit);
        assert_eq!(rep.deficit, rep.rhs - rep.lhs());
    }

    #[test]
    fn gaussian_density_fixtures() {
        let c = cache(ShapeSpec::circle(SQRT_2, 256));
        assert!((gaussian_density(&c) - (2.0 * PI).sqrt() * (-0.5f64).exp()).abs() < 1e-3);
        let c = cache(ShapeSpec::sphere(2.0, 2562));
        assert!((gaussian_density(&c) - 4.0 / E).abs() < 5e-3);
        let c = cache(ShapeSpec::clifford(SQRT_2, SQRT_2, [64, 64]));
        assert!((gaussian_density(&c) - 2.0 * PI / E).abs() < 5e-3);
        let g = gaussian_weights(&c);
        assert!(g.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn shrinker_residual_fixtures() {
        let c = cache(ShapeSpec::sphere(2.0, 2562));
        let worst = shrinker_residual(&c).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
        let c = cache(ShapeSpec::circle(SQRT_2, 256));
        let worst = shrinker_residual(&c).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
        let c = cache(ShapeSpec::sphere(1.0, 2562));
        for v in shrinker_residual(&c) {
            assert!((v.norm() - 1.5).abs() < 1e-3);
        }
    }

    #[test]
    fn gaussian_form_constant() {
        let c = cache(ShapeSpec::sphere(2.0, 2562));
        let phi = vec![1.0; c.num_vertices()];
        let rep = deficit_corollary2(&c, &phi).unwrap();
        let mu = 4.0 / E;
        assert!((rep.deficit - mu * mu.ln()).abs() < 5e-3, "{}", rep.deficit);
        let c = cache(ShapeSpec::sphere(1.0, 2562));
        let rep = deficit_corollary2(&c, &phi).unwrap();
        assert!((rep.deficit - 2.0 * (-0.25f64).exp()).abs() < 5e-3, "{}", rep.deficit);
    }

    #[test]
    fn deficit_is_one_homogeneous() {
        let c = cache(ShapeSpec::sphere(1.5, 642));
        let phi: Vec<f64> = c.positions().iter().map(|x| 1.0 + 0.4 * x[0] * x[1]).collect();
        let base = deficit_corollary2(&c, &phi).unwrap();
        for s in [0.1, 3.0, 17.0] {
            let scaled: Vec<f64> = phi.iter().map(|p| p * s).collect();
            let rep = deficit_corollary2(&c, &scaled).unwrap();
            assert!((rep.mass - s * base.mass).abs() <= 1e-12 * rep.mass);
            assert!((rep.deficit - s * base.deficit).abs() <= 1e-10 * (1.0 + rep.deficit.abs()));
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let c = cache(ShapeSpec::sphere(2.0, 162));
        let phi: Vec<f64> = (0..c.num_vertices()).map(|i| 0.5 + (i as f64 * 0.37).sin().abs()).collect();
        let f = to_density(&c, &phi).unwrap();
        let back = to_gaussian_form(&c, &f).unwrap();
        for (a, b) in phi.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-14 * a);
        }
        let ones = to_density(&c, &vec![1.0; c.num_vertices()]).unwrap();
        assert_eq!(ones, gaussian_weights(&c).values);
    }

    #[test]
    fn rejects_nonpositive() {
        let c = cache(ShapeSpec::circle(1.0, 16));
        let mut f = vec![1.0; 16];
        f[5] = -1.0;
        assert!(matches!(deficit_theorem1(&c, &f), Err(Error::NonpositiveDensity { vertex: 5, .. })));
        f[5] = f64::NAN;
        assert!(matches!(deficit_corollary2(&c, &f), Err(Error::NonpositiveDensity { vertex: 5, .. })));
        assert!(matches!(deficit_theorem1(&c, &f[..3]), Err(Error::FieldLength { .. })));
    }

    #[test]
    fn disjoint_circles_combine() {
        let spec = ShapeSpec::disjoint(
            ShapeSpec::circle(SQRT_2, 128).with_center(&[-5.0, 0.0]),
            ShapeSpec::circle(SQRT_2, 128).with_center(&[5.0, 0.0]),
        );
        let mesh = generate_shape(&spec).unwrap();
        let union = build_geometry_cache(&mesh).unwrap();
        let density = 0.5 / (2.0 * PI * SQRT_2);
        let direct = deficit_theorem1(&union, &vec![density; union.num_vertices()]).unwrap();
        let parts: Vec<DeficitReport> = mesh
            .split_components()
            .iter()
            .map(|(m, _)| {
                let c = build_geometry_cache(m).unwrap();
                deficit_theorem1(&c, &vec![density; c.num_vertices()]).unwrap()
            })
            .collect();
        let combined = combine_components(&parts).unwrap();
        assert!((combined.deficit - direct.deficit).abs() < 1e-10);
        let gap = concavity_gap(&[parts[0].mass, parts[1].mass]);
        assert!((gap - 2f64.ln()).abs() < 1e-3);
        assert!((combined.deficit - (component_deficit_sum(&combined) + gap)).abs() < 1e-10);
        assert_eq!(direct.components.len(), 2);
        assert!((direct.components[0].deficit - parts[0].deficit).abs() < 1e-10);
    }

    #[test]
    fn combine_single_and_mixed() {
        let c = cache(ShapeSpec::circle(1.0, 32));
        let f = vec![0.3; 32];
        let a = deficit_theorem1(&c, &f).unwrap();
        assert_eq!(combine_components(std::slice::from_ref(&a)).unwrap(), a);
        let b = deficit_corollary2(&c, &f).unwrap();
        assert_eq!(combine_components(&[a, b]), Err(Error::MixedForms));
        assert!((concavity_gap(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn round_sphere_deficit_minimized_at_shrinker_radius() {
        let radii = [1.2, 1.6, 2.0, 2.4, 2.8];
        let values: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let c = cache(ShapeSpec::sphere(r, 642));
                let f = vec![1.0 / c.total_measure(); c.num_vertices()];
                deficit_theorem1(&c, &f).unwrap().deficit
            })
            .collect();
        let best = values.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(radii[best], 2.0);
    }
}
