//! Numerical reenactment of the transport-map (ABP) argument: the potential `u`
//! solving `div(f ∇u) = f log f − |∇f|²/f − f|H|² + α f`, the normal-bundle
//! map `Φ(x, y) = ∇u(x) + y`, the Jacobian bound on the contact set `A`, and
//! the final integral over `Σ × normal fibers`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{check_len, check_positive};
use crate::geometry::GeometryCache;
use crate::linalg::{gauss_legendre, sym_det, sym_eig_min, vector_from_slice, TangentMatrix, Vector};
use crate::operators::{gradient, hessian, laplace_beltrami, squared_gradient, AmbientField, ScalarField};
use crate::sparse::{assemble_weighted_laplacian, solve_mean_zero, SolveOptions, SolveReport, COMPATIBILITY_TOL};

/// Largest admissible `|2H + y|` for sampling and fiber quadrature.
pub const FIBER_CAP: f64 = 12.0;
/// Default relative PSD tolerance: `eig_min(M) ≥ −tol · (1 + ‖M‖)`.
pub const DEFAULT_PSD_TOL: f64 = 1e-8;
/// Relative slack on the Jacobian upper bound for floating-point rounding.
pub const BOUND_ROUNDING: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AbpState {
    /// Input density rescaled to unit mass.
    pub f: ScalarField,
    /// Mass of the density before normalization.
    pub input_mass: f64,
    pub alpha: f64,
    /// `Σ w f log f` (without the dimensional constant).
    pub entropy: f64,
    pub fisher: f64,
    pub curvature: f64,
    pub rhs: ScalarField,
    pub u: ScalarField,
    pub solve: SolveReport,
    pub grad_f: AmbientField,
    /// Lumped `|∇f|²`, the one entering the Fisher term and the right-hand side.
    pub squared_grad_f: ScalarField,
    pub grad_u: AmbientField,
    pub laplacian_u: ScalarField,
    /// Trace-corrected Hessian of `u` per vertex.
    pub hessian_u: Vec<TangentMatrix>,
    /// `Δu + ⟨∇f, ∇u⟩/f − rhs/(w f)`: how far the pointwise operators are
    /// from the discrete equation actually solved.
    pub pde_defect: ScalarField,
}

impl AbpState {
    /// `α − n − (n/2) log 4π`, nonnegative for smooth closed submanifolds.
    pub fn abp_constant(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha - n - 0.5 * n * (4.0 * PI).ln()
    }
}

pub fn prepare_abp(cache: &GeometryCache, f: &[f64], solve: SolveOptions) -> Result<AbpState> {
    if cache.num_components() > 1 {
        return Err(Error::DisconnectedInput(cache.num_components()));
    }
    check_len(cache, f)?;
    check_positive(f)?;
    let w = cache.dual_measure();
    let input_mass: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
    let f: ScalarField = f.iter().map(|v| v / input_mass).collect();
    check_positive(&f)?;
    let grad_f = gradient(cache, &f);
    let squared_grad_f = squared_gradient(cache, &f);
    let h = cache.mean_curvature();
    let nv = cache.num_vertices();
    let mut pointwise = vec![0.0; nv];
    let (mut entropy, mut fisher, mut curvature) = (0.0, 0.0, 0.0);
    for i in 0..nv {
        let e = f[i] * f[i].ln();
        let fi = squared_grad_f[i] / f[i];
        let c = f[i] * h[i].norm_squared();
        entropy += w[i] * e;
        fisher += w[i] * fi;
        curvature += w[i] * c;
        pointwise[i] = e - fi - c;
    }
    let alpha = -(entropy - fisher - curvature);
    let mut rhs: ScalarField = (0..nv).map(|i| w[i] * (pointwise[i] + alpha * f[i])).collect();
    // Σ rhs vanishes by the choice of α; what remains is cancellation error
    // on the scale of the summed terms, not of ‖rhs‖₁ (which is itself
    // rounding noise for constant densities).
    let term_scale: f64 = (0..nv)
        .map(|i| w[i] * ((f[i] * f[i].ln()).abs() + (pointwise[i] - f[i] * f[i].ln()).abs() + alpha.abs() * f[i]))
        .sum();
    let sum: f64 = rhs.iter().sum();
    let allowed = COMPATIBILITY_TOL * term_scale;
    if sum.abs() > allowed {
        return Err(Error::IncompatibleRhs { component: 0, sum, allowed });
    }
    let mean = sum / nv as f64;
    rhs.iter_mut().for_each(|r| *r -= mean);
    let matrix = assemble_weighted_laplacian(cache, &f)?;
    let (u, report) = solve_mean_zero(&matrix, &rhs, w, cache.component_labels(), solve)?;
    let grad_u = gradient(cache, &u);
    let laplacian_u = laplace_beltrami(cache, &u);
    let hessian_u = hessian(cache, &u);
    let pde_defect = (0..nv)
        .map(|i| laplacian_u[i] + grad_f[i].dot(&grad_u[i]) / f[i] - rhs[i] / (w[i] * f[i]))
        .collect();
    Ok(AbpState {
        f,
        input_mass,
        alpha,
        entropy,
        fisher,
        curvature,
        rhs,
        u,
        solve: report,
        grad_f,
        squared_grad_f,
        grad_u,
        laplacian_u,
        hessian_u,
        pde_defect,
    })
}

/// `M = D²u − ⟨II, y⟩` with the trace-consistent second fundamental form, so
/// that `tr M = Δu − ⟨H, y⟩` holds exactly.
pub fn contact_matrix(state: &AbpState, cache: &GeometryCache, vertex: usize, y: &Vector) -> TangentMatrix {
    let ii = cache.trace_consistent_second_fundamental_form(vertex);
    state.hessian_u[vertex].sub(&ii.contract(y))
}

fn psd_member(m: &TangentMatrix, tol: f64) -> (f64, bool) {
    let e = sym_eig_min(m);
    (e, e >= -tol * (1.0 + m.norm()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalBundleSample {
    pub vertex: usize,
    pub y: Vector,
    pub phi: Vector,
    pub matrix: TangentMatrix,
    pub min_eig: f64,
    pub member: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberSampling {
    /// Tensor grid of `points` values per normal coordinate across the cap window.
    Grid { points: usize },
    /// `count` draws of `y = −2H + σ z` per vertex, `z` standard normal,
    /// rejecting `|2H + y| > cap`.
    Gaussian { count: usize, sigma: f64, seed: u64 },
    /// `y = t ν` for `t` on a uniform grid of `[t0, t1]`, `ν` the unit vector
    /// along `−H` (the first normal where `H = 0`).
    Ray { t0: f64, t1: f64, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStrategy {
    pub fiber: FiberSampling,
    /// Sample every `vertex_stride`-th vertex.
    pub vertex_stride: usize,
    pub cap: f64,
    pub psd_tol: f64,
}

impl SampleStrategy {
    pub fn new(fiber: FiberSampling) -> Self {
        Self { fiber, vertex_stride: 1, cap: FIBER_CAP, psd_tol: DEFAULT_PSD_TOL }
    }
}

fn fiber_offsets(fiber: FiberSampling, m: usize, center: &[f64], cap: f64, vertex: usize) -> Vec<Vec<f64>> {
    match fiber {
        FiberSampling::Grid { points } => {
            let points = points.max(1);
            let step = if points > 1 { 2.0 * cap / (points - 1) as f64 } else { 0.0 };
            let offset = if points > 1 { -cap } else { 0.0 };
            let total = points.pow(m as u32);
            (0..total)
                .map(|mut idx| {
                    (0..m)
                        .map(|k| {
                            let j = idx % points;
                            idx /= points;
                            center[k] + offset + step * j as f64
                        })
                        .collect()
                })
                .collect()
        }
        FiberSampling::Gaussian { count, sigma, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (vertex as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            (0..count)
                .map(|_| {
                    (0..m)
                        .map(|k| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            center[k] + sigma * z
                        })
                        .collect()
                })
                .collect()
        }
        FiberSampling::Ray { t0, t1, points } => {
            let points = points.max(1);
            let step = if points > 1 { (t1 - t0) / (points - 1) as f64 } else { 0.0 };
            (0..points)
                .map(|j| {
                    let t = t0 + step * j as f64;
                    let norm = center.iter().map(|c| c * c).sum::<f64>().sqrt();
                    let mut c = vec![0.0; m];
                    if norm > 0.0 {
                        c.iter_mut().zip(center).for_each(|(dst, src)| *dst = t * src / norm);
                    } else if m > 0 {
                        c[0] = t;
                    }
                    c
                })
                .collect()
        }
    }
}

pub fn sample_a(state: &AbpState, cache: &GeometryCache, strategy: &SampleStrategy) -> Vec<NormalBundleSample> {
    let stride = strategy.vertex_stride.max(1);
    let vertices: Vec<usize> = (0..cache.num_vertices()).step_by(stride).collect();
    vertices
        .par_iter()
        .flat_map_iter(|&v| {
            let frame = cache.frame(v);
            let h = cache.mean_curvature()[v];
            let center: Vec<f64> = frame.normal_coords(&h).iter().map(|c| -2.0 * c).collect();
            let m = frame.normals().len();
            let ray = matches!(strategy.fiber, FiberSampling::Ray { .. });
            fiber_offsets(strategy.fiber, m, &center, strategy.cap, v)
                .into_iter()
                .filter_map(move |coords| {
                    let y: Vector = frame.normals().iter().zip(&coords).map(|(n, t)| n * *t).sum();
                    if !ray && (h * 2.0 + y).norm() > strategy.cap {
                        return None;
                    }
                    let matrix = contact_matrix(state, cache, v, &y);
                    let (min_eig, member) = psd_member(&matrix, strategy.psd_tol);
                    Some(NormalBundleSample { vertex: v, y, phi: state.grad_u[v] + y, matrix, min_eig, member })
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Record {
    pub vertex: usize,
    pub det: f64,
    pub bound: f64,
    /// `log(bound) − log(det)`; infinite when `det ≤ 0`.
    pub log_margin: f64,
    pub trace: f64,
    /// `log f − |2H + y|²/4 + |Φ|²/4 + α` plus the measured PDE defect.
    pub chain_rhs: f64,
    /// `|2∇f + f∇u|²/(4f²)`, the term dropped when completing the square,
    /// plus the nonnegative gap between the lumped and pointwise `|∇f|²/f²`.
    pub chain_slack: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub records: Vec<Lemma2Record>,
    pub checked: usize,
    pub skipped_non_members: usize,
    pub violations: usize,
    pub chain_violations: usize,
    /// Largest `|tr M − (chain_rhs − chain_slack)|` observed.
    pub chain_identity_error: f64,
    pub min_log_margin: f64,
}

pub fn lemma2_check(state: &AbpState, cache: &GeometryCache, samples: &[NormalBundleSample]) -> Lemma2Report {
    let n = cache.intrinsic_dim() as f64;
    let records: Vec<Option<(Lemma2Record, f64, bool)>> = samples
        .par_iter()
        .map(|s| {
            if !s.member {
                return None;
            }
            let i = s.vertex;
            let f = state.f[i];
            let h = cache.mean_curvature()[i];
            let shift = (h * 2.0 + s.y).norm_squared() / 4.0;
            let phi2 = s.phi.norm_squared() / 4.0;
            let d = state.pde_defect[i];
            let det = sym_det(&s.matrix);
            let bound = f * (-shift + phi2 + state.alpha - n + d.max(0.0)).exp();
            let trace = s.matrix.trace();
            let chain_rhs = f.ln() - shift + phi2 + state.alpha + d;
            let lumped_gap = (state.squared_grad_f[i] - state.grad_f[i].norm_squared()) / (f * f);
            let slack = (state.grad_f[i] * 2.0 + state.grad_u[i] * f).norm_squared() / (4.0 * f * f) + lumped_gap;
            let scale = 1.0 + chain_rhs.abs() + slack + trace.abs();
            let identity_error = (trace - (chain_rhs - slack)).abs();
            let chain_ok = trace <= chain_rhs + BOUND_ROUNDING * scale;
            let det_floor = -DEFAULT_PSD_TOL * (1.0 + s.matrix.norm()) * (1.0 + s.matrix.norm());
            let ok = det >= det_floor && det <= bound * (1.0 + BOUND_ROUNDING);
            let log_margin = if det > 0.0 { bound.ln() - det.ln() } else { f64::INFINITY };
            Some((
                Lemma2Record { vertex: i, det, bound, log_margin, trace, chain_rhs, chain_slack: slack, ok },
                identity_error / scale,
                chain_ok,
            ))
        })
        .collect();
    let mut report = Lemma2Report {
        records: Vec::new(),
        checked: 0,
        skipped_non_members: 0,
        violations: 0,
        chain_violations: 0,
        chain_identity_error: 0.0,
        min_log_margin: f64::INFINITY,
    };
    for r in records {
        match r {
            None => report.skipped_non_members += 1,
            Some((rec, err, chain_ok)) => {
                report.checked += 1;
                report.violations += usize::from(!rec.ok);
                report.chain_violations += usize::from(!chain_ok);
                report.chain_identity_error = report.chain_identity_error.max(err);
                report.min_log_margin = report.min_log_margin.min(rec.log_margin);
                report.records.push(rec);
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub vertex: usize,
    pub y: Vector,
    pub member: bool,
    pub min_eig: f64,
    /// `|tan(ξ − ∇u(x̄))|`.
    pub tangential_residual: f64,
    /// Other vertices whose value is within 1e−12 of the minimum.
    pub ties: usize,
}

/// Minimizes `u(x) − ⟨x, ξ⟩` over vertices (first index wins) and reports
/// the normal vector `y` with `Φ(x̄, y) = ξ` up to the tangential residual.
pub fn lemma1_probe(state: &AbpState, cache: &GeometryCache, xi: &Vector, psd_tol: f64) -> ProbeResult {
    let x = cache.positions();
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    let values: Vec<f64> = (0..x.len()).map(|i| state.u[i] - x[i].dot(xi)).collect();
    for (i, v) in values.iter().enumerate() {
        if *v < best_val {
            best_val = *v;
            best = i;
        }
    }
    let ties = values.iter().enumerate().filter(|(i, v)| *i != best && (*v - best_val).abs() <= 1e-12).count();
    let frame = cache.frame(best);
    let rest = xi - state.grad_u[best];
    let y = frame.normal_part(&rest);
    let tangential_residual = frame.tangential_part(&rest).norm();
    let matrix = contact_matrix(state, cache, best, &y);
    let (min_eig, member) = psd_member(&matrix, psd_tol);
    ProbeResult { vertex: best, y, member, min_eig, tangential_residual, ties }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub count: usize,
    /// Standard deviation of each coordinate of `ξ`.
    pub sigma: f64,
    pub seed: u64,
    pub psd_tol: f64,
    /// Success requires `tangential_residual ≤ residual_factor · h`.
    pub residual_factor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { count: 10_000, sigma: std::f64::consts::SQRT_2, seed: 0, psd_tol: DEFAULT_PSD_TOL, residual_factor: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub probes: usize,
    pub members: usize,
    pub within_residual: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub max_tangential_residual: f64,
    pub mean_tangential_residual: f64,
    pub worst_min_eig: f64,
    pub probes_with_ties: usize,
    pub mesh_size: f64,
}

pub fn probe_statistics(state: &AbpState, cache: &GeometryCache, config: &ProbeConfig) -> ProbeStats {
    let dim = cache.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let xis: Vec<Vector> = (0..config.count)
        .map(|_| {
            let coords: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    config.sigma * z
                })
                .collect();
            vector_from_slice(&coords)
        })
        .collect();
    let h = cache.mesh_size();
    let results: Vec<ProbeResult> = xis.par_iter().map(|xi| lemma1_probe(state, cache, xi, config.psd_tol)).collect();
    let mut stats = ProbeStats {
        probes: results.len(),
        members: 0,
        within_residual: 0,
        successes: 0,
        success_rate: 0.0,
        max_tangential_residual: 0.0,
        mean_tangential_residual: 0.0,
        worst_min_eig: f64::INFINITY,
        probes_with_ties: 0,
        mesh_size: h,
    };
    for r in &results {
        let small = r.tangential_residual <= config.residual_factor * h;
        stats.members += usize::from(r.member);
        stats.within_residual += usize::from(small);
        stats.successes += usize::from(r.member && small);
        stats.max_tangential_residual = stats.max_tangential_residual.max(r.tangential_residual);
        stats.mean_tangential_residual += r.tangential_residual;
        stats.worst_min_eig = stats.worst_min_eig.min(r.min_eig);
        stats.probes_with_ties += usize::from(r.ties > 0);
    }
    if stats.probes > 0 {
        stats.success_rate = stats.successes as f64 / stats.probes as f64;
        stats.mean_tangential_residual /= stats.probes as f64;
    }
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberQuadrature {
    pub nodes_per_dim: usize,
    pub cap: f64,
}

impl Default for FiberQuadrature {
    fn default() -> Self {
        Self { nodes_per_dim: 64, cap: FIBER_CAP }
    }
}

/// Relative shortfall of a fiber integral that counts as underflow.
pub const QUADRATURE_TOL: f64 = 1e-6;

/// `∫ e^{−|2H + y|²/4} dy` over the normal space, with `H` given in normal
/// coordinates, by tensor Gauss–Legendre on the box of half-width `cap`
/// around `−2H`. The integrand factorizes over coordinates, so the tensor
/// rule is evaluated as a product of one-dimensional rules.
pub fn fiber_integral(h_normal: &[f64], quad: &FiberQuadrature) -> f64 {
    let (nodes, weights) = gauss_legendre(quad.nodes_per_dim);
    h_normal
        .iter()
        .map(|h| {
            let center = -2.0 * h;
            nodes
                .iter()
                .zip(&weights)
                .map(|(s, wt)| {
                    let t = center + quad.cap * s;
                    let r = 2.0 * h + t;
                    quad.cap * wt * (-r * r / 4.0).exp()
                })
                .sum::<f64>()
        })
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub alpha: f64,
    pub fiber_min: f64,
    pub fiber_max: f64,
    /// `(4π)^{m/2}`.
    pub fiber_expected: f64,
    /// `(4π)^{−(n+m)/2} Σ_i w_i f_i F_i e^{α−n}`, at least 1 in the smooth setting.
    pub bound_integral: f64,
    /// `log(bound_integral)`, which reduces to `α − n − (n/2) log 4π`.
    pub constant: f64,
}

pub fn reconstruct_constant(state: &AbpState, cache: &GeometryCache, quad: &FiberQuadrature) -> Result<Reconstruction> {
    let n = cache.intrinsic_dim() as f64;
    let m = cache.codim();
    let expected = (4.0 * PI).powf(0.5 * m as f64);
    let fibers: Vec<f64> = (0..cache.num_vertices())
        .into_par_iter()
        .map(|i| fiber_integral(&cache.frame(i).normal_coords(&cache.mean_curvature()[i]), quad))
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &fibers {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo < expected * (1.0 - QUADRATURE_TOL) {
        return Err(Error::QuadratureUnderflow { got: lo, expected });
    }
    let w = cache.dual_measure();
    let weighted: f64 = (0..fibers.len()).map(|i| w[i] * state.f[i] * fibers[i]).sum();
    let log_bound = (weighted.ln() - 0.5 * (n + m as f64) * (4.0 * PI).ln()) + state.alpha - n;
    Ok(Reconstruction {
        alpha: state.alpha,
        fiber_min: lo,
        fiber_max: hi,
        fiber_expected: expected,
        bound_integral: log_bound.exp(),
        constant: log_bound,
    })
}
