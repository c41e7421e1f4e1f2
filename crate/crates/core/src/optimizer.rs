//! Descent on the Theorem-1 deficit over positive densities `f = e^g`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{check_len, deficit_theorem1, entropy_constant, DeficitReport};
use crate::geometry::GeometryCache;
use crate::identities::form_equivalence_scale;
use crate::operators::{cell_gradients, divergence_cells, squared_gradient, ScalarField};
use crate::sparse::{assemble_weighted_laplacian, solve_spd, SolveOptions, SparseSymMatrix};

/// Deficits below this are treated as divergence rather than a finite value.
const DIVERGENCE_FLOOR: f64 = -1e6;

fn density_from_log(g: &[f64]) -> Result<ScalarField> {
    g.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = v.exp();
            if f.is_finite() && f > 0.0 { Ok(f) } else { Err(Error::Overflow(i)) }
        })
        .collect()
}

/// `∂ deficit / ∂ g_i` for `f = e^g`, divided by `w_i f_i`; the plain
/// partial derivative is this times `w_i f_i`.
fn reduced_gradient(cache: &GeometryCache, f: &[f64]) -> ScalarField {
    let w = cache.dual_measure();
    let c = entropy_constant(cache.intrinsic_dim());
    let mass: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
    let k = cache.intrinsic_dim() + 1;
    // Fisher = Σ_c Σ_{i∈c} β |∇_c f|² / f_i; its variation through ∇_c f is
    // the weak divergence of (mean_c 1/f) ∇_c f.
    let flux: Vec<_> = cell_gradients(cache, f)
        .into_iter()
        .enumerate()
        .map(|(ci, g)| {
            let inv_mean = cache.cell(ci).iter().map(|&i| 1.0 / f[i]).sum::<f64>() / k as f64;
            g * inv_mean
        })
        .collect();
    let div = divergence_cells(cache, &flux);
    let grad2 = squared_gradient(cache, f);
    let log_m = mass.ln();
    (0..f.len())
        .map(|i| {
            log_m - f[i].ln() - c + cache.mean_curvature()[i].norm_squared() - 2.0 * div[i] - grad2[i] / (f[i] * f[i])
        })
        .collect()
}

/// Analytic partial derivatives of `deficit_theorem1(e^g)` with respect to `g`.
pub fn deficit_gradient(cache: &GeometryCache, g: &[f64]) -> Result<ScalarField> {
    check_len(cache, g)?;
    let f = density_from_log(g)?;
    let w = cache.dual_measure();
    Ok(reduced_gradient(cache, &f).iter().enumerate().map(|(i, q)| w[i] * f[i] * q).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Initial trial step; grows by 2 after each accepted step up to `max_step`.
    pub step: f64,
    pub max_step: f64,
    pub max_iterations: usize,
    /// Stop once the projected gradient norm falls below this.
    pub grad_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Keep `∫ f` fixed at its initial value.
    pub fix_mass: bool,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Standard deviation of the random polynomial coefficients of `g₀`.
    pub init_scale: f64,
    /// Weight `τ` of the Dirichlet part of the descent metric
    /// `Σ w f δg² + τ (M/|Σ|) Σ_c |c| |∇_c δg|²`; 0 gives the plain metric.
    pub smoothing: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_step: 1e3,
            max_iterations: 500,
            grad_tol: 1e-8,
            restarts: 1,
            seed: 0,
            fix_mass: true,
            armijo: 1e-4,
            init_scale: 0.5,
            smoothing: 2.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.max_step >= self.step) {
            return Err(Error::Config("step must be positive and at most max_step".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Config("armijo constant must lie in (0, 1)".into()));
        }
        if !(self.grad_tol >= 0.0 && self.init_scale >= 0.0 && self.smoothing >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub deficit: f64,
    pub grad_norm: f64,
    pub mass: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    LineSearchStalled,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub records: Vec<IterationRecord>,
    pub final_density: ScalarField,
    pub final_report: DeficitReport,
    pub stop: StopReason,
    pub min_deficit: f64,
    /// Set if any iterate had `deficit < −ε_h`.
    pub negative_deficit: bool,
    /// Most negative `deficit + ε_h` seen among negative iterates (0 if none).
    pub worst_negative_excess: f64,
}

struct Evaluation {
    report: DeficitReport,
    f: ScalarField,
}

fn evaluate(cache: &GeometryCache, g: &[f64]) -> Result<Evaluation> {
    let f = density_from_log(g)?;
    let report = deficit_theorem1(cache, &f)?;
    if !report.deficit.is_finite() || report.deficit < DIVERGENCE_FLOOR {
        return Err(Error::Diverged(report.deficit));
    }
    Ok(Evaluation { report, f })
}

/// Steepest-descent direction for the metric described at
/// [`OptimizerConfig::smoothing`], restricted to `Σ w f δg = 0` when the mass
/// is fixed. Returns the direction and `−⟨∂deficit/∂g, direction⟩ ≥ 0`.
fn descent_direction(
    cache: &GeometryCache,
    config: &OptimizerConfig,
    f: &[f64],
    unit_laplacian: &SparseSymMatrix,
) -> Result<(ScalarField, f64)> {
    let w = cache.dual_measure();
    let wf: Vec<f64> = w.iter().zip(f).map(|(a, b)| a * b).collect();
    let q = reduced_gradient(cache, f);
    let grad: Vec<f64> = q.iter().zip(&wf).map(|(a, b)| a * b).collect();
    let mass: f64 = wf.iter().sum();
    let mut direction;
    if config.smoothing == 0.0 {
        direction = q.iter().map(|a| -a).collect::<Vec<_>>();
        if config.fix_mass {
            let mean = q.iter().zip(&wf).map(|(a, b)| a * b).sum::<f64>() / mass;
            direction.iter_mut().for_each(|d| *d += mean);
        }
    } else {
        let tau = config.smoothing * mass / cache.total_measure();
        let n = f.len();
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(unit_laplacian.nnz() + n);
        for r in 0..n {
            for (c, v) in unit_laplacian.row(r) {
                triplets.push((r, c, -tau * v));
            }
            triplets.push((r, r, wf[r]));
        }
        let metric = SparseSymMatrix::from_triplets(n, triplets);
        let opts = SolveOptions { tol: 1e-6, max_iterations: None };
        let (z, _) = solve_spd(&metric, &grad, opts)?;
        direction = z.iter().map(|a| -a).collect();
        if config.fix_mass {
            let (y, _) = solve_spd(&metric, &wf, opts)?;
            let lambda = z.iter().zip(&wf).map(|(a, b)| a * b).sum::<f64>() / y.iter().zip(&wf).map(|(a, b)| a * b).sum::<f64>();
            direction.iter_mut().zip(&y).for_each(|(d, y)| *d += lambda * y);
        }
    }
    let slope = -grad.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>();
    Ok((direction, slope.max(0.0)))
}

/// Projected gradient descent in `g = log f` with a Sobolev-type metric,
/// Armijo backtracking, and (optionally) exact mass
/// renormalization after every step.
pub fn minimize_deficit(cache: &GeometryCache, config: &OptimizerConfig, g0: &[f64]) -> Result<OptTrace> {
    config.validate()?;
    check_len(cache, g0)?;
    let w = cache.dual_measure();
    let mut g = g0.to_vec();
    let mut current = evaluate(cache, &g)?;
    let unit_laplacian = assemble_weighted_laplacian(cache, &vec![1.0; cache.num_vertices()])?;
    let target_mass = current.report.mass;
    let mut step = config.step;
    let mut records = Vec::new();
    let mut min_deficit = current.report.deficit;
    let mut negative = false;
    let mut worst_excess: f64 = 0.0;
    let mut stop = StopReason::IterationLimit;

    let mut check_negative = |eval: &Evaluation| -> Result<()> {
        if eval.report.deficit < 0.0 {
            let eps = form_equivalence_scale(cache, &eval.f)?.total;
            if eval.report.deficit < -eps {
                negative = true;
                worst_excess = worst_excess.min(eval.report.deficit + eps);
            }
        }
        Ok(())
    };
    check_negative(&current)?;

    for iteration in 0..config.max_iterations {
        let (direction, slope) = descent_direction(cache, config, &current.f, &unit_laplacian)?;
        let grad_norm = slope.sqrt();
        records.push(IterationRecord {
            iteration,
            deficit: current.report.deficit,
            grad_norm,
            mass: current.report.mass,
            step,
        });
        if grad_norm <= config.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut accepted = None;
        while step >= 1e-14 {
            let mut trial: Vec<f64> = g.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
            if config.fix_mass {
                let f = density_from_log(&trial);
                if let Ok(f) = f {
                    let mass: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
                    let shift = (target_mass / mass).ln();
                    trial.iter_mut().for_each(|t| *t += shift);
                }
            }
            match evaluate(cache, &trial) {
                Ok(eval) if eval.report.deficit <= current.report.deficit - config.armijo * step * slope => {
                    accepted = Some((trial, eval));
                    break;
                }
                Ok(_) | Err(Error::Overflow(_)) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((trial, eval)) => {
                g = trial;
                current = eval;
                check_negative(&current)?;
                min_deficit = min_deficit.min(current.report.deficit);
                step = (2.0 * step).min(config.max_step);
            }
            None => {
                stop = StopReason::LineSearchStalled;
                break;
            }
        }
    }
    if records.last().map(|r| r.deficit) != Some(current.report.deficit) {
        let (_, slope) = descent_direction(cache, config, &current.f, &unit_laplacian)?;
        records.push(IterationRecord {
            iteration: records.len(),
            deficit: current.report.deficit,
            grad_norm: slope.sqrt(),
            mass: current.report.mass,
            step,
        });
    }
    Ok(OptTrace {
        records,
        final_density: current.f,
        final_report: current.report,
        stop,
        min_deficit,
        negative_deficit: negative,
        worst_negative_excess: worst_excess,
    })
}

/// Random smooth starting point: a quadratic polynomial in the coordinates
/// with Gaussian coefficients, scaled to the mesh extent, shifted so that
/// the initial mass is 1.
pub fn random_start(cache: &GeometryCache, scale: f64, seed: u64) -> ScalarField {
    let dim = cache.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let radius = cache.positions().iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-12);
    let linear: Vec<f64> = (0..dim).map(|_| normal()).collect();
    let quad: Vec<Vec<f64>> = (0..dim).map(|_| (0..dim).map(|_| normal()).collect()).collect();
    let mut g: Vec<f64> = cache
        .positions()
        .iter()
        .map(|x| {
            let mut v = 0.0;
            for a in 0..dim {
                v += linear[a] * x[a] / radius;
                for b in 0..dim {
                    v += 0.5 * quad[a][b] * x[a] * x[b] / (radius * radius);
                }
            }
            scale * v
        })
        .collect();
    let mass: f64 = g.iter().zip(cache.dual_measure()).map(|(a, w)| a.exp() * w).sum();
    let shift = mass.ln();
    g.iter_mut().for_each(|v| *v -= shift);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub restart: usize,
    pub seed: u64,
    pub initial_deficit: f64,
    pub final_deficit: f64,
    pub min_deficit: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub negative_deficit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartStudy {
    pub runs: Vec<RunSummary>,
    pub min_deficit: f64,
    pub any_negative: bool,
    /// Full trace of the run that reached the smallest deficit.
    pub best: OptTrace,
}

/// Runs `config.restarts` independent descents from seeded random starts,
/// concurrently; results are ordered by restart index.
pub fn minimize_with_restarts(cache: &GeometryCache, config: &OptimizerConfig) -> Result<RestartStudy> {
    config.validate()?;
    let restarts = config.restarts.max(1);
    let traces: Vec<Result<(RunSummary, OptTrace)>> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let seed = config.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(k as u64);
            let g0 = random_start(cache, config.init_scale, seed);
            let trace = minimize_deficit(cache, config, &g0)?;
            let summary = RunSummary {
                restart: k,
                seed,
                initial_deficit: trace.records[0].deficit,
                final_deficit: trace.final_report.deficit,
                min_deficit: trace.min_deficit,
                iterations: trace.records.len() - 1,
                stop: trace.stop,
                negative_deficit: trace.negative_deficit,
            };
            Ok((summary, trace))
        })
        .collect();
    let mut runs = Vec::with_capacity(restarts);
    let mut best: Option<OptTrace> = None;
    for t in traces {
        let (summary, trace) = t?;
        if best.as_ref().is_none_or(|b| trace.min_deficit < b.min_deficit) {
            best = Some(trace);
        }
        runs.push(summary);
    }
    let best = best.expect("at least one restart");
    Ok(RestartStudy {
        min_deficit: best.min_deficit,
        any_negative: runs.iter().any(|r| r.negative_deficit),
        runs,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry_cache;
    use crate::shapes::{generate_shape, ShapeSpec};
    use std::f64::consts::{PI, SQRT_2};

    fn cache(spec: ShapeSpec) -> GeometryCache {
        build_geometry_cache(&generate_shape(&spec).unwrap()).unwrap()
    }

    fn deficit_of_log(c: &GeometryCache, g: &[f64]) -> f64 {
        deficit_theorem1(c, &g.iter().map(|v| v.exp()).collect::<Vec<_>>()).unwrap().deficit
    }

    #[test]
    fn constant_is_critical_under_mass_constraint() {
        let c = cache(ShapeSpec::sphere(2.0, 642));
        let g = vec![-(16.0 * PI).ln(); c.num_vertices()];
        let f: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let q = reduced_gradient(&c, &f);
        let mean = q.iter().zip(c.dual_measure()).map(|(a, w)| a * w).sum::<f64>() / c.total_measure();
        let worst = q.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max);
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let c = cache(ShapeSpec::circle(1.0, 64));
        for seed in 0..3 {
            let g = random_start(&c, 0.5, seed);
            let a = deficit_gradient(&c, &g).unwrap();
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..g.len() {
                let (mut gp, mut gm) = (g.clone(), g.clone());
                gp[k] += 1e-5;
                gm[k] -= 1e-5;
                let fd = (deficit_of_log(&c, &gp) - deficit_of_log(&c, &gm)) / 2e-5;
                assert!((fd - a[k]).abs() / scale <= 1e-5, "k={k}: {fd} vs {}", a[k]);
            }
        }
    }

    #[test]
    fn constant_direction_recovers_deficit() {
        // deficit(e^c f) = e^c deficit(f), so the derivative along δg ≡ 1 is the deficit.
        let c = cache(ShapeSpec::sphere(1.5, 162));
        let g = random_start(&c, 0.7, 5);
        let total: f64 = deficit_gradient(&c, &g).unwrap().iter().sum();
        let d = deficit_of_log(&c, &g);
        assert!((total - d).abs() <= 1e-10 * (1.0 + d.abs()), "{total} vs {d}");
    }

    #[test]
    fn overflow_is_reported() {
        let c = cache(ShapeSpec::circle(1.0, 16));
        let mut g = vec![0.0; 16];
        g[4] = 1e4;
        assert_eq!(deficit_gradient(&c, &g), Err(Error::Overflow(4)));
    }

    #[test]
    fn sphere_descent_stays_nonnegative() {
        let c = cache(ShapeSpec::sphere(2.0, 642));
        let config = OptimizerConfig { restarts: 3, seed: 7, max_iterations: 200, ..Default::default() };
        let study = minimize_with_restarts(&c, &config).unwrap();
        assert!(study.min_deficit >= -1e-6);
        assert!(study.min_deficit <= 2.0 * 2f64.ln() - 1.0);
        assert!(!study.any_negative);
        let trace = &study.best;
        for pair in trace.records.windows(2) {
            assert!(pair[1].deficit <= pair[0].deficit);
            assert!((pair[1].mass - 1.0).abs() < 1e-12);
        }
        let again = deficit_theorem1(&c, &trace.final_density).unwrap().deficit;
        assert!((again - trace.records.last().unwrap().deficit).abs() <= 1e-12);
        assert_eq!(minimize_with_restarts(&c, &config).unwrap(), study);
    }

    #[test]
    fn shrinker_circle_descends_to_constant_value() {
        let c = cache(ShapeSpec::circle(SQRT_2, 256));
        let g0 = random_start(&c, 0.5, 21);
        let trace = minimize_deficit(&c, &OptimizerConfig::default(), &g0).unwrap();
        assert!((trace.final_report.deficit - 0.41894).abs() < 1e-3, "{}", trace.final_report.deficit);
    }

    #[test]
    fn free_mass_follows_scaling_curve() {
        let c = cache(ShapeSpec::sphere(2.0, 642));
        let g0 = vec![-(16.0 * PI).ln() + 0.3; c.num_vertices()];
        let config = OptimizerConfig { fix_mass: false, max_iterations: 20, ..Default::default() };
        let trace = minimize_deficit(&c, &config, &g0).unwrap();
        let first = trace.records[0];
        assert!(trace.records.last().unwrap().mass < first.mass);
        for r in &trace.records {
            let predicted = first.deficit * r.mass / first.mass;
            assert!((r.deficit - predicted).abs() < 1e-3 * first.deficit, "{r:?}");
        }
    }

    #[test]
    fn config_is_validated() {
        let c = cache(ShapeSpec::circle(1.0, 16));
        let bad = OptimizerConfig { step: 0.0, ..Default::default() };
        assert!(matches!(minimize_deficit(&c, &bad, &[0.0; 16]), Err(Error::Config(_))));
        let bad = OptimizerConfig { max_iterations: 0, ..Default::default() };
        assert!(matches!(minimize_deficit(&c, &bad, &[0.0; 16]), Err(Error::Config(_))));
    }
}
