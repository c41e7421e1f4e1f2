use logsob_core::abp::{
    lemma2_check, prepare_abp, probe_statistics, reconstruct_constant, sample_a, FiberQuadrature, FiberSampling,
    Lemma2Report, ProbeConfig, ProbeStats, Reconstruction, SampleStrategy, FIBER_CAP,
};
use logsob_core::functionals::{
    combine_components, component_deficit_sum, concavity_gap, deficit_corollary2, deficit_theorem1, to_density,
    to_gaussian_form, DeficitReport, MeshMetadata,
};
use logsob_core::identities::{cell_divergence_identity_residual, divergence_identity_residual, form_equivalence_scale};
use logsob_core::meshio::write_mesh;
use logsob_core::operators::weighted_l2;
use logsob_core::optimizer::{minimize_with_restarts, IterationRecord, OptimizerConfig, RunSummary, StopReason};
use logsob_core::sparse::{SolveOptions, SolveReport};
use logsob_core::{build_geometry_cache, EmbeddedMesh, GeometryCache, ShapeKind, ShapeSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{AuditArgs, FiberArg, GenerateArgs, IdentitiesArgs, OptimizeArgs, Sweep, VerifyArgs};
use crate::failure::{Failure, EXIT_NEGATIVE, EXIT_OK};
use crate::report::{emit, write_csv, ReportEnvelope, Table};
use crate::source::{density_pair, generate, load_mesh, COARSE_RESOLUTIONS, FINE_RESOLUTIONS};

fn cache_of(mesh: &EmbeddedMesh) -> Result<GeometryCache, Failure> {
    Ok(build_geometry_cache(mesh)?)
}

#[derive(Debug, Serialize)]
pub struct FormCheck {
    pub deficit: f64,
    pub epsilon_h: f64,
    pub ok: bool,
}

#[derive(Debug, Serialize)]
pub struct CrossCheck {
    /// Plain-form deficit of `f`.
    pub theorem1: f64,
    /// Gaussian-form deficit of the same density.
    pub corollary2: f64,
    pub difference: f64,
    pub epsilon_h: f64,
    pub within: bool,
}

#[derive(Debug, Serialize)]
pub struct Composition {
    pub masses: Vec<f64>,
    pub component_deficits: Vec<f64>,
    pub component_deficit_sum: f64,
    pub concavity_gap: f64,
    /// Deficit of the pieces evaluated separately and recombined.
    pub combined_deficit: f64,
    /// Deficit of the union mesh evaluated in one go.
    pub union_deficit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub deficit_theorem1: f64,
    pub deficit_corollary2: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub grid_minimizer: f64,
    /// Vertex of the parabola through the grid minimum and its neighbours.
    pub refined_minimizer: f64,
    pub shrinker_radius: f64,
}

#[derive(Debug, Serialize)]
pub struct VerifyPayload {
    pub density: String,
    pub theorem1: DeficitReport,
    pub corollary2: DeficitReport,
    pub theorem1_check: FormCheck,
    pub corollary2_check: FormCheck,
    pub cross_check: CrossCheck,
    pub composition: Option<Composition>,
    pub sweep: Option<SweepSummary>,
    pub status: &'static str,
}

fn constant_row(spec: &ShapeSpec, radius: f64) -> Result<SweepRow, Failure> {
    let mut s = spec.clone();
    match &mut s.kind {
        ShapeKind::Circle { radius: r } | ShapeKind::Sphere2 { radius: r } => *r = radius,
        _ => return Err(Failure::usage("--sweep needs --shape circle or sphere2")),
    }
    let cache = cache_of(&generate(&s)?)?;
    let nv = cache.num_vertices();
    let t1 = deficit_theorem1(&cache, &vec![1.0 / cache.total_measure(); nv])?;
    let c2 = deficit_corollary2(&cache, &vec![1.0; nv])?;
    Ok(SweepRow { radius, deficit_theorem1: t1.deficit, deficit_corollary2: c2.deficit })
}

/// Abscissa of the vertex of the parabola through three points, falling back
/// to the middle one when they are collinear.
pub fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv <= 0.0 || !curv.is_finite() {
        return x[1];
    }
    0.5 * (x[0] + x[1]) - d1 / (2.0 * curv)
}

fn radius_sweep(spec: &ShapeSpec, sweep: &Sweep) -> Result<SweepSummary, Failure> {
    let radii = sweep.radii();
    let rows: Vec<SweepRow> = radii.par_iter().map(|r| constant_row(spec, *r)).collect::<Result<_, _>>()?;
    let k = (0..rows.len())
        .min_by(|a, b| rows[*a].deficit_theorem1.total_cmp(&rows[*b].deficit_theorem1))
        .unwrap_or(0);
    let grid_minimizer = rows[k].radius;
    let refined_minimizer = if k > 0 && k + 1 < rows.len() {
        parabola_vertex(
            [rows[k - 1].radius, rows[k].radius, rows[k + 1].radius],
            [rows[k - 1].deficit_theorem1, rows[k].deficit_theorem1, rows[k + 1].deficit_theorem1],
        )
    } else {
        grid_minimizer
    };
    Ok(SweepSummary {
        rows,
        grid_minimizer,
        refined_minimizer,
        shrinker_radius: (2.0 * spec.intrinsic_dim() as f64).sqrt(),
    })
}

fn composition(mesh: &EmbeddedMesh, f: &[f64], union: &DeficitReport) -> Result<Composition, Failure> {
    let mut reports = Vec::new();
    for (piece, map) in mesh.split_components() {
        let cache = cache_of(&piece)?;
        let fp: Vec<f64> = map.iter().map(|&i| f[i]).collect();
        reports.push(deficit_theorem1(&cache, &fp)?);
    }
    let combined = combine_components(&reports)?;
    let masses: Vec<f64> = reports.iter().map(|r| r.mass).collect();
    Ok(Composition {
        concavity_gap: concavity_gap(&masses),
        component_deficits: reports.iter().map(|r| r.deficit).collect(),
        component_deficit_sum: component_deficit_sum(&combined),
        combined_deficit: combined.deficit,
        union_deficit: union.deficit,
        masses,
    })
}

pub fn verify(args: &VerifyArgs, argv: &[String]) -> Result<i32, Failure> {
    let table = Table::new(args.out.quiet);
    let (mesh, spec) = load_mesh(&args.mesh, FINE_RESOLUTIONS)?;
    let cache = cache_of(&mesh)?;
    let pair = density_pair(&cache, &args.density)?;
    let theorem1 = deficit_theorem1(&cache, &pair.f)?;
    let corollary2 = deficit_corollary2(&cache, &pair.phi)?;
    let eps_f = form_equivalence_scale(&cache, &pair.f)?.total;
    let eps_phi = form_equivalence_scale(&cache, &to_density(&cache, &pair.phi)?)?.total;
    let same_density = deficit_corollary2(&cache, &to_gaussian_form(&cache, &pair.f)?)?.deficit;
    let difference = (same_density - theorem1.deficit).abs();
    let cross_check = CrossCheck {
        theorem1: theorem1.deficit,
        corollary2: same_density,
        difference,
        epsilon_h: eps_f,
        within: difference <= eps_f,
    };
    let theorem1_check = FormCheck { deficit: theorem1.deficit, epsilon_h: eps_f, ok: theorem1.deficit >= -eps_f };
    let corollary2_check =
        FormCheck { deficit: corollary2.deficit, epsilon_h: eps_phi, ok: corollary2.deficit >= -eps_phi };
    let composition = if cache.num_components() > 1 { Some(composition(&mesh, &pair.f, &theorem1)?) } else { None };
    let sweep = match (&args.sweep, &spec) {
        (Some(s), Some(spec)) => Some(radius_sweep(spec, s)?),
        (Some(_), None) => return Err(Failure::usage("--sweep needs --shape circle or sphere2")),
        _ => None,
    };
    let ok = theorem1_check.ok && corollary2_check.ok;

    table.line(format!(
        "{:<11} {:>14} {:>14} {:>14} {:>12} {:>14} {:>12}",
        "form", "entropy", "fisher", "curvature", "mass", "deficit", "eps_h"
    ));
    for (name, r, eps) in [("theorem1", &theorem1, eps_f), ("corollary2", &corollary2, eps_phi)] {
        table.line(format!(
            "{name:<11} {:>14.8} {:>14.8} {:>14.8} {:>12.6} {:>14.8} {:>12.3e}",
            r.entropy_term, r.fisher_term, r.curvature_term, r.mass, r.deficit, eps
        ));
    }
    table.line(format!("same density in both forms: |difference| = {difference:.3e} (eps_h {eps_f:.3e})"));
    if let Some(c) = &composition {
        table.line(format!("{:<10} {:>12} {:>14}", "component", "mass", "deficit"));
        for (k, (m, d)) in c.masses.iter().zip(&c.component_deficits).enumerate() {
            table.line(format!("{k:<10} {m:>12.6} {d:>14.8}"));
        }
        table.line(format!(
            "sum of component deficits {:.8}, concavity gap {:.8}, combined {:.8}, union {:.8}",
            c.component_deficit_sum, c.concavity_gap, c.combined_deficit, c.union_deficit
        ));
    }
    if let Some(s) = &sweep {
        table.line(format!("{:>10} {:>16} {:>16}", "radius", "theorem1", "corollary2"));
        for r in &s.rows {
            table.line(format!("{:>10.5} {:>16.8} {:>16.8}", r.radius, r.deficit_theorem1, r.deficit_corollary2));
        }
        table.line(format!(
            "minimizer {:.5} (grid {:.5}), shrinker radius {:.5}",
            s.refined_minimizer, s.grid_minimizer, s.shrinker_radius
        ));
        if let Some(path) = &args.out.csv {
            write_csv(path, &s.rows)?;
        }
    } else if args.out.csv.is_some() {
        return Err(Failure::usage("--csv for verify needs --sweep"));
    }

    let payload = VerifyPayload {
        density: args.density.density.clone(),
        theorem1,
        corollary2,
        theorem1_check,
        corollary2_check,
        cross_check,
        composition,
        sweep,
        status: if ok { "ok" } else { "negative_deficit" },
    };
    let envelope = ReportEnvelope::new("verify", argv, MeshMetadata::from_cache(&cache), payload);
    emit(&envelope, args.out.output.as_deref())?;
    Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub component: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Equal-width histogram over the finite values; an all-equal sample gives one bin.
pub fn histogram(component: usize, values: &[f64]) -> Vec<HistogramBin> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![HistogramBin { component, lo, hi, count: finite.len() }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = [0usize; HISTOGRAM_BINS];
    for v in &finite {
        let k = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[k] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &count)| HistogramBin {
            component,
            lo: lo + width * k as f64,
            hi: if k + 1 == HISTOGRAM_BINS { hi } else { lo + width * (k + 1) as f64 },
            count,
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Lemma2Summary {
    pub samples: usize,
    pub checked: usize,
    pub skipped_non_members: usize,
    pub violations: usize,
    pub chain_violations: usize,
    pub chain_identity_error: f64,
    pub min_log_margin: f64,
    /// Members with `det M ≤ 0` (infinite log margin).
    pub nonpositive_det: usize,
    pub histogram: Vec<HistogramBin>,
}

impl Lemma2Summary {
    fn new(component: usize, samples: usize, report: &Lemma2Report) -> Self {
        let margins: Vec<f64> = report.records.iter().map(|r| r.log_margin).collect();
        Self {
            samples,
            checked: report.checked,
            skipped_non_members: report.skipped_non_members,
            violations: report.violations,
            chain_violations: report.chain_violations,
            chain_identity_error: report.chain_identity_error,
            min_log_margin: report.min_log_margin,
            nonpositive_det: margins.iter().filter(|m| !m.is_finite()).count(),
            histogram: histogram(component, &margins),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AuditComponent {
    pub component: usize,
    pub vertices: usize,
    pub input_mass: f64,
    pub alpha: f64,
    /// `α − n − (n/2) log 4π`.
    pub abp_constant: f64,
    /// Plain-form deficit at unit mass, for comparison with the reconstruction.
    pub deficit_theorem1: f64,
    pub reconstruction: Reconstruction,
    pub reconstruction_error: f64,
    pub solve: SolveReport,
    pub max_pde_defect: f64,
    pub probes: ProbeStats,
    pub lemma2: Lemma2Summary,
}

#[derive(Debug, Serialize)]
pub struct AuditPayload {
    pub density: String,
    pub fiber: FiberSampling,
    pub components: Vec<AuditComponent>,
    pub total_samples: usize,
    pub total_violations: usize,
}

fn fiber_strategy(args: &AuditArgs, codim: usize) -> FiberSampling {
    match args.fiber {
        FiberArg::Grid => {
            let per_dim = (args.fiber_points as f64).powf(1.0 / codim.max(1) as f64).round() as usize;
            FiberSampling::Grid { points: per_dim.max(2) }
        }
        FiberArg::Gaussian => FiberSampling::Gaussian { count: args.fiber_points, sigma: 2.0, seed: args.seed },
        FiberArg::Ray => FiberSampling::Ray { t0: 0.0, t1: FIBER_CAP, points: args.fiber_points },
    }
}

fn audit_component(
    component: usize,
    cache: &GeometryCache,
    f: &[f64],
    args: &AuditArgs,
    fiber: FiberSampling,
) -> Result<AuditComponent, Failure> {
    let state = prepare_abp(cache, f, SolveOptions::default())?;
    let n = cache.intrinsic_dim();
    let unit = deficit_theorem1(cache, &state.f)?;
    let reconstruction = reconstruct_constant(&state, cache, &FiberQuadrature::default())?;
    let probes = probe_statistics(
        &state,
        cache,
        &ProbeConfig { count: args.probes, sigma: args.probe_sigma, seed: args.seed, ..ProbeConfig::default() },
    );
    let mut strategy = SampleStrategy::new(fiber);
    strategy.vertex_stride = args.vertex_stride.max(1);
    let samples = sample_a(&state, cache, &strategy);
    let lemma2 = lemma2_check(&state, cache, &samples);
    Ok(AuditComponent {
        component,
        vertices: cache.num_vertices(),
        input_mass: state.input_mass,
        alpha: state.alpha,
        abp_constant: state.abp_constant(n),
        deficit_theorem1: unit.deficit,
        reconstruction_error: (reconstruction.constant - unit.deficit).abs(),
        reconstruction,
        solve: state.solve,
        max_pde_defect: state.pde_defect.iter().fold(0.0, |a: f64, b| a.max(b.abs())),
        probes,
        lemma2: Lemma2Summary::new(component, samples.len(), &lemma2),
    })
}

pub fn abp_audit(args: &AuditArgs, argv: &[String]) -> Result<i32, Failure> {
    let table = Table::new(args.out.quiet);
    if args.probes == 0 && args.fiber_points == 0 {
        return Err(Failure::usage("nothing to audit: --probes and --fiber-points are both 0"));
    }
    let (mesh, _) = load_mesh(&args.mesh, FINE_RESOLUTIONS)?;
    let cache = cache_of(&mesh)?;
    let pair = density_pair(&cache, &args.density)?;
    let fiber = fiber_strategy(args, cache.codim());
    let components = if args.per_component && cache.num_components() > 1 {
        mesh.split_components()
            .into_iter()
            .enumerate()
            .map(|(k, (piece, map))| {
                let c = cache_of(&piece)?;
                let fp: Vec<f64> = map.iter().map(|&i| pair.f[i]).collect();
                audit_component(k, &c, &fp, args, fiber)
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![audit_component(0, &cache, &pair.f, args, fiber)?]
    };
    let total_samples = components.iter().map(|c| c.lemma2.samples).sum();
    let total_violations = components.iter().map(|c| c.lemma2.violations).sum();

    table.line(format!(
        "{:<5} {:>8} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10} {:>12}",
        "comp", "verts", "alpha", "constant", "deficit", "probe_ok", "samples", "violate", "min_margin"
    ));
    for c in &components {
        table.line(format!(
            "{:<5} {:>8} {:>12.6} {:>12.8} {:>12.8} {:>10.4} {:>10} {:>10} {:>12.3e}",
            c.component,
            c.vertices,
            c.alpha,
            c.reconstruction.constant,
            c.deficit_theorem1,
            c.probes.success_rate,
            c.lemma2.samples,
            c.lemma2.violations,
            c.lemma2.min_log_margin
        ));
    }
    if let Some(path) = &args.out.csv {
        let bins: Vec<HistogramBin> = components.iter().flat_map(|c| c.lemma2.histogram.iter().copied()).collect();
        write_csv(path, &bins)?;
    }
    let payload = AuditPayload {
        density: args.density.density.clone(),
        fiber,
        components,
        total_samples,
        total_violations,
    };
    let envelope = ReportEnvelope::new("abp-audit", argv, MeshMetadata::from_cache(&cache), payload);
    emit(&envelope, args.out.output.as_deref())?;
    Ok(if total_violations == 0 { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Debug, Serialize)]
pub struct BestRun {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub final_report: DeficitReport,
    pub min_deficit: f64,
    pub negative_deficit: bool,
    pub worst_negative_excess: f64,
    pub final_density: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct OptimizePayload {
    pub config: OptimizerConfig,
    pub runs: Vec<RunSummary>,
    pub min_deficit: f64,
    pub any_negative: bool,
    pub best: BestRun,
}

pub fn optimize(args: &OptimizeArgs, argv: &[String]) -> Result<i32, Failure> {
    let table = Table::new(args.out.quiet);
    let config = OptimizerConfig {
        restarts: args.restarts,
        seed: args.seed,
        max_iterations: args.max_iterations,
        grad_tol: args.grad_tol,
        smoothing: args.smoothing,
        init_scale: args.init_scale,
        ..OptimizerConfig::default()
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    if args.restarts == 0 {
        return Err(Failure::usage("--restarts must be at least 1"));
    }
    let (mesh, _) = load_mesh(&args.mesh, FINE_RESOLUTIONS)?;
    let cache = cache_of(&mesh)?;
    let study = minimize_with_restarts(&cache, &config)?;

    table.line(format!("{:>7} {:>20} {:>14} {:>14} {:>6} {:>20}", "restart", "seed", "initial", "min", "iters", "stop"));
    for r in &study.runs {
        table.line(format!(
            "{:>7} {:>20} {:>14.8} {:>14.8} {:>6} {:>20}",
            r.restart,
            r.seed,
            r.initial_deficit,
            r.min_deficit,
            r.iterations,
            format!("{:?}", r.stop)
        ));
    }
    table.line(format!("min_deficit = {:.10e} (negative: {})", study.min_deficit, study.any_negative));
    if let Some(path) = &args.out.csv {
        write_csv(path, &study.best.records)?;
    }
    let best = study.best;
    let payload = OptimizePayload {
        config,
        runs: study.runs,
        min_deficit: study.min_deficit,
        any_negative: study.any_negative,
        best: BestRun {
            records: best.records,
            stop: best.stop,
            final_report: best.final_report,
            min_deficit: best.min_deficit,
            negative_deficit: best.negative_deficit,
            worst_negative_excess: best.worst_negative_excess,
            final_density: args.emit_density.then_some(best.final_density),
        },
    };
    let envelope = ReportEnvelope::new("optimize", argv, MeshMetadata::from_cache(&cache), payload);
    emit(&envelope, args.out.output.as_deref())?;
    Ok(if study.any_negative { EXIT_NEGATIVE } else { EXIT_OK })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub level: usize,
    pub vertices: usize,
    pub mesh_size: f64,
    /// `‖div(x^tan) − n − ⟨H, x^⊥⟩‖_w` with the vertex divergence.
    pub divergence_residual: f64,
    /// Same with the cell-based divergence.
    pub cell_divergence_residual: f64,
    /// `‖tr II − H‖_w`.
    pub curvature_trace_residual: f64,
    /// Observed order of `divergence_residual` against the previous level.
    pub divergence_order: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct IdentitiesPayload {
    pub rows: Vec<IdentityRow>,
    pub min_order: Option<f64>,
}

fn identity_row(level: usize, cache: &GeometryCache) -> IdentityRow {
    let trace_err: Vec<f64> = (0..cache.num_vertices())
        .map(|i| (cache.second_fundamental_form()[i].trace() - cache.mean_curvature()[i]).norm())
        .collect();
    IdentityRow {
        level,
        vertices: cache.num_vertices(),
        mesh_size: cache.mesh_size(),
        divergence_residual: weighted_l2(cache, &divergence_identity_residual(cache)),
        cell_divergence_residual: weighted_l2(cache, &cell_divergence_identity_residual(cache)),
        curvature_trace_residual: weighted_l2(cache, &trace_err),
        divergence_order: None,
    }
}

pub fn observed_order(prev: (f64, f64), next: (f64, f64)) -> f64 {
    (prev.1 / next.1).ln() / (prev.0 / next.0).ln()
}

pub fn identities(args: &IdentitiesArgs, argv: &[String]) -> Result<i32, Failure> {
    let table = Table::new(args.out.quiet);
    if args.levels == 0 {
        return Err(Failure::usage("--levels must be at least 1"));
    }
    if args.mesh.mesh.is_some() && args.levels > 1 {
        return Err(Failure::usage("--levels > 1 needs a built-in --shape"));
    }
    let (mesh, spec) = load_mesh(&args.mesh, COARSE_RESOLUTIONS)?;
    let specs: Vec<Option<ShapeSpec>> = match spec {
        Some(s) => {
            let mut v = vec![Some(s)];
            for k in 1..args.levels {
                let next = v[k - 1].as_ref().map(|s| s.refined());
                v.push(next);
            }
            v
        }
        None if args.levels == 1 => vec![None],
        None => return Err(Failure::usage("--levels > 1 needs a built-in --shape")),
    };
    let caches: Vec<GeometryCache> = specs
        .par_iter()
        .map(|s| match s {
            Some(s) => cache_of(&generate(s)?),
            None => cache_of(&mesh),
        })
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<IdentityRow> = caches.iter().enumerate().map(|(k, c)| identity_row(k, c)).collect();
    for k in 1..rows.len() {
        let prev = (rows[k - 1].mesh_size, rows[k - 1].divergence_residual);
        let next = (rows[k].mesh_size, rows[k].divergence_residual);
        rows[k].divergence_order = Some(observed_order(prev, next));
    }
    let min_order = rows.iter().filter_map(|r| r.divergence_order).reduce(f64::min);

    table.line(format!(
        "{:>5} {:>8} {:>12} {:>14} {:>14} {:>14} {:>8}",
        "level", "verts", "h", "div_resid", "cell_resid", "trII-H", "order"
    ));
    for r in &rows {
        let order = r.divergence_order.map_or("-".to_string(), |o| format!("{o:.3}"));
        table.line(format!(
            "{:>5} {:>8} {:>12.5e} {:>14.6e} {:>14.6e} {:>14.6e} {:>8}",
            r.level, r.vertices, r.mesh_size, r.divergence_residual, r.cell_divergence_residual, r.curvature_trace_residual, order
        ));
    }
    if let Some(path) = &args.out.csv {
        write_csv(path, &rows)?;
    }
    let payload = IdentitiesPayload { rows, min_order };
    let envelope = ReportEnvelope::new("identities", argv, MeshMetadata::from_cache(&caches[0]), payload);
    emit(&envelope, args.out.output.as_deref())?;
    Ok(EXIT_OK)
}

pub fn generate_cmd(args: &GenerateArgs) -> Result<i32, Failure> {
    if args.mesh.mesh.is_some() {
        return Err(Failure::usage("generate needs --shape"));
    }
    let (mesh, _) = load_mesh(&args.mesh, FINE_RESOLUTIONS)?;
    write_mesh(&mesh, &args.output).map_err(|e| match e {
        logsob_core::Error::Config(_) | logsob_core::Error::UnsupportedSpec(_) => Failure::usage(e.to_string()),
        other => Failure::from(other),
    })?;
    Table::new(args.quiet).line(format!(
        "wrote {} ({} vertices, {} cells, R^{})",
        args.output.display(),
        mesh.num_vertices(),
        mesh.num_cells(),
        mesh.ambient_dim()
    ));
    Ok(EXIT_OK)
}
