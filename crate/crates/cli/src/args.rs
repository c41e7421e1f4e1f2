use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "logsob", version, about = "Discrete log-Sobolev deficits on closed meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate both deficit forms for a density on a mesh.
    #[command(allow_negative_numbers = true)]
    Verify(VerifyArgs),
    /// Run the transport-map audit (α, reconstruction, probes, Jacobian bound).
    #[command(allow_negative_numbers = true)]
    AbpAudit(AuditArgs),
    /// Search for densities with small deficit by projected descent.
    #[command(allow_negative_numbers = true)]
    Optimize(OptimizeArgs),
    /// Tabulate identity residuals across a refinement ladder.
    #[command(allow_negative_numbers = true)]
    Identities(IdentitiesArgs),
    /// Write a generated mesh to OFF, OBJ or JSON.
    #[command(allow_negative_numbers = true)]
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Circle,
    Sphere2,
    #[value(alias = "torus")]
    Torus3,
    #[value(alias = "clifford")]
    CliffordTorus4,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentArg {
    Circle,
    Sphere2,
}

#[derive(Debug, Clone, Args)]
pub struct MeshArgs {
    /// Built-in shape.
    #[arg(long, value_enum, conflicts_with = "mesh", required_unless_present = "mesh")]
    pub shape: Option<ShapeArg>,
    /// Mesh file (.off, .obj or .json).
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Radius of a circle or sphere (and of the first piece of a disjoint union).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Radius of the second piece of a disjoint union (defaults to --radius).
    #[arg(long)]
    pub radius2: Option<f64>,
    /// Piece type of a disjoint union.
    #[arg(long, value_enum, default_value = "circle")]
    pub component: ComponentArg,
    /// Offset of the second piece of a disjoint union along x1.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long)]
    pub major: Option<f64>,
    #[arg(long)]
    pub minor: Option<f64>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    /// Target vertex count (per piece for a disjoint union).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Explicit UxV grid for the tori, e.g. 64x32.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<[usize; 2]>,
    /// Translation, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    /// `const` (uniform, unit mass), `gaussian` (φ ≡ 1), `expr:<expression in x1..xN>`
    /// or `file:<path>` (one value per vertex).
    #[arg(long, default_value = "const")]
    pub density: String,
    /// Rescale an expression or file density to unit mass.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Report path; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Plot-data CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Suppress the table on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Constant-density radius sweep `r0:r1:steps` (circle and sphere2 only).
    #[arg(long, value_parser = parse_sweep)]
    pub sweep: Option<Sweep>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FiberArg {
    Grid,
    Gaussian,
    Ray,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[command(flatten)]
    pub density: DensityArgs,
    /// Number of Gaussian probes ξ.
    #[arg(long, default_value_t = 10_000)]
    pub probes: usize,
    /// Per-coordinate standard deviation of the probes.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub probe_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Normal-fiber sampling for the Jacobian bound.
    #[arg(long, value_enum, default_value = "grid")]
    pub fiber: FiberArg,
    /// Points per normal coordinate (grid, ray) or draws per vertex (gaussian).
    #[arg(long, default_value_t = 25)]
    pub fiber_points: usize,
    #[arg(long, default_value_t = 1)]
    pub vertex_stride: usize,
    /// Audit each connected component separately.
    #[arg(long)]
    pub per_component: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Weight of the Dirichlet part of the descent metric.
    #[arg(long, default_value_t = 2.0)]
    pub smoothing: f64,
    /// Spread of the random starting densities.
    #[arg(long, default_value_t = 0.5)]
    pub init_scale: f64,
    /// Include the final density of the best run in the report.
    #[arg(long)]
    pub emit_density: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IdentitiesArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Number of refinement levels (built-in shapes only).
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Destination; the extension picks the format.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn radii(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let h = (self.end - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.start + h * k as f64).collect()
    }
}

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected r0:r1:steps".into());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| format!("bad radius `{}`", parts[0]))?;
    let end: f64 = parts[1].trim().parse().map_err(|_| format!("bad radius `{}`", parts[1]))?;
    let steps: usize = parts[2].trim().parse().map_err(|_| format!("bad step count `{}`", parts[2]))?;
    if !(start > 0.0 && end >= start && start.is_finite() && end.is_finite()) {
        return Err("need 0 < r0 ≤ r1".into());
    }
    if steps == 0 {
        return Err("steps must be at least 1".into());
    }
    Ok(Sweep { start, end, steps })
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected UxV")?;
    let a = a.trim().parse().map_err(|_| format!("bad grid size `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad grid size `{b}`"))?;
    Ok([a, b])
}
