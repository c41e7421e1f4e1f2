use std::f64::consts::SQRT_2;

use logsob_core::expr::Expr;
use logsob_core::functionals::{to_density, to_gaussian_form};
use logsob_core::meshio::read_mesh;
use logsob_core::{generate_shape, EmbeddedMesh, Error, GeometryCache, ShapeKind, ShapeSpec};

use crate::args::{ComponentArg, DensityArgs, MeshArgs, ShapeArg};
use crate::failure::Failure;

pub const DEFAULT_CIRCLE_RESOLUTION: usize = 2048;
pub const DEFAULT_SPHERE_RESOLUTION: usize = 2562;
pub const DEFAULT_TORUS_RESOLUTION: usize = 4096;

/// Starting resolutions for refinement ladders.
pub const COARSE_RESOLUTIONS: Resolutions = Resolutions { circle: 128, sphere: 162, torus: 512 };
pub const FINE_RESOLUTIONS: Resolutions =
    Resolutions { circle: DEFAULT_CIRCLE_RESOLUTION, sphere: DEFAULT_SPHERE_RESOLUTION, torus: DEFAULT_TORUS_RESOLUTION };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolutions {
    pub circle: usize,
    pub sphere: usize,
    pub torus: usize,
}

fn piece(kind: ComponentArg, radius: f64, resolution: Option<usize>, defaults: Resolutions) -> ShapeSpec {
    match kind {
        ComponentArg::Circle => ShapeSpec::circle(radius, resolution.unwrap_or(defaults.circle)),
        ComponentArg::Sphere2 => ShapeSpec::sphere(radius, resolution.unwrap_or(defaults.sphere)),
    }
}

/// The shape described by the flags, or `None` when a mesh file is given.
pub fn shape_spec(args: &MeshArgs, defaults: Resolutions) -> Result<Option<ShapeSpec>, Failure> {
    let Some(shape) = args.shape else { return Ok(None) };
    let radius = args.radius.unwrap_or(1.0);
    let mut spec = match shape {
        ShapeArg::Circle => piece(ComponentArg::Circle, radius, args.resolution, defaults),
        ShapeArg::Sphere2 => piece(ComponentArg::Sphere2, radius, args.resolution, defaults),
        ShapeArg::Torus3 => {
            let major = args.major.unwrap_or(2.0);
            let minor = args.minor.unwrap_or(1.0);
            let mut s = ShapeSpec::new(ShapeKind::Torus3 { major, minor }, args.resolution.unwrap_or(defaults.torus));
            s.grid = args.grid;
            s
        }
        ShapeArg::CliffordTorus4 => {
            let r1 = args.r1.unwrap_or(SQRT_2);
            let r2 = args.r2.unwrap_or(SQRT_2);
            let mut s = ShapeSpec::new(ShapeKind::CliffordTorus4 { r1, r2 }, args.resolution.unwrap_or(defaults.torus));
            s.grid = args.grid;
            s
        }
        ShapeArg::Disjoint => {
            let first = piece(args.component, radius, args.resolution, defaults);
            let dim = first.ambient_dim();
            let mut offset = vec![0.0; dim];
            offset[0] = args.separation;
            let second = piece(args.component, args.radius2.unwrap_or(radius), args.resolution, defaults).with_center(&offset);
            ShapeSpec::disjoint(first, second)
        }
    };
    if !args.center.is_empty() {
        spec = spec.with_center(&args.center);
    }
    Ok(Some(spec))
}

/// Shape validation problems are usage errors; everything else about a mesh is data.
pub fn generate(spec: &ShapeSpec) -> Result<EmbeddedMesh, Failure> {
    generate_shape(spec).map_err(|e| match e {
        Error::UnsupportedSpec(_) => Failure::usage(e.to_string()),
        other => Failure::from(other),
    })
}

pub fn load_mesh(args: &MeshArgs, defaults: Resolutions) -> Result<(EmbeddedMesh, Option<ShapeSpec>), Failure> {
    match shape_spec(args, defaults)? {
        Some(spec) => Ok((generate(&spec)?, Some(spec))),
        None => {
            let path = args.mesh.as_ref().ok_or_else(|| Failure::usage("either --shape or --mesh is required"))?;
            let mesh = read_mesh(path).map_err(|e| match e {
                Error::Io(m) => Failure::data(format!("{}: {m}", path.display())),
                Error::Config(m) => Failure::usage(m),
                other => Failure::from(other),
            })?;
            Ok((mesh, None))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    /// Uniform density of unit mass (and `φ ≡ 1` for the Gaussian form).
    Constant,
    /// `φ ≡ 1` in the Gaussian form.
    Gaussian,
    Expression(String),
    File(std::path::PathBuf),
}

impl DensitySpec {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        match text {
            "const" | "constant" => Ok(Self::Constant),
            "gaussian" => Ok(Self::Gaussian),
            _ => {
                if let Some(e) = text.strip_prefix("expr:") {
                    Ok(Self::Expression(e.to_string()))
                } else if let Some(p) = text.strip_prefix("file:") {
                    Ok(Self::File(p.into()))
                } else {
                    Err(Failure::usage(format!(
                        "unknown density `{text}` (expected const, gaussian, expr:<...> or file:<path>)"
                    )))
                }
            }
        }
    }
}

/// A density in both forms: `f` against the plain measure and `φ` against
/// the Gaussian one. For `const` the two are chosen independently
/// (uniform `f`, `φ ≡ 1`); otherwise `φ = f / gaussian weight`.
#[derive(Debug, Clone)]
pub struct DensityPair {
    pub f: Vec<f64>,
    pub phi: Vec<f64>,
}

fn read_values(path: &std::path::Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Failure::data(format!("{}: line {}: bad value `{tok}`", path.display(), no + 1)))?;
            out.push(v);
        }
    }
    Ok(out)
}

fn unit_mass(cache: &GeometryCache, f: &mut [f64]) {
    let mass: f64 = f.iter().zip(cache.dual_measure()).map(|(a, w)| a * w).sum();
    f.iter_mut().for_each(|v| *v /= mass);
}

pub fn density_pair(cache: &GeometryCache, args: &DensityArgs) -> Result<DensityPair, Failure> {
    let nv = cache.num_vertices();
    let pair = match DensitySpec::parse(&args.density)? {
        DensitySpec::Constant => DensityPair { f: vec![1.0 / cache.total_measure(); nv], phi: vec![1.0; nv] },
        DensitySpec::Gaussian => {
            let phi = vec![1.0; nv];
            DensityPair { f: to_density(cache, &phi)?, phi }
        }
        DensitySpec::Expression(text) => {
            let expr = Expr::parse(&text).map_err(|e| Failure::usage(format!("density expression: {e}")))?;
            let mut f = expr.eval_positive(cache.positions(), cache.ambient_dim()).map_err(|e| match e {
                Error::Config(m) => Failure::usage(m),
                other => Failure::from(other),
            })?;
            if args.normalize {
                unit_mass(cache, &mut f);
            }
            DensityPair { phi: to_gaussian_form(cache, &f)?, f }
        }
        DensitySpec::File(path) => {
            let mut f = read_values(&path)?;
            if f.len() != nv {
                return Err(Failure::data(format!("{}: {} values for {nv} vertices", path.display(), f.len())));
            }
            logsob_core::functionals::check_positive(&f)?;
            if args.normalize {
                unit_mass(cache, &mut f);
            }
            DensityPair { phi: to_gaussian_form(cache, &f)?, f }
        }
    };
    Ok(pair)
}
