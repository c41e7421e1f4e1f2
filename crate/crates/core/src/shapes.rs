//! Canonical closed test shapes with known analytic geometry.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vector_from_slice, Vector};
use crate::mesh::EmbeddedMesh;

pub const MIN_CIRCLE_RESOLUTION: usize = 16;
pub const MIN_SPHERE_RESOLUTION: usize = 162;
pub const MIN_RING_RESOLUTION: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    /// `S¹(r) ⊂ R²`.
    Circle { radius: f64 },
    /// Icosphere approximation of `S²(r) ⊂ R³`.
    Sphere2 { radius: f64 },
    /// Torus of revolution in `R³` with tube radius `minor < major`.
    Torus3 { major: f64, minor: f64 },
    /// `S¹(r1) × S¹(r2) ⊂ R⁴`.
    CliffordTorus4 { r1: f64, r2: f64 },
    DisjointUnion { first: Box<ShapeSpec>, second: Box<ShapeSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Vertex-count target. Icospheres round up to the next subdivision level.
    pub resolution: usize,
    /// Explicit `(u, v)` grid for the product tori; overrides `resolution`.
    #[serde(default)]
    pub grid: Option<[usize; 2]>,
    /// Translation applied after generation (shorter vectors are zero-padded).
    #[serde(default)]
    pub center: Vec<f64>,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, resolution: usize) -> Self {
        Self { kind, resolution, grid: None, center: Vec::new() }
    }

    pub fn circle(radius: f64, resolution: usize) -> Self {
        Self::new(ShapeKind::Circle { radius }, resolution)
    }

    pub fn sphere(radius: f64, resolution: usize) -> Self {
        Self::new(ShapeKind::Sphere2 { radius }, resolution)
    }

    pub fn torus(major: f64, minor: f64, grid: [usize; 2]) -> Self {
        let mut s = Self::new(ShapeKind::Torus3 { major, minor }, grid[0] * grid[1]);
        s.grid = Some(grid);
        s
    }

    pub fn clifford(r1: f64, r2: f64, grid: [usize; 2]) -> Self {
        let mut s = Self::new(ShapeKind::CliffordTorus4 { r1, r2 }, grid[0] * grid[1]);
        s.grid = Some(grid);
        s
    }

    pub fn disjoint(first: ShapeSpec, second: ShapeSpec) -> Self {
        let res = first.resolution + second.resolution;
        Self::new(ShapeKind::DisjointUnion { first: Box::new(first), second: Box::new(second) }, res)
    }

    pub fn with_center(mut self, center: &[f64]) -> Self {
        self.center = center.to_vec();
        self
    }

    pub fn intrinsic_dim(&self) -> usize {
        match &self.kind {
            ShapeKind::Circle { .. } => 1,
            ShapeKind::DisjointUnion { first, .. } => first.intrinsic_dim(),
            _ => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            ShapeKind::Circle { .. } => 2,
            ShapeKind::Sphere2 { .. } | ShapeKind::Torus3 { .. } => 3,
            ShapeKind::CliffordTorus4 { .. } => 4,
            ShapeKind::DisjointUnion { first, .. } => first.ambient_dim(),
        }
    }

    /// The same shape at roughly half the mesh size.
    pub fn refined(&self) -> ShapeSpec {
        let mut s = self.clone();
        match &mut s.kind {
            ShapeKind::Circle { .. } => s.resolution *= 2,
            ShapeKind::Sphere2 { .. } => s.resolution = icosphere_level_vertices(icosphere_level(self.resolution) + 1),
            ShapeKind::Torus3 { .. } | ShapeKind::CliffordTorus4 { .. } => {
                let [a, b] = self.product_grid();
                s.grid = Some([2 * a, 2 * b]);
                s.resolution = 4 * a * b;
            }
            ShapeKind::DisjointUnion { first, second } => {
                **first = first.refined();
                **second = second.refined();
                s.resolution = first.resolution + second.resolution;
            }
        }
        s
    }

    fn product_grid(&self) -> [usize; 2] {
        if let Some(g) = self.grid {
            return g;
        }
        let (a, b) = match self.kind {
            ShapeKind::Torus3 { major, minor } => (major, minor),
            ShapeKind::CliffordTorus4 { r1, r2 } => (r1, r2),
            _ => (1.0, 1.0),
        };
        let nu = ((self.resolution as f64 * a / b).sqrt().round() as usize).max(MIN_RING_RESOLUTION);
        let nv = ((self.resolution as f64 / nu as f64).round() as usize).max(MIN_RING_RESOLUTION);
        [nu, nv]
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::UnsupportedSpec(msg));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match &self.kind {
            ShapeKind::Circle { radius } => {
                if !positive(*radius) {
                    return bad(format!("circle radius {radius} must be positive"));
                }
                if self.resolution < MIN_CIRCLE_RESOLUTION {
                    return bad(format!("circle resolution {} < {MIN_CIRCLE_RESOLUTION}", self.resolution));
                }
            }
            ShapeKind::Sphere2 { radius } => {
                if !positive(*radius) {
                    return bad(format!("sphere radius {radius} must be positive"));
                }
                if self.resolution < MIN_SPHERE_RESOLUTION {
                    return bad(format!("sphere resolution {} < {MIN_SPHERE_RESOLUTION}", self.resolution));
                }
            }
            ShapeKind::Torus3 { major, minor } => {
                if !positive(*major) || !positive(*minor) || minor >= major {
                    return bad(format!("torus radii ({major}, {minor}) need 0 < minor < major"));
                }
            }
            ShapeKind::CliffordTorus4 { r1, r2 } => {
                if !positive(*r1) || !positive(*r2) {
                    return bad(format!("clifford torus radii ({r1}, {r2}) must be positive"));
                }
            }
            ShapeKind::DisjointUnion { first, second } => {
                first.validate()?;
                second.validate()?;
                if first.ambient_dim() != second.ambient_dim() || first.intrinsic_dim() != second.intrinsic_dim() {
                    return bad("disjoint union of shapes with different dimensions".into());
                }
            }
        }
        if matches!(self.kind, ShapeKind::Torus3 { .. } | ShapeKind::CliffordTorus4 { .. }) {
            let [a, b] = self.product_grid();
            if a < MIN_RING_RESOLUTION || b < MIN_RING_RESOLUTION {
                return bad(format!("torus grid {a}x{b} below {MIN_RING_RESOLUTION} per ring"));
            }
        }
        if self.center.len() > self.ambient_dim() {
            return bad(format!("center has {} coordinates for ambient dimension {}", self.center.len(), self.ambient_dim()));
        }
        Ok(())
    }
}

/// Builds the mesh described by `spec`; vertices lie exactly on the analytic
/// shape (up to rounding).
pub fn generate_shape(spec: &ShapeSpec) -> Result<EmbeddedMesh> {
    spec.validate()?;
    let mesh = match &spec.kind {
        ShapeKind::Circle { radius } => circle(*radius, spec.resolution)?,
        ShapeKind::Sphere2 { radius } => icosphere(*radius, icosphere_level(spec.resolution))?,
        ShapeKind::Torus3 { major, minor } => {
            let (r, a) = (*major, *minor);
            product_torus(spec.product_grid(), 3, |u, v| {
                vec![(r + a * v.cos()) * u.cos(), (r + a * v.cos()) * u.sin(), a * v.sin()]
            })?
        }
        ShapeKind::CliffordTorus4 { r1, r2 } => {
            let (r1, r2) = (*r1, *r2);
            product_torus(spec.product_grid(), 4, |u, v| {
                vec![r1 * u.cos(), r1 * u.sin(), r2 * v.cos(), r2 * v.sin()]
            })?
        }
        ShapeKind::DisjointUnion { first, second } => {
            let a = generate_shape(first)?;
            let b = generate_shape(second)?;
            let (alo, ahi) = a.bounding_box();
            let (blo, bhi) = b.bounding_box();
            let separated = (0..a.ambient_dim()).any(|k| ahi[k] < blo[k] || bhi[k] < alo[k]);
            if !separated {
                return Err(Error::UnsupportedSpec("disjoint union components have overlapping bounding boxes".into()));
            }
            a.union(&b)?
        }
    };
    if spec.center.iter().any(|c| *c != 0.0) {
        Ok(mesh.translated(&vector_from_slice(&spec.center)))
    } else {
        Ok(mesh)
    }
}

fn circle(radius: f64, n: usize) -> Result<EmbeddedMesh> {
    let verts = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            vector_from_slice(&[radius * t.cos(), radius * t.sin()])
        })
        .collect();
    let cells: Vec<Vec<usize>> = (0..n).map(|k| vec![k, (k + 1) % n]).collect();
    EmbeddedMesh::new(2, verts, &cells)
}

pub fn icosphere_level_vertices(level: usize) -> usize {
    10 * 4usize.pow(level as u32) + 2
}

/// Smallest subdivision level with at least `target` vertices.
pub fn icosphere_level(target: usize) -> usize {
    (0..).find(|&l| icosphere_level_vertices(l) >= target).unwrap()
}

fn icosphere(radius: f64, level: usize) -> Result<EmbeddedMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let normalize = |p: [f64; 3]| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / r, p[1] / r, p[2] / r]
    };
    for v in verts.iter_mut() {
        *v = normalize(*v);
    }
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let points = verts
        .iter()
        .map(|p| vector_from_slice(&[radius * p[0], radius * p[1], radius * p[2]]))
        .collect();
    let cells: Vec<Vec<usize>> = faces.iter().map(|f| f.to_vec()).collect();
    EmbeddedMesh::new(3, points, &cells)
}

fn product_torus(grid: [usize; 2], ambient: usize, embed: impl Fn(f64, f64) -> Vec<f64>) -> Result<EmbeddedMesh> {
    let [nu, nv] = grid;
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut verts: Vec<Vector> = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let u = 2.0 * PI * i as f64 / nu as f64;
            let v = 2.0 * PI * j as f64 / nv as f64;
            verts.push(vector_from_slice(&embed(u, v)));
        }
    }
    let mut cells = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            cells.push(vec![a, b, c]);
            cells.push(vec![a, c, d]);
        }
    }
    EmbeddedMesh::new(ambient, verts, &cells)
}
