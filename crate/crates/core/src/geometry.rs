//! Per-vertex discrete geometry: dual measures, tangent/normal frames,
//! stiffness weights, mean curvature and a quadric-fit second fundamental
//! form. Built once per mesh and immutable afterwards.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{TangentMatrix, Vector, MAX_AMBIENT};
use crate::mesh::EmbeddedMesh;

/// Smallest admissible ratio of extreme singular values of the scaled fit
/// design matrix.
const FIT_CONDITION_FLOOR: f64 = 1e-8;

/// How the pointwise Laplace–Beltrami normalizes the stiffness matrix.
/// Integration always uses the barycentric dual measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMeasureKind {
    /// `|cell| / (n + 1)` to every corner.
    #[default]
    Barycentric,
    /// Circumcentric (Voronoi) corner areas with the obtuse-triangle fallback.
    /// Identical to barycentric for curves.
    Mixed,
}

/// Orthonormal frame at a vertex: the first `n` axes span the tangent
/// space, the next `m` the normal space.
#[derive(Debug, Clone)]
pub struct Frame {
    intrinsic: usize,
    ambient: usize,
    axes: [Vector; MAX_AMBIENT],
}

impl Frame {
    pub fn tangents(&self) -> &[Vector] {
        &self.axes[..self.intrinsic]
    }

    pub fn normals(&self) -> &[Vector] {
        &self.axes[self.intrinsic..self.ambient]
    }

    pub fn tangential_part(&self, v: &Vector) -> Vector {
        let mut out = Vector::zeros();
        for t in self.tangents() {
            out += t * t.dot(v);
        }
        out
    }

    pub fn normal_part(&self, v: &Vector) -> Vector {
        v - self.tangential_part(v)
    }

    /// Coordinates of `v` in the tangent basis.
    pub fn tangent_coords(&self, v: &Vector) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (k, t) in self.tangents().iter().enumerate() {
            c[k] = t.dot(v);
        }
        c
    }

    /// Coordinates of `v` in the normal basis.
    pub fn normal_coords(&self, v: &Vector) -> Vec<f64> {
        self.normals().iter().map(|nu| nu.dot(v)).collect()
    }
}

/// Symmetric `n × n` array of normal vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondFundamentalForm {
    pub dim: usize,
    pub entries: [[Vector; 2]; 2],
}

impl SecondFundamentalForm {
    fn zeros(dim: usize) -> Self {
        Self { dim, entries: [[Vector::zeros(); 2]; 2] }
    }

    pub fn trace(&self) -> Vector {
        (0..self.dim).map(|a| self.entries[a][a]).sum()
    }

    /// The scalar form `⟨II, y⟩`.
    pub fn contract(&self, y: &Vector) -> TangentMatrix {
        let mut m = TangentMatrix::zeros(self.dim);
        for a in 0..self.dim {
            for b in 0..self.dim {
                m.entries[a][b] = self.entries[a][b].dot(y);
            }
        }
        m
    }

    /// Adds `shift / n` on the diagonal so that the trace becomes `target`.
    pub fn with_trace(&self, target: &Vector) -> Self {
        let shift = (target - self.trace()) / self.dim as f64;
        let mut out = *self;
        for a in 0..self.dim {
            out.entries[a][a] += shift;
        }
        out
    }
}

/// Precomputed weighted least-squares operator at one vertex: maps the
/// differences `value_j - value_i` over the stencil to the coefficients of a
/// local quadratic `g·s + ½ sᵀ B s` in tangent coordinates.
#[derive(Debug, Clone)]
struct QuadricFit {
    stencil: Vec<usize>,
    /// `unknowns × stencil.len()`, row-major.
    operator: Vec<f64>,
    unknowns: usize,
}

impl QuadricFit {
    fn apply(&self, diff: impl Fn(usize) -> f64) -> ([f64; 2], TangentMatrix) {
        let k = self.stencil.len();
        let mut c = [0.0; 5];
        for (j, &v) in self.stencil.iter().enumerate() {
            let d = diff(v);
            for r in 0..self.unknowns {
                c[r] += self.operator[r * k + j] * d;
            }
        }
        if self.unknowns == 2 {
            ([c[0], 0.0], TangentMatrix::from_rows(&[&[c[1]]]))
        } else {
            ([c[0], c[1]], TangentMatrix::from_rows(&[&[c[2], c[3]], &[c[3], c[4]]]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheOptions {
    pub laplacian_area: DualMeasureKind,
    /// Rings in the quadric-fit stencil before widening.
    pub fit_rings: usize,
}

impl Default for CacheOptions {
    fn default() -> Self {
        Self { laplacian_area: DualMeasureKind::Mixed, fit_rings: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct GeometryCache {
    intrinsic: usize,
    ambient: usize,
    options: CacheOptions,
    positions: Vec<Vector>,
    dual_measure: Vec<f64>,
    laplacian_area: Vec<f64>,
    cell_measure: Vec<f64>,
    /// Per cell corner: `(corner measure, gradient of the hat function)`.
    corners: Vec<(f64, Vector)>,
    /// Per mesh edge: positive-for-acute cotangent weight.
    edge_weights: Vec<f64>,
    edges: Vec<[usize; 2]>,
    vertex_cells: Vec<Vec<usize>>,
    cells: Vec<usize>,
    /// `(neighbor, edge weight)` lists per vertex.
    adjacency: Vec<Vec<(usize, f64)>>,
    frames: Vec<Frame>,
    fits: Vec<QuadricFit>,
    position_laplacian: Vec<Vector>,
    mean_curvature: Vec<Vector>,
    second_fundamental: Vec<SecondFundamentalForm>,
    component_labels: Vec<usize>,
    num_components: usize,
    mesh_size: f64,
}

pub fn build_geometry_cache(mesh: &EmbeddedMesh) -> Result<GeometryCache> {
    GeometryCache::new(mesh, CacheOptions::default())
}

impl GeometryCache {
    pub fn new(mesh: &EmbeddedMesh, options: CacheOptions) -> Result<Self> {
        let n = mesh.intrinsic_dim();
        let nv = mesh.num_vertices();
        let stride = n + 1;
        let mut cell_measure = Vec::with_capacity(mesh.num_cells());
        let mut corners = Vec::with_capacity(mesh.num_cells() * stride);
        for (ci, cell) in mesh.cells().enumerate() {
            let measure = mesh.cell_measure(ci);
            cell_measure.push(measure);
            let grads = hat_gradients(mesh, cell);
            let share = measure / stride as f64;
            for g in grads.iter().take(stride) {
                corners.push((share, *g));
            }
        }
        let mut dual_measure = vec![0.0; nv];
        let mut laplacian_area = vec![0.0; nv];
        for (ci, cell) in mesh.cells().enumerate() {
            let shares = corner_measures(mesh, cell, cell_measure[ci], options.laplacian_area);
            for (k, &v) in cell.iter().enumerate() {
                dual_measure[v] += corners[ci * stride + k].0;
                laplacian_area[v] += shares[k];
            }
        }

        // stiffness: K_ij = Σ_c |c| ⟨∇φ_i, ∇φ_j⟩; edge weight = -K_ij
        let edges = mesh.edges().to_vec();
        let edge_index: std::collections::HashMap<[usize; 2], usize> =
            edges.iter().enumerate().map(|(k, e)| (*e, k)).collect();
        let mut edge_weights = vec![0.0; edges.len()];
        for (ci, cell) in mesh.cells().enumerate() {
            for a in 0..stride {
                for b in a + 1..stride {
                    let (va, vb) = (cell[a], cell[b]);
                    let key = if va < vb { [va, vb] } else { [vb, va] };
                    let ga = corners[ci * stride + a].1;
                    let gb = corners[ci * stride + b].1;
                    edge_weights[edge_index[&key]] -= cell_measure[ci] * ga.dot(&gb);
                }
            }
        }
        let mut adjacency = vec![Vec::new(); nv];
        for (k, &[a, b]) in edges.iter().enumerate() {
            adjacency[a].push((b, edge_weights[k]));
            adjacency[b].push((a, edge_weights[k]));
        }

        let positions = mesh.vertices().to_vec();
        let position_laplacian: Vec<Vector> = (0..nv)
            .map(|i| {
                let mut s = Vector::zeros();
                for &(j, w) in &adjacency[i] {
                    s += (positions[j] - positions[i]) * w;
                }
                s / laplacian_area[i]
            })
            .collect();

        let frame_fits: Vec<Result<(Frame, QuadricFit, SecondFundamentalForm)>> = (0..nv)
            .into_par_iter()
            .map(|i| vertex_frame_and_fit(mesh, &corners, &options, i))
            .collect();
        let mut frames = Vec::with_capacity(nv);
        let mut fits = Vec::with_capacity(nv);
        let mut second_fundamental = Vec::with_capacity(nv);
        for r in frame_fits {
            let (f, q, ii) = r?;
            frames.push(f);
            fits.push(q);
            second_fundamental.push(ii);
        }
        let mean_curvature = position_laplacian
            .iter()
            .zip(&frames)
            .map(|(h, f)| f.normal_part(h))
            .collect();

        Ok(GeometryCache {
            intrinsic: n,
            ambient: mesh.ambient_dim(),
            options,
            positions,
            dual_measure,
            laplacian_area,
            cell_measure,
            corners,
            edge_weights,
            edges,
            vertex_cells: (0..nv).map(|v| mesh.vertex_cells(v).to_vec()).collect(),
            cells: mesh.cells().flatten().copied().collect(),
            adjacency,
            frames,
            fits,
            position_laplacian,
            mean_curvature,
            second_fundamental,
            component_labels: mesh.component_labels().to_vec(),
            num_components: mesh.num_components(),
            mesh_size: mesh.mesh_size(),
        })
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn codim(&self) -> usize {
        self.ambient - self.intrinsic
    }

    pub fn options(&self) -> CacheOptions {
        self.options
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cell_measure.len()
    }

    pub fn positions(&self) -> &[Vector] {
        &self.positions
    }

    /// Barycentric dual measure `w_i`, used for every integral.
    pub fn dual_measure(&self) -> &[f64] {
        &self.dual_measure
    }

    /// Vertex areas normalizing the pointwise Laplace–Beltrami (mixed
    /// Voronoi areas by default; equal to `dual_measure` for curves).
    pub fn laplacian_area(&self) -> &[f64] {
        &self.laplacian_area
    }

    pub fn cell_measure(&self) -> &[f64] {
        &self.cell_measure
    }

    pub fn total_measure(&self) -> f64 {
        self.dual_measure.iter().sum()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Cotangent weights (n = 2) or inverse edge lengths (n = 1).
    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weights
    }

    pub(crate) fn adjacency(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub(crate) fn cell(&self, c: usize) -> &[usize] {
        let k = self.intrinsic + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub(crate) fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    /// `(corner measure, hat-function gradient)` of corner `k` of cell `c`.
    pub(crate) fn corner(&self, c: usize, k: usize) -> (f64, Vector) {
        self.corners[c * (self.intrinsic + 1) + k]
    }

    pub fn frame(&self, v: usize) -> &Frame {
        &self.frames[v]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// `H_i`: normal part of the discrete Laplace–Beltrami of the position.
    pub fn mean_curvature(&self) -> &[Vector] {
        &self.mean_curvature
    }

    /// Raw `Δ_Σ x` including its (discretization-error) tangential part.
    pub fn position_laplacian(&self) -> &[Vector] {
        &self.position_laplacian
    }

    /// Quadric-fit second fundamental form in the tangent basis.
    pub fn second_fundamental_form(&self) -> &[SecondFundamentalForm] {
        &self.second_fundamental
    }

    /// `II_i` shifted on its diagonal so its trace equals `H_i`.
    pub fn trace_consistent_second_fundamental_form(&self, v: usize) -> SecondFundamentalForm {
        self.second_fundamental[v].with_trace(&self.mean_curvature[v])
    }

    pub fn component_labels(&self) -> &[usize] {
        &self.component_labels
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        self.mesh_size
    }

    pub fn fit_stencil(&self, v: usize) -> &[usize] {
        &self.fits[v].stencil
    }

    /// Raw quadric-fit gradient (tangent coordinates) and Hessian of `u` at `v`.
    pub fn fit_scalar(&self, u: &[f64], v: usize) -> ([f64; 2], TangentMatrix) {
        self.fits[v].apply(|j| u[j] - u[v])
    }
}

/// Gradients of the piecewise-linear hat functions on one cell, in ambient
/// coordinates.
fn hat_gradients(mesh: &EmbeddedMesh, cell: &[usize]) -> [Vector; 3] {
    let p0 = mesh.vertex(cell[0]);
    let e1 = mesh.vertex(cell[1]) - p0;
    if cell.len() == 2 {
        let g = e1 / e1.norm_squared();
        return [-g, g, Vector::zeros()];
    }
    let e2 = mesh.vertex(cell[2]) - p0;
    let (a, b, c) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
    let det = a * c - b * b;
    let g1 = (e1 * c - e2 * b) / det;
    let g2 = (e2 * a - e1 * b) / det;
    [-(g1 + g2), g1, g2]
}

fn corner_measures(mesh: &EmbeddedMesh, cell: &[usize], measure: f64, kind: DualMeasureKind) -> [f64; 3] {
    let k = cell.len();
    if k == 2 || kind == DualMeasureKind::Barycentric {
        let share = measure / k as f64;
        return [share, share, if k == 3 { share } else { 0.0 }];
    }
    let p = [mesh.vertex(cell[0]), mesh.vertex(cell[1]), mesh.vertex(cell[2])];
    // cot of the angle at each corner
    let mut cot = [0.0; 3];
    let mut obtuse = None;
    for i in 0..3 {
        let u = p[(i + 1) % 3] - p[i];
        let v = p[(i + 2) % 3] - p[i];
        let d = u.dot(&v);
        cot[i] = d / (2.0 * measure);
        if d < 0.0 {
            obtuse = Some(i);
        }
    }
    if let Some(o) = obtuse {
        let mut out = [measure / 4.0; 3];
        out[o] = measure / 2.0;
        return out;
    }
    let mut out = [0.0; 3];
    for i in 0..3 {
        let (j, l) = ((i + 1) % 3, (i + 2) % 3);
        // edges i-j (opposite l) and i-l (opposite j)
        out[i] = ((p[j] - p[i]).norm_squared() * cot[l] + (p[l] - p[i]).norm_squared() * cot[j]) / 8.0;
    }
    out
}

fn ring_stencil(mesh: &EmbeddedMesh, v: usize, rings: usize) -> Vec<usize> {
    let mut seen = vec![v];
    let mut frontier = vec![v];
    for _ in 0..rings {
        let mut next = Vec::new();
        for &u in &frontier {
            for &w in mesh.neighbors(u) {
                if !seen.contains(&w) {
                    seen.push(w);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    seen.remove(0);
    seen
}

fn initial_frame(mesh: &EmbeddedMesh, corners: &[(f64, Vector)], v: usize) -> Frame {
    let (n, big_n) = (mesh.intrinsic_dim(), mesh.ambient_dim());
    let mut proj = DMatrix::<f64>::zeros(big_n, big_n);
    for &c in mesh.vertex_cells(v) {
        let cell = mesh.cell(c);
        let k = cell.iter().position(|&x| x == v).unwrap();
        let weight = corners[c * (n + 1) + k].0;
        // orthonormal basis of the cell's tangent space
        let p0 = mesh.vertex(cell[0]);
        let mut basis: Vec<Vector> = Vec::new();
        for &other in &cell[1..] {
            let mut e = mesh.vertex(other) - p0;
            for b in &basis {
                e -= b * b.dot(&e);
            }
            basis.push(e.normalize());
        }
        for b in &basis {
            for r in 0..big_n {
                for s in 0..big_n {
                    proj[(r, s)] += weight * b[r] * b[s];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..big_n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let mut axes = [Vector::zeros(); MAX_AMBIENT];
    for (slot, &k) in order.iter().enumerate() {
        for r in 0..big_n {
            axes[slot][r] = eig.eigenvectors[(r, k)];
        }
    }
    orthonormalize(&mut axes[..big_n]);
    Frame { intrinsic: n, ambient: big_n, axes }
}

fn orthonormalize(axes: &mut [Vector]) {
    for i in 0..axes.len() {
        for j in 0..i {
            let p = axes[j].dot(&axes[i]);
            let aj = axes[j];
            axes[i] -= aj * p;
        }
        let norm = axes[i].norm();
        axes[i] /= norm;
    }
}

fn quadric_fit(mesh: &EmbeddedMesh, frame: &Frame, v: usize, stencil: Vec<usize>) -> Result<QuadricFit> {
    let n = mesh.intrinsic_dim();
    let unknowns = if n == 1 { 2 } else { 5 };
    if stencil.len() < unknowns {
        return Err(Error::IllConditionedFit { vertex: v, reason: format!("stencil of {} points", stencil.len()) });
    }
    let origin = mesh.vertex(v);
    let offsets: Vec<[f64; 2]> = stencil.iter().map(|&j| frame.tangent_coords(&(mesh.vertex(j) - origin))).collect();
    let dists: Vec<f64> = stencil.iter().map(|&j| (mesh.vertex(j) - origin).norm()).collect();
    let rho = dists.iter().sum::<f64>() / dists.len() as f64;
    let k = stencil.len();
    let mut design = DMatrix::<f64>::zeros(k, unknowns);
    let mut sqrt_w = vec![0.0; k];
    for j in 0..k {
        let w = (rho / dists[j]).sqrt();
        sqrt_w[j] = w;
        let (s1, s2) = (offsets[j][0] / rho, offsets[j][1] / rho);
        let row: Vec<f64> = if n == 1 {
            vec![s1, 0.5 * s1 * s1]
        } else {
            vec![s1, s2, 0.5 * s1 * s1, s1 * s2, 0.5 * s2 * s2]
        };
        for (c, x) in row.into_iter().enumerate() {
            design[(j, c)] = w * x;
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > FIT_CONDITION_FLOOR * smax) {
        return Err(Error::IllConditionedFit { vertex: v, reason: format!("singular value ratio {:e}", smin / smax) });
    }
    let pinv = svd.pseudo_inverse(0.0).map_err(|e| Error::IllConditionedFit { vertex: v, reason: e.to_string() })?;
    let mut operator = vec![0.0; unknowns * k];
    for r in 0..unknowns {
        let scale = if r < n { rho } else { rho * rho };
        for j in 0..k {
            operator[r * k + j] = pinv[(r, j)] * sqrt_w[j] / scale;
        }
    }
    Ok(QuadricFit { stencil, operator, unknowns })
}

fn fit_with_widening(mesh: &EmbeddedMesh, frame: &Frame, v: usize, rings: usize) -> Result<QuadricFit> {
    let mut rings = rings;
    if mesh.intrinsic_dim() == 2 && mesh.neighbors(v).len() < 5 {
        rings += 1;
    }
    match quadric_fit(mesh, frame, v, ring_stencil(mesh, v, rings)) {
        Err(Error::IllConditionedFit { .. }) => quadric_fit(mesh, frame, v, ring_stencil(mesh, v, rings + 1)),
        other => other,
    }
}

fn vertex_frame_and_fit(
    mesh: &EmbeddedMesh,
    corners: &[(f64, Vector)],
    options: &CacheOptions,
    v: usize,
) -> Result<(Frame, QuadricFit, SecondFundamentalForm)> {
    let n = mesh.intrinsic_dim();
    let big_n = mesh.ambient_dim();
    let origin = *mesh.vertex(v);
    let mut frame = initial_frame(mesh, corners, v);
    let mut fit = fit_with_widening(mesh, &frame, v, options.fit_rings)?;

    // Tilt the tangent plane by the fitted slopes of the normal heights and refit.
    let heights = |frame: &Frame, fit: &QuadricFit| -> Vec<([f64; 2], TangentMatrix)> {
        frame
            .normals()
            .iter()
            .map(|nu| fit.apply(|j| nu.dot(&(mesh.vertex(j) - origin))))
            .collect()
    };
    let slopes = heights(&frame, &fit);
    let mut axes = frame.axes;
    for a in 0..n {
        for (k, (g, _)) in slopes.iter().enumerate() {
            axes[a] += frame.axes[n + k] * g[a];
        }
    }
    orthonormalize(&mut axes[..big_n]);
    frame = Frame { intrinsic: n, ambient: big_n, axes };
    fit = quadric_fit(mesh, &frame, v, fit.stencil.clone())?;

    let mut ii = SecondFundamentalForm::zeros(n);
    for (k, (_, hess)) in heights(&frame, &fit).into_iter().enumerate() {
        let nu = frame.normals()[k];
        for a in 0..n {
            for b in 0..n {
                ii.entries[a][b] += nu * hess.get(a, b);
            }
        }
    }
    Ok((frame, fit, ii))
}
