//! Closed simplicial curves and surfaces embedded in `R^N`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{vector_from_slice, Vector, MAX_AMBIENT};

/// Relative measure below which a cell counts as degenerate, in units of
/// (longest edge)^n.
const DEGENERATE_RELATIVE: f64 = 1e-12;

/// A validated closed simplicial `n`-manifold (`n ∈ {1, 2}`) in `R^N`.
///
/// Immutable after construction; refinement and translation build new meshes.
#[derive(Debug, Clone)]
pub struct EmbeddedMesh {
    intrinsic_dim: usize,
    ambient_dim: usize,
    vertices: Vec<Vector>,
    cells: Vec<usize>,
    edges: Vec<[usize; 2]>,
    vertex_cells: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    component_labels: Vec<usize>,
    num_components: usize,
}

/// Validates `cells` (each a list of `n + 1` vertex indices) over `vertices`
/// given as coordinate lists of length `ambient_dim`.
pub fn build_mesh(vertices: &[Vec<f64>], cells: &[Vec<usize>], ambient_dim: usize) -> Result<EmbeddedMesh> {
    for (i, v) in vertices.iter().enumerate() {
        if v.len() != ambient_dim {
            return Err(Error::Parse(format!(
                "vertex {i} has {} coordinates, expected {ambient_dim}",
                v.len()
            )));
        }
    }
    let points: Vec<Vector> = vertices.iter().map(|v| vector_from_slice(v)).collect();
    EmbeddedMesh::new(ambient_dim, points, cells)
}

impl EmbeddedMesh {
    pub fn new(ambient_dim: usize, vertices: Vec<Vector>, cells: &[Vec<usize>]) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyMesh("no vertices"));
        }
        if cells.is_empty() {
            return Err(Error::EmptyMesh("no cells"));
        }
        let arity = cells[0].len();
        if !(2..=3).contains(&arity) || cells.iter().any(|c| c.len() != arity) {
            return Err(Error::InvalidDimension { intrinsic: arity.saturating_sub(1), ambient: ambient_dim });
        }
        let n = arity - 1;
        if ambient_dim <= n || ambient_dim > MAX_AMBIENT {
            return Err(Error::InvalidDimension { intrinsic: n, ambient: ambient_dim });
        }
        let nv = vertices.len();
        for (ci, c) in cells.iter().enumerate() {
            for &i in c {
                if i >= nv {
                    return Err(Error::IndexOutOfRange { cell: ci, index: i, vertices: nv });
                }
            }
        }
        if vertices.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Parse("non-finite vertex coordinate".into()));
        }
        let flat: Vec<usize> = cells.iter().flatten().copied().collect();
        let mut mesh = EmbeddedMesh {
            intrinsic_dim: n,
            ambient_dim,
            vertices,
            cells: flat,
            edges: Vec::new(),
            vertex_cells: vec![Vec::new(); nv],
            neighbors: vec![Vec::new(); nv],
            component_labels: Vec::new(),
            num_components: 0,
        };
        for ci in 0..mesh.num_cells() {
            let measure = mesh.cell_measure(ci);
            let longest = mesh.cell_longest_edge(ci);
            if !(measure > DEGENERATE_RELATIVE * longest.powi(n as i32)) || longest == 0.0 {
                return Err(Error::DegenerateCell { cell: ci, measure });
            }
            for k in 0..=n {
                let v = mesh.cells[ci * (n + 1) + k];
                mesh.vertex_cells[v].push(ci);
            }
        }
        if let Some(v) = mesh.vertex_cells.iter().position(|c| c.is_empty()) {
            return Err(Error::UnreferencedVertex(v));
        }
        mesh.check_closed()?;
        mesh.build_edges();
        mesh.label_components();
        Ok(mesh)
    }

    fn check_closed(&self) -> Result<()> {
        match self.intrinsic_dim {
            1 => {
                for (v, cells) in self.vertex_cells.iter().enumerate() {
                    if cells.len() != 2 {
                        return Err(Error::BoundaryDetected { face: vec![v], cofaces: cells.len() });
                    }
                }
            }
            _ => {
                let mut count: HashMap<[usize; 2], usize> = HashMap::new();
                for ci in 0..self.num_cells() {
                    let c = self.cell(ci);
                    for k in 0..3 {
                        *count.entry(sorted_pair(c[k], c[(k + 1) % 3])).or_insert(0) += 1;
                    }
                }
                let mut bad: Vec<_> = count.into_iter().filter(|(_, k)| *k != 2).collect();
                bad.sort();
                if let Some((face, cofaces)) = bad.into_iter().next() {
                    return Err(Error::BoundaryDetected { face: face.to_vec(), cofaces });
                }
            }
        }
        Ok(())
    }

    fn build_edges(&mut self) {
        let mut edges = Vec::new();
        for ci in 0..self.num_cells() {
            let c = self.cell(ci);
            for a in 0..c.len() {
                for b in a + 1..c.len() {
                    edges.push(sorted_pair(c[a], c[b]));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        for &[a, b] in &edges {
            self.neighbors[a].push(b);
            self.neighbors[b].push(a);
        }
        self.edges = edges;
    }

    fn label_components(&mut self) {
        let nv = self.vertices.len();
        let mut parent: Vec<usize> = (0..nv).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &[a, b] in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut relabel = HashMap::new();
        let mut labels = Vec::with_capacity(nv);
        for v in 0..nv {
            let root = find(&mut parent, v);
            let next = relabel.len();
            labels.push(*relabel.entry(root).or_insert(next));
        }
        self.num_components = relabel.len();
        self.component_labels = labels;
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Codimension `m = N - n`.
    pub fn codim(&self) -> usize {
        self.ambient_dim - self.intrinsic_dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.intrinsic_dim + 1)
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Vector {
        &self.vertices[i]
    }

    pub fn cell(&self, i: usize) -> &[usize] {
        let k = self.intrinsic_dim + 1;
        &self.cells[i * k..(i + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.intrinsic_dim + 1)
    }

    /// Unique edges as sorted index pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn component_labels(&self) -> &[usize] {
        &self.component_labels
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    /// Length (n = 1) or area (n = 2) of a cell.
    pub fn cell_measure(&self, ci: usize) -> f64 {
        let c = self.cell(ci);
        let p0 = &self.vertices[c[0]];
        let e1 = self.vertices[c[1]] - p0;
        if self.intrinsic_dim == 1 {
            return e1.norm();
        }
        let e2 = self.vertices[c[2]] - p0;
        let gram = e1.norm_squared() * e2.norm_squared() - e1.dot(&e2).powi(2);
        0.5 * gram.max(0.0).sqrt()
    }

    fn cell_longest_edge(&self, ci: usize) -> f64 {
        let c = self.cell(ci);
        let mut longest: f64 = 0.0;
        for a in 0..c.len() {
            for b in a + 1..c.len() {
                longest = longest.max((self.vertices[c[a]] - self.vertices[c[b]]).norm());
            }
        }
        longest
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_measure(c)).sum()
    }

    /// Longest edge, used as the mesh size `h`.
    pub fn mesh_size(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
            .fold(0.0, f64::max)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let s: f64 = self.edges.iter().map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm()).sum();
        s / self.edges.len() as f64
    }

    /// Euler characteristic `V - E + F` (for curves, `V - E`).
    pub fn euler_characteristic(&self) -> i64 {
        let v = self.num_vertices() as i64;
        let e = self.edges.len() as i64;
        match self.intrinsic_dim {
            1 => v - e,
            _ => v - e + self.num_cells() as i64,
        }
    }

    pub fn cell_lists(&self) -> Vec<Vec<usize>> {
        self.cells().map(|c| c.to_vec()).collect()
    }

    pub fn translated(&self, offset: &Vector) -> EmbeddedMesh {
        let mut m = self.clone();
        for v in m.vertices.iter_mut() {
            *v += offset;
        }
        m
    }

    pub fn scaled(&self, factor: f64) -> Result<EmbeddedMesh> {
        let verts = self.vertices.iter().map(|v| v * factor).collect();
        EmbeddedMesh::new(self.ambient_dim, verts, &self.cell_lists())
    }

    /// Disjoint union; both meshes must share intrinsic and ambient dimension.
    pub fn union(&self, other: &EmbeddedMesh) -> Result<EmbeddedMesh> {
        if self.intrinsic_dim != other.intrinsic_dim || self.ambient_dim != other.ambient_dim {
            return Err(Error::UnsupportedSpec("union of meshes with different dimensions".into()));
        }
        let shift = self.num_vertices();
        let mut verts = self.vertices.clone();
        verts.extend_from_slice(&other.vertices);
        let mut cells = self.cell_lists();
        cells.extend(other.cells().map(|c| c.iter().map(|i| i + shift).collect()));
        EmbeddedMesh::new(self.ambient_dim, verts, &cells)
    }

    /// Splits into connected components. Each entry carries the component mesh
    /// and the map from its local vertex indices to indices in `self`.
    pub fn split_components(&self) -> Vec<(EmbeddedMesh, Vec<usize>)> {
        if self.num_components == 1 {
            return vec![(self.clone(), (0..self.num_vertices()).collect())];
        }
        let mut local = vec![usize::MAX; self.num_vertices()];
        let mut maps: Vec<Vec<usize>> = vec![Vec::new(); self.num_components];
        for v in 0..self.num_vertices() {
            let c = self.component_labels[v];
            local[v] = maps[c].len();
            maps[c].push(v);
        }
        let mut cells: Vec<Vec<Vec<usize>>> = vec![Vec::new(); self.num_components];
        for cell in self.cells() {
            let c = self.component_labels[cell[0]];
            cells[c].push(cell.iter().map(|&v| local[v]).collect());
        }
        maps.into_iter()
            .zip(cells)
            .map(|(map, cells)| {
                let verts = map.iter().map(|&v| self.vertices[v]).collect();
                let mesh = EmbeddedMesh::new(self.ambient_dim, verts, &cells)
                    .expect("component of a valid mesh is valid");
                (mesh, map)
            })
            .collect()
    }

    /// Axis-aligned bounding box over the ambient coordinates.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        let mut lo = Vector::repeat(f64::INFINITY);
        let mut hi = Vector::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        for k in self.ambient_dim..MAX_AMBIENT {
            lo[k] = 0.0;
            hi[k] = 0.0;
        }
        (lo, hi)
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b { [a, b] } else { [b, a] }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_loop() -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
        let s = 3f64.sqrt() / 2.0;
        (vec![vec![1.0, 0.0], vec![-0.5, s], vec![-0.5, -s]], vec![vec![0, 1], vec![1, 2], vec![2, 0]])
    }

    fn octahedron() -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
        let v = vec![
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, -1.0],
        ];
        let f = vec![
            vec![0, 2, 4],
            vec![2, 1, 4],
            vec![1, 3, 4],
            vec![3, 0, 4],
            vec![2, 0, 5],
            vec![1, 2, 5],
            vec![3, 1, 5],
            vec![0, 3, 5],
        ];
        (v, f)
    }

    #[test]
    fn triangle_loop_is_closed_curve() {
        let (v, c) = triangle_loop();
        let m = build_mesh(&v, &c, 2).unwrap();
        assert_eq!(m.intrinsic_dim(), 1);
        assert_eq!(m.num_components(), 1);
        assert!((m.total_measure() - 3.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn octahedron_is_closed_surface() {
        let (v, c) = octahedron();
        let m = build_mesh(&v, &c, 3).unwrap();
        assert_eq!(m.num_components(), 1);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.edges().len(), 12);
    }

    #[test]
    fn open_square_is_rejected() {
        let v = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let c = vec![vec![0, 1], vec![1, 2], vec![2, 3]];
        assert!(matches!(build_mesh(&v, &c, 2), Err(Error::BoundaryDetected { .. })));
    }

    #[test]
    fn open_surface_is_rejected() {
        let (v, mut c) = octahedron();
        c.pop();
        assert!(matches!(build_mesh(&v, &c, 3), Err(Error::BoundaryDetected { .. })));
    }

    #[test]
    fn degenerate_and_out_of_range() {
        let v = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]];
        let c = vec![vec![0, 1], vec![1, 2], vec![2, 0]];
        assert!(matches!(build_mesh(&v, &c, 2), Err(Error::DegenerateCell { cell: 0, .. })));
        let (v, mut c) = triangle_loop();
        c[1][1] = 7;
        assert!(matches!(build_mesh(&v, &c, 2), Err(Error::IndexOutOfRange { index: 7, .. })));
    }

    #[test]
    fn rebuild_is_idempotent_and_split_recovers_components() {
        let (v, c) = triangle_loop();
        let m = build_mesh(&v, &c, 2).unwrap();
        let far = m.translated(&vector_from_slice(&[10.0, 0.0]));
        let u = m.union(&far).unwrap();
        assert_eq!(u.num_components(), 2);
        let again = EmbeddedMesh::new(2, u.vertices().to_vec(), &u.cell_lists()).unwrap();
        assert_eq!(again.component_labels(), u.component_labels());
        let parts = u.split_components();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1].1, vec![3, 4, 5]);
        assert!((parts[1].0.total_measure() - m.total_measure()).abs() < 1e-12);
    }
}
