//! Triangulated meshes and their combinatorial graph Laplacian.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A validated triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = positions.len();
        if m == 0 {
            return Err(Error::invalid("mesh", "no vertices"));
        }
        for (f, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&i| i >= m) {
                return Err(Error::invalid(
                    "mesh",
                    format!("face {f} references vertex {bad}, mesh has {m} vertices"),
                ));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::invalid(
                    "mesh",
                    format!("face {f} is degenerate: {face:?}"),
                ));
            }
        }
        Ok(Mesh { positions, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted and deduplicated.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Icosahedron subdivided `level` times, vertices projected to the unit sphere.
    ///
    /// Level `k` has `10·4^k + 2` vertices and `20·4^k` faces.
    pub fn icosphere(level: u32) -> Mesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut positions: Vec<[f64; 3]> = [
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
        ]
        .into_iter()
        .map(normalize)
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, positions: &mut Vec<[f64; 3]>| {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let (p, q) = (positions[a], positions[b]);
                    positions.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    positions.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for &[a, b, c] in &faces {
                let ab = midpoint(a, b, &mut positions);
                let bc = midpoint(b, c, &mut positions);
                let ca = midpoint(c, a, &mut positions);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        Mesh { positions, faces }
    }

    /// Planar `rows × cols` vertex grid, each cell split into two triangles.
    pub fn grid(rows: usize, cols: usize) -> Result<Mesh> {
        if rows < 2 || cols < 2 {
            return Err(Error::invalid("mesh", "grid needs at least 2×2 vertices"));
        }
        let positions = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| [c as f64, r as f64, 0.0]))
            .collect();
        let mut faces = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
        for r in 0..rows - 1 {
            for c in 0..cols - 1 {
                let v = r * cols + c;
                faces.push([v, v + 1, v + cols]);
                faces.push([v + 1, v + cols + 1, v + cols]);
            }
        }
        Mesh::new(positions, faces)
    }

    pub fn parse_off(text: &str) -> Result<Mesh> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        match tokens.next() {
            Some("OFF") => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected OFF header, found {other:?}"
                )))
            }
        }
        let mut next_usize = |what: &str| -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))?;
            tok.parse()
                .map_err(|_| Error::Parse(format!("bad {what}: {tok:?}")))
        };
        let n_vertices = next_usize("vertex count")?;
        let n_faces = next_usize("face count")?;
        let _n_edges = next_usize("edge count")?;

        let mut positions = Vec::with_capacity(n_vertices);
        for v in 0..n_vertices {
            let mut p = [0.0; 3];
            for coord in p.iter_mut() {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::Parse(format!("truncated vertex {v}")))?;
                *coord = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad coordinate {tok:?} at vertex {v}")))?;
            }
            positions.push(p);
        }
        let mut faces = Vec::with_capacity(n_faces);
        for f in 0..n_faces {
            let mut ints = [0usize; 4];
            for slot in ints.iter_mut() {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::Parse(format!("truncated face {f}")))?;
                *slot = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad index {tok:?} in face {f}")))?;
            }
            if ints[0] != 3 {
                return Err(Error::Parse(format!(
                    "face {f} has {} vertices, only triangles are supported",
                    ints[0]
                )));
            }
            faces.push([ints[1], ints[2], ints[3]]);
        }
        Mesh::new(positions, faces)
    }

    pub fn to_off(&self) -> String {
        let mut out = String::new();
        let n_edges = self.edges().len();
        writeln!(out, "OFF").unwrap();
        writeln!(out, "{} {} {}", self.positions.len(), self.faces.len(), n_edges).unwrap();
        for p in &self.positions {
            writeln!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
        }
        for f in &self.faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mesh> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::parse_off(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_off()).map_err(|e| Error::io(path, e))
    }
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Reads and validates an ASCII OFF mesh.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    Mesh::load(path)
}

/// Combinatorial Laplacian `L = D − A` of a mesh's edge graph, stored as
/// adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    edges: Vec<(usize, usize)>,
    // CSR adjacency: neighbors of i are indices[offsets[i]..offsets[i + 1]]
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl GraphLaplacian {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        Self::from_edges(mesh.vertex_count(), mesh.edges())
    }

    /// Builds from undirected edges with `i < j`, already deduplicated.
    fn from_edges(m: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; m];
        for &(i, j) in &edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = Vec::with_capacity(m + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..m].to_vec();
        let mut indices = vec![0usize; offsets[m]];
        for &(i, j) in &edges {
            indices[fill[i]] = j;
            fill[i] += 1;
            indices[fill[j]] = i;
            fill[j] += 1;
        }
        for i in 0..m {
            indices[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        let lap = GraphLaplacian {
            edges,
            offsets,
            indices,
        };
        let components = lap.component_count();
        if components > 1 {
            log::warn!("mesh graph has {components} connected components");
        }
        lap
    }

    pub fn dim(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn component_count(&self) -> usize {
        let m = self.dim();
        let mut seen = vec![false; m];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..m {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &u in self.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.dim();
        let mut l = Array2::zeros((m, m));
        for i in 0..m {
            l[[i, i]] = self.degree(i) as f64;
            for &j in self.neighbors(i) {
                l[[i, j]] = -1.0;
            }
        }
        l
    }

    /// Nonzero entries `(i, j, value)` sorted by `(i, j)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.dim() + self.indices.len());
        for i in 0..self.dim() {
            let nbrs = self.neighbors(i);
            let split = nbrs.partition_point(|&j| j < i);
            out.extend(nbrs[..split].iter().map(|&j| (i, j, -1.0)));
            if !nbrs.is_empty() {
                out.push((i, i, self.degree(i) as f64));
            }
            out.extend(nbrs[split..].iter().map(|&j| (i, j, -1.0)));
        }
        out
    }

    /// Coordinate-list text, one `i j value` line per nonzero.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for (i, j, v) in self.entries() {
            writeln!(out, "{i} {j} {v}").unwrap();
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let s: f64 = self.neighbors(i).iter().map(|&j| v[j]).sum();
                self.degree(i) as f64 * v[i] - s
            })
            .collect()
    }

    /// `L · B` for an `m × d` matrix.
    pub fn mul_mat(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (rows, d) = b.dim();
        if rows != self.dim() {
            return Err(Error::shape("laplacian product", self.dim(), rows));
        }
        let mut out = Array2::zeros((rows, d));
        for i in 0..rows {
            let deg = self.degree(i) as f64;
            let mut row = out.row_mut(i);
            row.scaled_add(deg, &b.row(i));
            for &j in self.neighbors(i) {
                row.scaled_add(-1.0, &b.row(j));
            }
        }
        Ok(out)
    }

    /// `tr(BᵀLB)` by edge enumeration: `Σ_(i,j) ‖B_i − B_j‖²`.
    pub fn quadratic_form(&self, b: ArrayView2<f64>) -> Result<f64> {
        if b.nrows() != self.dim() {
            return Err(Error::shape("laplacian quadratic form", self.dim(), b.nrows()));
        }
        Ok(self
            .edges
            .iter()
            .map(|&(i, j)| {
                b.row(i)
                    .iter()
                    .zip(b.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum())
    }

    /// Largest eigenvalue estimate by power iteration.
    pub fn lambda_max(&self, iterations: usize, seed: u64) -> f64 {
        let m = self.dim();
        if self.edges.is_empty() {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w = self.mul_vec(&v);
            lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            v = w;
        }
        lambda
    }

    /// Solves `(I + λL) x = b` by conjugate gradients.
    pub fn solve_shifted(&self, lambda: f64, b: &[f64], tolerance: f64) -> Array1<f64> {
        let m = self.dim();
        let apply = |x: &[f64]| -> Vec<f64> {
            let lx = self.mul_vec(x);
            x.iter().zip(lx).map(|(xi, li)| xi + lambda * li).collect()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let b_norm = dot(b, b).sqrt();
        let mut x = vec![0.0; m];
        if b_norm == 0.0 {
            return Array1::from(x);
        }
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        for _ in 0..(10 * m).max(100) {
            if rr.sqrt() <= tolerance * b_norm {
                break;
            }
            let ap = apply(&p);
            let step = rr / dot(&p, &ap);
            for i in 0..m {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for i in 0..m {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_next;
        }
        Array1::from(x)
    }
}

/// Builds `L = D − A` for the mesh's undirected edge graph.
pub fn build_laplacian(mesh: &Mesh) -> GraphLaplacian {
    GraphLaplacian::from_mesh(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn triangle() -> Mesh {
        Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn parses_smallest_mesh() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let mesh = Mesh::parse_off(text).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_face_is_a_validation_error() {
        let text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n";
        assert!(matches!(
            Mesh::parse_off(text),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        for text in [
            "PLY\n",
            "OFF\n3 1\n",
            "OFF\n3 1 0\n0 0 0\n1 0 0\n",
            "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 x\n3 0 1 2\n",
            "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n",
        ] {
            assert!(matches!(Mesh::parse_off(text), Err(Error::Parse(_))), "{text:?}");
        }
    }

    #[test]
    fn degenerate_face_rejected() {
        let err = Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn comments_and_same_line_counts() {
        let text = "OFF # header\n# a comment\n3 1 3\n0 0 0\n1 0 0\n0 1 0\n3 2 1 0 # face\n";
        assert_eq!(Mesh::parse_off(text).unwrap().faces(), &[[2, 1, 0]]);
    }

    #[test]
    fn icosphere_counts_follow_euler() {
        for (level, v, f) in [(0, 12, 20), (1, 42, 80), (2, 162, 320)] {
            let mesh = Mesh::icosphere(level);
            let e = mesh.edges().len();
            assert_eq!(mesh.vertex_count(), v);
            assert_eq!(mesh.faces().len(), f);
            assert_eq!(v as i64 - e as i64 + f as i64, 2);
        }
    }

    #[test]
    fn icosphere_roundtrips_through_off() {
        let mesh = Mesh::icosphere(1);
        let back = Mesh::parse_off(&mesh.to_off()).unwrap();
        assert_eq!(back.vertex_count(), 42);
        assert_eq!(back.faces(), mesh.faces());
    }

    #[test]
    fn grid_shape() {
        let mesh = Mesh::grid(3, 4).unwrap();
        assert_eq!(mesh.vertex_count(), 12);
        assert_eq!(mesh.faces().len(), 12);
        assert!(Mesh::grid(1, 4).is_err());
    }

    #[test]
    fn triangle_laplacian_is_k3() {
        let l = build_laplacian(&triangle()).to_dense();
        assert_eq!(l, array![[2., -1., -1.], [-1., 2., -1.], [-1., -1., 2.]]);
    }

    #[test]
    fn two_triangles_degrees() {
        let mesh = Mesh::new(vec![[0.0; 3]; 4], vec![[0, 1, 2], [1, 3, 2]]).unwrap();
        let lap = build_laplacian(&mesh);
        assert_eq!(lap.edges(), &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]);
        let degrees: Vec<_> = (0..4).map(|i| lap.degree(i)).collect();
        assert_eq!(degrees, vec![2, 3, 3, 2]);
    }

    #[test]
    fn constant_vector_in_null_space() {
        let lap = build_laplacian(&Mesh::icosphere(2));
        assert!(lap.mul_vec(&vec![1.0; lap.dim()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn quadratic_form_examples() {
        let lap = build_laplacian(&triangle());
        assert_eq!(lap.quadratic_form(array![[3.0, 1.0], [3.0, 1.0], [3.0, 1.0]].view()).unwrap(), 0.0);
        assert_eq!(lap.quadratic_form(array![[1.0], [0.0], [0.0]].view()).unwrap(), 2.0);
        assert!(matches!(
            lap.quadratic_form(array![[1.0], [0.0]].view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn coo_text_sorted() {
        let text = build_laplacian(&triangle()).to_coo_text();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "0 0 2");
        assert_eq!(lines[1], "0 1 -1");
        assert_eq!(lines[3], "1 0 -1");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn disconnected_mesh_is_block_diagonal() {
        let mesh = Mesh::new(vec![[0.0; 3]; 6], vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let lap = build_laplacian(&mesh);
        assert_eq!(lap.component_count(), 2);
        let dense = lap.to_dense();
        assert_eq!(dense[[0, 3]], 0.0);
        // constant per component is still in the null space
        let b = array![[1.0], [1.0], [1.0], [5.0], [5.0], [5.0]];
        assert_eq!(lap.quadratic_form(b.view()).unwrap(), 0.0);
    }

    #[test]
    fn lambda_max_of_k3() {
        // K3 eigenvalues are 0, 3, 3
        let lam = build_laplacian(&triangle()).lambda_max(50, 1);
        assert!((lam - 3.0).abs() < 1e-9);
    }

    #[test]
    fn shifted_solve_inverts() {
        let lap = build_laplacian(&Mesh::icosphere(1));
        let b: Vec<f64> = (0..lap.dim()).map(|i| (i as f64).sin()).collect();
        let x = lap.solve_shifted(1.0, &b, 1e-12);
        let lx = lap.mul_vec(x.as_slice().unwrap());
        for i in 0..lap.dim() {
            assert!((x[i] + lx[i] - b[i]).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn invariant_to_face_order_and_rotation(perm_seed in any::<u64>(), rot in 0usize..3) {
            let mesh = Mesh::icosphere(1);
            let mut faces = mesh.faces().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            for i in (1..faces.len()).rev() {
                faces.swap(i, rng.gen_range(0..=i));
            }
            for f in faces.iter_mut() {
                f.rotate_left(rot);
            }
            let shuffled = Mesh::new(mesh.positions().to_vec(), faces).unwrap();
            prop_assert_eq!(build_laplacian(&shuffled), build_laplacian(&mesh));
        }

        #[test]
        fn quadratic_form_nonnegative(seed in any::<u64>()) {
            let lap = build_laplacian(&Mesh::icosphere(1));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = Array2::from_shape_fn((lap.dim(), 3), |_| rng.gen::<f64>() * 2.0 - 1.0);
            prop_assert!(lap.quadratic_form(b.view()).unwrap() >= 0.0);
        }
    }
}
