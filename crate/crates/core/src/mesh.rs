//! Uniform axis-aligned quadrilateral meshes with oriented edges.

use crate::error::{Error, Result};

/// A mesh edge. `cells[0]` is always the lower-id adjacent cell; the
/// unit `normal` points from `cells[0]` into `cells[1]` (outward on the
/// boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub cells: [Option<usize>; 2],
    pub normal: [f64; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }
}

/// Local edge positions of a cell, counterclockwise from the bottom.
pub const LOCAL_EDGES: [&str; 4] = ["bottom", "right", "top", "left"];

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n_x: usize,
    pub n_y: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub vertices: Vec<[f64; 2]>,
    /// Four vertex ids per cell, counterclockwise starting at the lower-left corner.
    pub cells: Vec<[usize; 4]>,
    pub edges: Vec<Edge>,
    /// Edge ids per cell in `LOCAL_EDGES` order.
    pub cell_edges: Vec<[usize; 4]>,
    pub boundary_edges: Vec<usize>,
}

/// Affine reference-to-physical map of one cell. The reference cell is `[-1,1]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub vertices: [[f64; 2]; 4],
    pub center: [f64; 2],
    /// Diagonal of the (constant) Jacobian, `(dx/2, dy/2)`.
    pub jacobian: [f64; 2],
    pub diameter: f64,
}

impl CellGeometry {
    pub fn det_jacobian(&self) -> f64 {
        self.jacobian[0] * self.jacobian[1]
    }

    pub fn measure(&self) -> f64 {
        4.0 * self.det_jacobian()
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.center[0] + self.jacobian[0] * xi[0],
            self.center[1] + self.jacobian[1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        [
            (x[0] - self.center[0]) / self.jacobian[0],
            (x[1] - self.center[1]) / self.jacobian[1],
        ]
    }
}

/// Builds an `n_x` by `n_y` grid of the box `[lo, hi]`.
pub fn build_uniform_mesh(n_x: usize, n_y: usize, lo: [f64; 2], hi: [f64; 2]) -> Result<Mesh> {
    if n_x == 0 || n_y == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be positive, got {n_x}x{n_y}"
        )));
    }
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        return Err(Error::InvalidArgument(format!(
            "empty box: lo {lo:?}, hi {hi:?}"
        )));
    }
    let dx = (hi[0] - lo[0]) / n_x as f64;
    let dy = (hi[1] - lo[1]) / n_y as f64;
    let vid = |i: usize, j: usize| j * (n_x + 1) + i;
    let cid = |i: usize, j: usize| j * n_x + i;

    let mut vertices = Vec::with_capacity((n_x + 1) * (n_y + 1));
    for j in 0..=n_y {
        for i in 0..=n_x {
            // Snap the last row/column so the box is reproduced exactly.
            let x = if i == n_x { hi[0] } else { lo[0] + i as f64 * dx };
            let y = if j == n_y { hi[1] } else { lo[1] + j as f64 * dy };
            vertices.push([x, y]);
        }
    }

    let mut cells = Vec::with_capacity(n_x * n_y);
    for j in 0..n_y {
        for i in 0..n_x {
            cells.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }

    let mut edges = Vec::new();
    let mut cell_edges = vec![[usize::MAX; 4]; n_x * n_y];

    // Horizontal edges: between cell rows j-1 and j.
    for j in 0..=n_y {
        for i in 0..n_x {
            let below = (j > 0).then(|| cid(i, j - 1));
            let above = (j < n_y).then(|| cid(i, j));
            let (cells_pair, normal) = match (below, above) {
                (Some(b), Some(a)) => ([Some(b), Some(a)], [0.0, 1.0]),
                (None, Some(a)) => ([Some(a), None], [0.0, -1.0]),
                (Some(b), None) => ([Some(b), None], [0.0, 1.0]),
                (None, None) => unreachable!(),
            };
            let id = edges.len();
            edges.push(Edge { vertices: [vid(i, j), vid(i + 1, j)], cells: cells_pair, normal });
            if let Some(a) = above {
                cell_edges[a][0] = id;
            }
            if let Some(b) = below {
                cell_edges[b][2] = id;
            }
        }
    }
    // Vertical edges: between cell columns i-1 and i.
    for j in 0..n_y {
        for i in 0..=n_x {
            let left = (i > 0).then(|| cid(i - 1, j));
            let right = (i < n_x).then(|| cid(i, j));
            let (cells_pair, normal) = match (left, right) {
                (Some(l), Some(r)) => ([Some(l), Some(r)], [1.0, 0.0]),
                (None, Some(r)) => ([Some(r), None], [-1.0, 0.0]),
                (Some(l), None) => ([Some(l), None], [1.0, 0.0]),
                (None, None) => unreachable!(),
            };
            let id = edges.len();
            edges.push(Edge { vertices: [vid(i, j), vid(i, j + 1)], cells: cells_pair, normal });
            if let Some(r) = right {
                cell_edges[r][3] = id;
            }
            if let Some(l) = left {
                cell_edges[l][1] = id;
            }
        }
    }

    let boundary_edges = edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_boundary())
        .map(|(k, _)| k)
        .collect();

    Ok(Mesh { n_x, n_y, lo, hi, vertices, cells, edges, cell_edges, boundary_edges })
}

impl Mesh {
    /// The default experiment domain `[-1,1]^2` with `n` cells per axis.
    pub fn unit_square(n: usize) -> Result<Mesh> {
        build_uniform_mesh(n, n, [-1.0, -1.0], [1.0, 1.0])
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_size(&self) -> [f64; 2] {
        [
            (self.hi[0] - self.lo[0]) / self.n_x as f64,
            (self.hi[1] - self.lo[1]) / self.n_y as f64,
        ]
    }

    /// Cell index `(i, j)` in the grid.
    pub fn cell_index(&self, cell: usize) -> (usize, usize) {
        (cell % self.n_x, cell / self.n_x)
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry> {
        if cell >= self.n_cells() {
            return Err(Error::OutOfRange { index: cell, len: self.n_cells() });
        }
        let v = self.cells[cell].map(|k| self.vertices[k]);
        let jacobian = [0.5 * (v[1][0] - v[0][0]), 0.5 * (v[3][1] - v[0][1])];
        Ok(CellGeometry {
            vertices: v,
            center: [0.5 * (v[0][0] + v[2][0]), 0.5 * (v[0][1] + v[2][1])],
            jacobian,
            diameter: 2.0 * jacobian[0].hypot(jacobian[1]),
        })
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh() {
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.edges.len(), 4);
        assert_eq!(m.boundary_edges.len(), 4);
        let g = m.cell_geometry(0).unwrap();
        assert_eq!(g.jacobian, [1.0, 1.0]);
        assert_eq!(g.center, [0.0, 0.0]);
        assert_eq!(g.measure(), 4.0);
        assert_eq!(g.to_physical([0.3, -0.7]), [0.3, -0.7]);
    }

    #[test]
    fn two_by_two_counts() {
        let m = Mesh::unit_square(2).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.edges.len(), 12);
        assert_eq!(m.boundary_edges.len(), 8);
        for c in 0..4 {
            assert_eq!(m.cell_geometry(c).unwrap().measure(), 1.0);
        }
    }

    #[test]
    fn anisotropic_cell_measure() {
        let m = build_uniform_mesh(4, 2, [-1.0, -1.0], [1.0, 1.0]).unwrap();
        for c in 0..m.n_cells() {
            assert!((m.cell_geometry(c).unwrap().measure() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn production_grid_cell_count() {
        let m = Mesh::unit_square(256).unwrap();
        assert_eq!(m.n_cells(), 65_536);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            build_uniform_mesh(0, 3, [-1.0, -1.0], [1.0, 1.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(build_uniform_mesh(2, 2, [1.0, -1.0], [1.0, 1.0]).is_err());
        let m = Mesh::unit_square(2).unwrap();
        assert!(matches!(m.cell_geometry(4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn area_boundary_and_incidence() {
        for (nx, ny) in [(1, 1), (3, 2), (7, 5), (16, 16)] {
            let m = build_uniform_mesh(nx, ny, [-1.0, -1.0], [1.0, 1.0]).unwrap();
            let area: f64 = (0..m.n_cells()).map(|c| m.cell_geometry(c).unwrap().measure()).sum();
            assert!((area - 4.0).abs() < 1e-14);
            let perimeter: f64 = m.boundary_edges.iter().map(|&e| m.edge_length(e)).sum();
            assert!((perimeter - 8.0).abs() < 1e-14);

            for (k, e) in m.edges.iter().enumerate() {
                let adjacent: Vec<usize> = e.cells.iter().flatten().copied().collect();
                assert_eq!(adjacent.len(), if e.is_boundary() { 1 } else { 2 });
                for &c in &adjacent {
                    assert_eq!(m.cell_edges[c].iter().filter(|&&x| x == k).count(), 1);
                }
                if let [Some(a), Some(b)] = e.cells {
                    assert!(a < b);
                }
            }
            for c in 0..m.n_cells() {
                let g = m.cell_geometry(c).unwrap();
                assert!(g.det_jacobian() > 0.0);
            }
        }
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = Mesh::unit_square(3).unwrap();
        for &e in &m.boundary_edges {
            let edge = &m.edges[e];
            let [a, b] = edge.vertices;
            let mid = [
                0.5 * (m.vertices[a][0] + m.vertices[b][0]),
                0.5 * (m.vertices[a][1] + m.vertices[b][1]),
            ];
            let c = m.cell_geometry(edge.cells[0].unwrap()).unwrap().center;
            let dot = (mid[0] - c[0]) * edge.normal[0] + (mid[1] - c[1]) * edge.normal[1];
            assert!(dot > 0.0);
        }
    }
}
