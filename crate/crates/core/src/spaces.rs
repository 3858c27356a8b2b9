//! Global numbering for the vector-Q2 velocity / discontinuous-P1 pressure
//! pair, Dirichlet constraints and nodal interpolation.
//!
//! Velocity DoFs are interleaved per node (`2 * node + component`). The
//! control space is the velocity space itself, so it shares this numbering.

use crate::mesh::Mesh;
use crate::error::{Error, Result};

/// Local velocity DoFs per cell: 9 nodes times 2 components, index `2 * node + component`.
pub const VEL_LOCAL: usize = 18;
/// Local pressure DoFs per cell (modal `{1, x, y}`).
pub const PRESS_LOCAL: usize = 3;

#[derive(Debug, Clone)]
pub struct MixedDofMap {
    pub n_x: usize,
    pub n_y: usize,
    pub n_vel: usize,
    pub n_press: usize,
    node_coords: Vec<[f64; 2]>,
    cell_vel: Vec<[usize; VEL_LOCAL]>,
    boundary_nodes: Vec<usize>,
    boundary_mask: Vec<bool>,
}

impl MixedDofMap {
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    /// Size of the bordered state system: velocity, pressure and the gauge multiplier.
    pub fn system_size(&self) -> usize {
        self.n_vel + self.n_press + 1
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        self.node_coords[node]
    }

    pub fn cell_velocity_dofs(&self, cell: usize) -> &[usize; VEL_LOCAL] {
        &self.cell_vel[cell]
    }

    pub fn cell_pressure_dofs(&self, cell: usize) -> [usize; PRESS_LOCAL] {
        [3 * cell, 3 * cell + 1, 3 * cell + 2]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        self.boundary_mask[dof / 2]
    }

    pub fn gather_velocity(&self, u: &[f64], cell: usize) -> [f64; VEL_LOCAL] {
        self.cell_vel[cell].map(|g| u[g])
    }

    pub fn gather_pressure(&self, p: &[f64], cell: usize) -> [f64; PRESS_LOCAL] {
        self.cell_pressure_dofs(cell).map(|g| p[g])
    }
}

pub fn build_dof_map(mesh: &Mesh) -> MixedDofMap {
    let (nx, ny) = (mesh.n_x, mesh.n_y);
    let (ncx, ncy) = (2 * nx + 1, 2 * ny + 1);
    let [hx, hy] = mesh.cell_size();
    let node = |i: usize, j: usize| j * ncx + i;

    let mut node_coords = Vec::with_capacity(ncx * ncy);
    let mut boundary_mask = Vec::with_capacity(ncx * ncy);
    for j in 0..ncy {
        for i in 0..ncx {
            let x = if i == ncx - 1 { mesh.hi[0] } else { mesh.lo[0] + 0.5 * hx * i as f64 };
            let y = if j == ncy - 1 { mesh.hi[1] } else { mesh.lo[1] + 0.5 * hy * j as f64 };
            node_coords.push([x, y]);
            boundary_mask.push(i == 0 || j == 0 || i == ncx - 1 || j == ncy - 1);
        }
    }
    let boundary_nodes = (0..ncx * ncy).filter(|&k| boundary_mask[k]).collect();

    let cell_vel = (0..mesh.n_cells())
        .map(|c| {
            let (ci, cj) = mesh.cell_index(c);
            let mut dofs = [0; VEL_LOCAL];
            for k in 0..9 {
                let g = node(2 * ci + k % 3, 2 * cj + k / 3);
                dofs[2 * k] = 2 * g;
                dofs[2 * k + 1] = 2 * g + 1;
            }
            dofs
        })
        .collect();

    MixedDofMap {
        n_x: nx,
        n_y: ny,
        n_vel: 2 * ncx * ncy,
        n_press: 3 * mesh.n_cells(),
        node_coords,
        cell_vel,
        boundary_nodes,
        boundary_mask,
    }
}

/// Dirichlet data on boundary velocity DoFs plus the zero-mean pressure gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
    mask: Vec<bool>,
    /// The constant pressure mode is fixed by a zero-mean multiplier.
    pub gauge: bool,
}

impl ConstraintSet {
    /// Prescribes `values` on velocity `dofs` out of `n_vel`, with the gauge enabled.
    pub fn new(n_vel: usize, dofs: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dofs.len() != values.len() {
            return Err(Error::InvalidArgument(format!("{} dofs but {} values", dofs.len(), values.len())));
        }
        let mut mask = vec![false; n_vel];
        for &d in &dofs {
            *mask.get_mut(d).ok_or(Error::OutOfRange { index: d, len: n_vel })? = true;
        }
        Ok(ConstraintSet { dofs, values, mask, gauge: true })
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.mask.get(dof).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Writes the prescribed values into `v` (a velocity vector or the
    /// velocity block of a full state vector).
    pub fn apply(&self, v: &mut [f64]) {
        for (&d, &val) in self.dofs.iter().zip(&self.values) {
            v[d] = val;
        }
    }

    /// Sets every constrained entry to zero.
    pub fn zero_out(&self, v: &mut [f64]) {
        for &d in &self.dofs {
            v[d] = 0.0;
        }
    }

    pub fn homogeneous(&self) -> ConstraintSet {
        ConstraintSet { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Constrains every boundary velocity node to `g(node)`.
pub fn dirichlet_constraints(dofs: &MixedDofMap, g: impl Fn([f64; 2]) -> [f64; 2]) -> ConstraintSet {
    let mut ids = Vec::with_capacity(2 * dofs.boundary_nodes.len());
    let mut values = Vec::with_capacity(2 * dofs.boundary_nodes.len());
    let mut mask = vec![false; dofs.n_vel];
    for &n in &dofs.boundary_nodes {
        let v = g(dofs.node_coords[n]);
        for c in 0..2 {
            ids.push(2 * n + c);
            values.push(v[c]);
            mask[2 * n + c] = true;
        }
    }
    ConstraintSet { dofs: ids, values, mask, gauge: true }
}

/// Nodal interpolant of `f` in the vector-Q2 space.
pub fn interpolate_velocity(dofs: &MixedDofMap, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mut u = vec![0.0; dofs.n_vel];
    for (n, &x) in dofs.node_coords.iter().enumerate() {
        let v = f(x);
        u[2 * n] = v[0];
        u[2 * n + 1] = v[1];
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::ScalarElement;
    use crate::mesh::build_uniform_mesh;

    fn eval_at(dofs: &MixedDofMap, mesh: &Mesh, u: &[f64], x: [f64; 2]) -> [f64; 2] {
        let [hx, hy] = mesh.cell_size();
        let ci = (((x[0] - mesh.lo[0]) / hx) as usize).min(mesh.n_x - 1);
        let cj = (((x[1] - mesh.lo[1]) / hy) as usize).min(mesh.n_y - 1);
        let cell = cj * mesh.n_x + ci;
        let g = mesh.cell_geometry(cell).unwrap();
        let xi = g.to_reference(x);
        let loc = dofs.gather_velocity(u, cell);
        let mut v = [0.0; 2];
        for k in 0..9 {
            let phi = ScalarElement::Q2.value(k, xi);
            v[0] += loc[2 * k] * phi;
            v[1] += loc[2 * k + 1] * phi;
        }
        v
    }

    #[test]
    fn counts() {
        let d1 = build_dof_map(&Mesh::unit_square(1).unwrap());
        assert_eq!((d1.n_vel, d1.n_press), (18, 3));
        let d2 = build_dof_map(&Mesh::unit_square(2).unwrap());
        assert_eq!((d2.n_vel, d2.n_press), (50, 12));
        assert_eq!(d2.system_size(), 63);
    }

    #[test]
    fn production_state_dof_count() {
        let d = build_dof_map(&Mesh::unit_square(256).unwrap());
        assert_eq!(d.n_vel + d.n_press, 722_946);
    }

    #[test]
    fn local_maps_are_consistent() {
        let mesh = build_uniform_mesh(3, 2, [-1.0, -1.0], [1.0, 1.0]).unwrap();
        let d = build_dof_map(&mesh);
        for c in 0..mesh.n_cells() {
            let map = d.cell_velocity_dofs(c);
            let mut sorted = map.to_vec();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), VEL_LOCAL);
            let g = mesh.cell_geometry(c).unwrap();
            for k in 0..9 {
                let node = map[2 * k] / 2;
                let xi = ScalarElement::Q2.nodes()[k];
                let x = g.to_physical(xi);
                let y = d.node_coords(node);
                assert!((x[0] - y[0]).abs() < 1e-15 && (x[1] - y[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dirichlet_values() {
        let mesh = Mesh::unit_square(2).unwrap();
        let d = build_dof_map(&mesh);
        let zero = dirichlet_constraints(&d, |_| [0.0, 0.0]);
        assert!(zero.is_homogeneous());
        assert_eq!(zero.dofs.len(), 2 * 16);
        assert!(zero.gauge);

        let cs = dirichlet_constraints(&d, |[x, y]| [3.0 * x * x - 3.0 * y * y, -6.0 * x * y]);
        let corner = (0..d.n_nodes()).find(|&n| d.node_coords(n) == [1.0, 1.0]).unwrap();
        let pos = cs.dofs.iter().position(|&k| k == 2 * corner).unwrap();
        assert_eq!([cs.values[pos], cs.values[pos + 1]], [0.0, -6.0]);

        let rot = dirichlet_constraints(&d, |[x, y]| [y, -x]);
        let left = (0..d.n_nodes()).find(|&n| d.node_coords(n) == [-1.0, 0.0]).unwrap();
        let pos = rot.dofs.iter().position(|&k| k == 2 * left).unwrap();
        assert_eq!([rot.values[pos], rot.values[pos + 1]], [0.0, 1.0]);
        for &k in &rot.dofs {
            assert!(d.is_boundary_dof(k));
        }
    }

    #[test]
    fn constraint_application_is_idempotent() {
        let d = build_dof_map(&Mesh::unit_square(3).unwrap());
        let cs = dirichlet_constraints(&d, |[x, y]| [x + y, x * y]);
        let mut v: Vec<f64> = (0..d.n_vel).map(|k| k as f64 * 0.1).collect();
        cs.apply(&mut v);
        let once = v.clone();
        cs.apply(&mut v);
        assert_eq!(once, v);
    }

    #[test]
    fn interpolation() {
        let mesh = Mesh::unit_square(2).unwrap();
        let d = build_dof_map(&mesh);
        let u = interpolate_velocity(&d, |_| [1.0, 0.0]);
        assert!(u.iter().step_by(2).all(|&v| v == 1.0));
        assert!(u.iter().skip(1).step_by(2).all(|&v| v == 0.0));

        let exact = |[x, y]: [f64; 2]| [3.0 * x * x - 3.0 * y * y, -6.0 * x * y];
        let u = interpolate_velocity(&d, exact);
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let v = eval_at(&d, &mesh, &u, x);
            let e = exact(x);
            assert!((v[0] - e[0]).abs() < 1e-13 && (v[1] - e[1]).abs() < 1e-13);
        }

        let mesh1 = Mesh::unit_square(1).unwrap();
        let d1 = build_dof_map(&mesh1);
        let s = interpolate_velocity(&d1, |[x, _]| [x.sin(), 0.0]);
        for n in 0..d1.n_nodes() {
            assert_eq!(s[2 * n], d1.node_coords(n)[0].sin());
        }
        let mid = eval_at(&d1, &mesh1, &s, [0.5, 0.0])[0];
        assert!((mid - 0.5f64.sin()).abs() > 1e-3);
    }
}
