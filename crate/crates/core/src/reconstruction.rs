//! BDM2 reconstruction of Q2 velocities.
//!
//! The reference space is `(P2)^2 + span{curl(x^3 y), curl(x y^3)}` with
//! 14 DoFs: normal moments against `L_0, L_1, L_2` on the four edges and
//! the two mean components in the interior. The divergence of every field
//! lies in P1, so the canonical interpolant commutes with the L2
//! projection onto the discontinuous P1 pressure space and maps discretely
//! divergence-free Q2 fields to pointwise divergence-free ones.
//!
//! Fields are carried to physical cells with the contravariant Piola map
//! `v(x) = J v_ref(x_ref) / det J`. The operator is only ever applied cell
//! by cell; edge moments of a continuous field are single valued, so the
//! cellwise interpolants glue into an H(div) field.

use nalgebra::{DMatrix, SMatrix};

use crate::elements::{gauss_legendre_1d, gauss_rule, legendre_012, QuadratureRule, ScalarElement};
use crate::error::{Error, Result};
use crate::mesh::{CellGeometry, Mesh};
use crate::spaces::{MixedDofMap, VEL_LOCAL};

pub const BDM_DIM: usize = 14;

/// Reference edges in local order: (fixed coordinate index, fixed value, outward normal).
const REF_EDGES: [(usize, f64, [f64; 2]); 4] = [
    (1, -1.0, [0.0, -1.0]),
    (0, 1.0, [1.0, 0.0]),
    (1, 1.0, [0.0, 1.0]),
    (0, -1.0, [-1.0, 0.0]),
];

fn edge_point(edge: usize, s: f64) -> [f64; 2] {
    let (axis, val, _) = REF_EDGES[edge];
    if axis == 0 {
        [val, s]
    } else {
        [s, val]
    }
}

/// Monomial spanning set of the reference BDM2 space.
fn prime_value(j: usize, [x, y]: [f64; 2]) -> [f64; 2] {
    let m = [1.0, x, y, x * x, x * y, y * y];
    match j {
        0..=5 => [m[j], 0.0],
        6..=11 => [0.0, m[j - 6]],
        12 => [x * x * x, -3.0 * x * x * y],
        13 => [3.0 * x * y * y, -y * y * y],
        _ => unreachable!(),
    }
}

fn prime_div(j: usize, [x, y]: [f64; 2]) -> f64 {
    // d/dx of [1, x, y, x^2, xy, y^2] and d/dy of the same list.
    let dx = [0.0, 1.0, 0.0, 2.0 * x, y, 0.0];
    let dy = [0.0, 0.0, 1.0, 0.0, x, 2.0 * y];
    match j {
        0..=5 => dx[j],
        6..=11 => dy[j - 6],
        _ => 0.0,
    }
}

/// The reference BDM2 element: nodal basis dual to the 14 DoF functionals.
#[derive(Debug, Clone)]
pub struct Bdm2Element {
    /// `coeffs[(j, k)]`: weight of monomial field `j` in nodal basis field `k`.
    coeffs: SMatrix<f64, BDM_DIM, BDM_DIM>,
    edge_points: Vec<f64>,
    edge_weights: Vec<f64>,
    interior: QuadratureRule,
}

impl Bdm2Element {
    pub fn new() -> Result<Self> {
        let (edge_points, edge_weights) = gauss_legendre_1d(3)?;
        let interior = gauss_rule(3)?;
        let mut el = Bdm2Element {
            coeffs: SMatrix::identity(),
            edge_points,
            edge_weights,
            interior,
        };
        let mut gram = DMatrix::<f64>::zeros(BDM_DIM, BDM_DIM);
        for j in 0..BDM_DIM {
            let d = el.dofs_of(|p| prime_value(j, p));
            for i in 0..BDM_DIM {
                gram[(i, j)] = d[i];
            }
        }
        let sv = gram.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-12 * smax) {
            return Err(Error::SingularBasis(format!(
                "DoF/basis matrix has condition estimate {:.3e}",
                smax / smin
            )));
        }
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::SingularBasis("DoF/basis matrix not invertible".into()))?;
        el.coeffs = SMatrix::from_fn(|i, j| inv[(i, j)]);
        Ok(el)
    }

    /// Applies the 14 DoF functionals to a reference field.
    pub fn dofs_of(&self, v: impl Fn([f64; 2]) -> [f64; 2]) -> [f64; BDM_DIM] {
        let mut out = [0.0; BDM_DIM];
        for (e, &(_, _, n)) in REF_EDGES.iter().enumerate() {
            for (&s, &w) in self.edge_points.iter().zip(&self.edge_weights) {
                let val = v(edge_point(e, s));
                let vn = val[0] * n[0] + val[1] * n[1];
                let l = legendre_012(s);
                for k in 0..3 {
                    out[3 * e + k] += w * vn * l[k];
                }
            }
        }
        for (&p, &w) in self.interior.points.iter().zip(&self.interior.weights) {
            let val = v(p);
            out[12] += w * val[0];
            out[13] += w * val[1];
        }
        out
    }

    pub fn value(&self, k: usize, p: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0; 2];
        for j in 0..BDM_DIM {
            let c = self.coeffs[(j, k)];
            if c != 0.0 {
                let pv = prime_value(j, p);
                v[0] += c * pv[0];
                v[1] += c * pv[1];
            }
        }
        v
    }

    pub fn divergence(&self, k: usize, p: [f64; 2]) -> f64 {
        (0..BDM_DIM).map(|j| self.coeffs[(j, k)] * prime_div(j, p)).sum()
    }

    /// 14 x 18 matrix taking the physical nodal values of a Q2 field on a cell
    /// with Jacobian diagonal `jac` to the BDM2 coefficients of its Piola pullback.
    pub fn q2_interpolation_matrix(&self, jac: [f64; 2]) -> [[f64; VEL_LOCAL]; BDM_DIM] {
        // det(J) J^{-1} = diag(jy, jx)
        let scale = [jac[1], jac[0]];
        let mut r = [[0.0; VEL_LOCAL]; BDM_DIM];
        for a in 0..9 {
            for c in 0..2 {
                let d = self.dofs_of(|p| {
                    let phi = ScalarElement::Q2.value(a, p) * scale[c];
                    if c == 0 {
                        [phi, 0.0]
                    } else {
                        [0.0, phi]
                    }
                });
                for i in 0..BDM_DIM {
                    r[i][2 * a + c] = d[i];
                }
            }
        }
        r
    }
}

/// Reconstruction data for one cell shape: the interpolation matrix and the
/// reconstructed local Q2 basis tabulated at the cell quadrature points.
#[derive(Debug, Clone)]
pub struct LocalReconstruction {
    pub jacobian: [f64; 2],
    pub interp: [[f64; VEL_LOCAL]; BDM_DIM],
    /// `values[q][j]`: physical value of pi(phi_j) at quadrature point `q`.
    pub values: Vec<[[f64; 2]; VEL_LOCAL]>,
    /// `divergence[q][j]`: div pi(phi_j) at quadrature point `q`.
    pub divergence: Vec<[f64; VEL_LOCAL]>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionTable {
    element: Bdm2Element,
    quad: QuadratureRule,
    kinds: Vec<LocalReconstruction>,
    cell_kind: Vec<usize>,
}

pub fn build_reconstruction(
    mesh: &Mesh,
    dofs: &MixedDofMap,
    quad: &QuadratureRule,
) -> Result<ReconstructionTable> {
    debug_assert_eq!(dofs.n_press, 3 * mesh.n_cells());
    let element = Bdm2Element::new()?;
    let mut kinds: Vec<LocalReconstruction> = Vec::new();
    let mut cell_kind = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let g = mesh.cell_geometry(c)?;
        let k = match kinds.iter().position(|k| k.jacobian == g.jacobian) {
            Some(k) => k,
            None => {
                kinds.push(tabulate(&element, &g, quad));
                kinds.len() - 1
            }
        };
        cell_kind.push(k);
    }
    Ok(ReconstructionTable { element, quad: quad.clone(), kinds, cell_kind })
}

fn tabulate(element: &Bdm2Element, g: &CellGeometry, quad: &QuadratureRule) -> LocalReconstruction {
    let interp = element.q2_interpolation_matrix(g.jacobian);
    let [jx, jy] = g.jacobian;
    let det = jx * jy;
    let mut values = Vec::with_capacity(quad.len());
    let mut divergence = Vec::with_capacity(quad.len());
    for &p in &quad.points {
        let basis: Vec<[f64; 2]> = (0..BDM_DIM).map(|k| element.value(k, p)).collect();
        let divs: Vec<f64> = (0..BDM_DIM).map(|k| element.divergence(k, p)).collect();
        let mut v = [[0.0; 2]; VEL_LOCAL];
        let mut d = [0.0; VEL_LOCAL];
        for j in 0..VEL_LOCAL {
            for k in 0..BDM_DIM {
                let r = interp[k][j];
                v[j][0] += r * basis[k][0] / jy;
                v[j][1] += r * basis[k][1] / jx;
                d[j] += r * divs[k] / det;
            }
        }
        values.push(v);
        divergence.push(d);
    }
    LocalReconstruction { jacobian: g.jacobian, interp, values, divergence }
}

impl ReconstructionTable {
    pub fn element(&self) -> &Bdm2Element {
        &self.element
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn local(&self, cell: usize) -> &LocalReconstruction {
        &self.kinds[self.cell_kind[cell]]
    }

    /// BDM2 coefficients of pi(v) on `cell`.
    pub fn coefficients(&self, cell: usize, local_vel: &[f64; VEL_LOCAL]) -> [f64; BDM_DIM] {
        let r = &self.local(cell).interp;
        let mut c = [0.0; BDM_DIM];
        for k in 0..BDM_DIM {
            c[k] = (0..VEL_LOCAL).map(|j| r[k][j] * local_vel[j]).sum();
        }
        c
    }

    /// pi(v) at an arbitrary reference point of `cell`.
    pub fn eval_pi_at(&self, cell: usize, local_vel: &[f64; VEL_LOCAL], p: [f64; 2]) -> [f64; 2] {
        let [jx, jy] = self.local(cell).jacobian;
        let c = self.coefficients(cell, local_vel);
        let mut v = [0.0; 2];
        for (k, ck) in c.iter().enumerate() {
            let b = self.element.value(k, p);
            v[0] += ck * b[0] / jy;
            v[1] += ck * b[1] / jx;
        }
        v
    }

    /// div pi(v) at an arbitrary reference point of `cell`.
    pub fn eval_div_pi_at(&self, cell: usize, local_vel: &[f64; VEL_LOCAL], p: [f64; 2]) -> f64 {
        let [jx, jy] = self.local(cell).jacobian;
        let c = self.coefficients(cell, local_vel);
        c.iter().enumerate().map(|(k, ck)| ck * self.element.divergence(k, p)).sum::<f64>() / (jx * jy)
    }
}

/// pi(v) at the table's quadrature points of `cell`.
pub fn eval_pi(table: &ReconstructionTable, cell: usize, local_vel: &[f64; VEL_LOCAL]) -> Vec<[f64; 2]> {
    table
        .local(cell)
        .values
        .iter()
        .map(|row| {
            let mut v = [0.0; 2];
            for j in 0..VEL_LOCAL {
                v[0] += row[j][0] * local_vel[j];
                v[1] += row[j][1] * local_vel[j];
            }
            v
        })
        .collect()
}

/// div pi(v) at the table's quadrature points of `cell`.
pub fn eval_div_pi(table: &ReconstructionTable, cell: usize, local_vel: &[f64; VEL_LOCAL]) -> Vec<f64> {
    table
        .local(cell)
        .divergence
        .iter()
        .map(|row| (0..VEL_LOCAL).map(|j| row[j] * local_vel[j]).sum())
        .collect()
}
