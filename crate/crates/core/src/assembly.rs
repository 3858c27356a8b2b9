//! Weak-form assembly: viscous and divergence blocks, loads with and without
//! the reconstruction on the test functions, the convective, divergence and
//! rotational trilinear forms with their exact linearizations, and the
//! mass-type pairings used by the tracking functional.
//!
//! Sign convention of the state system (unknowns `u`, `p`, gauge `lambda`):
//!
//! ```text
//! nu A u + C(u) - B^T p         = F
//! -B u            + m lambda    = 0
//!        m^T p                  = 0
//! ```
//!
//! with `A = (grad phi_j, grad phi_i)`, `B = (div phi_j, psi_i)` and
//! `m_i = (1, psi_i)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::elements::{gauss_rule, QuadratureRule, ScalarElement};
use crate::error::{Error, Result};
use crate::mesh::{CellGeometry, Mesh};
use crate::reconstruction::{build_reconstruction, ReconstructionTable};
use crate::sparse::{CsrMatrix, Triplets};
use crate::spaces::{build_dof_map, MixedDofMap, PRESS_LOCAL, VEL_LOCAL};

/// Nonlinear term variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Form {
    Convective,
    Divergence,
    Rotational,
}

impl Form {
    pub const ALL: [Form; 3] = [Form::Convective, Form::Divergence, Form::Rotational];

    pub fn tag(self) -> &'static str {
        match self {
            Form::Convective => "conv",
            Form::Divergence => "div",
            Form::Rotational => "rot",
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" | "convective" => Ok(Form::Convective),
            "div" | "divergence" => Ok(Form::Divergence),
            "rot" | "rotational" => Ok(Form::Rotational),
            other => Err(Error::InvalidArgument(format!("unknown form tag '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormConfig {
    pub form: Form,
    pub robust: bool,
    pub nu: f64,
}

impl FormConfig {
    pub fn new(form: Form, robust: bool, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
        }
        Ok(FormConfig { form, robust, nu })
    }
}

/// Per-shape tabulation of Q2 and P1 on the cell quadrature rule.
#[derive(Debug, Clone)]
struct CellTables {
    jacobian: [f64; 2],
    /// quadrature weight times |det J|
    jxw: Vec<f64>,
    phi: Vec<[f64; 9]>,
    /// physical gradients
    dphi: Vec<[[f64; 2]; 9]>,
    psi: Vec<[f64; PRESS_LOCAL]>,
}

impl CellTables {
    fn new(g: &CellGeometry, quad: &QuadratureRule) -> Self {
        let [jx, jy] = g.jacobian;
        let det = g.det_jacobian();
        let mut t = CellTables {
            jacobian: g.jacobian,
            jxw: quad.weights.iter().map(|w| w * det).collect(),
            phi: Vec::with_capacity(quad.len()),
            dphi: Vec::with_capacity(quad.len()),
            psi: Vec::with_capacity(quad.len()),
        };
        for &p in &quad.points {
            let mut v = [0.0; 9];
            let mut d = [[0.0; 2]; 9];
            for a in 0..9 {
                v[a] = ScalarElement::Q2.value(a, p);
                let gr = ScalarElement::Q2.grad(a, p);
                d[a] = [gr[0] / jx, gr[1] / jy];
            }
            t.phi.push(v);
            t.dphi.push(d);
            t.psi.push([0, 1, 2].map(|m| ScalarElement::P1.value(m, p)));
        }
        t
    }
}

/// Local field data at one quadrature point.
#[derive(Debug, Clone, Copy, Default)]
struct PointField {
    val: [f64; 2],
    /// `grad[c][d] = d u_c / d x_d`
    grad: [[f64; 2]; 2],
    pi: [f64; 2],
}

impl PointField {
    fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }

    fn curl(&self) -> f64 {
        self.grad[1][0] - self.grad[0][1]
    }
}

/// The vector `a(u, w)` such that the trilinear form reads `c(u, w, v) = (a(u, w), T v)`
/// with `T v = pi(v)` in robust mode and `T v = v` otherwise.
#[inline]
fn transport(form: Form, robust: bool, u: &PointField, w: &PointField) -> [f64; 2] {
    match form {
        Form::Convective => [
            w.grad[0][0] * u.val[0] + w.grad[0][1] * u.val[1],
            w.grad[1][0] * u.val[0] + w.grad[1][1] * u.val[1],
        ],
        Form::Divergence => {
            let h = 0.5 * u.div();
            [
                w.grad[0][0] * u.val[0] + w.grad[0][1] * u.val[1] + h * w.val[0],
                w.grad[1][0] * u.val[0] + w.grad[1][1] * u.val[1] + h * w.val[1],
            ]
        }
        Form::Rotational => {
            let om = u.curl();
            let v = if robust { w.pi } else { w.val };
            [-om * v[1], om * v[0]]
        }
    }
}

/// Mesh, DoF numbering, quadrature and reconstruction bundled for assembly.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: MixedDofMap,
    pub quad: QuadratureRule,
    pub recon: ReconstructionTable,
    kinds: Vec<CellTables>,
    cell_kind: Vec<usize>,
    geometry: Vec<CellGeometry>,
    /// Compute cell contributions on the rayon pool. Results are scattered in
    /// cell order either way, so both modes give identical sums.
    pub parallel: bool,
}

/// Default quadrature: 4 points per axis, exact for all trilinear integrands here.
pub const DEFAULT_QUAD_POINTS: usize = 4;

impl Discretization {
    pub fn new(mesh: Mesh, quad: QuadratureRule) -> Result<Self> {
        let dofs = build_dof_map(&mesh);
        let recon = build_reconstruction(&mesh, &dofs, &quad)?;
        let mut kinds: Vec<CellTables> = Vec::new();
        let mut cell_kind = Vec::with_capacity(mesh.n_cells());
        let mut geometry = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let g = mesh.cell_geometry(c)?;
            let k = match kinds.iter().position(|k| k.jacobian == g.jacobian) {
                Some(k) => k,
                None => {
                    kinds.push(CellTables::new(&g, &quad));
                    kinds.len() - 1
                }
            };
            cell_kind.push(k);
            geometry.push(g);
        }
        Ok(Discretization { mesh, dofs, quad, recon, kinds, cell_kind, geometry, parallel: true })
    }

    /// `[-1,1]^2` with `n` cells per axis and the default quadrature.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(Mesh::unit_square(n)?, gauss_rule(DEFAULT_QUAD_POINTS)?)
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    fn tables(&self, cell: usize) -> &CellTables {
        &self.kinds[self.cell_kind[cell]]
    }

    /// Physical coordinates of the quadrature points of `cell`.
    pub fn quadrature_points(&self, cell: usize) -> Vec<[f64; 2]> {
        let g = &self.geometry[cell];
        self.quad.points.iter().map(|&p| g.to_physical(p)).collect()
    }

    /// Quadrature weights times the Jacobian determinant on `cell`.
    pub fn jxw(&self, cell: usize) -> &[f64] {
        &self.tables(cell).jxw
    }

    fn point_field(&self, cell: usize, q: usize, u: &[f64; VEL_LOCAL]) -> PointField {
        let t = self.tables(cell);
        let r = &self.recon.local(cell).values[q];
        let mut f = PointField::default();
        for a in 0..9 {
            let (phi, dphi) = (t.phi[q][a], t.dphi[q][a]);
            for c in 0..2 {
                let uc = u[2 * a + c];
                f.val[c] += phi * uc;
                f.grad[c][0] += dphi[0] * uc;
                f.grad[c][1] += dphi[1] * uc;
            }
        }
        for j in 0..VEL_LOCAL {
            f.pi[0] += r[j][0] * u[j];
            f.pi[1] += r[j][1] * u[j];
        }
        f
    }

    fn basis_field(&self, cell: usize, q: usize, j: usize) -> PointField {
        let t = self.tables(cell);
        let (a, c) = (j / 2, j % 2);
        let mut f = PointField::default();
        f.val[c] = t.phi[q][a];
        f.grad[c] = t.dphi[q][a];
        f.pi = self.recon.local(cell).values[q][j];
        f
    }

    /// Test function values `T phi_i` at quadrature point `q`.
    fn test_values(&self, cell: usize, q: usize, robust: bool) -> [[f64; 2]; VEL_LOCAL] {
        if robust {
            self.recon.local(cell).values[q]
        } else {
            let t = self.tables(cell);
            let mut out = [[0.0; 2]; VEL_LOCAL];
            for a in 0..9 {
                out[2 * a][0] = t.phi[q][a];
                out[2 * a + 1][1] = t.phi[q][a];
            }
            out
        }
    }

    // ---- cell kernels -------------------------------------------------

    /// Local `(grad phi_j, grad phi_i)`, `(div phi_j, psi_m)` and `(1, psi_m)`.
    pub fn local_stokes(
        &self,
        cell: usize,
    ) -> ([[f64; VEL_LOCAL]; VEL_LOCAL], [[f64; VEL_LOCAL]; PRESS_LOCAL], [f64; PRESS_LOCAL]) {
        let t = self.tables(cell);
        let mut a = [[0.0; VEL_LOCAL]; VEL_LOCAL];
        let mut b = [[0.0; VEL_LOCAL]; PRESS_LOCAL];
        let mut m = [0.0; PRESS_LOCAL];
        for q in 0..self.quad.len() {
            let w = t.jxw[q];
            for i in 0..9 {
                let gi = t.dphi[q][i];
                for j in 0..9 {
                    let gj = t.dphi[q][j];
                    let v = w * (gi[0] * gj[0] + gi[1] * gj[1]);
                    a[2 * i][2 * j] += v;
                    a[2 * i + 1][2 * j + 1] += v;
                }
            }
            for k in 0..PRESS_LOCAL {
                let wp = w * t.psi[q][k];
                m[k] += wp;
                for j in 0..9 {
                    b[k][2 * j] += wp * t.dphi[q][j][0];
                    b[k][2 * j + 1] += wp * t.dphi[q][j][1];
                }
            }
        }
        (a, b, m)
    }

    /// Local `(f, T phi_i)`.
    pub fn local_load(&self, cell: usize, f: &dyn Fn([f64; 2]) -> [f64; 2], robust: bool) -> [f64; VEL_LOCAL] {
        let pts = self.quadrature_points(cell);
        let jxw = &self.tables(cell).jxw;
        let mut out = [0.0; VEL_LOCAL];
        for q in 0..self.quad.len() {
            let fv = f(pts[q]);
            let tv = self.test_values(cell, q, robust);
            for i in 0..VEL_LOCAL {
                out[i] += jxw[q] * (fv[0] * tv[i][0] + fv[1] * tv[i][1]);
            }
        }
        out
    }

    /// Local `(u_h, T phi_i)` for a discrete velocity, i.e. a row block of the
    /// (robust) mass pairing.
    pub fn local_mass_pairing(&self, cell: usize, robust: bool) -> [[f64; VEL_LOCAL]; VEL_LOCAL] {
        let jxw = &self.tables(cell).jxw;
        let mut out = [[0.0; VEL_LOCAL]; VEL_LOCAL];
        for q in 0..self.quad.len() {
            let tv = self.test_values(cell, q, robust);
            let t = self.tables(cell);
            for i in 0..VEL_LOCAL {
                for a in 0..9 {
                    let phi = t.phi[q][a];
                    out[i][2 * a] += jxw[q] * tv[i][0] * phi;
                    out[i][2 * a + 1] += jxw[q] * tv[i][1] * phi;
                }
            }
        }
        out
    }

    /// `c(u, w, v)` (or its robust counterpart) restricted to one cell.
    pub fn local_trilinear(
        &self,
        form: Form,
        robust: bool,
        cell: usize,
        u: &[f64; VEL_LOCAL],
        w: &[f64; VEL_LOCAL],
        v: &[f64; VEL_LOCAL],
    ) -> f64 {
        let jxw = &self.tables(cell).jxw;
        let mut s = 0.0;
        for q in 0..self.quad.len() {
            let (fu, fw, fv) =
                (self.point_field(cell, q, u), self.point_field(cell, q, w), self.point_field(cell, q, v));
            let a = transport(form, robust, &fu, &fw);
            let t = if robust { fv.pi } else { fv.val };
            s += jxw[q] * (a[0] * t[0] + a[1] * t[1]);
        }
        s
    }

    /// Local residual entries `c(u, u, phi_i)`.
    pub fn local_convection(&self, cfg: &FormConfig, cell: usize, u: &[f64; VEL_LOCAL]) -> [f64; VEL_LOCAL] {
        let jxw = &self.tables(cell).jxw;
        let mut out = [0.0; VEL_LOCAL];
        for q in 0..self.quad.len() {
            let fu = self.point_field(cell, q, u);
            let a = transport(cfg.form, cfg.robust, &fu, &fu);
            let tv = self.test_values(cell, q, cfg.robust);
            for i in 0..VEL_LOCAL {
                out[i] += jxw[q] * (a[0] * tv[i][0] + a[1] * tv[i][1]);
            }
        }
        out
    }

    /// Local Jacobian `J[i][j] = c(phi_j, u, phi_i) + c(u, phi_j, phi_i)`.
    pub fn local_convection_jacobian(
        &self,
        cfg: &FormConfig,
        cell: usize,
        u: &[f64; VEL_LOCAL],
    ) -> [[f64; VEL_LOCAL]; VEL_LOCAL] {
        let jxw = &self.tables(cell).jxw;
        let mut out = [[0.0; VEL_LOCAL]; VEL_LOCAL];
        for q in 0..self.quad.len() {
            let fu = self.point_field(cell, q, u);
            let tv = self.test_values(cell, q, cfg.robust);
            for j in 0..VEL_LOCAL {
                let fj = self.basis_field(cell, q, j);
                let a1 = transport(cfg.form, cfg.robust, &fj, &fu);
                let a2 = transport(cfg.form, cfg.robust, &fu, &fj);
                let a = [a1[0] + a2[0], a1[1] + a2[1]];
                for i in 0..VEL_LOCAL {
                    out[i][j] += jxw[q] * (a[0] * tv[i][0] + a[1] * tv[i][1]);
                }
            }
        }
        out
    }

    /// Local `(T u_h - u_d, T phi_i)`.
    pub fn local_tracking(
        &self,
        cell: usize,
        u: &[f64; VEL_LOCAL],
        ud: &dyn Fn([f64; 2]) -> [f64; 2],
        robust: bool,
    ) -> [f64; VEL_LOCAL] {
        self.local_tracking_mixed(cell, u, ud, robust, robust)
    }

    /// Local `(S u_h - u_d, T phi_i)` where `S` and `T` are independently the
    /// identity or the reconstruction.
    pub fn local_tracking_mixed(
        &self,
        cell: usize,
        u: &[f64; VEL_LOCAL],
        ud: &dyn Fn([f64; 2]) -> [f64; 2],
        field_pi: bool,
        test_pi: bool,
    ) -> [f64; VEL_LOCAL] {
        let pts = self.quadrature_points(cell);
        let jxw = &self.tables(cell).jxw;
        let mut out = [0.0; VEL_LOCAL];
        for q in 0..self.quad.len() {
            let fu = self.point_field(cell, q, u);
            let d = ud(pts[q]);
            let uv = if field_pi { fu.pi } else { fu.val };
            let r = [uv[0] - d[0], uv[1] - d[1]];
            let tv = self.test_values(cell, q, test_pi);
            for i in 0..VEL_LOCAL {
                out[i] += jxw[q] * (r[0] * tv[i][0] + r[1] * tv[i][1]);
            }
        }
        out
    }

    /// Local `|| T u_h - u_d ||^2`.
    pub fn local_tracking_misfit(
        &self,
        cell: usize,
        u: &[f64; VEL_LOCAL],
        ud: &dyn Fn([f64; 2]) -> [f64; 2],
        robust: bool,
    ) -> f64 {
        let pts = self.quadrature_points(cell);
        let jxw = &self.tables(cell).jxw;
        (0..self.quad.len())
            .map(|q| {
                let fu = self.point_field(cell, q, u);
                let d = ud(pts[q]);
                let uv = if robust { fu.pi } else { fu.val };
                jxw[q] * ((uv[0] - d[0]).powi(2) + (uv[1] - d[1]).powi(2))
            })
            .sum()
    }

    /// Scalar Q2 basis values and physical gradients at quadrature point `q`.
    pub fn scalar_basis(&self, cell: usize, q: usize) -> (&[f64; 9], &[[f64; 2]; 9]) {
        let t = self.tables(cell);
        (&t.phi[q], &t.dphi[q])
    }

    /// Velocity value and physical gradient of a local Q2 field at quadrature point `q`.
    pub fn local_value_and_gradient(
        &self,
        cell: usize,
        q: usize,
        u: &[f64; VEL_LOCAL],
    ) -> ([f64; 2], [[f64; 2]; 2]) {
        let f = self.point_field(cell, q, u);
        (f.val, f.grad)
    }

    // ---- global assembly ---------------------------------------------

    fn map_cells<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        if self.parallel {
            (0..self.n_cells()).into_par_iter().map(f).collect()
        } else {
            (0..self.n_cells()).map(f).collect()
        }
    }

    fn scatter_vector(&self, locals: Vec<[f64; VEL_LOCAL]>) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs.n_vel];
        for (c, loc) in locals.iter().enumerate() {
            for (i, &g) in self.dofs.cell_velocity_dofs(c).iter().enumerate() {
                out[g] += loc[i];
            }
        }
        out
    }

    fn scatter_matrix(&self, locals: Vec<[[f64; VEL_LOCAL]; VEL_LOCAL]>) -> Triplets {
        let n = self.dofs.n_vel;
        let mut t = Triplets::new(n, n);
        t.entries.reserve(locals.len() * VEL_LOCAL * VEL_LOCAL);
        for (c, loc) in locals.iter().enumerate() {
            let map = self.dofs.cell_velocity_dofs(c);
            for i in 0..VEL_LOCAL {
                for j in 0..VEL_LOCAL {
                    if loc[i][j] != 0.0 {
                        t.push(map[i], map[j], loc[i][j]);
                    }
                }
            }
        }
        t
    }

    /// Viscous block (without the factor nu), divergence block and pressure mean vector.
    pub fn assemble_stokes(&self) -> StokesBlocks {
        let locals = self.map_cells(|c| self.local_stokes(c));
        let (nv, np) = (self.dofs.n_vel, self.dofs.n_press);
        let mut a = Triplets::new(nv, nv);
        let mut b = Triplets::new(np, nv);
        let mut mean = vec![0.0; np];
        for (c, (la, lb, lm)) in locals.iter().enumerate() {
            let vm = self.dofs.cell_velocity_dofs(c);
            let pm = self.dofs.cell_pressure_dofs(c);
            for i in 0..VEL_LOCAL {
                for j in 0..VEL_LOCAL {
                    if la[i][j] != 0.0 {
                        a.push(vm[i], vm[j], la[i][j]);
                    }
                }
            }
            for k in 0..PRESS_LOCAL {
                mean[pm[k]] += lm[k];
                for j in 0..VEL_LOCAL {
                    if lb[k][j] != 0.0 {
                        b.push(pm[k], vm[j], lb[k][j]);
                    }
                }
            }
        }
        StokesBlocks { a_csr: a.to_csr(), b_csr: b.to_csr(), a, b, mean }
    }

    /// `(f, phi_i)`, or `(f, pi(phi_i))` when `robust`.
    pub fn assemble_rhs(&self, f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync), robust: bool) -> Vec<f64> {
        self.scatter_vector(self.map_cells(|c| self.local_load(c, f, robust)))
    }

    /// Pairing matrix `E[i][j] = (phi_j, T phi_i)`; the plain mass matrix when not robust.
    pub fn assemble_mass_pairing(&self, robust: bool) -> Triplets {
        self.scatter_matrix(self.map_cells(|c| self.local_mass_pairing(c, robust)))
    }

    pub fn convection_residual(&self, cfg: &FormConfig, u: &[f64]) -> Vec<f64> {
        self.scatter_vector(self.map_cells(|c| {
            self.local_convection(cfg, c, &self.dofs.gather_velocity(u, c))
        }))
    }

    pub fn convection_jacobian(&self, cfg: &FormConfig, u: &[f64]) -> Triplets {
        self.scatter_matrix(self.map_cells(|c| {
            self.local_convection_jacobian(cfg, c, &self.dofs.gather_velocity(u, c))
        }))
    }

    /// `c(u, w, v)` summed over all cells.
    pub fn trilinear(&self, form: Form, robust: bool, u: &[f64], w: &[f64], v: &[f64]) -> f64 {
        self.map_cells(|c| {
            let g = |x: &[f64]| self.dofs.gather_velocity(x, c);
            self.local_trilinear(form, robust, c, &g(u), &g(w), &g(v))
        })
        .iter()
        .sum()
    }

    /// Adjoint right-hand side `(T u_h - u_d, T phi_i)`.
    pub fn assemble_tracking_rhs(
        &self,
        u: &[f64],
        ud: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
        robust: bool,
    ) -> Vec<f64> {
        self.scatter_vector(self.map_cells(|c| {
            self.local_tracking(c, &self.dofs.gather_velocity(u, c), ud, robust)
        }))
    }

    /// `(S u_h - u_d, T phi_i)` with independent choices of `S` and `T`.
    pub fn assemble_tracking_rhs_mixed(
        &self,
        u: &[f64],
        ud: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
        field_pi: bool,
        test_pi: bool,
    ) -> Vec<f64> {
        self.scatter_vector(self.map_cells(|c| {
            self.local_tracking_mixed(c, &self.dofs.gather_velocity(u, c), ud, field_pi, test_pi)
        }))
    }

    /// `(T a, T b)` for two discrete velocities.
    pub fn l2_pairing(&self, a: &[f64], b: &[f64], robust: bool) -> f64 {
        self.map_cells(|c| {
            let (la, lb) = (self.dofs.gather_velocity(a, c), self.dofs.gather_velocity(b, c));
            let jxw = &self.tables(c).jxw;
            (0..self.quad.len())
                .map(|q| {
                    let (fa, fb) = (self.point_field(c, q, &la), self.point_field(c, q, &lb));
                    let (va, vb) = if robust { (fa.pi, fb.pi) } else { (fa.val, fb.val) };
                    jxw[q] * (va[0] * vb[0] + va[1] * vb[1])
                })
                .sum::<f64>()
        })
        .iter()
        .sum()
    }

    /// `|| T u_h - u_d ||^2_{L2}`.
    pub fn tracking_misfit(&self, u: &[f64], ud: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync), robust: bool) -> f64 {
        self.map_cells(|c| self.local_tracking_misfit(c, &self.dofs.gather_velocity(u, c), ud, robust))
            .iter()
            .sum()
    }
}

/// Constant blocks of the state system.
#[derive(Debug, Clone)]
pub struct StokesBlocks {
    /// `(grad phi_j, grad phi_i)`, viscosity not applied.
    pub a: Triplets,
    /// `(div phi_j, psi_i)`, pressure rows by velocity columns.
    pub b: Triplets,
    pub mean: Vec<f64>,
    pub a_csr: CsrMatrix,
    pub b_csr: CsrMatrix,
}

impl StokesBlocks {
    /// Bordered saddle matrix for a given velocity block (already scaled).
    pub fn saddle_matrix(&self, velocity_block: &Triplets) -> Triplets {
        let nv = self.a.nrows;
        let np = self.b.nrows;
        let n = nv + np + 1;
        let mut k = Triplets::new(n, n);
        k.entries.reserve(velocity_block.entries.len() + 2 * self.b.entries.len() + 2 * np);
        k.extend_block(velocity_block, 0, 0, 1.0);
        k.extend_block_transposed(&self.b, 0, nv, -1.0);
        k.extend_block(&self.b, nv, 0, -1.0);
        for (i, &mi) in self.mean.iter().enumerate() {
            k.push(nv + i, n - 1, mi);
            k.push(n - 1, nv + i, mi);
        }
        k
    }
}
