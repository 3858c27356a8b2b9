//! Independent reference computations for the cell kernels.
//!
//! Everything here works in physical coordinates with its own quadrature
//! (Golub-Welsch, 8 points per axis), its own Lagrange basis and its own
//! BDM2 interpolation built from scaled monomials.

#![allow(dead_code)]

use gradrobust::{Discretization, Form};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const NLOC: usize = 18;
pub type Local = [f64; NLOC];

/// Gauss-Legendre nodes and weights on [-1, 1] from the Jacobi matrix eigenproblem.
pub fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn lagrange(nodes: [f64; 3], k: usize, x: f64) -> (f64, f64) {
    let others: Vec<usize> = (0..3).filter(|&m| m != k).collect();
    let (a, b) = (nodes[others[0]], nodes[others[1]]);
    let den = (nodes[k] - a) * (nodes[k] - b);
    (((x - a) * (x - b)) / den, ((x - a) + (x - b)) / den)
}

/// Oracle data for one rectangular cell.
pub struct OracleCell {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub center: [f64; 2],
    pub half: [f64; 2],
    /// `pi_coef[j]`: coefficients of pi(phi_j) in the monomial BDM2 basis.
    pub pi_coef: Vec<[f64; 14]>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl OracleCell {
    pub fn new(disc: &Discretization, cell: usize) -> Self {
        let g = disc.geometry(cell);
        let ([cx, cy], [hx, hy]) = (g.center, g.jacobian);
        let (gx, gw) = golub_welsch(8);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (j, &t) in gx.iter().enumerate() {
            for (i, &s) in gx.iter().enumerate() {
                points.push([cx + hx * s, cy + hy * t]);
                weights.push(gw[i] * gw[j] * hx * hy);
            }
        }
        let mut c = OracleCell {
            x: [cx - hx, cx, cx + hx],
            y: [cy - hy, cy, cy + hy],
            center: [cx, cy],
            half: [hx, hy],
            pi_coef: Vec::new(),
            points,
            weights,
        };
        let mut gram = DMatrix::<f64>::zeros(14, 14);
        for k in 0..14 {
            let d = c.bdm_dofs(&|p| c.bdm_basis(k, p).0);
            for i in 0..14 {
                gram[(i, k)] = d[i];
            }
        }
        let lu = gram.lu();
        for j in 0..NLOC {
            let d = c.bdm_dofs(&|p| c.basis(j, p).0);
            let sol = lu.solve(&DVector::from_row_slice(&d)).expect("BDM2 Gram matrix is invertible");
            let mut out = [0.0; 14];
            out.copy_from_slice(sol.as_slice());
            c.pi_coef.push(out);
        }
        c
    }

    /// Vector Q2 basis function `j = 2 a + comp`: value and gradient rows.
    pub fn basis(&self, j: usize, p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (a, comp) = (j / 2, j % 2);
        let (lx, dlx) = lagrange(self.x, a % 3, p[0]);
        let (ly, dly) = lagrange(self.y, a / 3, p[1]);
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        v[comp] = lx * ly;
        g[comp] = [dlx * ly, lx * dly];
        (v, g)
    }

    /// Monomial BDM2 basis in scaled coordinates: value and divergence.
    fn bdm_basis(&self, k: usize, p: [f64; 2]) -> ([f64; 2], f64) {
        let [hx, hy] = self.half;
        let s = (p[0] - self.center[0]) / hx;
        let t = (p[1] - self.center[1]) / hy;
        let mono = [1.0, s, t, s * s, s * t, t * t];
        let dmono_ds = [0.0, 1.0, 0.0, 2.0 * s, t, 0.0];
        let dmono_dt = [0.0, 0.0, 1.0, 0.0, s, 2.0 * t];
        match k {
            0..=5 => ([mono[k], 0.0], dmono_ds[k] / hx),
            6..=11 => ([0.0, mono[k - 6]], dmono_dt[k - 6] / hy),
            // physical curls of s^3 t and s t^3 (divergence free)
            12 => ([s.powi(3) / hy, -3.0 * s * s * t / hx], 0.0),
            _ => ([3.0 * s * t * t / hy, -t.powi(3) / hx], 0.0),
        }
    }

    /// Edge normal moments against Legendre polynomials and the two interior means.
    fn bdm_dofs(&self, v: &dyn Fn([f64; 2]) -> [f64; 2]) -> [f64; 14] {
        let (gx, gw) = golub_welsch(8);
        let leg = |s: f64| [1.0, s, 0.5 * (3.0 * s * s - 1.0)];
        let [hx, hy] = self.half;
        let mut out = [0.0; 14];
        for (&s, &w) in gx.iter().zip(&gw) {
            let l = leg(s);
            let px = self.center[0] + hx * s;
            let py = self.center[1] + hy * s;
            let edges = [
                (v([px, self.y[0]]), [0.0, -1.0], hx),
                (v([self.x[2], py]), [1.0, 0.0], hy),
                (v([px, self.y[2]]), [0.0, 1.0], hx),
                (v([self.x[0], py]), [-1.0, 0.0], hy),
            ];
            for (e, (val, n, len)) in edges.iter().enumerate() {
                let flux = val[0] * n[0] + val[1] * n[1];
                for k in 0..3 {
                    out[3 * e + k] += w * len * flux * l[k];
                }
            }
        }
        for (p, w) in self.points.iter().zip(&self.weights) {
            let val = v(*p);
            out[12] += w * val[0];
            out[13] += w * val[1];
        }
        out
    }

    pub fn pi_basis(&self, j: usize, p: [f64; 2]) -> ([f64; 2], f64) {
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for k in 0..14 {
            let (b, db) = self.bdm_basis(k, p);
            v[0] += self.pi_coef[j][k] * b[0];
            v[1] += self.pi_coef[j][k] * b[1];
            d += self.pi_coef[j][k] * db;
        }
        (v, d)
    }

    /// Value, gradient and reconstruction of a local field.
    pub fn field(&self, u: &Local, p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2], [f64; 2]) {
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        let mut pi = [0.0; 2];
        for j in 0..NLOC {
            if u[j] == 0.0 {
                continue;
            }
            let (bv, bg) = self.basis(j, p);
            let (pv, _) = self.pi_basis(j, p);
            for c in 0..2 {
                v[c] += u[j] * bv[c];
                pi[c] += u[j] * pv[c];
                for d in 0..2 {
                    g[c][d] += u[j] * bg[c][d];
                }
            }
        }
        (v, g, pi)
    }

    pub fn pressure_basis(&self, m: usize, p: [f64; 2]) -> f64 {
        match m {
            0 => 1.0,
            1 => (p[0] - self.center[0]) / self.half[0],
            _ => (p[1] - self.center[1]) / self.half[1],
        }
    }

    fn quad(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, w)| w * f(p)).sum()
    }

    pub fn stokes(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut a = vec![vec![0.0; NLOC]; NLOC];
        let mut b = vec![vec![0.0; NLOC]; 3];
        for i in 0..NLOC {
            for j in 0..NLOC {
                a[i][j] = self.quad(|p| {
                    let (gi, gj) = (self.basis(i, p).1, self.basis(j, p).1);
                    (0..2).map(|c| gi[c][0] * gj[c][0] + gi[c][1] * gj[c][1]).sum()
                });
            }
        }
        for m in 0..3 {
            for j in 0..NLOC {
                b[m][j] = self.quad(|p| {
                    let g = self.basis(j, p).1;
                    (g[0][0] + g[1][1]) * self.pressure_basis(m, p)
                });
            }
        }
        let mean = (0..3).map(|m| self.quad(|p| self.pressure_basis(m, p))).collect();
        (a, b, mean)
    }

    fn test(&self, i: usize, p: [f64; 2], robust: bool) -> [f64; 2] {
        if robust {
            self.pi_basis(i, p).0
        } else {
            self.basis(i, p).0
        }
    }

    pub fn load(&self, f: &dyn Fn([f64; 2]) -> [f64; 2], robust: bool) -> Vec<f64> {
        (0..NLOC)
            .map(|i| {
                self.quad(|p| {
                    let (fv, t) = (f(p), self.test(i, p, robust));
                    fv[0] * t[0] + fv[1] * t[1]
                })
            })
            .collect()
    }

    pub fn mass_pairing(&self, robust: bool) -> Vec<Vec<f64>> {
        (0..NLOC)
            .map(|i| {
                (0..NLOC)
                    .map(|j| {
                        self.quad(|p| {
                            let (v, t) = (self.basis(j, p).0, self.test(i, p, robust));
                            v[0] * t[0] + v[1] * t[1]
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Integrand of `c(u, w, v)` at one point from explicit formulas.
    fn trilinear_at(&self, form: Form, robust: bool, u: &Local, w: &Local, v: &Local, p: [f64; 2]) -> f64 {
        let (uv, ug, _) = self.field(u, p);
        let (wv, wg, wpi) = self.field(w, p);
        let (vv, _, vpi) = self.field(v, p);
        let t = if robust { vpi } else { vv };
        let adv = [wg[0][0] * uv[0] + wg[0][1] * uv[1], wg[1][0] * uv[0] + wg[1][1] * uv[1]];
        match form {
            Form::Convective => adv[0] * t[0] + adv[1] * t[1],
            Form::Divergence => {
                let div = ug[0][0] + ug[1][1];
                adv[0] * t[0] + adv[1] * t[1] + 0.5 * div * (wv[0] * t[0] + wv[1] * t[1])
            }
            Form::Rotational => {
                let omega = ug[1][0] - ug[0][1];
                let s = if robust { wpi } else { wv };
                // (0, 0, omega) x (s_x, s_y, 0)
                -omega * s[1] * t[0] + omega * s[0] * t[1]
            }
        }
    }

    pub fn trilinear(&self, form: Form, robust: bool, u: &Local, w: &Local, v: &Local) -> f64 {
        self.quad(|p| self.trilinear_at(form, robust, u, w, v, p))
    }

    pub fn convection(&self, form: Form, robust: bool, u: &Local) -> Vec<f64> {
        (0..NLOC).map(|i| self.trilinear(form, robust, u, u, &unit(i))).collect()
    }

    pub fn convection_jacobian(&self, form: Form, robust: bool, u: &Local) -> Vec<Vec<f64>> {
        (0..NLOC)
            .map(|i| {
                (0..NLOC)
                    .map(|j| {
                        let (ei, ej) = (unit(i), unit(j));
                        self.trilinear(form, robust, &ej, u, &ei) + self.trilinear(form, robust, u, &ej, &ei)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn tracking(&self, u: &Local, ud: &dyn Fn([f64; 2]) -> [f64; 2], robust: bool) -> Vec<f64> {
        (0..NLOC)
            .map(|i| {
                self.quad(|p| {
                    let (v, _, pi) = self.field(u, p);
                    let s = if robust { pi } else { v };
                    let d = ud(p);
                    let t = self.test(i, p, robust);
                    (s[0] - d[0]) * t[0] + (s[1] - d[1]) * t[1]
                })
            })
            .collect()
    }

    pub fn misfit(&self, u: &Local, ud: &dyn Fn([f64; 2]) -> [f64; 2], robust: bool) -> f64 {
        self.quad(|p| {
            let (v, _, pi) = self.field(u, p);
            let s = if robust { pi } else { v };
            let d = ud(p);
            (s[0] - d[0]).powi(2) + (s[1] - d[1]).powi(2)
        })
    }
}

pub fn unit(i: usize) -> Local {
    let mut e = [0.0; NLOC];
    e[i] = 1.0;
    e
}

/// `max |a - b| / max |b|` over flattened entries.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
