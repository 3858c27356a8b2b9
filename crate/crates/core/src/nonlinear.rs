//! Newton's method for the discrete stationary Navier-Stokes equations.

use crate::assembly::{Discretization, FormConfig, StokesBlocks};
use crate::error::{Error, Result};
use crate::linsolve::{solve_saddle, SaddleSystem};
use crate::sparse::{norm2, Triplets};
use crate::spaces::ConstraintSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { atol: 1e-12, rtol: 1e-12, max_iter: 30, max_backtracks: 8, linear_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norm after each accepted step, starting with the initial guess.
    pub residual_history: Vec<f64>,
    /// Number of step halvings per iteration.
    pub backtracks: Vec<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct StateSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    pub report: NewtonReport,
}

impl StateSolution {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.report.converged {
            Ok(self)
        } else {
            Err(Error::NewtonDiverged {
                iterations: self.report.iterations,
                residual: self.report.residual_history.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Assembled data shared by every solve on one discretization and form.
#[derive(Debug, Clone)]
pub struct StateOperator<'a> {
    pub disc: &'a Discretization,
    pub blocks: &'a StokesBlocks,
    pub cfg: FormConfig,
}

impl<'a> StateOperator<'a> {
    pub fn new(disc: &'a Discretization, blocks: &'a StokesBlocks, cfg: FormConfig) -> Self {
        StateOperator { disc, blocks, cfg }
    }

    fn n_vel(&self) -> usize {
        self.disc.dofs.n_vel
    }

    fn n_press(&self) -> usize {
        self.disc.dofs.n_press
    }

    /// Full residual `[nu A u + C(u) - B^T p - F; -B u + m lambda; m^T p]` with
    /// the constrained velocity rows zeroed.
    pub fn residual(
        &self,
        load: &[f64],
        u: &[f64],
        p: &[f64],
        lambda: f64,
        constraints: &ConstraintSet,
        with_convection: bool,
    ) -> Vec<f64> {
        let (nv, np) = (self.n_vel(), self.n_press());
        let au = self.blocks.a_csr.mul_vec(u);
        let btp = self.blocks.b_csr.mul_vec_transposed(p);
        let conv = if with_convection {
            self.disc.convection_residual(&self.cfg, u)
        } else {
            vec![0.0; nv]
        };
        let mut r = Vec::with_capacity(nv + np + 1);
        for i in 0..nv {
            r.push(self.cfg.nu * au[i] + conv[i] - btp[i] - load[i]);
        }
        let bu = self.blocks.b_csr.mul_vec(u);
        for i in 0..np {
            r.push(-bu[i] + self.blocks.mean[i] * lambda);
        }
        r.push(crate::sparse::dot(&self.blocks.mean, p));
        constraints.zero_out(&mut r[..nv]);
        r
    }

    /// Velocity block `nu A + J(u)` of the Newton matrix.
    pub fn velocity_jacobian(&self, u: &[f64], with_convection: bool) -> Triplets {
        let mut block = Triplets::new(self.n_vel(), self.n_vel());
        block.extend_block(&self.blocks.a, 0, 0, self.cfg.nu);
        if with_convection {
            let j = self.disc.convection_jacobian(&self.cfg, u);
            block.extend_block(&j, 0, 0, 1.0);
        }
        block
    }

    pub fn jacobian(&self, u: &[f64], with_convection: bool) -> Triplets {
        self.blocks.saddle_matrix(&self.velocity_jacobian(u, with_convection))
    }

    /// Stokes problem with the same load and boundary data (convection dropped).
    pub fn solve_stokes(&self, load: &[f64], constraints: &ConstraintSet, tol: f64) -> Result<StateSolution> {
        let (nv, np) = (self.n_vel(), self.n_press());
        let mut rhs = load.to_vec();
        rhs.resize(nv + np + 1, 0.0);
        let system = SaddleSystem { n_vel: nv, n_press: np, matrix: self.jacobian(&vec![0.0; nv], false), rhs };
        let sol = solve_saddle(&system, constraints, tol)?;
        Ok(StateSolution {
            velocity: sol.velocity,
            pressure: sol.pressure,
            multiplier: sol.multiplier,
            report: NewtonReport { iterations: 1, converged: sol.report.converged, ..Default::default() },
        })
    }

    /// Newton iteration with backtracking on the residual norm.
    ///
    /// Without `init` the iteration starts from the Stokes solution for the
    /// same data. A supplied initial velocity is projected onto the constraints.
    pub fn solve(
        &self,
        load: &[f64],
        constraints: &ConstraintSet,
        init: Option<(&[f64], &[f64], f64)>,
        opts: &NewtonOptions,
    ) -> Result<StateSolution> {
        let (nv, np) = (self.n_vel(), self.n_press());
        let (mut u, mut p, mut lambda) = match init {
            Some((u0, p0, l0)) => {
                let mut u = u0.to_vec();
                constraints.apply(&mut u);
                (u, p0.to_vec(), l0)
            }
            None => {
                let s = self.solve_stokes(load, constraints, opts.linear_tol)?;
                (s.velocity, s.pressure, s.multiplier)
            }
        };
        let homogeneous = constraints.homogeneous();
        let mut r = self.residual(load, &u, &p, lambda, constraints, true);
        let mut rnorm = norm2(&r);
        let tol = opts.atol.max(opts.rtol * rnorm);
        let mut report = NewtonReport { residual_history: vec![rnorm], ..Default::default() };

        while rnorm > tol {
            if report.iterations >= opts.max_iter {
                return Ok(StateSolution { velocity: u, pressure: p, multiplier: lambda, report });
            }
            let system = SaddleSystem {
                n_vel: nv,
                n_press: np,
                matrix: self.jacobian(&u, true),
                rhs: r.iter().map(|v| -v).collect(),
            };
            let step = solve_saddle(&system, &homogeneous, opts.linear_tol)?;
            let mut alpha = 1.0;
            let mut halvings = 0;
            let accepted = loop {
                let ut: Vec<f64> = u.iter().zip(&step.velocity).map(|(a, d)| a + alpha * d).collect();
                let pt: Vec<f64> = p.iter().zip(&step.pressure).map(|(a, d)| a + alpha * d).collect();
                let lt = lambda + alpha * step.multiplier;
                let rt = self.residual(load, &ut, &pt, lt, constraints, true);
                let nt = norm2(&rt);
                if nt < rnorm {
                    break Some((ut, pt, lt, rt, nt));
                }
                if halvings == opts.max_backtracks {
                    break None;
                }
                alpha *= 0.5;
                halvings += 1;
            };
            report.iterations += 1;
            report.backtracks.push(halvings);
            match accepted {
                Some((ut, pt, lt, rt, nt)) => {
                    u = ut;
                    p = pt;
                    lambda = lt;
                    r = rt;
                    rnorm = nt;
                    report.residual_history.push(rnorm);
                }
                None => {
                    // No decrease along a full Newton direction only happens at
                    // the round-off floor or far from a solution.
                    let unorm = norm2(&u).max(1.0);
                    if norm2(&step.velocity) <= 1e-13 * unorm {
                        report.converged = true;
                        return Ok(StateSolution { velocity: u, pressure: p, multiplier: lambda, report });
                    }
                    return Err(Error::LineSearch { iteration: report.iterations, residual: rnorm });
                }
            }
        }
        report.converged = true;
        debug_assert!(r.len() == nv + np + 1);
        Ok(StateSolution { velocity: u, pressure: p, multiplier: lambda, report })
    }
}

/// `|| grad v_h ||_{L2}` for a discrete velocity, from the stiffness block.
pub fn h1_seminorm(blocks: &StokesBlocks, v: &[f64]) -> f64 {
    blocks.a_csr.quadratic_form(v).max(0.0).sqrt()
}

/// Solves with forcing `f` and with `f + grad(potential)` and returns the H1
/// seminorm of the velocity difference.
pub fn velocity_invariance_check(
    op: &StateOperator<'_>,
    f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
    grad_potential: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
    constraints: &ConstraintSet,
    opts: &NewtonOptions,
) -> Result<f64> {
    let robust = op.cfg.robust;
    let load_a = op.disc.assemble_rhs(f, robust);
    let load_b = op.disc.assemble_rhs(
        &|x| {
            let (a, b) = (f(x), grad_potential(x));
            [a[0] + b[0], a[1] + b[1]]
        },
        robust,
    );
    let a = op.solve(&load_a, constraints, None, opts)?.ensure_converged()?;
    let b = op.solve(&load_b, constraints, None, opts)?.ensure_converged()?;
    let diff: Vec<f64> = a.velocity.iter().zip(&b.velocity).map(|(x, y)| x - y).collect();
    Ok(h1_seminorm(op.blocks, &diff))
}
