//! Reduced-space solution of the tracking-type control problem
//!
//! ```text
//! min  1/2 || T u_h - u_d ||^2 + 1/2 || q_h ||^2   subject to the state equation with forcing f + q_h
//! ```
//!
//! where `T` is the reconstruction in the fully robust setting and the
//! identity otherwise. The control lives in the velocity space. Gradients
//! come from one adjoint solve with the transposed Newton matrix, and the
//! Riesz representative is taken in the control mass inner product.

use std::sync::Arc;

use crate::assembly::{Discretization, FormConfig, StokesBlocks};
use crate::error::{Error, Result};
use crate::linsolve::{solve_saddle, Factorization, LinearSolveReport, SaddleSystem};
use crate::nonlinear::{NewtonOptions, StateOperator, StateSolution};
use crate::sparse::{dot, CsrMatrix, Triplets};
use crate::spaces::{dirichlet_constraints, ConstraintSet};

pub type VectorField = dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync;

/// How forcing, tracking and gradient are paired with the test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Standard pairings everywhere.
    NonRobust,
    /// Reconstruction on the state load `(q + f, pi phi)` and in the cost;
    /// the optimality system is the exact derivative of the discrete Lagrangian.
    FullyRobust,
    /// Robust nonlinearity, plain load `(q + f, phi)`, tracking
    /// `(pi u - u_d, phi)` and gradient `q + z`, as the optimality system is
    /// often written. Not the exact gradient of the discrete cost.
    Literal,
}

impl Pairing {
    fn load_pi(self) -> bool {
        self == Pairing::FullyRobust
    }

    fn cost_pi(self) -> bool {
        self != Pairing::NonRobust
    }
}

#[derive(Clone)]
pub struct OcpConfig {
    pub form: FormConfig,
    pub desired: Arc<VectorField>,
    pub forcing: Arc<VectorField>,
    pub dirichlet: Arc<VectorField>,
    /// Stop once `|| g ||_{L2}` falls below this value.
    pub gradient_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub newton: NewtonOptions,
    /// Use [`Pairing::Literal`] instead of [`Pairing::FullyRobust`] in robust mode.
    pub literal_pairings: bool,
}

impl std::fmt::Debug for OcpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpConfig")
            .field("form", &self.form)
            .field("gradient_tol", &self.gradient_tol)
            .field("max_iter", &self.max_iter)
            .field("memory", &self.memory)
            .field("newton", &self.newton)
            .field("literal_pairings", &self.literal_pairings)
            .finish_non_exhaustive()
    }
}

impl OcpConfig {
    pub fn new(form: FormConfig, desired: Arc<VectorField>, dirichlet: Arc<VectorField>) -> Self {
        OcpConfig {
            form,
            desired,
            forcing: Arc::new(|_| [0.0, 0.0]),
            dirichlet,
            gradient_tol: 1e-8,
            max_iter: 200,
            memory: 8,
            newton: NewtonOptions::default(),
            literal_pairings: false,
        }
    }

    pub fn pairing(&self) -> Pairing {
        match (self.form.robust, self.literal_pairings) {
            (false, _) => Pairing::NonRobust,
            (true, false) => Pairing::FullyRobust,
            (true, true) => Pairing::Literal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tol > 0.0) || !(self.newton.atol > 0.0) || !(self.newton.rtol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.memory == 0 {
            return Err(Error::InvalidArgument("quasi-Newton memory must be at least 1".into()));
        }
        FormConfig::new(self.form.form, self.form.robust, self.form.nu).map(|_| ())
    }
}

#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    pub report: LinearSolveReport,
}

/// Everything computed at one control iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub control: Vec<f64>,
    pub state: StateSolution,
    pub adjoint: AdjointSolution,
    pub cost: f64,
    /// Riesz representative of the reduced derivative.
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
}

/// Result of an optimization run.
#[derive(Debug, Clone)]
pub struct KktState {
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub cost: f64,
    pub gradient_norm_history: Vec<f64>,
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub converged: bool,
}

impl KktState {
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::OptimizerStagnated {
                iterations: self.iterations,
                gradient_norm: self.gradient_norm_history.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// The reduced problem `q -> J(q, u(q))` on a fixed discretization.
pub struct ReducedProblem<'a> {
    pub disc: &'a Discretization,
    pub blocks: &'a StokesBlocks,
    pub cfg: OcpConfig,
    pub constraints: ConstraintSet,
    mass: CsrMatrix,
    mass_lu: Factorization,
    /// `E[i][j] = (phi_j, T phi_i)` for the state load pairing.
    load_pairing: CsrMatrix,
    base_load: Vec<f64>,
    /// `(u_d, T phi_i)` with the cost's `T`.
    desired_load: Vec<f64>,
    pub newton_iterations: usize,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(disc: &'a Discretization, blocks: &'a StokesBlocks, cfg: OcpConfig) -> Result<Self> {
        cfg.validate()?;
        let pairing = cfg.pairing();
        let constraints = dirichlet_constraints(&disc.dofs, |x| (cfg.dirichlet)(x));
        let mass_t: Triplets = disc.assemble_mass_pairing(false);
        let mass_lu = Factorization::new(&mass_t)?;
        let load_pairing =
            if pairing.load_pi() { disc.assemble_mass_pairing(true).to_csr() } else { mass_t.to_csr() };
        let base_load = disc.assemble_rhs(&|x| (cfg.forcing)(x), pairing.load_pi());
        let desired_load = disc.assemble_rhs(&|x| (cfg.desired)(x), pairing.cost_pi());
        Ok(ReducedProblem {
            disc,
            blocks,
            constraints,
            mass: mass_t.to_csr(),
            mass_lu,
            load_pairing,
            base_load,
            desired_load,
            cfg,
            newton_iterations: 0,
        })
    }

    pub fn operator(&self) -> StateOperator<'a> {
        StateOperator::new(self.disc, self.blocks, self.cfg.form)
    }

    pub fn pairing(&self) -> Pairing {
        self.cfg.pairing()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// `(a, b)_{L2}` of two control vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, &self.mass.mul_vec(b))
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// State load `(f + q, T phi_i)`.
    pub fn load(&self, q: &[f64]) -> Vec<f64> {
        let eq = self.load_pairing.mul_vec(q);
        self.base_load.iter().zip(&eq).map(|(a, b)| a + b).collect()
    }

    pub fn solve_state(&mut self, q: &[f64], warm: Option<&StateSolution>) -> Result<StateSolution> {
        let load = self.load(q);
        let init = warm.map(|s| (s.velocity.as_slice(), s.pressure.as_slice(), s.multiplier));
        let sol = self.operator().solve(&load, &self.constraints, init, &self.cfg.newton)?.ensure_converged()?;
        self.newton_iterations += sol.report.iterations;
        Ok(sol)
    }

    /// Adjoint right-hand side: the derivative of the tracking term.
    pub fn tracking_rhs(&self, u: &[f64]) -> Vec<f64> {
        let ud = |x: [f64; 2]| (self.cfg.desired)(x);
        match self.pairing() {
            Pairing::NonRobust => self.disc.assemble_tracking_rhs(u, &ud, false),
            Pairing::FullyRobust => self.disc.assemble_tracking_rhs(u, &ud, true),
            Pairing::Literal => self.disc.assemble_tracking_rhs_mixed(u, &ud, true, false),
        }
    }

    /// Solves `K(u)^T (z, s, mu) = (tracking, 0, 0)` with homogeneous boundary values on `z`.
    pub fn solve_adjoint(&self, u: &[f64]) -> Result<AdjointSolution> {
        let (nv, np) = (self.disc.dofs.n_vel, self.disc.dofs.n_press);
        let mut rhs = self.tracking_rhs(u);
        rhs.resize(nv + np + 1, 0.0);
        let system = SaddleSystem {
            n_vel: nv,
            n_press: np,
            matrix: self.operator().jacobian(u, true).transpose(),
            rhs,
        };
        let sol = solve_saddle(&system, &self.constraints.homogeneous(), self.cfg.newton.linear_tol)?;
        Ok(AdjointSolution {
            velocity: sol.velocity,
            pressure: sol.pressure,
            multiplier: sol.multiplier,
            report: sol.report,
        })
    }

    /// Riesz representative `g = q + M^{-1} E^T z` of the reduced derivative.
    pub fn reduced_gradient(&self, q: &[f64], z: &[f64]) -> Vec<f64> {
        let pairing = match self.pairing() {
            Pairing::Literal | Pairing::NonRobust => z.to_vec(),
            Pairing::FullyRobust => self.mass_lu.solve(&self.load_pairing.mul_vec_transposed(z)),
        };
        q.iter().zip(&pairing).map(|(a, b)| a + b).collect()
    }

    pub fn cost(&self, q: &[f64], u: &[f64]) -> f64 {
        let ud = |x: [f64; 2]| (self.cfg.desired)(x);
        0.5 * self.disc.tracking_misfit(u, &ud, self.pairing().cost_pi()) + 0.5 * self.inner(q, q)
    }

    /// `J(q1, u1) - J(q0, u0)` evaluated from the differences, which keeps its
    /// relative accuracy when the two costs agree to many digits.
    pub fn cost_change(&self, q0: &[f64], u0: &[f64], q1: &[f64], u1: &[f64]) -> f64 {
        let du: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| a - b).collect();
        let su: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| a + b).collect();
        let dq: Vec<f64> = q1.iter().zip(q0).map(|(a, b)| a - b).collect();
        let sq: Vec<f64> = q1.iter().zip(q0).map(|(a, b)| a + b).collect();
        0.5 * self.disc.l2_pairing(&du, &su, self.pairing().cost_pi()) - dot(&du, &self.desired_load)
            + 0.5 * self.inner(&dq, &sq)
    }

    pub fn evaluate(&mut self, q: &[f64], warm: Option<&StateSolution>) -> Result<Evaluation> {
        let state = self.solve_state(q, warm)?;
        let adjoint = self.solve_adjoint(&state.velocity)?;
        let gradient = self.reduced_gradient(q, &adjoint.velocity);
        let gradient_norm = self.norm(&gradient);
        Ok(Evaluation {
            control: q.to_vec(),
            cost: self.cost(q, &state.velocity),
            state,
            adjoint,
            gradient,
            gradient_norm,
        })
    }

    /// Residual norms of the five optimality conditions, reassembled from scratch:
    /// state momentum, continuity, adjoint momentum, adjoint continuity, gradient equation.
    pub fn optimality_residuals(&self, kkt: &KktState) -> [f64; 5] {
        let (nv, np) = (self.disc.dofs.n_vel, self.disc.dofs.n_press);
        let op = self.operator();
        let multiplier = 0.0;
        let state = op.residual(&self.load(&kkt.q), &kkt.u, &kkt.p, multiplier, &self.constraints, true);
        let norm = |v: &[f64]| dot(v, v).sqrt();

        let kt = op.jacobian(&kkt.u, true).transpose().to_csr();
        let mut x = kkt.z.clone();
        x.extend_from_slice(&kkt.s);
        x.push(0.0);
        let kx = kt.mul_vec(&x);
        let mut rhs = self.tracking_rhs(&kkt.u);
        rhs.resize(nv + np + 1, 0.0);
        let mut adj: Vec<f64> = kx.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        self.constraints.zero_out(&mut adj[..nv]);

        let g = self.reduced_gradient(&kkt.q, &kkt.z);
        [
            norm(&state[..nv]),
            norm(&state[nv..nv + np]),
            norm(&adj[..nv]),
            norm(&adj[nv..nv + np]),
            self.norm(&g),
        ]
    }
}

/// Limited-memory BFGS in the control mass inner product.
pub fn solve_ocp(disc: &Discretization, blocks: &StokesBlocks, cfg: OcpConfig) -> Result<KktState> {
    let mut problem = ReducedProblem::new(disc, blocks, cfg)?;
    let q0 = vec![0.0; disc.dofs.n_vel];
    minimize(&mut problem, q0)
}

pub fn minimize(problem: &mut ReducedProblem<'_>, q0: Vec<f64>) -> Result<KktState> {
    let tol = problem.cfg.gradient_tol;
    let memory = problem.cfg.memory;
    let max_iter = problem.cfg.max_iter;

    let mut cur = problem.evaluate(&q0, None)?;
    let mut cost = cur.cost;
    let mut gnorm_hist = vec![cur.gradient_norm];
    let mut cost_hist = vec![cost];
    let mut pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut iterations = 0;
    let mut converged = cur.gradient_norm <= tol;

    while !converged && iterations < max_iter {
        // Two-loop recursion.
        let mut d = cur.gradient.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * problem.inner(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = problem.inner(s, y) / problem.inner(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * problem.inner(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|di| *di = -*di);
        let mut slope = problem.inner(&cur.gradient, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d = cur.gradient.iter().map(|g| -g).collect();
            slope = -cur.gradient_norm.powi(2);
        }

        let mut accepted = line_search(problem, &cur, &d, slope)?;
        if accepted.is_none() && !pairs.is_empty() {
            // Fixed-point fallback along the negative gradient.
            pairs.clear();
            d = cur.gradient.iter().map(|g| -g).collect();
            slope = -cur.gradient_norm.powi(2);
            accepted = line_search(problem, &cur, &d, slope)?;
        }
        let Some((next, t)) = accepted else {
            break;
        };
        let s: Vec<f64> = d.iter().map(|di| t * di).collect();
        let y: Vec<f64> = next.gradient.iter().zip(&cur.gradient).map(|(a, b)| a - b).collect();
        let sy = problem.inner(&s, &y);
        if sy > 1e-14 * problem.norm(&s) * problem.norm(&y) {
            if pairs.len() == memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        cost += problem.cost_change(&cur.control, &cur.state.velocity, &next.control, &next.state.velocity);
        cur = next;
        iterations += 1;
        gnorm_hist.push(cur.gradient_norm);
        cost_hist.push(cost);
        converged = cur.gradient_norm <= tol;
    }

    let final_cost = problem.cost(&cur.control, &cur.state.velocity);
    Ok(KktState {
        q: cur.control,
        u: cur.state.velocity,
        p: cur.state.pressure,
        z: cur.adjoint.velocity,
        s: cur.adjoint.pressure,
        cost: final_cost,
        gradient_norm_history: gnorm_hist,
        cost_history: cost_hist,
        iterations,
        newton_iterations: problem.newton_iterations,
        converged,
    })
}

const ARMIJO: f64 = 1e-4;
const MAX_STEP_HALVINGS: usize = 30;
/// Relative cost change that is treated as round-off.
pub const COST_NOISE: f64 = 1e-10;

/// Backtracking along `d` from `cur`.
///
/// A step is accepted by the Armijo test on the cost change, or, once the
/// change is below the noise floor of the state solves, by the same test on
/// the trapezoidal estimate `t (g0 + g1, d) / 2`, which only needs gradients.
fn line_search(
    problem: &mut ReducedProblem<'_>,
    cur: &Evaluation,
    d: &[f64],
    slope: f64,
) -> Result<Option<(Evaluation, f64)>> {
    let noise = COST_NOISE * cur.cost.abs().max(1.0);
    let mut t = 1.0;
    for _ in 0..=MAX_STEP_HALVINGS {
        let qt: Vec<f64> = cur.control.iter().zip(d).map(|(q, di)| q + t * di).collect();
        let trial = problem.evaluate(&qt, Some(&cur.state))?;
        let change = problem.cost_change(&cur.control, &cur.state.velocity, &qt, &trial.state.velocity);
        let trial_slope = problem.inner(&trial.gradient, d);
        let armijo = change <= ARMIJO * t * slope;
        let approx = change <= noise && 0.5 * t * (slope + trial_slope) <= ARMIJO * t * slope;
        if armijo || approx {
            return Ok(Some((trial, t)));
        }
        t *= 0.5;
    }
    Ok(None)
}
