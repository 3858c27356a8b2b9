//! Manufactured data for the potential-flow control experiment and the
//! error functionals.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{Discretization, Form, FormConfig, StokesBlocks};
use crate::control::{minimize, OcpConfig, ReducedProblem};
use crate::error::Result;
use crate::linsolve::Factorization;
use crate::nonlinear::{h1_seminorm, NewtonOptions};
use crate::sparse::Triplets;

/// `chi = x^3 - 3 x y^2`; harmonic, so `u = grad chi` is solenoidal and irrotational.
pub fn chi([x, y]: [f64; 2]) -> f64 {
    x * x * x - 3.0 * x * y * y
}

pub fn exact_velocity([x, y]: [f64; 2]) -> [f64; 2] {
    [3.0 * x * x - 3.0 * y * y, -6.0 * x * y]
}

/// `grad u`, rows are components.
pub fn exact_velocity_gradient([x, y]: [f64; 2]) -> [[f64; 2]; 2] {
    [[6.0 * x, -6.0 * y], [-6.0 * y, -6.0 * x]]
}

/// `psi = -(10 (x - 1/2)^3 y^2 + (1 - x)^3 (y - 1/2)^3 + 1/8)`.
pub fn psi([x, y]: [f64; 2]) -> f64 {
    -(10.0 * (x - 0.5).powi(3) * y * y + (1.0 - x).powi(3) * (y - 0.5).powi(3) + 0.125)
}

pub fn grad_psi([x, y]: [f64; 2]) -> [f64; 2] {
    [
        -(30.0 * (x - 0.5).powi(2) * y * y - 3.0 * (1.0 - x).powi(2) * (y - 0.5).powi(3)),
        -(20.0 * (x - 0.5).powi(3) * y + 3.0 * (1.0 - x).powi(3) * (y - 0.5).powi(2)),
    ]
}

/// Desired state: the exact velocity plus a pure gradient.
pub fn desired_state(x: [f64; 2]) -> [f64; 2] {
    let (u, g) = (exact_velocity(x), grad_psi(x));
    [u[0] + g[0], u[1] + g[1]]
}

/// Zero-mean pressure for the convective and divergence forms at unit viscosity scale.
///
/// `u` is harmonic, so the momentum balance reduces to `grad p = -(u . grad) u = -grad |u|^2 / 2`.
pub fn exact_pressure([x, y]: [f64; 2]) -> f64 {
    let r2 = x * x + y * y;
    -4.5 * (r2 * r2 - 28.0 / 45.0)
}

/// Bernoulli pressure `p + |u|^2 / 2` of the rotational form; constant, hence zero after normalization.
pub fn exact_bernoulli_pressure(_x: [f64; 2]) -> f64 {
    0.0
}

/// `|| grad (reference - u_h) ||_{L2}` by cell quadrature against an analytic gradient.
pub fn h1_seminorm_error(
    disc: &Discretization,
    u: &[f64],
    reference_gradient: &(dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Sync),
) -> f64 {
    (0..disc.n_cells())
        .into_par_iter()
        .map(|c| {
            let local = disc.dofs.gather_velocity(u, c);
            let points = disc.quadrature_points(c);
            let jxw = disc.jxw(c);
            (0..points.len())
                .map(|q| {
                    let (_, g) = disc.local_value_and_gradient(c, q, &local);
                    let r = reference_gradient(points[q]);
                    let mut s = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            s += (r[i][j] - g[i][j]).powi(2);
                        }
                    }
                    jxw[q] * s
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Discrete `|| P f ||`: solves the Neumann problem `(grad phi, grad chi) = (f, grad chi)`
/// on continuous scalar Q2 and returns `|| f - grad phi_h ||`.
pub fn helmholtz_projection_diagnostic(
    disc: &Discretization,
    f: &(dyn Fn([f64; 2]) -> [f64; 2] + Sync),
) -> Result<f64> {
    let n = disc.dofs.n_nodes();
    let nodes = |c: usize| {
        let d = disc.dofs.cell_velocity_dofs(c);
        std::array::from_fn::<usize, 9, _>(|a| d[2 * a] / 2)
    };
    let mut k = Triplets::new(n, n);
    let mut rhs = vec![0.0; n];
    for c in 0..disc.n_cells() {
        let map = nodes(c);
        let points = disc.quadrature_points(c);
        for (q, &w) in disc.jxw(c).iter().enumerate() {
            let (_, dphi) = disc.scalar_basis(c, q);
            let fq = f(points[q]);
            for a in 0..9 {
                rhs[map[a]] += w * (fq[0] * dphi[a][0] + fq[1] * dphi[a][1]);
                for b in 0..9 {
                    k.push(map[a], map[b], w * (dphi[a][0] * dphi[b][0] + dphi[a][1] * dphi[b][1]));
                }
            }
        }
    }
    // The constant mode is fixed by pinning one node; the load is compatible.
    k.entries.retain(|&(i, j, _)| i != 0 && j != 0);
    k.push(0, 0, 1.0);
    rhs[0] = 0.0;
    let phi = Factorization::new(&k)?.solve(&rhs);

    let mut total = 0.0;
    for c in 0..disc.n_cells() {
        let map = nodes(c);
        let points = disc.quadrature_points(c);
        for (q, &w) in disc.jxw(c).iter().enumerate() {
            let (_, dphi) = disc.scalar_basis(c, q);
            let mut g = [0.0; 2];
            for a in 0..9 {
                g[0] += phi[map[a]] * dphi[a][0];
                g[1] += phi[map[a]] * dphi[a][1];
            }
            let fq = f(points[q]);
            total += w * ((fq[0] - g[0]).powi(2) + (fq[1] - g[1]).powi(2));
        }
    }
    Ok(total.sqrt())
}

/// One row of the results tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub form: Form,
    pub robust: bool,
    pub nu: f64,
    /// Cells per axis.
    pub level: usize,
    /// `|| grad (u - u_h) ||` for the state at the initial control `q_h = 0`,
    /// where the forcing vanishes.
    pub err_state_h1: f64,
    /// `|| grad (u - u_h) ||` for the optimal state.
    pub err_optimal_state_h1: f64,
    /// `|| grad z_h ||`; the exact adjoint vanishes.
    pub err_adjoint_h1: f64,
    pub newton_iterations: usize,
    pub optimizer_iterations: usize,
    pub wall_seconds: f64,
    /// Set when the run failed; the numeric fields are then NaN.
    pub failure: Option<String>,
}

impl ExperimentRecord {
    /// Sort key; records are unique per key.
    pub fn key(&self) -> (usize, Form, bool, std::cmp::Reverse<u64>) {
        // positive floats order like their bit patterns
        (self.level, self.form, !self.robust, std::cmp::Reverse(self.nu.to_bits()))
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub levels: Vec<usize>,
    pub forms: Vec<Form>,
    pub robust: Vec<bool>,
    pub nus: Vec<f64>,
    pub gradient_tol: f64,
    pub max_iter: usize,
    pub newton: NewtonOptions,
    pub literal_pairings: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            levels: vec![16],
            forms: Form::ALL.to_vec(),
            robust: vec![true, false],
            nus: vec![1.0, 0.1, 0.01],
            gradient_tol: 1e-8,
            max_iter: 200,
            newton: NewtonOptions::default(),
            literal_pairings: false,
        }
    }
}

/// The control experiment for one configuration.
pub fn experiment_config(form: FormConfig, opts: &SweepOptions) -> OcpConfig {
    let mut cfg = OcpConfig::new(form, Arc::new(desired_state), Arc::new(exact_velocity));
    cfg.gradient_tol = opts.gradient_tol;
    cfg.max_iter = opts.max_iter;
    cfg.newton = opts.newton;
    cfg.literal_pairings = opts.literal_pairings;
    cfg
}

/// Runs one configuration on an assembled discretization.
pub fn run_experiment(
    disc: &Discretization,
    blocks: &StokesBlocks,
    form: FormConfig,
    opts: &SweepOptions,
) -> ExperimentRecord {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = experiment_config(form, opts);
        let mut problem = ReducedProblem::new(disc, blocks, cfg)?;
        let q0 = vec![0.0; disc.dofs.n_vel];
        let forward = problem.solve_state(&q0, None)?;
        let kkt = minimize(&mut problem, q0)?.ensure_converged()?;
        Ok::<_, crate::error::Error>((forward, kkt))
    })();
    let mut rec = ExperimentRecord {
        form: form.form,
        robust: form.robust,
        nu: form.nu,
        level: disc.mesh.n_x,
        err_state_h1: f64::NAN,
        err_optimal_state_h1: f64::NAN,
        err_adjoint_h1: f64::NAN,
        newton_iterations: 0,
        optimizer_iterations: 0,
        wall_seconds: 0.0,
        failure: None,
    };
    match outcome {
        Ok((forward, k)) => {
            rec.err_state_h1 = h1_seminorm_error(disc, &forward.velocity, &exact_velocity_gradient);
            rec.err_optimal_state_h1 = h1_seminorm_error(disc, &k.u, &exact_velocity_gradient);
            rec.err_adjoint_h1 = h1_seminorm(blocks, &k.z);
            rec.newton_iterations = k.newton_iterations;
            rec.optimizer_iterations = k.iterations;
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    rec
}

/// All `(level, form, robust, nu)` combinations. Failures are recorded, not
/// propagated; the output is sorted by key whatever the execution order.
pub fn run_tables(opts: &SweepOptions) -> Result<Vec<ExperimentRecord>> {
    let mut records = Vec::new();
    for &level in &opts.levels {
        let disc = Discretization::unit_square(level)?;
        let blocks = disc.assemble_stokes();
        let mut configs = Vec::new();
        for &form in &opts.forms {
            for &robust in &opts.robust {
                for &nu in &opts.nus {
                    configs.push(FormConfig::new(form, robust, nu)?);
                }
            }
        }
        let batch: Vec<ExperimentRecord> =
            configs.par_iter().map(|&cfg| run_experiment(&disc, &blocks, cfg, opts)).collect();
        records.extend(batch);
    }
    records.sort_by_key(|r| r.key());
    records.dedup_by_key(|r| r.key());
    Ok(records)
}
