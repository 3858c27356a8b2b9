//! Experiment dispatch. Each run prints one summary line; the return value
//! tells whether every requested run converged.

use std::io::Write;

use gradrobust::control::solve_ocp;
use gradrobust::linsolve::set_deterministic;
use gradrobust::mms::{self, run_tables, SweepOptions};
use gradrobust::nonlinear::{h1_seminorm, velocity_invariance_check, NewtonOptions, StateOperator};
use gradrobust::spaces::dirichlet_constraints;
use gradrobust::{Discretization, FormConfig};

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::output::{export_fields, markdown_table, write_tables, Fields};

impl RunConfig {
    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            atol: self.newton_atol,
            rtol: self.newton_rtol,
            max_iter: self.newton_max_iter,
            ..NewtonOptions::default()
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            levels: self.mesh_levels(),
            forms: self.forms.clone(),
            robust: self.robust.clone(),
            nus: self.nus.clone(),
            gradient_tol: self.gradient_tol,
            max_iter: self.max_iter,
            newton: self.newton_options(),
            literal_pairings: self.literal_pairings,
        }
    }

    fn form_configs(&self) -> Result<Vec<FormConfig>, CliError> {
        let mut out = Vec::new();
        for &form in &self.forms {
            for &robust in &self.robust {
                for &nu in &self.nus {
                    out.push(FormConfig::new(form, robust, nu)?);
                }
            }
        }
        Ok(out)
    }
}

fn label(cfg: &FormConfig, level: usize) -> String {
    format!("form={} robust={} nu={:.3e} n={level}", cfg.form, cfg.robust, cfg.nu)
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Unwritable { path: "<stdout>".into(), source: e }
}

/// Runs everything `cfg` asks for, printing progress to `out`.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool, CliError> {
    set_deterministic(cfg.deterministic);
    if cfg.mode == Mode::Tables {
        return tables(cfg, out);
    }
    let mut all_converged = true;
    for level in cfg.mesh_levels() {
        let mut disc = Discretization::unit_square(level)?;
        disc.parallel = !cfg.deterministic;
        let blocks = disc.assemble_stokes();
        for form in cfg.form_configs()? {
            let ok = match cfg.mode {
                Mode::State => state(cfg, &disc, &blocks, form, out)?,
                Mode::Invariance => invariance(cfg, &disc, &blocks, form, out)?,
                _ => ocp(cfg, &disc, &blocks, form, out)?,
            };
            all_converged &= ok;
        }
    }
    Ok(all_converged)
}

fn state(
    cfg: &RunConfig,
    disc: &Discretization,
    blocks: &gradrobust::assembly::StokesBlocks,
    form: FormConfig,
    out: &mut dyn Write,
) -> Result<bool, CliError> {
    let op = StateOperator::new(disc, blocks, form);
    let cs = dirichlet_constraints(&disc.dofs, mms::exact_velocity);
    let load = vec![0.0; disc.dofs.n_vel];
    let tag = label(&form, disc.mesh.n_x);
    let sol = match op.solve(&load, &cs, None, &cfg.newton_options()) {
        Ok(s) => s,
        Err(e) => {
            writeln!(out, "state {tag}: FAILED {e}").map_err(io_err)?;
            return Ok(false);
        }
    };
    let err = mms::h1_seminorm_error(disc, &sol.velocity, &mms::exact_velocity_gradient);
    let status = if sol.report.converged { "converged" } else { "NOT CONVERGED" };
    writeln!(out, "state {tag}: err_h1={err:.3e} newton_iters={} {status}", sol.report.iterations)
        .map_err(io_err)?;
    if let Some(path) = &cfg.vtk {
        let fields =
            Fields { velocity: &sol.velocity, pressure: &sol.pressure, adjoint_velocity: &[], adjoint_pressure: &[] };
        export_fields(path, disc, &fields)?;
    }
    Ok(sol.report.converged)
}

fn invariance(
    cfg: &RunConfig,
    disc: &Discretization,
    blocks: &gradrobust::assembly::StokesBlocks,
    form: FormConfig,
    out: &mut dyn Write,
) -> Result<bool, CliError> {
    let op = StateOperator::new(disc, blocks, form);
    let cs = dirichlet_constraints(&disc.dofs, mms::exact_velocity);
    let tag = label(&form, disc.mesh.n_x);
    match velocity_invariance_check(&op, &|_| [0.0, 0.0], &mms::grad_psi, &cs, &cfg.newton_options()) {
        Ok(d) => {
            writeln!(out, "invariance {tag}: velocity_change_h1={d:.3e} converged").map_err(io_err)?;
            Ok(true)
        }
        Err(e) => {
            writeln!(out, "invariance {tag}: FAILED {e}").map_err(io_err)?;
            Ok(false)
        }
    }
}

fn ocp(
    cfg: &RunConfig,
    disc: &Discretization,
    blocks: &gradrobust::assembly::StokesBlocks,
    form: FormConfig,
    out: &mut dyn Write,
) -> Result<bool, CliError> {
    let tag = label(&form, disc.mesh.n_x);
    let ocp_cfg = mms::experiment_config(form, &cfg.sweep_options());
    let kkt = match solve_ocp(disc, blocks, ocp_cfg) {
        Ok(k) => k,
        Err(e) => {
            writeln!(out, "ocp {tag}: FAILED {e}").map_err(io_err)?;
            return Ok(false);
        }
    };
    let err_u = mms::h1_seminorm_error(disc, &kkt.u, &mms::exact_velocity_gradient);
    let err_z = h1_seminorm(blocks, &kkt.z);
    let status = if kkt.converged { "converged" } else { "NOT CONVERGED" };
    writeln!(
        out,
        "ocp {tag}: cost={:.3e} err_state_h1={err_u:.3e} err_adjoint_h1={err_z:.3e} opt_iters={} newton_iters={} {status}",
        kkt.cost, kkt.iterations, kkt.newton_iterations
    )
    .map_err(io_err)?;
    if let Some(path) = &cfg.vtk {
        let fields = Fields { velocity: &kkt.u, pressure: &kkt.p, adjoint_velocity: &kkt.z, adjoint_pressure: &kkt.s };
        export_fields(path, disc, &fields)?;
    }
    Ok(kkt.converged)
}

fn tables(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool, CliError> {
    let records = run_tables(&cfg.sweep_options())?;
    for r in records.iter().filter(|r| r.failure.is_some()) {
        writeln!(out, "FAILED form={} robust={} nu={:.3e} n={}: {}", r.form, r.robust, r.nu, r.level, r.failure.as_deref().unwrap_or(""))
            .map_err(io_err)?;
    }
    write!(out, "{}", markdown_table(&records)?).map_err(io_err)?;
    write_tables(&records, cfg.csv.as_deref(), cfg.markdown.as_deref())?;
    Ok(records.iter().all(|r| r.failure.is_none()))
}
