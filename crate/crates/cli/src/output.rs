//! Result tables (CSV and Markdown) and legacy VTK field files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gradrobust::mms::ExperimentRecord;
use gradrobust::{Discretization, Form};

use crate::error::CliError;

pub const CSV_HEADER: &str = "form,robust,nu,n,err_state_h1,err_adjoint_h1,newton_iters,opt_iters,wall_s";

fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Unwritable { path: path.to_path_buf(), source })
}

pub fn csv_table(records: &[ExperimentRecord]) -> Result<String, CliError> {
    if records.is_empty() {
        return Err(CliError::EmptyRecords);
    }
    let mut out = format!("{CSV_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.form,
            r.robust,
            sci(r.nu),
            r.level,
            sci(r.err_state_h1),
            sci(r.err_adjoint_h1),
            r.newton_iterations,
            r.optimizer_iterations,
            sci(r.wall_seconds)
        )
        .unwrap();
    }
    Ok(out)
}

fn form_title(form: Form) -> &'static str {
    match form {
        Form::Convective => "Convective",
        Form::Divergence => "Divergence",
        Form::Rotational => "Rotational",
    }
}

/// One grid: a column per (form, robust) pair, a row per (level, quantity, nu).
pub fn markdown_table(records: &[ExperimentRecord]) -> Result<String, CliError> {
    if records.is_empty() {
        return Err(CliError::EmptyRecords);
    }
    let columns: BTreeSet<(Form, bool)> = records.iter().map(|r| (r.form, !r.robust)).collect();
    let levels: BTreeSet<usize> = records.iter().map(|r| r.level).collect();
    let mut nus: Vec<f64> = records.iter().map(|r| r.nu).collect();
    nus.sort_by(|a, b| b.total_cmp(a));
    nus.dedup();

    let mut out = String::from("| n | quantity | nu |");
    for &(form, non_robust) in &columns {
        let kind = if non_robust { "Non-Robust" } else { "Robust" };
        write!(out, " {} {kind} |", form_title(form)).unwrap();
    }
    out.push_str("\n|---|---|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');

    let quantities: [(&str, fn(&ExperimentRecord) -> f64); 2] = [
        ("grad(u - u_h)", |r| r.err_state_h1),
        ("grad z_h", |r| r.err_adjoint_h1),
    ];
    for &level in &levels {
        for (label, value) in quantities {
            for &nu in &nus {
                write!(out, "| {level} | {label} | {} |", sci(nu)).unwrap();
                for &(form, non_robust) in &columns {
                    let hit = records
                        .iter()
                        .find(|r| r.level == level && r.nu == nu && r.form == form && r.robust != non_robust);
                    let cell = hit.map_or_else(|| "-".to_string(), |r| sci(value(r)));
                    write!(out, " {cell} |").unwrap();
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Writes whichever outputs are requested. Nothing is written for an empty record list.
pub fn write_tables(
    records: &[ExperimentRecord],
    csv: Option<&Path>,
    markdown: Option<&Path>,
) -> Result<(), CliError> {
    let csv_text = csv_table(records)?;
    let md_text = markdown_table(records)?;
    if let Some(p) = csv {
        write_file(p, &csv_text)?;
    }
    if let Some(p) = markdown {
        write_file(p, &md_text)?;
    }
    Ok(())
}

/// Discrete fields to export. Adjoint fields may be empty for forward runs,
/// in which case zeros are written.
pub struct Fields<'a> {
    pub velocity: &'a [f64],
    pub pressure: &'a [f64],
    pub adjoint_velocity: &'a [f64],
    pub adjoint_pressure: &'a [f64],
}

fn check_len(name: &str, v: &[f64], expected: usize) -> Result<(), CliError> {
    if v.is_empty() || v.len() == expected {
        Ok(())
    } else {
        Err(CliError::Invalid {
            key: name.to_string(),
            value: format!("{} entries", v.len()),
            reason: format!("expected {expected}"),
        })
    }
}

/// Legacy VTK text: velocities at the mesh vertices, the cell mean of each
/// pressure (its constant mode) as cell data.
pub fn vtk_text(disc: &Discretization, fields: &Fields<'_>) -> Result<String, CliError> {
    let mesh = &disc.mesh;
    let (n_vel, n_press) = (disc.dofs.n_vel, disc.dofs.n_press);
    check_len("velocity", fields.velocity, n_vel)?;
    check_len("adjoint velocity", fields.adjoint_velocity, n_vel)?;
    check_len("pressure", fields.pressure, n_press)?;
    check_len("adjoint pressure", fields.adjoint_pressure, n_press)?;

    let n_points = mesh.vertices.len();
    let n_cells = mesh.cells.len();
    // vertex (i, j) is Q2 node (2i, 2j)
    let row = 2 * mesh.n_x + 1;
    let corner_node = |v: usize| {
        let (i, j) = (v % (mesh.n_x + 1), v / (mesh.n_x + 1));
        2 * j * row + 2 * i
    };

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 2.0\n");
    out.push_str("gradrobust fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {n_points} double").unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{} {} 0", v[0], v[1]).unwrap();
    }
    writeln!(out, "CELLS {n_cells} {}", 5 * n_cells).unwrap();
    for c in &mesh.cells {
        writeln!(out, "4 {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
    }
    writeln!(out, "CELL_TYPES {n_cells}").unwrap();
    for _ in 0..n_cells {
        out.push_str("9\n");
    }

    writeln!(out, "POINT_DATA {n_points}").unwrap();
    for (name, u) in [("velocity", fields.velocity), ("adjoint_velocity", fields.adjoint_velocity)] {
        writeln!(out, "VECTORS {name} double").unwrap();
        for v in 0..n_points {
            let g = corner_node(v);
            let (a, b) = if u.is_empty() { (0.0, 0.0) } else { (u[2 * g], u[2 * g + 1]) };
            writeln!(out, "{a} {b} 0").unwrap();
        }
    }

    writeln!(out, "CELL_DATA {n_cells}").unwrap();
    for (name, p) in [("pressure", fields.pressure), ("adjoint_pressure", fields.adjoint_pressure)] {
        writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for c in 0..n_cells {
            let value = if p.is_empty() { 0.0 } else { p[disc.dofs.cell_pressure_dofs(c)[0]] };
            writeln!(out, "{value}").unwrap();
        }
    }
    Ok(out)
}

pub fn export_fields(path: &Path, disc: &Discretization, fields: &Fields<'_>) -> Result<(), CliError> {
    let text = vtk_text(disc, fields)?;
    write_file(path, &text)
}
