use std::fs;
use std::process::Command;

use gradrobust::mms::ExperimentRecord;
use gradrobust::{Discretization, Form};
use gradrobust_cli::config::Mode;
use gradrobust_cli::output::vtk_text;
use gradrobust_cli::{export_fields, parse_config, parse_config_text, run, write_tables, Fields, RunConfig};
use proptest::prelude::*;

fn record(form: Form, robust: bool, nu: f64) -> ExperimentRecord {
    ExperimentRecord {
        form,
        robust,
        nu,
        level: 8,
        err_state_h1: 3.0e-7,
        err_optimal_state_h1: 1.0e-7,
        err_adjoint_h1: 4.0e-3,
        newton_iterations: 5,
        optimizer_iterations: 9,
        wall_seconds: 0.5,
        failure: None,
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradrobust"))
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "mode=state\nnu=0.5\nn=4\nforms=div\n").unwrap();
    let p = path.to_str().unwrap();
    let cfg = parse_config(["gradrobust", "--config", p, "--nu", "0.25", "--form", "rot"]).unwrap();
    assert_eq!(cfg.mode, Mode::State);
    assert_eq!(cfg.nus, vec![0.25]);
    assert_eq!(cfg.forms, vec![Form::Rotational]);
    assert_eq!(cfg.mesh_levels(), vec![4]);
}

#[test]
fn unknown_file_key_and_unreadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "mode=state\nspeed=3\n").unwrap();
    let err = parse_config(["gradrobust", "--config", path.to_str().unwrap()]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let missing = dir.path().join("missing.cfg");
    let err = parse_config(["gradrobust", "--config", missing.to_str().unwrap()]).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn empty_records_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let md = dir.path().join("t.md");
    let err = write_tables(&[], Some(&csv), Some(&md)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(!csv.exists() && !md.exists());
}

#[test]
fn single_record_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    write_tables(&[record(Form::Convective, true, 1.0)], Some(&csv), None).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), lines[0].split(',').count());
    assert_eq!(lines[1], "conv,true,1.000e0,8,3.000e-7,4.000e-3,5,9,5.000e-1");
}

#[test]
fn full_grid_has_eighteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, md) = (dir.path().join("t.csv"), dir.path().join("t.md"));
    let mut recs = Vec::new();
    for form in Form::ALL {
        for robust in [true, false] {
            for nu in [1.0, 0.1, 0.01] {
                recs.push(record(form, robust, nu));
            }
        }
    }
    write_tables(&recs, Some(&csv), Some(&md)).unwrap();
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 19);
    let grid = fs::read_to_string(&md).unwrap();
    assert_eq!(grid.lines().filter(|l| l.starts_with("|---")).count(), 1);
}

#[test]
fn unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("no/such/dir/t.csv");
    let err = write_tables(&[record(Form::Divergence, false, 0.1)], Some(&csv), None).unwrap_err();
    assert_eq!(err.exit_code(), 5);
}

#[test]
fn zero_fields_on_two_by_two_mesh() {
    let disc = Discretization::unit_square(2).unwrap();
    let u = vec![0.0; disc.dofs.n_vel];
    let p = vec![0.0; disc.dofs.n_press];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.vtk");
    export_fields(&path, &disc, &Fields { velocity: &u, pressure: &p, adjoint_velocity: &u, adjoint_pressure: &p })
        .unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# vtk DataFile Version 2.0\n"));
    assert!(text.contains("POINTS 9 double\n"));
    assert!(text.contains("CELLS 4 20\n"));
    assert!(text.contains("CELL_TYPES 4\n"));
    assert!(text.contains("POINT_DATA 9\n") && text.contains("CELL_DATA 4\n"));
    let data = &text[text.find("POINT_DATA").unwrap()..];
    let values: Vec<&str> = data.lines().filter(|l| !l.starts_with(char::is_alphabetic)).collect();
    assert_eq!(values.len(), 2 * 9 + 2 * 4);
    assert!(values.iter().flat_map(|l| l.split_whitespace()).all(|w| w.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn export_is_deterministic_text() {
    let disc = Discretization::unit_square(3).unwrap();
    let u: Vec<f64> = (0..disc.dofs.n_vel).map(|i| (i as f64).sin()).collect();
    let p: Vec<f64> = (0..disc.dofs.n_press).map(|i| i as f64 * 0.1).collect();
    let f = Fields { velocity: &u, pressure: &p, adjoint_velocity: &[], adjoint_pressure: &[] };
    assert_eq!(vtk_text(&disc, &f).unwrap(), vtk_text(&disc, &f).unwrap());
}

#[test]
fn non_robust_control_run_has_nonzero_adjoint_field() {
    let dir = tempfile::tempdir().unwrap();
    let vtk = dir.path().join("z.vtk");
    let cfg = parse_config([
        "gradrobust", "--mode", "ocp", "--form", "conv", "--robust", "false", "--nu", "0.01", "--n", "8", "--vtk",
        vtk.to_str().unwrap(),
    ])
    .unwrap();
    let mut out = Vec::new();
    assert!(run(&cfg, &mut out).unwrap());
    let text = fs::read_to_string(&vtk).unwrap();
    let start = text.find("VECTORS adjoint_velocity").unwrap();
    let max = text[start..]
        .lines()
        .skip(1)
        .take(81)
        .flat_map(|l| l.split_whitespace().map(|w| w.parse::<f64>().unwrap().abs()))
        .fold(0.0, f64::max);
    assert!(max > 1e-3, "adjoint magnitude {max}");
}

#[test]
fn binary_exit_codes() {
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["--mode", "state", "--form", "rot", "--robust", "false", "--nu", "0.01", "--n", "4"]), Some(0));
    assert_eq!(code(&["--frobnicate"]), Some(2));
    assert_eq!(code(&["--mode", "sideways"]), Some(3));
    assert_eq!(code(&["--config", "/nonexistent/run.cfg"]), Some(4));
    assert_eq!(code(&["--mode", "tables", "--n", "2", "--nu", "1", "--forms", "rot", "--robust", "true", "--csv", "/nonexistent/dir/t.csv"]), Some(5));
    // the non-robust scheme does not converge here
    assert_eq!(code(&["--mode", "invariance", "--form", "conv", "--robust", "false", "--nu", "0.01", "--n", "4"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
}

fn config_strategy() -> impl Strategy<Value = RunConfig> {
    let forms = prop::sample::subsequence(Form::ALL.to_vec(), 1..=3);
    let robust = prop::sample::select(vec![vec![true], vec![false], vec![true, false], vec![false, true]]);
    let nus = prop::collection::vec(1e-6f64..1e3, 1..4);
    let levels = prop::option::of(prop::collection::vec(1usize..300, 1..3));
    let tols = (1e-16f64..1.0, 1e-16f64..1.0, 1e-16f64..1.0);
    let ints = (0usize..1000, 1usize..100);
    let switches = (any::<bool>(), any::<bool>(), any::<bool>());
    let paths = (prop::option::of("[a-z]{1,8}\\.csv"), prop::option::of("[a-z/]{1,8}\\.md"));
    (forms, robust, nus, levels, tols, ints, switches, paths).prop_map(
        |(forms, robust, nus, levels, (g, a, r), (max_iter, newton_max_iter), (full, literal, det), (csv, md))| {
            RunConfig {
                mode: Mode::Tables,
                forms,
                robust,
                nus,
                full: full && levels.is_none(),
                levels,
                gradient_tol: g,
                max_iter,
                newton_atol: a,
                newton_rtol: r,
                newton_max_iter,
                literal_pairings: literal,
                deterministic: det,
                csv: csv.map(Into::into),
                markdown: md.map(Into::into),
                vtk: None,
            }
        },
    )
}

proptest! {
    #[test]
    fn config_text_round_trips(cfg in config_strategy()) {
        prop_assert_eq!(parse_config_text(&cfg.to_config_text()).unwrap(), cfg);
    }

    #[test]
    fn flags_and_file_agree(cfg in config_strategy()) {
        let mut args = vec!["gradrobust".to_string()];
        for line in cfg.to_config_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            args.push(format!("--{k}"));
            args.push(v.to_string());
        }
        prop_assert_eq!(parse_config(args).unwrap(), cfg);
    }
}
