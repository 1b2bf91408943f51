//! End-to-end checks of the command implementations and file formats:
//! exit codes, artifact layout, determinism of the emitted CSV/JSON, and
//! the decompose round trip through snapshots.

mod common;

use std::path::{Path, PathBuf};

use common::{periodic_ctx, random_field, rng};
use gradplast::cli::{cmd_decompose, cmd_run, cmd_study, Overrides};
use gradplast::snapshot::{read_snapshot, write_snapshot};
use gradplast::MatrixField;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn overrides(dir: &Path) -> Overrides {
    Overrides {
        out_dir: Some(dir.to_path_buf()),
        seed: None,
        tol: None,
    }
}

#[test]
fn zero_load_run_passes_with_zero_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let code = cmd_run(&scenario_path("zero_load.toml"), &overrides(tmp.path())).unwrap();
    assert_eq!(code, 0);
    let ledger = std::fs::read_to_string(tmp.path().join("ledger.csv")).unwrap();
    let mut lines = ledger.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("k,t,elastic"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        // all energy components identically zero
        for c in &cols[2..8] {
            assert_eq!(c.parse::<f64>().unwrap(), 0.0, "line {line}");
        }
    }
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("audit.json")).unwrap())
            .unwrap();
    assert_eq!(audit["pass"]["overall"], serde_json::Value::Bool(true));
}

#[test]
fn ramp_run_passes_and_is_deterministic() {
    let tmp_a = tempfile::tempdir().unwrap();
    let tmp_b = tempfile::tempdir().unwrap();
    let code = cmd_run(&scenario_path("ramp_quadratic.toml"), &overrides(tmp_a.path())).unwrap();
    assert_eq!(code, 0);
    let code = cmd_run(&scenario_path("ramp_quadratic.toml"), &overrides(tmp_b.path())).unwrap();
    assert_eq!(code, 0);
    for artifact in ["ledger.csv", "audit.json"] {
        let a = std::fs::read(tmp_a.path().join(artifact)).unwrap();
        let b = std::fs::read(tmp_b.path().join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} differs between identical runs");
    }
}

#[test]
fn bad_tau_exits_with_solver_code() {
    let tmp = tempfile::tempdir().unwrap();
    let err = cmd_run(&scenario_path("bad_tau.toml"), &overrides(tmp.path())).unwrap_err();
    assert!(matches!(err, gradplast::Error::TauTooLarge { .. }));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_scenario_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = cmd_run(&scenario_path("does_not_exist.toml"), &overrides(tmp.path()))
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn study_command_reports_monotone_refinement() {
    let tmp = tempfile::tempdir().unwrap();
    let code = cmd_study(
        &scenario_path("ramp_quadratic.toml"),
        &[8, 16],
        &overrides(tmp.path()),
    )
    .unwrap();
    assert_eq!(code, 0);
    let study: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("study.json")).unwrap())
            .unwrap();
    assert_eq!(study["levels"].as_array().unwrap().len(), 2);
    assert_eq!(study["cauchy_distances"].as_array().unwrap().len(), 1);

    // a single level is a usage error
    let err = cmd_study(
        &scenario_path("ramp_quadratic.toml"),
        &[8],
        &overrides(tmp.path()),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn decompose_command_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = periodic_ctx(8);
    let mut r = rng(555);
    // gradient field: the curl potential must come out near zero
    let w: gradplast::VectorField<f64> = {
        let mut v = gradplast::field::mode_vector(ctx.grid(), 0, [1, 2, 0], false, 1.0);
        v.axpy(
            0.7,
            &gradplast::field::mode_vector(ctx.grid(), 2, [0, 1, 1], true, 1.0),
        );
        v
    };
    let q = ctx.grad_vec(&w).unwrap();
    let input = tmp.path().join("gradient.gpf");
    write_snapshot(&input, &q).unwrap();
    let code = cmd_decompose(&input, Some(tmp.path())).unwrap();
    assert_eq!(code, 0);
    let psi = read_snapshot(tmp.path().join("psi.gpf")).unwrap();
    let norm: f64 = psi.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-9, "curl potential of a gradient field: {norm}");

    // random field decomposes and reconstructs
    let q2: MatrixField<f64> = random_field(ctx.grid(), &mut r, 1.0);
    let input2 = tmp.path().join("random.gpf");
    write_snapshot(&input2, &q2).unwrap();
    assert_eq!(cmd_decompose(&input2, Some(tmp.path())).unwrap(), 0);

    // truncated input is a format error (exit code 1)
    let bad = tmp.path().join("truncated.gpf");
    std::fs::write(&bad, b"GPF1\x09").unwrap();
    let err = cmd_decompose(&bad, Some(tmp.path())).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn decompose_rejects_box_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = gradplast::grid::make_grid::<f64>(&gradplast::GridSpec::cube(
        4,
        0.25,
        gradplast::Topology::Box,
        Some(gradplast::Face::XMin),
    ))
    .unwrap();
    let q = MatrixField::<f64>::zeros(&grid);
    let input = tmp.path().join("box.gpf");
    write_snapshot(&input, &q).unwrap();
    let err = cmd_decompose(&input, Some(tmp.path())).unwrap_err();
    assert!(matches!(err, gradplast::Error::TopologyUnsupported));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn snapshots_written_when_requested() {
    let tmp = tempfile::tempdir().unwrap();
    // clone the ramp scenario with snapshots enabled and fewer steps
    let text = std::fs::read_to_string(scenario_path("ramp_quadratic.toml")).unwrap();
    let text = text
        .replace("n_steps = 32", "n_steps = 4")
        .replace("delta_zero_certificate = true", "delta_zero_certificate = true\nsnapshots = true");
    let path = tmp.path().join("snap.toml");
    std::fs::write(&path, text).unwrap();
    let out = tmp.path().join("out");
    let code = cmd_run(&path, &overrides(&out)).unwrap();
    assert_eq!(code, 0);
    for k in 0..=4 {
        let raw = read_snapshot(out.join(format!("p_{k:04}.gpf"))).unwrap();
        assert_eq!(raw.rank, 9);
        assert_eq!(raw.dims, [8, 8, 8]);
    }
    assert!(out.join("sigma_0001.gpf").exists());
}
