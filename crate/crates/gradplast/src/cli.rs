//! Command implementations behind the `gradplast` binary.
//!
//! Exit-code contract: 0 pass, 1 config/usage error, 2 solver failure,
//! 3 certificate failure.  All artifacts (ledger CSV, audit/study JSON,
//! field snapshots) land in the scenario's output directory unless
//! overridden with `--out`.

use std::path::{Path, PathBuf};

use crate::scenario::Scenario;
use crate::snapshot::{read_snapshot, write_snapshot};
use crate::stepper::{divergence_certificate, run, write_ledger_csv};
use crate::verify::{audit, refinement_study, AuditConfig};
use crate::{helmholtz, Error, OperatorContext, Result, Scheme};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CERTIFICATE: i32 = 3;

/// Command-line overrides applied on top of the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// Internal parallelism cap from `GRADPLAST_THREADS`.  The compute
/// kernels execute single-threaded, so the effective value is the cap
/// clamped at one; it is recorded in every report.
pub fn effective_threads() -> usize {
    std::env::var("GRADPLAST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .map(|v| v.max(1))
        .unwrap_or(1)
        .min(1)
}

fn apply_overrides(scenario: &mut Scenario, ov: &Overrides) {
    if let Some(dir) = &ov.out_dir {
        scenario.run.out_dir = dir.clone();
    }
    if let Some(seed) = ov.seed {
        scenario.run.seed = seed;
    }
    if let Some(tol) = ov.tol {
        scenario.run.tol = tol;
    }
}

/// `gradplast run <scenario>`: run the scheme, write the ledger, audit
/// every certificate, write the report.
pub fn cmd_run(scenario_path: &Path, overrides: &Overrides) -> Result<i32> {
    let mut scenario = Scenario::from_path(scenario_path)?;
    apply_overrides(&mut scenario, overrides);
    let grid = scenario.build_grid()?;
    let ctx = scenario.build_context()?;
    let cfg = scenario.energy_config();
    let schedule = scenario.build_schedule(&grid)?;
    let p0 = scenario.build_initial(&grid)?;

    let traj = run(&ctx, &cfg, &schedule, &p0, scenario.run.n_steps, scenario.run.tol)?;
    let out_dir = &scenario.run.out_dir;
    std::fs::create_dir_all(out_dir)?;
    if let Some(failure) = &traj.failure {
        // keep the partial ledger for post-mortems, then report failure
        let file = std::fs::File::create(out_dir.join("ledger.csv"))?;
        write_ledger_csv(&traj, None, file)?;
        eprintln!(
            "solver failure at step {}: {}",
            failure.step, failure.message
        );
        return Ok(EXIT_SOLVER);
    }

    let audit_cfg = AuditConfig {
        tolerances: scenario.tolerances,
        seed: scenario.run.seed,
        check_divergence: scenario.run.delta_zero_certificate,
        ..Default::default()
    };
    let mut report = audit(&ctx, &cfg, &traj, &audit_cfg)?;
    report.effective_threads = effective_threads();

    let divergence = if scenario.run.delta_zero_certificate {
        Some(divergence_certificate(&ctx, &cfg, &traj)?)
    } else {
        None
    };
    let file = std::fs::File::create(out_dir.join("ledger.csv"))?;
    write_ledger_csv(&traj, divergence.as_deref(), file)?;
    std::fs::write(
        out_dir.join("audit.json"),
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Scenario(format!("report serialization: {e}")))?,
    )?;
    if scenario.run.snapshots {
        for (k, p) in traj.p.iter().enumerate() {
            write_snapshot(out_dir.join(format!("p_{k:04}.gpf")), p)?;
        }
        for (i, s) in traj.sigma.iter().enumerate() {
            write_snapshot(out_dir.join(format!("sigma_{:04}.gpf", i + 1)), s)?;
        }
    }

    println!(
        "run: N = {}, lambda_f = {:.6e}, apriori = {:.6e}, seed = {}",
        report.n_steps, report.lambda_f, report.apriori_quantity, report.seed
    );
    println!(
        "certificates: stationarity {:.3e} | energy slack {:.3e} | fenchel {:.3e} | subgradient {:.3e}{}",
        report.max_stationarity_residual,
        report.max_energy_slack_rel,
        report.max_fenchel_gap_rel,
        report.subgradient_worst_violation,
        match report.max_divergence_residual {
            Some(d) => format!(" | divergence {d:.3e}"),
            None => String::new(),
        }
    );
    if report.pass.overall {
        println!("all certificates pass");
        Ok(EXIT_PASS)
    } else {
        eprintln!("certificate failure: {:?}", report.pass);
        Ok(EXIT_CERTIFICATE)
    }
}

/// `gradplast study <scenario> --levels N1,N2,...`: refinement study with
/// Cauchy diagnostics across the levels.
pub fn cmd_study(scenario_path: &Path, levels: &[usize], overrides: &Overrides) -> Result<i32> {
    if levels.len() < 2 {
        return Err(Error::Scenario(
            "study needs at least two refinement levels (--levels N1,N2,...)".into(),
        ));
    }
    let mut scenario = Scenario::from_path(scenario_path)?;
    apply_overrides(&mut scenario, overrides);
    let grid = scenario.build_grid()?;
    let ctx = scenario.build_context()?;
    let cfg = scenario.energy_config();
    let schedule = scenario.build_schedule(&grid)?;
    let p0 = scenario.build_initial(&grid)?;

    let report = refinement_study(
        &ctx,
        &cfg,
        &schedule,
        &p0,
        levels,
        scenario.run.tol,
        8,
        scenario.run.seed,
    )?;
    let out_dir = &scenario.run.out_dir;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("study.json"),
        serde_json::to_string_pretty(&report)
            .map_err(|e| Error::Scenario(format!("report serialization: {e}")))?,
    )?;
    for (i, l) in report.levels.iter().enumerate() {
        println!(
            "level N = {:>4}: apriori = {:.6e}, shift constant = {:.6e}",
            l.n_steps, l.apriori_quantity, l.time_shift_constant
        );
        if i > 0 {
            println!("  cauchy distance to previous: {:.6e}", report.cauchy_distances[i - 1]);
        }
    }
    if report.cauchy_monotone {
        println!("cauchy distances strictly decreasing");
        Ok(EXIT_PASS)
    } else {
        eprintln!("cauchy monotonicity failed");
        Ok(EXIT_CERTIFICATE)
    }
}

/// `gradplast decompose <field.gpf>`: split a periodic matrix-field
/// snapshot into gradient / curl / null parts.
pub fn cmd_decompose(field_path: &Path, out_dir: Option<&Path>) -> Result<i32> {
    let raw = read_snapshot(field_path)?;
    if raw.topology == crate::Topology::Box {
        return Err(Error::TopologyUnsupported);
    }
    if raw.rank != 9 {
        return Err(Error::SnapshotFormat(format!(
            "decompose expects a matrix field (rank 9), got rank {}",
            raw.rank
        )));
    }
    let spec = raw.grid_spec();
    let grid = crate::grid::make_grid::<f64>(&spec)?;
    let ctx = OperatorContext::new(grid, Scheme::Spectral, 1e-8)?;
    let q = raw.into_field::<f64, 9>(&grid)?;
    let parts = helmholtz::decompose(&ctx, &q)?;
    let err = parts.reconstruction_error(&ctx, &q)?;
    let ortho = parts.orthogonality_defect(&ctx)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| field_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir)?;
    write_snapshot(dir.join("phi.gpf"), &parts.phi)?;
    write_snapshot(dir.join("psi.gpf"), &parts.psi)?;
    write_snapshot(dir.join("mean.gpf"), &parts.mean)?;
    println!("reconstruction error: {err:.3e}");
    println!("orthogonality defect: {ortho:.3e}");
    Ok(EXIT_PASS)
}
