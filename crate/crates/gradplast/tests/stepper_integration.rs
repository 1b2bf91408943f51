//! Integration checks of the time stepper that need whole solver runs:
//! load-bound stability under refinement, the divergence-residual floor
//! tracking the solver tolerance, Parseval consistency of the inner
//! product, and the div-curl pairing audit over a refinement family.

mod common;

use common::{periodic_ctx, random_field, rng};
use gradplast::energies::EnergyConfig;
use gradplast::field::{mode_vector, ScalarField};
use gradplast::helmholtz::{divcurl_pairing_audit, PairingLevel};
use gradplast::stepper::{discretize_loads, divergence_certificate, run, LoadSchedule, TimeProfile};
use gradplast::{inner_product, MatrixField, OperatorContext};

fn ramp_schedule(ctx: &OperatorContext<f64>, horizon: f64) -> LoadSchedule<f64> {
    LoadSchedule::Analytic {
        spatial: mode_vector(ctx.grid(), 0, [1, 0, 0], false, 1.0)
            .add(&mode_vector(ctx.grid(), 1, [0, 1, 1], true, 0.5)),
        profile: TimeProfile::Ramp { rate: 1.0 },
        horizon,
    }
}

#[test]
fn load_bound_stable_under_refinement() {
    let ctx = periodic_ctx(6);
    let schedule = ramp_schedule(&ctx, 1.0);
    let coarse = discretize_loads(&ctx, &schedule, 16).unwrap();
    let fine = discretize_loads(&ctx, &schedule, 32).unwrap();
    let ratio = fine.lambda_f / coarse.lambda_f;
    assert!(
        (1.0 / 1.1..=1.1).contains(&ratio),
        "lambda_f jumped under refinement: {} -> {}",
        coarse.lambda_f,
        fine.lambda_f
    );
}

#[test]
fn parseval_inner_product_against_dft_oracle() {
    // physical-space norm equals the spectral-space norm; oracle is a
    // naive O(n^2) DFT written independently of the FFT kernels
    let ctx = periodic_ctx(8);
    let g = ctx.grid();
    let mut r = rng(7321);
    let a: ScalarField<f64> = random_field(g, &mut r, 1.0);
    let physical = inner_product(&a, &a).unwrap();

    let n = [g.nx(), g.ny(), g.nz()];
    let total = g.n_nodes() as f64;
    let mut spectral_sum = 0.0;
    for mx in 0..n[0] {
        for my in 0..n[1] {
            for mz in 0..n[2] {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for i in 0..n[0] {
                    for j in 0..n[1] {
                        for k in 0..n[2] {
                            let phase = -2.0
                                * std::f64::consts::PI
                                * (mx * i) as f64
                                / n[0] as f64
                                - 2.0 * std::f64::consts::PI * (my * j) as f64 / n[1] as f64
                                - 2.0 * std::f64::consts::PI * (mz * k) as f64 / n[2] as f64;
                            let v = a.comp(g.idx(i, j, k), 0);
                            re += v * phase.cos();
                            im += v * phase.sin();
                        }
                    }
                }
                spectral_sum += re * re + im * im;
            }
        }
    }
    let spectral = spectral_sum / total * g.cell_volume();
    assert!(
        (physical - spectral).abs() <= 1e-10 * (1.0 + physical),
        "{physical} vs {spectral}"
    );
}

#[test]
fn divergence_floor_tracks_solver_tolerance() {
    let ctx = periodic_ctx(6);
    let cfg = EnergyConfig::default();
    let schedule = ramp_schedule(&ctx, 1.0);
    let p0 = MatrixField::zeros(ctx.grid());
    let mut floors = Vec::new();
    for tol in [1e-5, 1e-8] {
        let traj = run(&ctx, &cfg, &schedule, &p0, 8, tol).unwrap();
        let res = divergence_certificate(&ctx, &cfg, &traj).unwrap();
        floors.push(res.iter().cloned().fold(0.0f64, f64::max));
    }
    assert!(
        floors[1] < floors[0] / 3.0,
        "tightening the tolerance must lower the divergence floor: {floors:?}"
    );
}

#[test]
fn pairing_audit_over_solver_refinement_family() {
    let ctx = periodic_ctx(6);
    let cfg = EnergyConfig::default();
    let schedule = ramp_schedule(&ctx, 1.0);
    let p0 = MatrixField::zeros(ctx.grid());
    let mut levels_data = Vec::new();
    for n in [8usize, 16, 32] {
        let traj = run(&ctx, &cfg, &schedule, &p0, n, 1e-10).unwrap();
        // theta(t) = sin^2(pi t / T) sampled as interval weights
        let tau = traj.loads.tau;
        let weights: Vec<f64> = (1..=n)
            .map(|k| {
                let mid = (k as f64 - 0.5) * tau;
                tau * (std::f64::consts::PI * mid / traj.loads.horizon).sin().powi(2)
            })
            .collect();
        let p_states: Vec<MatrixField<f64>> = traj.p[1..].to_vec();
        levels_data.push((traj.sigma.clone(), p_states, weights));
    }
    let levels: Vec<PairingLevel<f64>> = levels_data
        .iter()
        .map(|(s, p, w)| PairingLevel {
            sigma: s,
            p,
            weights: w,
        })
        .collect();
    let report = divcurl_pairing_audit(&ctx, &levels).unwrap();
    assert_eq!(report.cauchy_differences.len(), 2);
    assert!(
        report.monotone_decreasing,
        "pairing differences must shrink under refinement: {:?}",
        report.cauchy_differences
    );
    for level in &report.levels {
        assert!(level.max_div_norm.is_finite() && level.max_curl_norm.is_finite());
    }
}

#[test]
fn apriori_quantity_stable_across_step_counts() {
    let ctx = periodic_ctx(6);
    let cfg = EnergyConfig::default();
    let schedule = ramp_schedule(&ctx, 1.0);
    let p0 = MatrixField::zeros(ctx.grid());
    let mut quantities = Vec::new();
    for n in [8usize, 16, 32] {
        let traj = run(&ctx, &cfg, &schedule, &p0, n, 1e-10).unwrap();
        quantities.push(traj.apriori_quantity());
    }
    let lo = quantities.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = quantities.iter().cloned().fold(0.0f64, f64::max);
    assert!(hi / lo < 2.0, "a priori quantity drifts: {quantities:?}");
}
