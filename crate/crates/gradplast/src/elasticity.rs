//! The inner minimization defining the marginal energy
//! `E1(p; f) = inf { W_e(grad phi, p) - <f, phi> : phi admissible }`,
//! plus numeric witnesses for its structural properties (convexity, upper
//! and lower bounds, minimizer estimate, load-perturbation inequality,
//! local Lipschitz continuity).
//!
//! Admissible displacements vanish on the Dirichlet face (box topology) or
//! live in the orthogonal complement of the discrete derivative's null
//! modes (periodic topology), which plays the role Korn's inequality plays
//! in the continuum: the quadratic objective is strictly convex on the
//! admissible subspace, so the minimizer is unique and conjugate gradients
//! apply.  Non-quadratic elastic densities fall back to Barzilai-Borwein
//! descent with Armijo backtracking on the same convex objective.
//!
//! Negative-order load norms are realized as the dual norm of the discrete
//! `H^1` inner product on the admissible subspace, one SPD solve per
//! evaluation.

use serde::Serialize;

use crate::energies::{eval_we, eval_wp, EnergyConfig};
use crate::field::{inner_product, MatrixField, VectorField};
use crate::operators::OperatorContext;
use crate::solver::{self, conjugate_gradient};
use crate::{real, Error, Real, Result, Topology};

/// Outcome of the inner solve: admissible minimizer, objective value
/// (`= E1(p; f)`), final projected-gradient norm and iteration count.
#[derive(Clone, Debug)]
pub struct InnerSolveResult<T> {
    pub u: VectorField<T>,
    pub value: T,
    pub residual_norm: T,
    pub iterations: usize,
}

/// Project a displacement onto the admissible subspace: Dirichlet mask on
/// boxes, null-mode removal on periodic grids.
pub fn project_admissible<T: Real>(
    ctx: &OperatorContext<T>,
    v: &VectorField<T>,
) -> Result<VectorField<T>> {
    match ctx.grid().topology() {
        Topology::Box => Ok(v.apply_dirichlet_mask()),
        Topology::Periodic => ctx.project_out_null_modes(v),
    }
}

fn mask_in_place<T: Real>(ctx: &OperatorContext<T>, v: &mut VectorField<T>) {
    // cheap per-iteration projection: the Dirichlet mask must be enforced
    // on operator outputs; periodic null modes are annihilated by the
    // transported derivative automatically.
    if ctx.grid().topology() == Topology::Box {
        v.apply_dirichlet_mask_in_place();
    }
}

/// Gradient of the inner objective at `u`:
/// `grad^T [Q'(sym(grad u - p)) + H_e'(sym grad u)] - f`, projected onto
/// the admissible subspace (the load is projected as well, so callers may
/// pass it raw).
pub fn objective_gradient<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    u: &VectorField<T>,
    p: &MatrixField<T>,
    f: &VectorField<T>,
) -> Result<VectorField<T>> {
    let f = project_admissible(ctx, f)?;
    let f = &f;
    let du = ctx.grad_vec(u)?;
    let mut stress = MatrixField::zeros(ctx.grid());
    for n in 0..stress.n_nodes() {
        let g = du.mat_at(n);
        let e = g.sub(&p.mat_at(n)).sym();
        let mut s = cfg.q_gradient(&e);
        if cfg.he_coeff != T::zero() {
            s = s.add(&cfg.he_gradient(&g.sym()));
        }
        stress.set_mat(n, s);
    }
    let mut grad = ctx.grad_vec_adjoint(&stress)?;
    grad.axpy(-T::one(), f);
    mask_in_place(ctx, &mut grad);
    Ok(grad)
}

/// Minimize `phi -> W_e(grad phi, p) - <f, phi>` over admissible fields.
///
/// Converged when the projected gradient satisfies
/// `||g||_{L^2} <= tol * (1 + ||f||_{L^2})`.
pub fn solve_inner<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    p: &MatrixField<T>,
    f: &VectorField<T>,
    tol: T,
) -> Result<InnerSolveResult<T>> {
    solve_inner_warm(ctx, cfg, p, f, tol, None)
}

pub fn solve_inner_warm<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    p: &MatrixField<T>,
    f: &VectorField<T>,
    tol: T,
    warm: Option<&VectorField<T>>,
) -> Result<InnerSolveResult<T>> {
    if p.grid() != ctx.grid() || f.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *ctx.grid();
    let n_dof = 3 * grid.n_nodes();
    let sqrt_vol = grid.cell_volume().sqrt();
    let f_norm = f.norm_l2();
    let tol_l2 = tol * (T::one() + f_norm);
    let f_adm = project_admissible(ctx, f)?;
    let mut u = match warm {
        Some(w) => project_admissible(ctx, w)?,
        None => VectorField::zeros(&grid),
    };

    let iterations;
    if cfg.q_quartic == T::zero() {
        // quadratic objective: CG on A u = b with
        //   A v = grad^T [C : sym(grad v) + he sym(grad v)]  (masked)
        //   b   = grad^T [C : sym(p)] + f                    (masked)
        let mut b_field = {
            let mut cp = MatrixField::zeros(&grid);
            for n in 0..cp.n_nodes() {
                cp.set_mat(n, cfg.q_gradient(&p.mat_at(n).sym()));
            }
            ctx.grad_vec_adjoint(&cp)?
        };
        b_field.axpy(T::one(), &f_adm);
        mask_in_place(ctx, &mut b_field);

        let apply = |x: &[T], y: &mut [T]| {
            let v = VectorField::from_data(&grid, x.to_vec()).expect("packed dof count");
            let dv = ctx.grad_vec(&v).expect("grid consistent");
            let mut s = MatrixField::zeros(&grid);
            for n in 0..s.n_nodes() {
                let e = dv.mat_at(n).sym();
                let mut m = cfg.q_gradient(&e);
                if cfg.he_coeff != T::zero() {
                    m = m.add(&cfg.he_gradient(&e));
                }
                s.set_mat(n, m);
            }
            let mut out = ctx.grad_vec_adjoint(&s).expect("grid consistent");
            mask_in_place(ctx, &mut out);
            y.copy_from_slice(out.data());
        };
        let mut x = u.data().to_vec();
        let outcome = conjugate_gradient(
            apply,
            b_field.data(),
            &mut x,
            tol_l2 / sqrt_vol,
            10 * n_dof,
        );
        if !outcome.converged {
            return Err(Error::NoConvergence {
                solver: "inner CG",
                residual: (outcome.residual * sqrt_vol).to_f64().unwrap_or(f64::NAN),
                iterations: outcome.iterations,
            });
        }
        u = VectorField::from_data(&grid, x)?;
        iterations = outcome.iterations;
    } else {
        // non-quadratic elastic density: BB descent on the objective
        let value_grad = |x: &[T], g: &mut [T]| -> T {
            let v = VectorField::from_data(&grid, x.to_vec()).expect("packed dof count");
            let grad = objective_gradient(ctx, cfg, &v, p, &f_adm).expect("grid consistent");
            g.copy_from_slice(grad.data());
            eval_we(ctx, cfg, &v, p).expect("grid consistent")
                - inner_product(&f_adm, &v).expect("grid consistent")
        };
        let mut x = u.data().to_vec();
        let outcome = solver::bb_descent(value_grad, &mut x, tol_l2 / sqrt_vol, 10 * n_dof);
        if !outcome.converged {
            return Err(Error::NoConvergence {
                solver: "inner BB",
                residual: (outcome.residual * sqrt_vol).to_f64().unwrap_or(f64::NAN),
                iterations: outcome.iterations,
            });
        }
        u = VectorField::from_data(&grid, x)?;
        iterations = outcome.iterations;
    }

    let residual = objective_gradient(ctx, cfg, &u, p, &f_adm)?.norm_l2();
    let value = eval_we(ctx, cfg, &u, p)? - inner_product(&f_adm, &u)?;
    Ok(InnerSolveResult {
        u,
        value,
        residual_norm: residual,
        iterations,
    })
}

/// Marginal energy `E(p; f) = E1(p; f) + W_p(p)`.
pub fn marginal_value<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    p: &MatrixField<T>,
    f: &VectorField<T>,
    tol: T,
) -> Result<T> {
    let inner = solve_inner(ctx, cfg, p, f, tol)?;
    Ok(inner.value + eval_wp(ctx, cfg, p)?)
}

/// Dual norm of a load functional with respect to the discrete `H^1`
/// inner product on the admissible subspace: `sqrt(<f, K^{-1} f>)` with
/// `K v = v + grad^T grad v`.
pub fn dual_norm<T: Real>(ctx: &OperatorContext<T>, f: &VectorField<T>) -> Result<T> {
    if f.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *ctx.grid();
    let f_adm = project_admissible(ctx, f)?;
    let apply = |x: &[T], y: &mut [T]| {
        let v = VectorField::from_data(&grid, x.to_vec()).expect("packed dof count");
        let mut out = ctx.h1_operator(&v).expect("grid consistent");
        mask_in_place(ctx, &mut out);
        y.copy_from_slice(out.data());
    };
    let mut x = vec![T::zero(); 3 * grid.n_nodes()];
    let scale = T::one() + solver::norm(f_adm.data());
    let outcome = conjugate_gradient(
        apply,
        f_adm.data(),
        &mut x,
        real::<T>(1e-12) * scale,
        30 * grid.n_nodes(),
    );
    if !outcome.converged {
        return Err(Error::NoConvergence {
            solver: "dual-norm CG",
            residual: outcome.residual.to_f64().unwrap_or(f64::NAN),
            iterations: outcome.iterations,
        });
    }
    let w = VectorField::from_data(&grid, x)?;
    let sq = inner_product(&f_adm, &w)?;
    Ok(sq.max(T::zero()).sqrt())
}

/// Discrete `H^1` norm of a displacement.
pub fn h1_norm<T: Real>(ctx: &OperatorContext<T>, u: &VectorField<T>) -> Result<T> {
    let du = ctx.grad_vec(u)?;
    let a = inner_product(u, u)?;
    let b = inner_product(&du, &du)?;
    Ok((a + b).sqrt())
}

/// One random probe for the marginal-property report.
pub struct MarginalSample<T> {
    pub p: MatrixField<T>,
    pub q: MatrixField<T>,
    pub f: VectorField<T>,
    pub g: VectorField<T>,
    /// Convex-combination weight in (0, 1).
    pub lambda: T,
}

/// Aggregated witnesses for the marginal-functional properties; the
/// per-family extremes over all samples, in `f64` for reporting.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct MarginalPropertyReport {
    pub samples: usize,
    /// Max of `E1(lam p + (1-lam) q; f) - lam E1(p;f) - (1-lam) E1(q;f)`;
    /// convexity demands <= 0 up to solver error.
    pub max_convexity_gap: f64,
    /// Max of `||u||_{H^1} / (1 + ||p|| + ||f||_{-1})` over minimizers.
    pub max_minimizer_ratio: f64,
    /// Min of `-<f - g, u_g> - (E1(p;f) - E1(p;g))`; the load-perturbation
    /// inequality demands >= 0 up to solver error.
    pub min_perturbation_slack: f64,
    /// Max of `|E1(p;f) - E1(q;g)| / (||p - q|| + ||f - g||_{-1})`.
    pub max_lipschitz_quotient: f64,
}

/// Evaluate the marginal-functional properties on a list of samples.
pub fn check_marginal_properties<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    samples: &[MarginalSample<T>],
    tol: T,
) -> Result<MarginalPropertyReport> {
    let mut report = MarginalPropertyReport {
        samples: samples.len(),
        min_perturbation_slack: f64::INFINITY,
        ..Default::default()
    };
    let to_f64 = |x: T| x.to_f64().unwrap_or(f64::NAN);
    for s in samples {
        let e_pf = solve_inner(ctx, cfg, &s.p, &s.f, tol)?;
        let e_qf = solve_inner(ctx, cfg, &s.q, &s.f, tol)?;
        let mix = s.p.scaled(s.lambda).add(&s.q.scaled(T::one() - s.lambda));
        let e_mix = solve_inner(ctx, cfg, &mix, &s.f, tol)?;
        let gap = e_mix.value - s.lambda * e_pf.value - (T::one() - s.lambda) * e_qf.value;
        report.max_convexity_gap = report.max_convexity_gap.max(to_f64(gap));

        let fd = dual_norm(ctx, &s.f)?;
        let ratio =
            h1_norm(ctx, &e_pf.u)? / (T::one() + s.p.norm_l2() + fd);
        report.max_minimizer_ratio = report.max_minimizer_ratio.max(to_f64(ratio));

        let e_pg = solve_inner(ctx, cfg, &s.p, &s.g, tol)?;
        let df = s.f.sub(&s.g);
        let slack = -inner_product(&df, &project_admissible(ctx, &e_pg.u)?)?
            - (e_pf.value - e_pg.value);
        report.min_perturbation_slack = report.min_perturbation_slack.min(to_f64(slack));

        let e_qg = solve_inner(ctx, cfg, &s.q, &s.g, tol)?;
        let denom = s.p.sub(&s.q).norm_l2() + dual_norm(ctx, &df)?;
        if denom > real(1e-12) {
            let quot = (e_pf.value - e_qg.value).abs() / denom;
            report.max_lipschitz_quotient = report.max_lipschitz_quotient.max(to_f64(quot));
        }
    }
    Ok(report)
}
