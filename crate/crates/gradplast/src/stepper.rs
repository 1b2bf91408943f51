//! Incremental variational time stepping.
//!
//! The horizon `[0, T]` is split into `N` uniform steps.  Loads are
//! discretized by interval averages (`f_0 = f_1 = f(0)`), and every step
//! minimizes
//!
//! ```text
//!   G_k(p) = E(p; f_k) + tau R((p - p_{k-1}) / tau)
//! ```
//!
//! over the admissible plastic strains, jointly with the inner elastic
//! minimization.  The back-stress is extracted from the flow rule,
//! `Sigma_k = R'((p_k - p_{k-1}) / tau)`, which is single-valued because
//! `R` is smooth and strictly convex; the stationarity residual then
//! certifies `-Sigma_k` as the gradient of the marginal energy.  The
//! strictly convex proximal anchor makes each `p_k` unique, and the guard
//! `tau < c_R` (the declared lower growth constant of `R`) is a hard
//! error.
//!
//! In the all-quadratic configuration the joint optimality system in
//! `(u, p)` is one symmetric positive-definite solve; otherwise the step
//! runs Barzilai-Borwein descent on the reduced objective, re-solving the
//! inner problem (warm-started) at every evaluation.

use crate::elasticity::{project_admissible, solve_inner_warm, InnerSolveResult};
use crate::energies::{
    energy_value, eval_r_functional, eval_rstar_functional, grad_e_in_p, grad_r_field,
    EnergyConfig, EnergyValue,
};
use crate::field::{inner_product, MatrixField, VectorField};
use crate::operators::OperatorContext;
use crate::solver::conjugate_gradient;
use crate::{real, Error, Real, Result, Topology};

/// Time profile of a separable load `f(t, x) = s(t) g(x)`.
#[derive(Clone, Copy, Debug)]
pub enum TimeProfile<T> {
    Constant { value: T },
    Ramp { rate: T },
    Sine { amplitude: T, omega: T },
}

impl<T: Real> TimeProfile<T> {
    fn eval(&self, t: T) -> T {
        match *self {
            TimeProfile::Constant { value } => value,
            TimeProfile::Ramp { rate } => rate * t,
            TimeProfile::Sine { amplitude, omega } => amplitude * (omega * t).sin(),
        }
    }
}

/// Load schedule over `[0, T]`; either analytic (separable profile) or a
/// tabulated scalar profile with linear interpolation between knots.
#[derive(Clone, Debug)]
pub enum LoadSchedule<T> {
    Analytic {
        spatial: VectorField<T>,
        profile: TimeProfile<T>,
        horizon: T,
    },
    Tabulated {
        spatial: VectorField<T>,
        /// `(time, scale)` knots, strictly increasing, covering `[0, T]`.
        knots: Vec<(T, T)>,
        horizon: T,
    },
}

impl<T: Real> LoadSchedule<T> {
    pub fn zero(grid: &crate::Grid<T>, horizon: T) -> Self {
        LoadSchedule::Analytic {
            spatial: VectorField::zeros(grid),
            profile: TimeProfile::Constant { value: T::zero() },
            horizon,
        }
    }

    pub fn tabulated(spatial: VectorField<T>, knots: Vec<(T, T)>, horizon: T) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Scenario("tabulated schedule needs >= 2 knots".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Scenario(
                    "tabulated knots must be strictly increasing".into(),
                ));
            }
        }
        if knots[0].0 > T::zero() || knots[knots.len() - 1].0 < horizon {
            return Err(Error::Scenario(
                "tabulated knots must cover [0, T]".into(),
            ));
        }
        Ok(LoadSchedule::Tabulated {
            spatial,
            knots,
            horizon,
        })
    }

    pub fn horizon(&self) -> T {
        match self {
            LoadSchedule::Analytic { horizon, .. } => *horizon,
            LoadSchedule::Tabulated { horizon, .. } => *horizon,
        }
    }

    pub fn grid(&self) -> &crate::Grid<T> {
        match self {
            LoadSchedule::Analytic { spatial, .. } => spatial.grid(),
            LoadSchedule::Tabulated { spatial, .. } => spatial.grid(),
        }
    }

    /// Load field at time `t in [0, T]`.
    pub fn eval(&self, t: T) -> VectorField<T> {
        match self {
            LoadSchedule::Analytic {
                spatial, profile, ..
            } => spatial.scaled(profile.eval(t)),
            LoadSchedule::Tabulated { spatial, knots, .. } => {
                let mut scale = knots[knots.len() - 1].1;
                for w in knots.windows(2) {
                    if t <= w[1].0 {
                        let span = w[1].0 - w[0].0;
                        let mu = ((t - w[0].0) / span).max(T::zero()).min(T::one());
                        scale = w[0].1 + mu * (w[1].1 - w[0].1);
                        break;
                    }
                }
                spatial.scaled(scale)
            }
        }
    }
}

/// Time-averaged loads `f_0..f_N` plus the discrete load bound.
#[derive(Clone, Debug)]
pub struct DiscreteLoads<T> {
    pub n_steps: usize,
    pub tau: T,
    pub horizon: T,
    /// `f_k` for `k = 0..=N`; `f_0 = f_1 = f(0)`, `f_k` the interval
    /// average for `k >= 2`.
    pub f: Vec<VectorField<T>>,
    /// Bound on `sum tau ||f_k||^2 + max ||f_k||_-1^2 + sum tau ||df/tau||_-1^2`.
    pub lambda_f: T,
    /// Relative magnitude removed by the periodic gauge projection.
    pub gauge_defect: T,
}

/// Discretize a load schedule with interval averages (3-point Gauss
/// quadrature per interval, exact for the analytic profiles in use).
pub fn discretize_loads<T: Real>(
    ctx: &OperatorContext<T>,
    schedule: &LoadSchedule<T>,
    n_steps: usize,
) -> Result<DiscreteLoads<T>> {
    if n_steps < 2 {
        return Err(Error::InvalidN {
            got: n_steps,
            min: 2,
        });
    }
    if schedule.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let horizon = schedule.horizon();
    let tau = horizon / real(n_steps as f64);
    let mut f = Vec::with_capacity(n_steps + 1);
    let f0 = schedule.eval(T::zero());
    f.push(f0.clone());
    f.push(f0);
    // Gauss-Legendre nodes/weights on [-1, 1]
    let gauss_x = [-(real::<T>(0.6)).sqrt(), T::zero(), (real::<T>(0.6)).sqrt()];
    let gauss_w = [
        real::<T>(5.0 / 9.0),
        real::<T>(8.0 / 9.0),
        real::<T>(5.0 / 9.0),
    ];
    for k in 2..=n_steps {
        let a = tau * real((k - 1) as f64);
        let mid = a + tau * real(0.5);
        let half = tau * real::<T>(0.5);
        let mut avg = VectorField::zeros(ctx.grid());
        for (x, w) in gauss_x.iter().zip(gauss_w.iter()) {
            let fx = schedule.eval(mid + half * *x);
            avg.axpy(*w * real(0.5), &fx);
        }
        f.push(avg);
    }
    // periodic grids: loads must live in the complement of the discrete
    // null modes (constant/Nyquist content has no admissible equilibrium)
    let mut gauge_defect = T::zero();
    if ctx.grid().topology() == Topology::Periodic {
        for fk in f.iter_mut() {
            let proj = ctx.project_out_null_modes(fk)?;
            let removed = fk.sub(&proj).norm_l2();
            gauge_defect = gauge_defect.max(removed / (T::one() + fk.norm_l2()));
            *fk = proj;
        }
    }
    // discrete load bound with the dual-norm proxy
    let mut sum_l2 = T::zero();
    let mut max_dual = T::zero();
    let mut sum_rate = T::zero();
    for (k, fk) in f.iter().enumerate() {
        let l2 = fk.norm_l2();
        sum_l2 += tau * l2 * l2;
        if k >= 1 {
            let d = crate::elasticity::dual_norm(ctx, fk)?;
            max_dual = max_dual.max(d * d);
        }
        if k >= 1 {
            let rate = f[k].sub(&f[k - 1]).scaled(T::one() / tau);
            let d = crate::elasticity::dual_norm(ctx, &rate)?;
            sum_rate += tau * d * d;
        }
    }
    let lambda_f = (sum_l2 + max_dual + sum_rate).sqrt();
    Ok(DiscreteLoads {
        n_steps,
        tau,
        horizon,
        f,
        lambda_f,
        gauge_defect,
    })
}

/// Everything the incremental step needs from the previous state.
pub struct StepInput<'a, T> {
    pub p_prev: &'a MatrixField<T>,
    pub u_prev: &'a VectorField<T>,
    /// `E(p_{k-1}; f_{k-1})` as recorded at the previous step.
    pub energy_prev: T,
    pub f_prev: &'a VectorField<T>,
    pub f_k: &'a VectorField<T>,
    pub tau: T,
}

/// Per-step ledger entry and solver diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct StepDiagnostics<T> {
    pub t: T,
    /// Energy split at `(u_k, p_k, f_k)`; `total` is `E(p_k; f_k)`.
    pub energy: EnergyValue<T>,
    /// `tau R((p_k - p_{k-1}) / tau)`.
    pub r_increment: T,
    /// `tau R*(Sigma_k)`.
    pub rstar_increment: T,
    /// `tau <Sigma_k, (p_k - p_{k-1}) / tau>`.
    pub flow_pairing: T,
    /// Flow-rule Fenchel gap `r_inc + rstar_inc - flow_pairing` (>= 0,
    /// ~ 0 at the exact flow rule).
    pub fenchel_gap: T,
    /// Signed slack of the discrete energy inequality (<= 0 up to solver
    /// error): `E_k + tau R + tau R* - E_{k-1} + <f_k - f_{k-1}, u_{k-1}>`.
    pub energy_slack: T,
    /// `|| P (Sigma_k + grad E(.; f_k)(p_k)) || / (1 + ||f_k||)`.
    pub stationarity_residual: T,
    /// Final optimizer residual in the `L^2` norm.
    pub solver_residual: T,
    pub iterations: usize,
}

pub struct StepOutcome<T> {
    pub p: MatrixField<T>,
    pub u: VectorField<T>,
    pub sigma: MatrixField<T>,
    pub diagnostics: StepDiagnostics<T>,
}

fn mask_p<T: Real>(cfg: &EnergyConfig<T>, p: &MatrixField<T>) -> MatrixField<T> {
    p.project_state_space(cfg.delta > T::zero())
}

/// One incremental minimization of `G_k`.
pub fn incremental_step<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    input: &StepInput<'_, T>,
    tol: T,
) -> Result<StepOutcome<T>> {
    let tau = input.tau;
    let c_r = cfg.c_r_lower();
    if !(tau < c_r) {
        return Err(Error::TauTooLarge {
            tau: tau.to_f64().unwrap_or(f64::NAN),
            limit: c_r.to_f64().unwrap_or(f64::NAN),
        });
    }
    if input.p_prev.grid() != ctx.grid() || input.f_k.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *ctx.grid();
    let f_norm = input.f_k.norm_l2();
    let tol_l2 = tol * (T::one() + f_norm);
    let sqrt_vol = grid.cell_volume().sqrt();

    let (p_k, u_k, iterations, solver_residual);
    if cfg.is_fully_quadratic() {
        // joint SPD system in (u, p)
        let nu = 3 * grid.n_nodes();
        let np = 9 * grid.n_nodes();
        let inv_tau = T::one() / tau;
        let two = real::<T>(2.0);

        let apply = |x: &[T], y: &mut [T]| {
            let u = VectorField::from_data(&grid, x[..nu].to_vec()).expect("dof count");
            let p = MatrixField::from_data(&grid, x[nu..].to_vec()).expect("dof count");
            let du = ctx.grad_vec(&u).expect("grid");
            let mut stress = MatrixField::zeros(&grid);
            let mut out_p = MatrixField::zeros(&grid);
            for n in 0..grid.n_nodes() {
                let e = du.mat_at(n).sub(&p.mat_at(n)).sym();
                let ce = cfg.q_gradient(&e);
                let mut s = ce;
                if cfg.he_coeff != T::zero() {
                    s = s.add(&cfg.he_gradient(&du.mat_at(n).sym()));
                }
                stress.set_mat(n, s);
                let mut gp = ce.scale(-T::one());
                gp = gp.add(&p.mat_at(n).scale(cfg.hp_coeff + cfg.visc * inv_tau));
                out_p.set_mat(n, gp);
            }
            let mut out_u = ctx.grad_vec_adjoint(&stress).expect("grid");
            if grid.topology() == Topology::Box {
                out_u.apply_dirichlet_mask_in_place();
            }
            let curl = ctx.curl_mat(&p).expect("grid");
            let curl_t = ctx.curl_mat_adjoint(&curl).expect("grid");
            out_p.axpy(two, &curl_t);
            if cfg.delta > T::zero() {
                // r = 2 on this path
                let gg = ctx.grad_grad_adjoint(&p).expect("grid");
                out_p.axpy(two * cfg.delta, &gg);
            }
            let out_p = mask_p(cfg, &out_p);
            y[..nu].copy_from_slice(out_u.data());
            y[nu..].copy_from_slice(out_p.data());
        };

        let f_adm = project_admissible(ctx, input.f_k)?;
        let b_p = mask_p(cfg, &input.p_prev.scaled(cfg.visc / tau));
        let mut b = vec![T::zero(); nu + np];
        b[..nu].copy_from_slice(f_adm.data());
        b[nu..].copy_from_slice(b_p.data());

        let mut x = vec![T::zero(); nu + np];
        let u0 = project_admissible(ctx, input.u_prev)?;
        x[..nu].copy_from_slice(u0.data());
        x[nu..].copy_from_slice(mask_p(cfg, input.p_prev).data());

        let outcome = conjugate_gradient(apply, &b, &mut x, tol_l2 / sqrt_vol, 10 * (nu + np));
        if !outcome.converged {
            return Err(Error::NoConvergence {
                solver: "incremental CG",
                residual: (outcome.residual * sqrt_vol).to_f64().unwrap_or(f64::NAN),
                iterations: outcome.iterations,
            });
        }
        u_k = VectorField::from_data(&grid, x[..nu].to_vec())?;
        p_k = MatrixField::from_data(&grid, x[nu..].to_vec())?;
        iterations = outcome.iterations;
        solver_residual = outcome.residual * sqrt_vol;
    } else {
        // reduced Barzilai-Borwein descent; each evaluation re-solves the
        // inner problem warm-started from the last minimizer
        let inner_tol = tol * real::<T>(0.05);
        let p_prev = mask_p(cfg, input.p_prev);
        let u_cell = std::cell::RefCell::new(input.u_prev.clone());
        let iter_cell = std::cell::Cell::new(0usize);
        let value_grad = |x: &[T], g: &mut [T]| -> T {
            let p = MatrixField::from_data(&grid, x.to_vec()).expect("dof count");
            let warm = u_cell.borrow().clone();
            let inner: InnerSolveResult<T> =
                solve_inner_warm(ctx, cfg, &p, input.f_k, inner_tol, Some(&warm))
                    .expect("inner solve inside step");
            iter_cell.set(iter_cell.get() + inner.iterations);
            *u_cell.borrow_mut() = inner.u.clone();
            let rate = p.sub(&p_prev).scaled(T::one() / tau);
            let value = inner.value
                + crate::energies::eval_wp(ctx, cfg, &p).expect("grid")
                + tau * eval_r_functional(cfg, &rate);
            let mut grad = grad_e_in_p(ctx, cfg, &inner.u, &p).expect("grid");
            grad.axpy(T::one(), &grad_r_field(cfg, &rate));
            let grad = mask_p(cfg, &grad);
            g.copy_from_slice(grad.data());
            value
        };
        let mut x = p_prev.data().to_vec();
        let outcome = crate::solver::bb_descent(value_grad, &mut x, tol_l2 / sqrt_vol, 20_000);
        if !outcome.converged {
            return Err(Error::NoConvergence {
                solver: "incremental BB",
                residual: (outcome.residual * sqrt_vol).to_f64().unwrap_or(f64::NAN),
                iterations: outcome.iterations,
            });
        }
        p_k = MatrixField::from_data(&grid, x)?;
        let warm = u_cell.borrow().clone();
        let final_inner = solve_inner_warm(ctx, cfg, &p_k, input.f_k, inner_tol, Some(&warm))?;
        u_k = final_inner.u;
        iterations = outcome.iterations + iter_cell.get() + final_inner.iterations;
        solver_residual = outcome.residual * sqrt_vol;
    }

    // flow rule: Sigma_k = R'((p_k - p_{k-1}) / tau), single-valued
    let rate = p_k.sub(input.p_prev).scaled(T::one() / tau);
    let sigma = grad_r_field(cfg, &rate);

    let energy = energy_value(ctx, cfg, &u_k, &p_k, input.f_k)?;
    let r_increment = tau * eval_r_functional(cfg, &rate);
    let rstar_increment = tau * eval_rstar_functional(cfg, &sigma);
    let flow_pairing = tau * inner_product(&sigma, &rate)?;
    let fenchel_gap = r_increment + rstar_increment - flow_pairing;

    let df = input.f_k.sub(input.f_prev);
    let energy_slack = energy.total + r_increment + rstar_increment - input.energy_prev
        + inner_product(&df, input.u_prev)?;

    let mut stat = grad_e_in_p(ctx, cfg, &u_k, &p_k)?;
    stat.axpy(T::one(), &sigma);
    let stationarity_residual = mask_p(cfg, &stat).norm_l2() / (T::one() + f_norm);

    Ok(StepOutcome {
        diagnostics: StepDiagnostics {
            t: T::zero(), // caller stamps the time
            energy,
            r_increment,
            rstar_increment,
            flow_pairing,
            fenchel_gap,
            energy_slack,
            stationarity_residual,
            solver_residual,
            iterations,
        },
        p: p_k,
        u: u_k,
        sigma,
    })
}

/// Failure marker carried by a partial trajectory.
#[derive(Clone, Debug)]
pub struct StepFailure {
    pub step: usize,
    pub message: String,
}

/// Full record of a run: states, loads, and the per-step ledger.
pub struct TrajectoryRecord<T> {
    pub times: Vec<T>,
    /// `p_k` for `k = 0..=N_completed`.
    pub p: Vec<MatrixField<T>>,
    /// Inner minimizers `u_k`, same indexing as `p`.
    pub u: Vec<VectorField<T>>,
    /// `Sigma_k` for `k = 1..=N_completed` (index `k - 1`).
    pub sigma: Vec<MatrixField<T>>,
    pub loads: DiscreteLoads<T>,
    /// Ledger rows for `k = 1..=N_completed`.
    pub steps: Vec<StepDiagnostics<T>>,
    /// Energy split at the initial state.
    pub energy0: EnergyValue<T>,
    /// `L^2` distance moved by the initial state-space projection.
    pub p0_projection_distance: T,
    pub failure: Option<StepFailure>,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.steps.len() == self.loads.n_steps
    }

    pub fn n_completed(&self) -> usize {
        self.steps.len()
    }

    /// `max_k W(grad u_k, p_k) + sum_k tau {R + R*}` — the discrete
    /// a priori quantity that must stay bounded uniformly in `N`.
    pub fn apriori_quantity(&self) -> T {
        let w0 = self.energy0.total + self.energy0.load_work;
        let mut max_w = w0;
        let mut dissipation = T::zero();
        for s in &self.steps {
            let w = s.energy.total + s.energy.load_work;
            max_w = max_w.max(w);
            dissipation += s.r_increment + s.rstar_increment;
        }
        max_w + dissipation
    }
}

/// Run the scheme from an initial plastic strain.
///
/// Hard preconditions (`tau >= c_R`, bad `N`) fail fast; a step that stops
/// converging mid-run returns the partial trajectory with a failure
/// marker.
pub fn run<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    schedule: &LoadSchedule<T>,
    p0: &MatrixField<T>,
    n_steps: usize,
    tol: T,
) -> Result<TrajectoryRecord<T>> {
    cfg.validate()?;
    if p0.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let loads = discretize_loads(ctx, schedule, n_steps)?;
    let tau = loads.tau;
    let c_r = cfg.c_r_lower();
    if !(tau < c_r) {
        return Err(Error::TauTooLarge {
            tau: tau.to_f64().unwrap_or(f64::NAN),
            limit: c_r.to_f64().unwrap_or(f64::NAN),
        });
    }

    let p_init = mask_p(cfg, p0);
    let p0_projection_distance = p0.sub(&p_init).norm_l2();
    let inner0 = solve_inner_warm(ctx, cfg, &p_init, &loads.f[0], tol, None)?;
    let energy0 = energy_value(ctx, cfg, &inner0.u, &p_init, &loads.f[0])?;

    let mut traj = TrajectoryRecord {
        times: vec![T::zero()],
        p: vec![p_init],
        u: vec![inner0.u],
        sigma: Vec::new(),
        loads,
        steps: Vec::new(),
        energy0,
        p0_projection_distance,
        failure: None,
    };

    let mut energy_prev = energy0.total;
    for k in 1..=n_steps {
        let input = StepInput {
            p_prev: &traj.p[k - 1],
            u_prev: &traj.u[k - 1],
            energy_prev,
            f_prev: &traj.loads.f[k - 1],
            f_k: &traj.loads.f[k],
            tau,
        };
        match incremental_step(ctx, cfg, &input, tol) {
            Ok(mut out) => {
                out.diagnostics.t = tau * real(k as f64);
                energy_prev = out.diagnostics.energy.total;
                traj.times.push(out.diagnostics.t);
                traj.p.push(out.p);
                traj.u.push(out.u);
                traj.sigma.push(out.sigma);
                traj.steps.push(out.diagnostics);
            }
            Err(e @ Error::NoConvergence { .. }) => {
                traj.failure = Some(StepFailure {
                    step: k,
                    message: e.to_string(),
                });
                return Ok(traj);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

// ----------------------------------------------------------------------
// interpolants
// ----------------------------------------------------------------------

/// Evaluators with the exact interpolation conventions of the scheme:
/// piecewise-constant left-continuous `p_bar`, `sigma_bar`, `f_bar`;
/// piecewise-affine `p_hat`; time-shifted affine `f_hat` (built on the
/// nodes `(f_k, f_{k+1})` over `(t_{k-1}, t_k]`, with `f_{N+1} = f_N`).
pub struct InterpolantBundle<'a, T: Real> {
    traj: &'a TrajectoryRecord<T>,
}

pub fn interpolants<T: Real>(traj: &TrajectoryRecord<T>) -> Result<InterpolantBundle<'_, T>> {
    if !traj.is_complete() {
        return Err(Error::IncompleteTrajectory(
            traj.failure.as_ref().map(|f| f.step).unwrap_or(0),
        ));
    }
    Ok(InterpolantBundle { traj })
}

impl<'a, T: Real> InterpolantBundle<'a, T> {
    /// Interval index `k in 1..=N` with `t in (t_{k-1}, t_k]`, plus the
    /// affine weight `mu in [0, 1]` inside the interval.
    fn locate(&self, t: T) -> (usize, T) {
        let n = self.traj.loads.n_steps;
        let tau = self.traj.loads.tau;
        if t <= T::zero() {
            return (1, T::zero());
        }
        let raw = (t / tau).ceil().to_f64().unwrap_or(1.0) as usize;
        let k = raw.clamp(1, n);
        let t_prev = tau * real((k - 1) as f64);
        let mu = ((t - t_prev) / tau).max(T::zero()).min(T::one());
        (k, mu)
    }

    pub fn p_bar(&self, t: T) -> MatrixField<T> {
        if t <= T::zero() {
            return self.traj.p[0].clone();
        }
        let (k, _) = self.locate(t);
        self.traj.p[k].clone()
    }

    pub fn p_hat(&self, t: T) -> MatrixField<T> {
        let (k, mu) = self.locate(t);
        let mut out = self.traj.p[k - 1].scaled(T::one() - mu);
        out.axpy(mu, &self.traj.p[k]);
        out
    }

    /// Slope of `p_hat` inside the interval containing `t`.
    pub fn p_hat_rate(&self, t: T) -> MatrixField<T> {
        let (k, _) = self.locate(t);
        self.traj.p[k]
            .sub(&self.traj.p[k - 1])
            .scaled(T::one() / self.traj.loads.tau)
    }

    pub fn sigma_bar(&self, t: T) -> MatrixField<T> {
        let (k, _) = self.locate(t);
        self.traj.sigma[k - 1].clone()
    }

    pub fn f_bar(&self, t: T) -> VectorField<T> {
        if t <= T::zero() {
            return self.traj.loads.f[0].clone();
        }
        let (k, _) = self.locate(t);
        self.traj.loads.f[k].clone()
    }

    pub fn f_hat(&self, t: T) -> VectorField<T> {
        let n = self.traj.loads.n_steps;
        let (k, mu) = self.locate(t);
        let f_k = &self.traj.loads.f[k];
        let f_next = &self.traj.loads.f[(k + 1).min(n)];
        let mut out = f_k.scaled(T::one() - mu);
        out.axpy(mu, f_next);
        out
    }
}

/// Time-shift compactness table: for each shift `rho = j tau`,
/// `S(rho) = sum_{k=1}^{N-j} tau ||p_{k+j} - p_k||^2_{L^2}`, together with
/// the fitted constant `max_j S(rho_j) / rho_j^2`.
pub fn time_shift_norms<T: Real>(traj: &TrajectoryRecord<T>) -> Result<(Vec<(T, T)>, T)> {
    if !traj.is_complete() {
        return Err(Error::IncompleteTrajectory(
            traj.failure.as_ref().map(|f| f.step).unwrap_or(0),
        ));
    }
    let n = traj.loads.n_steps;
    let tau = traj.loads.tau;
    let mut table = Vec::new();
    let mut fitted = T::zero();
    for j in 1..n {
        let rho = tau * real(j as f64);
        let mut s = T::zero();
        for k in 1..=(n - j) {
            let d = traj.p[k + j].sub(&traj.p[k]).norm_l2();
            s += tau * d * d;
        }
        fitted = fitted.max(s / (rho * rho));
        table.push((rho, s));
    }
    Ok((table, fitted))
}

/// `L^2(0,T; L^2)` distance between the affine interpolants of two
/// trajectories on a common grid and horizon (Simpson per merged
/// subinterval, exact for the piecewise-quadratic integrand).
pub fn interpolant_cauchy_distance<T: Real>(
    a: &TrajectoryRecord<T>,
    b: &TrajectoryRecord<T>,
) -> Result<T> {
    let ia = interpolants(a)?;
    let ib = interpolants(b)?;
    if a.p[0].grid() != b.p[0].grid() {
        return Err(Error::GridMismatch);
    }
    let t_end = a.loads.horizon;
    if ((t_end - b.loads.horizon) / t_end).abs() > real(1e-12) {
        return Err(Error::LengthMismatch("horizons differ".into()));
    }
    let mut breaks: Vec<T> = Vec::new();
    for k in 0..=a.loads.n_steps {
        breaks.push(a.loads.tau * real(k as f64));
    }
    for k in 0..=b.loads.n_steps {
        breaks.push(b.loads.tau * real(k as f64));
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup_by(|x, y| (*x - *y).abs() <= real::<T>(1e-14) * t_end);
    let sq_norm = |t: T| -> T {
        let d = ia.p_hat(t).sub(&ib.p_hat(t));
        let n = d.norm_l2();
        n * n
    };
    let mut total = T::zero();
    let sixth = real::<T>(1.0 / 6.0);
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        if !(len > T::zero()) {
            continue;
        }
        let mid = (lo + hi) * real(0.5);
        total += len * sixth * (sq_norm(lo) + real::<T>(4.0) * sq_norm(mid) + sq_norm(hi));
    }
    Ok(total.sqrt())
}

/// Write the trajectory ledger as CSV: one row per step with the time,
/// energy components, dissipation increments and certificate residuals.
/// The `divergence` column is blank outside the reduced configuration.
pub fn write_ledger_csv<T: Real>(
    traj: &TrajectoryRecord<T>,
    divergence: Option<&[T]>,
    mut out: impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(
        out,
        "k,t,elastic,plastic_hp,plastic_curl,plastic_grad,load_work,marginal_energy,\
         r_increment,rstar_increment,fenchel_gap,energy_slack,stationarity_residual,\
         divergence_residual,solver_residual,iterations"
    )?;
    let f = |x: T| x.to_f64().unwrap_or(f64::NAN);
    for (i, s) in traj.steps.iter().enumerate() {
        let div = divergence
            .and_then(|d| d.get(i))
            .map(|v| format!("{}", f(*v)))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            f(s.t),
            f(s.energy.elastic),
            f(s.energy.plastic_hp),
            f(s.energy.plastic_curl),
            f(s.energy.plastic_grad),
            f(s.energy.load_work),
            f(s.energy.total),
            f(s.r_increment),
            f(s.rstar_increment),
            f(s.fenchel_gap),
            f(s.energy_slack),
            f(s.stationarity_residual),
            div,
            f(s.solver_residual),
            s.iterations
        )?;
    }
    Ok(())
}

/// Per-step divergence residuals `||div Sigma_k + f_k|| / (1 + ||f_k||)`;
/// only meaningful (and only allowed) in the `delta = 0`, `H_e = H_p = 0`
/// configuration, where `-div Sigma_k = f_k` holds exactly in the limit.
pub fn divergence_certificate<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    traj: &TrajectoryRecord<T>,
) -> Result<Vec<T>> {
    if cfg.delta != T::zero() || cfg.hp_coeff != T::zero() || cfg.he_coeff != T::zero() {
        return Err(Error::ConfigMismatch(format!(
            "delta = {}, hp = {}, he = {}",
            cfg.delta, cfg.hp_coeff, cfg.he_coeff
        )));
    }
    let mut out = Vec::with_capacity(traj.sigma.len());
    for (k, sigma) in traj.sigma.iter().enumerate() {
        let f_k = &traj.loads.f[k + 1];
        let mut div = ctx.div_mat(sigma)?;
        div.axpy(T::one(), f_k);
        out.push(div.norm_l2() / (T::one() + f_k.norm_l2()));
    }
    Ok(out)
}
