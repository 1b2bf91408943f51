//! Energy and dissipation densities and their integrated functionals.
//!
//! The defaults are the quadratic special case
//!
//! ```text
//!   Q(e) = mu |e|^2 + (lam/2) (tr e)^2        elastic density
//!   R(q) = (visc/2) |q|^2                      dissipation rate
//!   H_p(p) = (hp/2) |p|^2,  H_e(E) = (he/2) |E|^2
//! ```
//!
//! optionally augmented by convex quartic terms `(q_quartic/4)|e|^4` and
//! `(r_quartic/4)|q|^4` for the non-quadratic paths.  All densities are
//! smooth and strictly convex where it matters, so the dual `R*` and the
//! flow-rule subdifferential are single-valued and computable; `R*` has a
//! closed form in the quadratic case and is evaluated through a 1-D
//! monotone Newton inversion otherwise.
//!
//! Quadrature is single-point nodal (node sum times cell volume),
//! consistent with the finite-difference operators, and every functional
//! gradient returned here is the exact gradient of the discrete
//! functional, which the finite-difference oracles in the tests verify.

use crate::field::{inner_product, Mat3, MatrixField, VectorField};
use crate::operators::OperatorContext;
use crate::{real, Error, Real, Result};

/// Parameters of the energy quadruple `(Q, R, H_e, H_p)` plus the
/// gradient-term knobs `delta` and `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyConfig<T> {
    /// Shear-like coefficient of `Q`; stress units.
    pub mu: T,
    /// Volumetric coefficient of `Q`; stress units.
    pub lam: T,
    /// Viscosity coefficient `a` of `R(q) = (a/2)|q|^2`; stress * time.
    pub visc: T,
    /// Hardening coefficient of `H_p`.
    pub hp_coeff: T,
    /// Coefficient of `H_e`.
    pub he_coeff: T,
    /// Weight of the `|grad p|^r` term.
    pub delta: T,
    /// Gradient-term exponent, `r > 6/5`.
    pub r: T,
    /// Convex quartic augmentation of `Q` (0 for the quadratic default).
    pub q_quartic: T,
    /// Convex quartic augmentation of `R` (0 for the quadratic default).
    pub r_quartic: T,
}

impl<T: Real> Default for EnergyConfig<T> {
    /// The `H_e = 0, H_p = 0, r = 2` special case with unit coefficients.
    fn default() -> Self {
        EnergyConfig {
            mu: T::one(),
            lam: T::zero(),
            visc: T::one(),
            hp_coeff: T::zero(),
            he_coeff: T::zero(),
            delta: T::zero(),
            r: real(2.0),
            q_quartic: T::zero(),
            r_quartic: T::zero(),
        }
    }
}

/// Declared quadratic-growth constants, checked by sampling on a ball of
/// the given radius at validation time.
#[derive(Clone, Copy, Debug)]
pub struct GrowthCertificate<T> {
    pub c_q: T,
    pub big_c_q: T,
    pub c_r: T,
    pub big_c_r: T,
    pub c_rstar: T,
    pub big_c_rstar: T,
    pub radius: T,
}

const GROWTH_SAMPLES: usize = 10_000;
const GROWTH_RADIUS: f64 = 4.0;

impl<T: Real> EnergyConfig<T> {
    /// Growth constants implied by the coefficients, declared on the
    /// sampling ball (the quartic terms are not globally quadratically
    /// bounded above, so the upper constants include the ball radius).
    pub fn growth(&self) -> GrowthCertificate<T> {
        let radius = real::<T>(GROWTH_RADIUS);
        let quarter = real::<T>(0.25);
        let half = real::<T>(0.5);
        let big_c_r = half * self.visc + quarter * self.r_quartic * radius * radius;
        GrowthCertificate {
            c_q: self.mu,
            big_c_q: self.mu
                + real::<T>(1.5) * self.lam
                + quarter * self.q_quartic * radius * radius,
            c_r: half * self.visc,
            big_c_r,
            c_rstar: T::one() / (real::<T>(4.0) * big_c_r),
            big_c_rstar: T::one() / (real::<T>(2.0) * self.visc),
            radius,
        }
    }

    /// Lower growth constant of `R`; the coercivity threshold for the
    /// incremental time step (`tau < c_R`).
    pub fn c_r_lower(&self) -> T {
        self.visc * real(0.5)
    }

    /// True when every density is quadratic and `r = 2`, which makes each
    /// incremental problem a single symmetric positive-definite system.
    pub fn is_fully_quadratic(&self) -> bool {
        self.q_quartic == T::zero() && self.r_quartic == T::zero() && self.r == real(2.0)
    }

    /// Parameter checks plus the sampled growth sandwich of the declared
    /// constants.
    pub fn validate(&self) -> Result<GrowthCertificate<T>> {
        if !(self.mu > T::zero()) {
            return Err(Error::InvalidConfig("mu must be positive".into()));
        }
        if !(self.visc > T::zero()) {
            return Err(Error::InvalidConfig("visc must be positive".into()));
        }
        for (name, v) in [
            ("lam", self.lam),
            ("hp_coeff", self.hp_coeff),
            ("he_coeff", self.he_coeff),
            ("delta", self.delta),
            ("q_quartic", self.q_quartic),
            ("r_quartic", self.r_quartic),
        ] {
            if v < T::zero() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0")));
            }
        }
        if self.r <= real(6.0 / 5.0) {
            return Err(Error::InvalidExponent(self.r.to_f64().unwrap_or(f64::NAN)));
        }
        let g = self.growth();
        let mut rng = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            real::<T>((rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
        };
        let tol = real::<T>(1e-9);
        // entries in [-radius/3, radius/3] keep the Frobenius norm inside
        // the declared sampling ball
        let entry_scale = g.radius / real(3.0);
        for sample in 0..GROWTH_SAMPLES {
            let mut m = Mat3::zero();
            for rr in 0..3 {
                for cc in 0..3 {
                    m.set(rr, cc, next() * entry_scale);
                }
            }
            let e = m.sym();
            let e2 = e.dot(&e);
            let q = self.q_density(&e);
            if q + tol < g.c_q * e2 || q > g.big_c_q * e2 + tol {
                return Err(Error::InvalidConfig(format!(
                    "growth sandwich for Q violated at sample {sample}"
                )));
            }
            let m2 = m.dot(&m);
            let rv = self.r_density(&m);
            if rv + tol < g.c_r * m2 || rv > g.big_c_r * m2 + tol {
                return Err(Error::InvalidConfig(format!(
                    "growth sandwich for R violated at sample {sample}"
                )));
            }
            let rs = self.rstar_density(&m);
            if rs + tol < g.c_rstar * m2 || rs > g.big_c_rstar * m2 + tol {
                return Err(Error::InvalidConfig(format!(
                    "growth sandwich for R* violated at sample {sample}"
                )));
            }
        }
        Ok(g)
    }

    // ------------------------------------------------------------------
    // pointwise densities
    // ------------------------------------------------------------------

    pub(crate) fn q_density(&self, e: &Mat3<T>) -> T {
        let e2 = e.dot(e);
        let tr = e.trace();
        let mut q = self.mu * e2 + real::<T>(0.5) * self.lam * tr * tr;
        if self.q_quartic != T::zero() {
            q += real::<T>(0.25) * self.q_quartic * e2 * e2;
        }
        q
    }

    pub(crate) fn q_gradient(&self, e: &Mat3<T>) -> Mat3<T> {
        let two = real::<T>(2.0);
        let mut g = e.scale(two * self.mu);
        let tr = e.trace();
        if self.lam != T::zero() {
            g = g.add(&Mat3::identity().scale(self.lam * tr));
        }
        if self.q_quartic != T::zero() {
            g = g.add(&e.scale(self.q_quartic * e.dot(e)));
        }
        g
    }

    pub(crate) fn r_density(&self, q: &Mat3<T>) -> T {
        let q2 = q.dot(q);
        let mut v = real::<T>(0.5) * self.visc * q2;
        if self.r_quartic != T::zero() {
            v += real::<T>(0.25) * self.r_quartic * q2 * q2;
        }
        v
    }

    pub(crate) fn r_gradient(&self, q: &Mat3<T>) -> Mat3<T> {
        let mut g = q.scale(self.visc);
        if self.r_quartic != T::zero() {
            g = g.add(&q.scale(self.r_quartic * q.dot(q)));
        }
        g
    }

    /// Convex dual of `R`: closed-form `|s|^2 / (2 visc)` in the quadratic
    /// case, 1-D Newton inversion of the radial profile otherwise.
    pub(crate) fn rstar_density(&self, s: &Mat3<T>) -> T {
        let t = s.norm();
        if self.r_quartic == T::zero() {
            return real::<T>(0.5) * t * t / self.visc;
        }
        let m = self.invert_r_profile(t);
        let m2 = m * m;
        t * m - (real::<T>(0.5) * self.visc * m2 + real::<T>(0.25) * self.r_quartic * m2 * m2)
    }

    /// Solve `visc*m + r_quartic*m^3 = t` for `m >= 0`.  The left side is
    /// strictly increasing and convex, so Newton from `t/visc` descends
    /// monotonically onto the root.
    fn invert_r_profile(&self, t: T) -> T {
        if t == T::zero() {
            return T::zero();
        }
        let mut m = t / self.visc;
        let three = real::<T>(3.0);
        for _ in 0..60 {
            let f = self.visc * m + self.r_quartic * m * m * m - t;
            let df = self.visc + three * self.r_quartic * m * m;
            let step = f / df;
            m -= step;
            if step.abs() <= real::<T>(1e-15) * (T::one() + m.abs()) {
                break;
            }
        }
        m
    }

    pub(crate) fn hp_density(&self, p: &Mat3<T>) -> T {
        real::<T>(0.5) * self.hp_coeff * p.dot(p)
    }

    pub(crate) fn hp_gradient(&self, p: &Mat3<T>) -> Mat3<T> {
        p.scale(self.hp_coeff)
    }

    pub(crate) fn he_density(&self, e: &Mat3<T>) -> T {
        real::<T>(0.5) * self.he_coeff * e.dot(e)
    }

    pub(crate) fn he_gradient(&self, e: &Mat3<T>) -> Mat3<T> {
        e.scale(self.he_coeff)
    }
}

/// Symmetry guard for the public pointwise API.
fn require_symmetric<T: Real>(e: &Mat3<T>) -> Result<()> {
    let asym = e.asymmetry();
    if asym > real::<T>(1e-10) * (T::one() + e.norm()) {
        return Err(Error::NonSymmetricInput(asym.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// Elastic density `Q(e)` at a symmetric matrix.
pub fn density_q<T: Real>(cfg: &EnergyConfig<T>, e: &Mat3<T>) -> Result<T> {
    require_symmetric(e)?;
    Ok(cfg.q_density(e))
}

/// Exact derivative of `Q`; symmetric for symmetric input.
pub fn grad_q<T: Real>(cfg: &EnergyConfig<T>, e: &Mat3<T>) -> Result<Mat3<T>> {
    require_symmetric(e)?;
    Ok(cfg.q_gradient(e))
}

/// Dissipation density `R(q)`.
pub fn density_r<T: Real>(cfg: &EnergyConfig<T>, q: &Mat3<T>) -> T {
    cfg.r_density(q)
}

/// Convex dual `R*(s)`; Fenchel-Young `R(q) + R*(s) >= q : s` holds with
/// equality iff `s = R'(q)`.
pub fn density_rstar<T: Real>(cfg: &EnergyConfig<T>, s: &Mat3<T>) -> T {
    cfg.rstar_density(s)
}

/// Derivative of `R`; the single-valued flow-rule map.
pub fn grad_r<T: Real>(cfg: &EnergyConfig<T>, q: &Mat3<T>) -> Mat3<T> {
    cfg.r_gradient(q)
}

// ----------------------------------------------------------------------
// integrated functionals
// ----------------------------------------------------------------------

/// Ledger entry splitting the total energy into its contributions;
/// `total = elastic + plastic_hp + plastic_curl + plastic_grad - load_work`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EnergyValue<T> {
    pub elastic: T,
    pub plastic_hp: T,
    pub plastic_curl: T,
    pub plastic_grad: T,
    pub load_work: T,
    pub total: T,
}

/// Elastic energy `int Q(sym(grad u - p)) + H_e(sym grad u)`.
pub fn eval_we<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    u: &VectorField<T>,
    p: &MatrixField<T>,
) -> Result<T> {
    if u.grid() != ctx.grid() || p.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let du = ctx.grad_vec(u)?;
    let mut acc = T::zero();
    for n in 0..p.n_nodes() {
        let g = du.mat_at(n);
        let e = g.sub(&p.mat_at(n)).sym();
        acc += cfg.q_density(&e);
        if cfg.he_coeff != T::zero() {
            acc += cfg.he_density(&g.sym());
        }
    }
    Ok(acc * ctx.grid().cell_volume())
}

/// Pointwise summands of the plastic energy, kept separate for the ledger.
pub struct PlasticEnergyParts<T> {
    pub hp: T,
    pub curl: T,
    pub grad: T,
}

pub fn eval_wp_parts<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    p: &MatrixField<T>,
) -> Result<PlasticEnergyParts<T>> {
    if p.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let vol = ctx.grid().cell_volume();
    let mut hp = T::zero();
    if cfg.hp_coeff != T::zero() {
        for n in 0..p.n_nodes() {
            hp += cfg.hp_density(&p.mat_at(n));
        }
    }
    let curl = {
        let c = ctx.curl_mat(p)?;
        inner_product(&c, &c)?
    };
    let mut grad = T::zero();
    if cfg.delta > T::zero() {
        let grads = ctx.component_gradients(p)?;
        let two = real::<T>(2.0);
        let eps2 = ctx.smoothing_eps() * ctx.smoothing_eps();
        for n in 0..p.n_nodes() {
            let mut s = T::zero();
            for g in &grads {
                for c in 0..9 {
                    let v = g.comp(n, c);
                    s += v * v;
                }
            }
            grad += if cfg.r == two {
                cfg.delta * s
            } else {
                cfg.delta * (s + eps2).powf(cfg.r / two)
            };
        }
        grad *= vol;
    }
    Ok(PlasticEnergyParts {
        hp: hp * vol,
        curl,
        grad,
    })
}

/// Plastic energy `int H_p(p) + |curl p|^2 + delta (|grad p|^2 + eps^2)^{r/2}`.
pub fn eval_wp<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    p: &MatrixField<T>,
) -> Result<T> {
    let parts = eval_wp_parts(ctx, cfg, p)?;
    Ok(parts.hp + parts.curl + parts.grad)
}

/// Dissipation functional `int R(q)`.
pub fn eval_r_functional<T: Real>(cfg: &EnergyConfig<T>, q: &MatrixField<T>) -> T {
    let mut acc = T::zero();
    for n in 0..q.n_nodes() {
        acc += cfg.r_density(&q.mat_at(n));
    }
    acc * q.grid().cell_volume()
}

/// Dual dissipation functional `int R*(s)`.
pub fn eval_rstar_functional<T: Real>(cfg: &EnergyConfig<T>, s: &MatrixField<T>) -> T {
    let mut acc = T::zero();
    for n in 0..s.n_nodes() {
        acc += cfg.rstar_density(&s.mat_at(n));
    }
    acc * s.grid().cell_volume()
}

/// Pointwise flow-rule map `q -> R'(q)` lifted to fields.
pub fn grad_r_field<T: Real>(cfg: &EnergyConfig<T>, q: &MatrixField<T>) -> MatrixField<T> {
    let mut out = q.clone();
    for n in 0..q.n_nodes() {
        out.set_mat(n, cfg.r_gradient(&q.mat_at(n)));
    }
    out
}

/// Exact `L^2` gradient of `p -> W(grad u, p)` at fixed `u`:
///
/// ```text
///   -Q'(sym(grad u - p)) + H_p'(p) + 2 curl^T curl p + (r-Laplacian term)
/// ```
///
/// The back-stress is the negative of this field.  On periodic grids the
/// transpose operators coincide with the forward ones, recovering the
/// strong form `Sigma = sigma - 2 curl curl p + delta Lap_r p`.
pub fn grad_e_in_p<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    u: &VectorField<T>,
    p: &MatrixField<T>,
) -> Result<MatrixField<T>> {
    if u.grid() != ctx.grid() || p.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let du = ctx.grad_vec(u)?;
    let mut out = MatrixField::zeros(ctx.grid());
    for n in 0..p.n_nodes() {
        let e = du.mat_at(n).sub(&p.mat_at(n)).sym();
        let mut g = cfg.q_gradient(&e).scale(-T::one());
        if cfg.hp_coeff != T::zero() {
            g = g.add(&cfg.hp_gradient(&p.mat_at(n)));
        }
        out.set_mat(n, g);
    }
    let curl = ctx.curl_mat(p)?;
    let curl_t = ctx.curl_mat_adjoint(&curl)?;
    out.axpy(real(2.0), &curl_t);
    if cfg.delta > T::zero() {
        let rl = ctx.rlaplacian_term(p, cfg.delta, cfg.r)?;
        out.axpy(T::one(), &rl);
    }
    Ok(out)
}

/// Full energy ledger at a state `(u, p)` under load `f`.
pub fn energy_value<T: Real>(
    ctx: &OperatorContext<T>,
    cfg: &EnergyConfig<T>,
    u: &VectorField<T>,
    p: &MatrixField<T>,
    f: &VectorField<T>,
) -> Result<EnergyValue<T>> {
    let elastic = eval_we(ctx, cfg, u, p)?;
    let parts = eval_wp_parts(ctx, cfg, p)?;
    let load_work = inner_product(f, u)?;
    Ok(EnergyValue {
        elastic,
        plastic_hp: parts.hp,
        plastic_curl: parts.curl,
        plastic_grad: parts.grad,
        load_work,
        total: elastic + parts.hp + parts.curl + parts.grad - load_work,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{mode_matrix, mode_vector};
    use crate::grid::{make_grid, GridSpec};
    use crate::Topology;

    fn ctx(n: usize) -> OperatorContext<f64> {
        let g = make_grid(&GridSpec::cube(n, 1.0 / n as f64, Topology::Periodic, None)).unwrap();
        OperatorContext::default_for(g)
    }

    fn rand_mat(seed: &mut u64) -> Mat3<f64> {
        let mut m = Mat3::zero();
        for r in 0..3 {
            for c in 0..3 {
                *seed ^= *seed << 13;
                *seed ^= *seed >> 7;
                *seed ^= *seed << 17;
                m.set(r, c, (*seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0);
            }
        }
        m
    }

    fn rand_matrix_field(ctx: &OperatorContext<f64>, seed: u64) -> MatrixField<f64> {
        let mut s = seed;
        let mut f = MatrixField::zeros(ctx.grid());
        for n in 0..f.n_nodes() {
            let m = rand_mat(&mut s);
            f.set_mat(n, m);
        }
        f
    }

    fn rand_vector_field(ctx: &OperatorContext<f64>, seed: u64) -> VectorField<f64> {
        let mut s = seed;
        let mut f = VectorField::zeros(ctx.grid());
        for n in 0..f.n_nodes() {
            let m = rand_mat(&mut s);
            for c in 0..3 {
                f.set_comp(n, c, m.get(0, c));
            }
        }
        f
    }

    #[test]
    fn default_config_validates() {
        let cfg = EnergyConfig::<f64>::default();
        let g = cfg.validate().unwrap();
        assert!(g.c_q <= g.big_c_q && g.c_r <= g.big_c_r);
        assert!(cfg.is_fully_quadratic());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = EnergyConfig::<f64>::default();
        cfg.mu = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnergyConfig::<f64>::default();
        cfg.r = 1.1;
        assert!(matches!(cfg.validate(), Err(Error::InvalidExponent(_))));
        let mut cfg = EnergyConfig::<f64>::default();
        cfg.hp_coeff = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn quartic_config_validates_on_ball() {
        let cfg = EnergyConfig::<f64> {
            r_quartic: 0.3,
            q_quartic: 0.2,
            lam: 0.5,
            ..Default::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn q_density_examples() {
        let cfg = EnergyConfig::<f64>::default(); // mu = 1, lam = 0
        assert_eq!(density_q(&cfg, &Mat3::zero()).unwrap(), 0.0);
        assert_eq!(grad_q(&cfg, &Mat3::zero()).unwrap(), Mat3::zero());
        let q = density_q(&cfg, &Mat3::identity()).unwrap();
        assert!((q - 3.0).abs() < 1e-14);
        let g = grad_q(&cfg, &Mat3::identity()).unwrap();
        assert!(g.sub(&Mat3::identity().scale(2.0)).norm() < 1e-14);
    }

    #[test]
    fn q_rejects_asymmetric_input() {
        let cfg = EnergyConfig::<f64>::default();
        let mut m = Mat3::zero();
        m.set(0, 1, 1.0);
        assert!(matches!(
            density_q(&cfg, &m),
            Err(Error::NonSymmetricInput(_))
        ));
    }

    #[test]
    fn grad_q_matches_finite_differences() {
        let cfg = EnergyConfig::<f64> {
            lam: 0.7,
            q_quartic: 0.4,
            ..Default::default()
        };
        let mut seed = 99u64;
        for _ in 0..20 {
            let e = rand_mat(&mut seed).sym();
            let d = rand_mat(&mut seed).sym();
            let g = grad_q(&cfg, &e).unwrap();
            let predicted = g.dot(&d);
            let h = 1e-5;
            let plus = cfg.q_density(&e.add(&d.scale(h)));
            let minus = cfg.q_density(&e.add(&d.scale(-h)));
            let observed = (plus - minus) / (2.0 * h);
            assert!((predicted - observed).abs() < 1e-8 * (1.0 + observed.abs()));
        }
    }

    #[test]
    fn quadratic_legendre_pair() {
        let cfg = EnergyConfig::<f64>::default(); // visc = 1
        let mut seed = 5u64;
        let q = rand_mat(&mut seed);
        // R(q) = |q|^2/2 = R*(q); equality in Fenchel-Young at s = q
        assert!((density_r(&cfg, &q) - 0.5 * q.dot(&q)).abs() < 1e-14);
        assert!((density_rstar(&cfg, &q) - 0.5 * q.dot(&q)).abs() < 1e-14);
        let gap = density_r(&cfg, &q) + density_rstar(&cfg, &q) - q.dot(&q);
        assert!(gap.abs() < 1e-13);
        assert_eq!(density_r(&cfg, &Mat3::zero()), 0.0);
        assert_eq!(density_rstar(&cfg, &Mat3::zero()), 0.0);
    }

    #[test]
    fn fenchel_young_gap_nonnegative_with_equality_on_flow_rule() {
        for cfg in [
            EnergyConfig::<f64> {
                visc: 1.3,
                ..Default::default()
            },
            EnergyConfig::<f64> {
                visc: 0.8,
                r_quartic: 0.5,
                ..Default::default()
            },
        ] {
            let mut seed = 17u64;
            for _ in 0..1000 {
                let q = rand_mat(&mut seed);
                let s = rand_mat(&mut seed).scale(2.0);
                let gap = density_r(&cfg, &q) + density_rstar(&cfg, &s) - q.dot(&s);
                assert!(gap >= -1e-12, "gap {gap}");
            }
            for _ in 0..50 {
                let q = rand_mat(&mut seed);
                let s = grad_r(&cfg, &q);
                let gap = density_r(&cfg, &q) + density_rstar(&cfg, &s) - q.dot(&s);
                assert!(gap.abs() < 1e-11, "equality gap {gap}");
            }
        }
    }

    #[test]
    fn densities_convex_along_segments() {
        let cfg = EnergyConfig::<f64> {
            lam: 0.4,
            q_quartic: 0.3,
            r_quartic: 0.6,
            hp_coeff: 0.2,
            he_coeff: 0.1,
            ..Default::default()
        };
        let mut seed = 23u64;
        for _ in 0..200 {
            let x = rand_mat(&mut seed).scale(2.0);
            let y = rand_mat(&mut seed).scale(2.0);
            seed ^= seed << 13;
            seed ^= seed >> 7;
            let lam = (seed >> 11) as f64 / (1u64 << 53) as f64;
            let mid = x.scale(lam).add(&y.scale(1.0 - lam));
            let combos: [(fn(&EnergyConfig<f64>, &Mat3<f64>) -> f64, bool); 4] = [
                (|c, m| c.q_density(&m.sym()), true),
                (|c, m| c.r_density(m), false),
                (|c, m| c.rstar_density(m), false),
                (|c, m| c.hp_density(m), false),
            ];
            for (f, _symmetrize) in combos {
                let lhs = f(&cfg, &mid);
                let rhs = lam * f(&cfg, &x) + (1.0 - lam) * f(&cfg, &y);
                assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn growth_sandwich_sampled() {
        let cfg = EnergyConfig::<f64> {
            lam: 0.9,
            visc: 1.4,
            r_quartic: 0.2,
            ..Default::default()
        };
        // validate() itself runs the 10^4-sample sandwich
        cfg.validate().unwrap();
    }

    #[test]
    fn we_vanishes_when_plastic_strain_accommodates() {
        let c = ctx(8);
        let cfg = EnergyConfig::<f64>::default();
        let u0 = VectorField::zeros(c.grid());
        let p0 = MatrixField::zeros(c.grid());
        assert_eq!(eval_we(&c, &cfg, &u0, &p0).unwrap(), 0.0);

        let u = mode_vector(c.grid(), 0, [1, 1, 0], false, 0.8);
        let p = c.grad_vec(&u).unwrap();
        let we = eval_we(&c, &cfg, &u, &p).unwrap();
        assert!(we.abs() < 1e-24, "Q argument vanishes: {we}");
    }

    #[test]
    fn we_matches_direct_summation_oracle() {
        let c = ctx(4);
        let cfg = EnergyConfig::<f64> {
            lam: 0.3,
            he_coeff: 0.2,
            ..Default::default()
        };
        let u = rand_vector_field(&c, 301);
        let p = rand_matrix_field(&c, 302);
        let value = eval_we(&c, &cfg, &u, &p).unwrap();
        // oracle: independent nodewise loop over the same density algebra
        let du = c.grad_vec(&u).unwrap();
        let mut oracle = 0.0;
        for n in 0..p.n_nodes() {
            let g = du.mat_at(n);
            let mut e = [0.0; 9];
            for r in 0..3 {
                for cc in 0..3 {
                    e[3 * r + cc] = 0.5
                        * ((g.get(r, cc) - p.mat_at(n).get(r, cc))
                            + (g.get(cc, r) - p.mat_at(n).get(cc, r)));
                }
            }
            let mut e2 = 0.0;
            for v in e {
                e2 += v * v;
            }
            let tr = e[0] + e[4] + e[8];
            oracle += cfg.mu * e2 + 0.5 * cfg.lam * tr * tr;
            let mut s2 = 0.0;
            for r in 0..3 {
                for cc in 0..3 {
                    s2 += (0.5 * (g.get(r, cc) + g.get(cc, r))).powi(2);
                }
            }
            oracle += 0.5 * cfg.he_coeff * s2;
        }
        oracle *= c.grid().cell_volume();
        assert!((value - oracle).abs() < 1e-12 * (1.0 + oracle.abs()));
    }

    #[test]
    fn wp_examples() {
        let c = ctx(8);
        let cfg = EnergyConfig::<f64>::default();
        let zero = MatrixField::zeros(c.grid());
        assert!(eval_wp(&c, &cfg, &zero).unwrap().abs() <= 1e-10);

        // gradient fields are curl-free
        let u = mode_vector(c.grid(), 1, [2, 0, 1], true, 1.1);
        let p = c.grad_vec(&u).unwrap();
        let wp = eval_wp(&c, &cfg, &p).unwrap();
        assert!(wp.abs() < 1e-11 * (1.0 + p.norm_l2()));

        // Fourier mode: |curl p|^2 has a closed form
        let p = mode_matrix(c.grid(), 0, 2, [0, 1, 0], false, 1.0);
        // row 0 = (0, 0, sin(2 pi y)): curl row 0 = (2 pi cos(2 pi y), 0, 0)
        let wp = eval_wp(&c, &cfg, &p).unwrap();
        let expect = 0.5 * (2.0 * std::f64::consts::PI).powi(2); // mean of cos^2 = 1/2 on unit torus
        assert!((wp - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn functional_fenchel_young_and_oracle() {
        let c = ctx(4);
        let cfg = EnergyConfig::<f64> {
            visc: 1.2,
            ..Default::default()
        };
        let q = rand_matrix_field(&c, 77);
        assert_eq!(eval_r_functional(&cfg, &MatrixField::zeros(c.grid())), 0.0);

        // equality at S = visc * q
        let s = q.scaled(cfg.visc);
        let lhs = eval_r_functional(&cfg, &q) + eval_rstar_functional(&cfg, &s);
        let rhs = inner_product(&s, &q).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));

        // direct summation oracle
        let mut oracle = 0.0;
        for n in 0..q.n_nodes() {
            let m = q.mat_at(n);
            oracle += 0.5 * cfg.visc * m.dot(&m);
        }
        oracle *= c.grid().cell_volume();
        assert!((eval_r_functional(&cfg, &q) - oracle).abs() < 1e-12 * (1.0 + oracle));
    }

    #[test]
    fn grad_e_in_p_zero_state() {
        let c = ctx(4);
        let cfg = EnergyConfig::<f64>::default();
        let u = VectorField::zeros(c.grid());
        let p = MatrixField::zeros(c.grid());
        let g = grad_e_in_p(&c, &cfg, &u, &p).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn grad_e_in_p_matches_directional_derivative() {
        let c = ctx(6);
        for cfg in [
            EnergyConfig::<f64> {
                hp_coeff: 0.3,
                lam: 0.2,
                ..Default::default()
            },
            EnergyConfig::<f64> {
                delta: 0.15,
                r: 1.5,
                q_quartic: 0.2,
                ..Default::default()
            },
        ] {
            let u = rand_vector_field(&c, 401).scaled(0.5);
            let p = rand_matrix_field(&c, 402).scaled(0.5);
            let q = rand_matrix_field(&c, 403);
            let g = grad_e_in_p(&c, &cfg, &u, &p).unwrap();
            let predicted = inner_product(&g, &q).unwrap();
            let energy = |p: &MatrixField<f64>| {
                eval_we(&c, &cfg, &u, p).unwrap() + eval_wp(&c, &cfg, p).unwrap()
            };
            let h = 1e-5;
            let observed = (energy(&p.add(&q.scaled(h))) - energy(&p.add(&q.scaled(-h))))
                / (2.0 * h);
            assert!(
                (predicted - observed).abs() < 1e-6 * (1.0 + observed.abs()),
                "{predicted} vs {observed}"
            );
        }
    }

    #[test]
    fn back_stress_divergence_reduces_to_curl_part() {
        // with delta = 0, H_p = 0 the divergence of grad_E_in_p + Q'-part
        // is the divergence of 2 curl curl p, which vanishes spectrally
        let c = ctx(8);
        let cfg = EnergyConfig::<f64>::default();
        let u = rand_vector_field(&c, 501).scaled(0.3);
        let p = rand_matrix_field(&c, 502).scaled(0.3);
        let g = grad_e_in_p(&c, &cfg, &u, &p).unwrap();
        let du = c.grad_vec(&u).unwrap();
        let mut qpart = MatrixField::zeros(c.grid());
        for n in 0..p.n_nodes() {
            let e = du.mat_at(n).sub(&p.mat_at(n)).sym();
            qpart.set_mat(n, cfg.q_gradient(&e));
        }
        let div = c.div_mat(&g.add(&qpart)).unwrap();
        assert!(div.max_abs() < 1e-10 * (1.0 + g.max_abs()));
    }

    #[test]
    fn quadratic_energy_is_nonnegative_form() {
        let c = ctx(4);
        let cfg = EnergyConfig::<f64> {
            lam: 0.5,
            hp_coeff: 0.1,
            he_coeff: 0.05,
            delta: 0.1,
            ..Default::default()
        };
        for seed in 0..1000 {
            let u = rand_vector_field(&c, 1000 + seed);
            let p = rand_matrix_field(&c, 2000 + seed);
            let w = eval_we(&c, &cfg, &u, &p).unwrap() + eval_wp(&c, &cfg, &p).unwrap();
            assert!(w >= -1e-12, "seed {seed}: {w}");
        }
    }

    #[test]
    fn energy_value_totals_are_consistent() {
        let c = ctx(4);
        let cfg = EnergyConfig::<f64> {
            hp_coeff: 0.2,
            delta: 0.1,
            ..Default::default()
        };
        let u = rand_vector_field(&c, 601);
        let p = rand_matrix_field(&c, 602);
        let f = rand_vector_field(&c, 603);
        let ev = energy_value(&c, &cfg, &u, &p, &f).unwrap();
        let total =
            ev.elastic + ev.plastic_hp + ev.plastic_curl + ev.plastic_grad - ev.load_work;
        assert!((ev.total - total).abs() < 1e-14 * (1.0 + total.abs()));
        assert!(ev.elastic >= 0.0 && ev.plastic_hp >= 0.0 && ev.plastic_curl >= 0.0);
    }
}
