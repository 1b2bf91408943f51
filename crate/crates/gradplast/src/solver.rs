//! Flat-vector conjugate-gradient and Barzilai-Borwein kernels shared by
//! the inner elasticity solve and the incremental step.
//!
//! Both solvers work on plain slices; callers pack fields, fold masks and
//! projections into the operator / gradient closures, and translate the
//! Euclidean residual norms to `L^2` norms themselves.

use crate::Real;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        s += *x * *y;
    }
    s
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub(crate) fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += alpha * *xv;
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct SolveOutcome<T> {
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
}

/// Conjugate gradients on a symmetric positive-definite operator.
///
/// `x` holds the start vector and is overwritten with the solution; the
/// returned residual is the Euclidean norm of `b - A x`.
pub(crate) fn conjugate_gradient<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    tol_abs: T,
    max_iter: usize,
) -> SolveOutcome<T> {
    let n = b.len();
    let mut ax = vec![T::zero(); n];
    apply(x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(ax.iter()).map(|(bv, av)| *bv - *av).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut res = rr.sqrt();
    if res <= tol_abs {
        return SolveOutcome {
            iterations: 0,
            residual: res,
            converged: true,
        };
    }
    let mut ap = vec![T::zero(); n];
    for iter in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            // operator lost positive-definiteness (or p ~ 0); bail out
            return SolveOutcome {
                iterations: iter,
                residual: res,
                converged: false,
            };
        }
        let alpha = rr / pap;
        axpy(x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = dot(&r, &r);
        res = rr_new.sqrt();
        if res <= tol_abs {
            return SolveOutcome {
                iterations: iter,
                residual: res,
                converged: true,
            };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pv, rv) in p.iter_mut().zip(r.iter()) {
            *pv = *rv + beta * *pv;
        }
    }
    SolveOutcome {
        iterations: max_iter,
        residual: res,
        converged: false,
    }
}

/// Barzilai-Borwein descent with Armijo backtracking on a smooth convex
/// objective.  `value_grad` must return the objective and write the
/// (projected) gradient; iterates stay in the feasible subspace as long as
/// the start vector does and the gradient is projected.
pub(crate) fn bb_descent<T: Real>(
    mut value_grad: impl FnMut(&[T], &mut [T]) -> T,
    x: &mut Vec<T>,
    tol_abs: T,
    max_iter: usize,
) -> SolveOutcome<T> {
    let n = x.len();
    let mut g = vec![T::zero(); n];
    let mut fx = value_grad(x, &mut g);
    let mut gnorm = norm(&g);
    if gnorm <= tol_abs {
        return SolveOutcome {
            iterations: 0,
            residual: gnorm,
            converged: true,
        };
    }
    let mut x_old = x.clone();
    let mut g_old = g.clone();
    let mut alpha = T::one() / (T::one() + gnorm);
    let armijo = crate::real::<T>(1e-4);
    let half = crate::real::<T>(0.5);
    let mut trial = vec![T::zero(); n];
    let mut g_trial = vec![T::zero(); n];
    for iter in 1..=max_iter {
        // backtracked step along the negative gradient
        let mut step = alpha;
        let mut accepted = false;
        for _ in 0..60 {
            trial.copy_from_slice(x);
            axpy(&mut trial, -step, &g);
            let f_trial = value_grad(&trial, &mut g_trial);
            if f_trial <= fx - armijo * step * gnorm * gnorm {
                fx = f_trial;
                accepted = true;
                break;
            }
            step *= half;
        }
        if !accepted {
            // descent stalled at line-search resolution
            return SolveOutcome {
                iterations: iter,
                residual: gnorm,
                converged: gnorm <= tol_abs,
            };
        }
        x_old.copy_from_slice(x);
        g_old.copy_from_slice(&g);
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        gnorm = norm(&g);
        if gnorm <= tol_abs {
            return SolveOutcome {
                iterations: iter,
                residual: gnorm,
                converged: true,
            };
        }
        // BB1 step length from the last secant pair
        let mut sy = T::zero();
        let mut ss = T::zero();
        for i in 0..n {
            let s = x[i] - x_old[i];
            let y = g[i] - g_old[i];
            sy += s * y;
            ss += s * s;
        }
        alpha = if sy > T::zero() && ss > T::zero() {
            (ss / sy).max(crate::real(1e-12)).min(crate::real(1e8))
        } else {
            T::one() / (T::one() + gnorm)
        };
    }
    SolveOutcome {
        iterations: max_iter,
        residual: gnorm,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_small_spd_system() {
        // A = tridiag(-1, 3, -1)
        let n = 40;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 3.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut x = vec![0.0; n];
        let out = conjugate_gradient(apply, &b, &mut x, 1e-12, 10 * n);
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn bb_minimizes_quartic() {
        // f(x) = 1/2 |x|^2 + 1/4 |x|^4 - b.x, strictly convex
        let b = [0.7, -0.4, 1.1];
        let value_grad = |x: &[f64], g: &mut [f64]| {
            let n2: f64 = x.iter().map(|v| v * v).sum();
            for i in 0..3 {
                g[i] = x[i] * (1.0 + n2) - b[i];
            }
            0.5 * n2 + 0.25 * n2 * n2 - x.iter().zip(b.iter()).map(|(x, b)| x * b).sum::<f64>()
        };
        let mut x = vec![0.0; 3];
        let out = bb_descent(value_grad, &mut x, 1e-11, 5000);
        assert!(out.converged, "residual {}", out.residual);
        // optimality: x (1 + |x|^2) = b
        let n2: f64 = x.iter().map(|v| v * v).sum();
        for i in 0..3 {
            assert!((x[i] * (1.0 + n2) - b[i]).abs() < 1e-9);
        }
    }
}
