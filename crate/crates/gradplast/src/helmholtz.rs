//! Row-wise Helmholtz decomposition of matrix fields on the periodic
//! torus, plus the div-curl pairing audit used to shadow the compensated
//! compactness argument numerically.
//!
//! Each row of the input is split in Fourier space into a gradient part
//! (projection onto the derivative multiplier), a divergence-free curl
//! part, and the discrete null part.  On even-sized axes the null space of
//! the spectral derivative contains Nyquist combinations besides the
//! constant, so the `mean` component carries the full null-mode content —
//! for inputs without Nyquist content it is the constant mode.  Potentials
//! are gauge-fixed by zero null content, which makes the decomposition
//! unique and deterministic.

use num_complex::Complex;
use serde::Serialize;

use crate::field::{inner_product, MatrixField, VectorField};
use crate::operators::OperatorContext;
use crate::{Error, Real, Result};

/// Output of [`decompose`]: `q = grad(phi) + curl(psi) + mean`, row-wise.
pub struct HelmholtzParts<T> {
    /// Row potentials: component `r` is the scalar potential of row `r`.
    pub phi: VectorField<T>,
    /// Row vector potentials with `div psi_row = 0`.
    pub psi: MatrixField<T>,
    /// Discrete null part (constant mode, plus Nyquist content on even
    /// grids).
    pub mean: MatrixField<T>,
}

/// Split a matrix field into gradient, curl and null parts (periodic
/// spectral scheme only).
pub fn decompose<T: Real>(
    ctx: &OperatorContext<T>,
    q: &MatrixField<T>,
) -> Result<HelmholtzParts<T>> {
    ctx.require_spectral()?;
    if q.grid() != ctx.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *ctx.grid();
    let [nx, ny, nz] = grid.dims();
    let mut phi = VectorField::zeros(&grid);
    let mut psi = MatrixField::zeros(&grid);
    let mut mean = MatrixField::zeros(&grid);

    let zero = Complex::new(T::zero(), T::zero());
    for row in 0..3 {
        let v: [Vec<Complex<T>>; 3] = [
            ctx.fft3(q, 3 * row),
            ctx.fft3(q, 3 * row + 1),
            ctx.fft3(q, 3 * row + 2),
        ];
        let mut phi_hat = vec![zero; grid.n_nodes()];
        let mut psi_hat = [
            vec![zero; grid.n_nodes()],
            vec![zero; grid.n_nodes()],
            vec![zero; grid.n_nodes()],
        ];
        let mut mean_hat = [
            vec![zero; grid.n_nodes()],
            vec![zero; grid.n_nodes()],
            vec![zero; grid.n_nodes()],
        ];
        for mx in 0..nx {
            for my in 0..ny {
                for mz in 0..nz {
                    let idx = (mx * ny + my) * nz + mz;
                    let kap = [ctx.kappa(0)[mx], ctx.kappa(1)[my], ctx.kappa(2)[mz]];
                    let k2 = kap[0] * kap[0] + kap[1] * kap[1] + kap[2] * kap[2];
                    let vh = [v[0][idx], v[1][idx], v[2][idx]];
                    if k2 == T::zero() {
                        for c in 0..3 {
                            mean_hat[c][idx] = vh[c];
                        }
                        continue;
                    }
                    // phi_hat = (-i kappa . v) / |kappa|^2, so grad part = i kappa phi_hat
                    let mut dot = zero;
                    for c in 0..3 {
                        // (-i k) * (a + bi) = k b - i k a
                        dot = dot
                            + Complex::new(kap[c] * vh[c].im, -(kap[c] * vh[c].re));
                    }
                    let ph = Complex::new(dot.re / k2, dot.im / k2);
                    phi_hat[idx] = ph;
                    // residual r = v - i kappa phi  (orthogonal to kappa)
                    let mut res = [zero; 3];
                    for c in 0..3 {
                        let grad_c = Complex::new(-(kap[c] * ph.im), kap[c] * ph.re);
                        res[c] = vh[c] - grad_c;
                    }
                    // psi_hat = i (kappa x r) / |kappa|^2; then i kappa x psi_hat = r
                    let cross = [
                        Complex::new(
                            kap[1] * res[2].re - kap[2] * res[1].re,
                            kap[1] * res[2].im - kap[2] * res[1].im,
                        ),
                        Complex::new(
                            kap[2] * res[0].re - kap[0] * res[2].re,
                            kap[2] * res[0].im - kap[0] * res[2].im,
                        ),
                        Complex::new(
                            kap[0] * res[1].re - kap[1] * res[0].re,
                            kap[0] * res[1].im - kap[1] * res[0].im,
                        ),
                    ];
                    for c in 0..3 {
                        psi_hat[c][idx] =
                            Complex::new(-cross[c].im / k2, cross[c].re / k2);
                    }
                }
            }
        }
        ctx.ifft3(&mut phi_hat, &mut phi, row);
        for c in 0..3 {
            ctx.ifft3(&mut psi_hat[c], &mut psi, 3 * row + c);
            ctx.ifft3(&mut mean_hat[c], &mut mean, 3 * row + c);
        }
    }
    Ok(HelmholtzParts { phi, psi, mean })
}

impl<T: Real> HelmholtzParts<T> {
    /// `grad(phi) + curl(psi) + mean`.
    pub fn reconstruct(&self, ctx: &OperatorContext<T>) -> Result<MatrixField<T>> {
        let mut out = ctx.grad_vec(&self.phi)?;
        out.axpy(T::one(), &ctx.curl_mat(&self.psi)?);
        out.axpy(T::one(), &self.mean);
        Ok(out)
    }

    /// Relative `L^2` reconstruction error against the input.
    pub fn reconstruction_error(&self, ctx: &OperatorContext<T>, q: &MatrixField<T>) -> Result<T> {
        let rec = self.reconstruct(ctx)?;
        Ok(rec.sub(q).norm_l2() / (T::one() + q.norm_l2()))
    }

    /// `<grad part, curl part>` normalized by the part norms.
    pub fn orthogonality_defect(&self, ctx: &OperatorContext<T>) -> Result<T> {
        let g = ctx.grad_vec(&self.phi)?;
        let c = ctx.curl_mat(&self.psi)?;
        let pair = inner_product(&g, &c)?;
        Ok(pair.abs() / (T::one() + g.norm_l2() * c.norm_l2()))
    }
}

/// One trajectory level of the div-curl audit: back-stress and plastic
/// strain samples with the quadrature weights of the test function.
pub struct PairingLevel<'a, T> {
    pub sigma: &'a [MatrixField<T>],
    pub p: &'a [MatrixField<T>],
    /// Weight of each sample, `w_k = integral of theta over the interval`.
    pub weights: &'a [T],
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairingLevelReport {
    /// `sum_k w_k <Sigma_k, p_k>`.
    pub pairing: f64,
    /// `max_k ||div Sigma_k||` — the divergence-control hypothesis.
    pub max_div_norm: f64,
    /// `max_k ||curl p_k||` — the curl-control hypothesis.
    pub max_curl_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DivCurlReport {
    pub levels: Vec<PairingLevelReport>,
    /// `|I_{l+1} - I_l|` for consecutive levels.
    pub cauchy_differences: Vec<f64>,
    /// Differences non-increasing across the refinement family.
    pub monotone_decreasing: bool,
}

/// Weighted pairing values of a refinement family and their Cauchy
/// differences — the numerical shadow of the global div-curl lemma.
pub fn divcurl_pairing_audit<T: Real>(
    ctx: &OperatorContext<T>,
    levels: &[PairingLevel<'_, T>],
) -> Result<DivCurlReport> {
    let mut reports = Vec::with_capacity(levels.len());
    for level in levels {
        if level.sigma.len() != level.p.len() || level.sigma.len() != level.weights.len() {
            return Err(Error::LengthMismatch(format!(
                "sigma {} / p {} / weights {}",
                level.sigma.len(),
                level.p.len(),
                level.weights.len()
            )));
        }
        let mut pairing = T::zero();
        let mut max_div = T::zero();
        let mut max_curl = T::zero();
        for ((s, p), w) in level.sigma.iter().zip(level.p.iter()).zip(level.weights) {
            pairing += *w * inner_product(s, p)?;
            max_div = max_div.max(ctx.div_mat(s)?.norm_l2());
            max_curl = max_curl.max(ctx.curl_mat(p)?.norm_l2());
        }
        reports.push(PairingLevelReport {
            pairing: pairing.to_f64().unwrap_or(f64::NAN),
            max_div_norm: max_div.to_f64().unwrap_or(f64::NAN),
            max_curl_norm: max_curl.to_f64().unwrap_or(f64::NAN),
        });
    }
    let cauchy: Vec<f64> = reports
        .windows(2)
        .map(|w| (w[1].pairing - w[0].pairing).abs())
        .collect();
    let monotone = cauchy.windows(2).all(|w| w[1] <= w[0]);
    Ok(DivCurlReport {
        levels: reports,
        cauchy_differences: cauchy,
        monotone_decreasing: monotone,
    })
}
