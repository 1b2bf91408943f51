//! Discrete differential operators on fields.
//!
//! Two schemes are provided.  `Spectral` (periodic grids only) applies
//! exact Fourier differentiation, so compatibility identities — curl of a
//! gradient, divergence of a curl-curl, skew-adjointness of each partial
//! derivative — hold to rounding error; every exactness-sensitive
//! certificate runs under this scheme.  `Centered` uses second-order
//! centered differences (one-sided second-order closures at box
//! boundaries) and carries an `O(h^2)` identity residual instead.
//!
//! Besides the forward maps, the exact transposes of the per-axis
//! derivative are exposed crate-internally: every energy gradient in the
//! crate is the exact gradient of the discrete energy it belongs to, which
//! is what the finite-difference oracles in the test suite pin down.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::field::{Field, MatrixField, VectorField};
use crate::{real, Error, Grid, Real, Result, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fourier differentiation; requires periodic topology.
    Spectral,
    /// Second-order centered differences, one-sided at box boundaries.
    Centered,
}

/// Differential structure attached to a grid: scheme choice, FFT plans and
/// wavenumber tables (periodic grids), and the smoothing parameter for the
/// non-quadratic gradient term.
pub struct OperatorContext<T: Real> {
    grid: Grid<T>,
    scheme: Scheme,
    smoothing_eps: T,
    // per-axis plans and derivative multipliers; populated when periodic
    fft_fwd: Vec<Arc<dyn Fft<T>>>,
    fft_inv: Vec<Arc<dyn Fft<T>>>,
    kappa: Vec<Vec<T>>,
}

impl<T: Real> OperatorContext<T> {
    pub fn new(grid: Grid<T>, scheme: Scheme, smoothing_eps: T) -> Result<Self> {
        if scheme == Scheme::Spectral && grid.topology() != Topology::Periodic {
            return Err(Error::TopologyUnsupported);
        }
        if !(smoothing_eps > T::zero()) {
            return Err(Error::InvalidConfig(
                "smoothing_eps must be positive".into(),
            ));
        }
        let (mut fft_fwd, mut fft_inv, mut kappa) = (Vec::new(), Vec::new(), Vec::new());
        if grid.topology() == Topology::Periodic {
            let mut planner = FftPlanner::new();
            for axis in 0..3 {
                let n = grid.dims()[axis];
                fft_fwd.push(planner.plan_fft_forward(n));
                fft_inv.push(planner.plan_fft_inverse(n));
                kappa.push(wavenumbers(n, grid.spacing(axis)));
            }
        }
        Ok(OperatorContext {
            grid,
            scheme,
            smoothing_eps,
            fft_fwd,
            fft_inv,
            kappa,
        })
    }

    /// Spectral on periodic grids, centered on boxes.
    pub fn default_for(grid: Grid<T>) -> Self {
        let scheme = match grid.topology() {
            Topology::Periodic => Scheme::Spectral,
            Topology::Box => Scheme::Centered,
        };
        Self::new(grid, scheme, real(1e-8)).expect("default context is always valid")
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn smoothing_eps(&self) -> T {
        self.smoothing_eps
    }

    fn check_grid<const C: usize>(&self, f: &Field<T, C>) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // per-axis derivative kernel
    // ------------------------------------------------------------------

    /// `out[out_comp] (+)= sign * d_axis src[comp]`, with `transpose`
    /// selecting the exact transpose of the derivative matrix.
    fn axis_diff<const CIN: usize, const COUT: usize>(
        &self,
        axis: usize,
        src: &Field<T, CIN>,
        comp: usize,
        out: &mut Field<T, COUT>,
        out_comp: usize,
        sign: T,
        transpose: bool,
        accumulate: bool,
    ) {
        let [nx, ny, nz] = self.grid.dims();
        let n = self.grid.dims()[axis];
        // strides and base offsets in node units, scaled per-layout below
        let node_stride = match axis {
            0 => ny * nz,
            1 => nz,
            _ => 1,
        };
        let mut line = vec![T::zero(); n];
        let mut dline = vec![T::zero(); n];
        let mut cbuf = vec![Complex::new(T::zero(), T::zero()); n];

        let spectral = self.scheme == Scheme::Spectral;
        let periodic = self.grid.topology() == Topology::Periodic;
        let h = self.grid.spacing(axis);

        let (outer, inner) = match axis {
            0 => (ny, nz),
            1 => (nx, nz),
            _ => (nx, ny),
        };
        for a in 0..outer {
            for b in 0..inner {
                let node_base = match axis {
                    0 => a * nz + b,
                    1 => a * ny * nz + b,
                    _ => (a * ny + b) * nz,
                };
                let data = src.data();
                for (m, v) in line.iter_mut().enumerate() {
                    *v = data[(node_base + m * node_stride) * CIN + comp];
                }
                if spectral {
                    self.spectral_line(axis, &line, &mut dline, &mut cbuf, transpose);
                } else {
                    centered_line(&line, &mut dline, h, periodic, transpose);
                }
                let out_data = out.data_mut();
                for (m, v) in dline.iter().enumerate() {
                    let slot = &mut out_data[(node_base + m * node_stride) * COUT + out_comp];
                    if accumulate {
                        *slot += sign * *v;
                    } else {
                        *slot = sign * *v;
                    }
                }
            }
        }
    }

    fn spectral_line(
        &self,
        axis: usize,
        line: &[T],
        dline: &mut [T],
        cbuf: &mut [Complex<T>],
        transpose: bool,
    ) {
        let n = line.len();
        for (c, v) in cbuf.iter_mut().zip(line.iter()) {
            *c = Complex::new(*v, T::zero());
        }
        self.fft_fwd[axis].process(cbuf);
        // multiply by i*kappa (or by -i*kappa for the transpose: the
        // spectral derivative matrix is exactly skew-symmetric)
        let kap = &self.kappa[axis];
        for (c, &k) in cbuf.iter_mut().zip(kap.iter()) {
            let k = if transpose { -k } else { k };
            *c = Complex::new(-k * c.im, k * c.re);
        }
        self.fft_inv[axis].process(cbuf);
        let scale = T::one() / real::<T>(n as f64);
        for (d, c) in dline.iter_mut().zip(cbuf.iter()) {
            *d = c.re * scale;
        }
    }

    // ------------------------------------------------------------------
    // public operators
    // ------------------------------------------------------------------

    /// Deformation gradient: `(grad u)_{ij} = d_j u_i`.
    pub fn grad_vec(&self, u: &VectorField<T>) -> Result<MatrixField<T>> {
        self.check_grid(u)?;
        let mut out = MatrixField::zeros(&self.grid);
        for i in 0..3 {
            for j in 0..3 {
                self.axis_diff(j, u, i, &mut out, 3 * i + j, T::one(), false, false);
            }
        }
        Ok(out)
    }

    /// Exact transpose of [`OperatorContext::grad_vec`] in the `L^2`
    /// pairing: `(grad^T M)_i = sum_j d_j^T M_{ij}`.
    pub(crate) fn grad_vec_adjoint(&self, m: &MatrixField<T>) -> Result<VectorField<T>> {
        self.check_grid(m)?;
        let mut out = VectorField::zeros(&self.grid);
        for i in 0..3 {
            for j in 0..3 {
                self.axis_diff(j, m, 3 * i + j, &mut out, i, T::one(), true, true);
            }
        }
        Ok(out)
    }

    /// Row-wise curl: row `r` of the output is the vector curl of row `r`
    /// of `p`, with the right-handed convention `(curl v)_i = eps_ijk d_j v_k`.
    pub fn curl_mat(&self, p: &MatrixField<T>) -> Result<MatrixField<T>> {
        self.check_grid(p)?;
        let mut out = MatrixField::zeros(&self.grid);
        let one = T::one();
        for r in 0..3 {
            // (curl v)_x = d_y v_z - d_z v_y
            self.axis_diff(1, p, 3 * r + 2, &mut out, 3 * r, one, false, false);
            self.axis_diff(2, p, 3 * r + 1, &mut out, 3 * r, -one, false, true);
            // (curl v)_y = d_z v_x - d_x v_z
            self.axis_diff(2, p, 3 * r, &mut out, 3 * r + 1, one, false, false);
            self.axis_diff(0, p, 3 * r + 2, &mut out, 3 * r + 1, -one, false, true);
            // (curl v)_z = d_x v_y - d_y v_x
            self.axis_diff(0, p, 3 * r + 1, &mut out, 3 * r + 2, one, false, false);
            self.axis_diff(1, p, 3 * r, &mut out, 3 * r + 2, -one, false, true);
        }
        Ok(out)
    }

    /// Exact transpose of [`OperatorContext::curl_mat`]; coincides with it
    /// on periodic grids, differs near box boundaries.
    pub(crate) fn curl_mat_adjoint(&self, w: &MatrixField<T>) -> Result<MatrixField<T>> {
        self.check_grid(w)?;
        let mut out = MatrixField::zeros(&self.grid);
        let one = T::one();
        for r in 0..3 {
            // (curl^T w)_x = d_z^T w_y - d_y^T w_z
            self.axis_diff(2, w, 3 * r + 1, &mut out, 3 * r, one, true, false);
            self.axis_diff(1, w, 3 * r + 2, &mut out, 3 * r, -one, true, true);
            // (curl^T w)_y = d_x^T w_z - d_z^T w_x
            self.axis_diff(0, w, 3 * r + 2, &mut out, 3 * r + 1, one, true, false);
            self.axis_diff(2, w, 3 * r, &mut out, 3 * r + 1, -one, true, true);
            // (curl^T w)_z = d_y^T w_x - d_x^T w_y
            self.axis_diff(1, w, 3 * r, &mut out, 3 * r + 2, one, true, false);
            self.axis_diff(0, w, 3 * r + 1, &mut out, 3 * r + 2, -one, true, true);
        }
        Ok(out)
    }

    /// Fused `curl(curl p)`; self-adjoint and positive semidefinite on
    /// periodic grids, where `<curlcurl p, q> = <curl p, curl q>`.
    pub fn curlcurl_mat(&self, p: &MatrixField<T>) -> Result<MatrixField<T>> {
        let c = self.curl_mat(p)?;
        self.curl_mat(&c)
    }

    /// Row-wise divergence: `(div S)_i = sum_j d_j S_{ij}`.
    pub fn div_mat(&self, s: &MatrixField<T>) -> Result<VectorField<T>> {
        self.check_grid(s)?;
        let mut out = VectorField::zeros(&self.grid);
        for i in 0..3 {
            for j in 0..3 {
                self.axis_diff(j, s, 3 * i + j, &mut out, i, T::one(), false, true);
            }
        }
        Ok(out)
    }

    /// Per-axis derivatives of all nine components of `p`.
    pub(crate) fn component_gradients(&self, p: &MatrixField<T>) -> Result<[MatrixField<T>; 3]> {
        self.check_grid(p)?;
        let mut out = [
            MatrixField::zeros(&self.grid),
            MatrixField::zeros(&self.grid),
            MatrixField::zeros(&self.grid),
        ];
        for (j, g) in out.iter_mut().enumerate() {
            for c in 0..9 {
                self.axis_diff(j, p, c, g, c, T::one(), false, false);
            }
        }
        Ok(out)
    }

    /// Gradient of the smoothed gradient-energy `int delta*(|grad p|^2 +
    /// eps^2)^{r/2}`: returns `-delta div(m(|grad p|) grad p)` with
    /// `m(s) = r (s^2 + eps^2)^{(r-2)/2}`, each of the nine components of
    /// `p` treated as a scalar field and `|grad p|` the joint Frobenius
    /// norm.  Reduces exactly to `-2 delta Lap p` for `r = 2` (where the
    /// smoothing is ignored).
    pub fn rlaplacian_term(&self, p: &MatrixField<T>, delta: T, r: T) -> Result<MatrixField<T>> {
        self.check_grid(p)?;
        if r <= real(6.0 / 5.0) {
            return Err(Error::InvalidExponent(r.to_f64().unwrap_or(f64::NAN)));
        }
        if delta < T::zero() {
            return Err(Error::InvalidConfig("delta must be >= 0".into()));
        }
        let mut out = MatrixField::zeros(&self.grid);
        if delta == T::zero() {
            return Ok(out);
        }
        let grads = self.component_gradients(p)?;
        let two = real::<T>(2.0);
        // pointwise mobility delta * m(s)
        let mut mobility = vec![T::zero(); self.grid.n_nodes()];
        if r == two {
            mobility.iter_mut().for_each(|v| *v = two * delta);
        } else {
            let eps2 = self.smoothing_eps * self.smoothing_eps;
            let expo = (r - two) / two;
            for (node, mv) in mobility.iter_mut().enumerate() {
                let mut s = T::zero();
                for g in &grads {
                    for c in 0..9 {
                        let v = g.comp(node, c);
                        s += v * v;
                    }
                }
                *mv = delta * r * (s + eps2).powf(expo);
            }
        }
        for (j, g) in grads.iter().enumerate() {
            let mut weighted = g.clone();
            for node in 0..self.grid.n_nodes() {
                for c in 0..9 {
                    weighted.set_comp(node, c, g.comp(node, c) * mobility[node]);
                }
            }
            for c in 0..9 {
                self.axis_diff(j, &weighted, c, &mut out, c, T::one(), true, true);
            }
        }
        Ok(out)
    }

    /// `sum_j d_j^T (d_j p)` on all nine components; the exact gradient of
    /// `1/2 int |grad p|^2` (times two).
    pub(crate) fn grad_grad_adjoint(&self, p: &MatrixField<T>) -> Result<MatrixField<T>> {
        let grads = self.component_gradients(p)?;
        let mut out = MatrixField::zeros(&self.grid);
        for (j, g) in grads.iter().enumerate() {
            for c in 0..9 {
                self.axis_diff(j, g, c, &mut out, c, T::one(), true, true);
            }
        }
        Ok(out)
    }

    /// Scalar Laplacian-like operator for the `H^1` inner product on
    /// vector fields: `v + sum_j d_j^T d_j v` applied componentwise.
    pub(crate) fn h1_operator(&self, v: &VectorField<T>) -> Result<VectorField<T>> {
        self.check_grid(v)?;
        let mut out = v.clone();
        let mut tmp = VectorField::zeros(&self.grid);
        for i in 0..3 {
            for j in 0..3 {
                self.axis_diff(j, v, i, &mut tmp, i, T::one(), false, false);
                self.axis_diff(j, &tmp, i, &mut out, i, T::one(), true, true);
            }
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // full 3-D transforms and null-mode bookkeeping (periodic grids)
    // ------------------------------------------------------------------

    pub(crate) fn require_spectral(&self) -> Result<()> {
        if self.scheme != Scheme::Spectral {
            return Err(Error::TopologyUnsupported);
        }
        Ok(())
    }

    pub(crate) fn kappa(&self, axis: usize) -> &[T] {
        &self.kappa[axis]
    }

    /// Forward 3-D FFT of one component lane of a field.
    pub(crate) fn fft3<const C: usize>(
        &self,
        f: &Field<T, C>,
        comp: usize,
    ) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = (0..self.grid.n_nodes())
            .map(|n| Complex::new(f.comp(n, comp), T::zero()))
            .collect();
        for axis in 0..3 {
            self.fft3_pass(&mut buf, axis, false);
        }
        buf
    }

    /// Inverse 3-D FFT; writes the real part into the component lane.
    pub(crate) fn ifft3<const C: usize>(
        &self,
        buf: &mut [Complex<T>],
        f: &mut Field<T, C>,
        comp: usize,
    ) {
        for axis in 0..3 {
            self.fft3_pass(buf, axis, true);
        }
        let scale = T::one() / real::<T>(self.grid.n_nodes() as f64);
        for (n, c) in buf.iter().enumerate() {
            f.set_comp(n, comp, c.re * scale);
        }
    }

    fn fft3_pass(&self, buf: &mut [Complex<T>], axis: usize, inverse: bool) {
        let [nx, ny, nz] = self.grid.dims();
        let n = self.grid.dims()[axis];
        let stride = match axis {
            0 => ny * nz,
            1 => nz,
            _ => 1,
        };
        let (outer, inner) = match axis {
            0 => (ny, nz),
            1 => (nx, nz),
            _ => (nx, ny),
        };
        let plan = if inverse {
            &self.fft_inv[axis]
        } else {
            &self.fft_fwd[axis]
        };
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        for a in 0..outer {
            for b in 0..inner {
                let base = match axis {
                    0 => a * nz + b,
                    1 => a * ny * nz + b,
                    _ => (a * ny + b) * nz,
                };
                for (m, v) in line.iter_mut().enumerate() {
                    *v = buf[base + m * stride];
                }
                plan.process(&mut line);
                for (m, v) in line.iter().enumerate() {
                    buf[base + m * stride] = *v;
                }
            }
        }
    }

    /// Remove the discrete null modes of the derivative from a vector
    /// field.  On these modes the elastic energy is blind, so both loads
    /// and displacement iterates are kept in their orthogonal complement
    /// on periodic grids.
    pub(crate) fn project_out_null_modes(&self, v: &VectorField<T>) -> Result<VectorField<T>> {
        if self.grid.topology() != Topology::Periodic {
            return Ok(v.clone());
        }
        let [nx, ny, nz] = self.grid.dims();
        let mut out = v.clone();
        for comp in 0..3 {
            let mut buf = self.fft3(v, comp);
            for mx in 0..nx {
                if self.kappa[0][mx] != T::zero() {
                    continue;
                }
                for my in 0..ny {
                    if self.kappa[1][my] != T::zero() {
                        continue;
                    }
                    for mz in 0..nz {
                        if self.kappa[2][mz] == T::zero() {
                            buf[(mx * ny + my) * nz + mz] = Complex::new(T::zero(), T::zero());
                        }
                    }
                }
            }
            self.ifft3(&mut buf, &mut out, comp);
        }
        Ok(out)
    }
}

/// Pointwise symmetrization `F -> (F + F^T)/2`; an idempotent projection,
/// self-adjoint in the `L^2` pairing.
pub fn sym<T: Real>(f: &MatrixField<T>) -> MatrixField<T> {
    let mut out = f.clone();
    for n in 0..f.n_nodes() {
        out.set_mat(n, f.mat_at(n).sym());
    }
    out
}

/// Signed wavenumbers `2*pi*m / (n*h)` with the Nyquist derivative zeroed
/// on even axes (keeps the derivative of a real signal real and the
/// derivative matrix exactly skew-symmetric).
fn wavenumbers<T: Real>(n: usize, h: T) -> Vec<T> {
    let len = real::<T>(n as f64) * h;
    let two_pi = real::<T>(2.0) * T::PI();
    (0..n)
        .map(|m| {
            if n % 2 == 0 && m == n / 2 {
                T::zero()
            } else {
                let signed = if m <= n / 2 {
                    m as f64
                } else {
                    m as f64 - n as f64
                };
                two_pi * real::<T>(signed) / len
            }
        })
        .collect()
}

/// Second-order centered difference along one line; one-sided second-order
/// closures at the ends of non-periodic lines.  `transpose` applies the
/// exact transpose of the same matrix (scatter form).
fn centered_line<T: Real>(line: &[T], out: &mut [T], h: T, periodic: bool, transpose: bool) {
    let n = line.len();
    let inv2h = T::one() / (real::<T>(2.0) * h);
    out.iter_mut().for_each(|v| *v = T::zero());
    let mut emit = |row: usize, col: usize, coeff: T| {
        if transpose {
            out[col] += coeff * line[row];
        } else {
            out[row] += coeff * line[col];
        }
    };
    if periodic {
        for i in 0..n {
            emit(i, (i + 1) % n, inv2h);
            emit(i, (i + n - 1) % n, -inv2h);
        }
    } else {
        let three = real::<T>(3.0);
        let four = real::<T>(4.0);
        emit(0, 0, -three * inv2h);
        emit(0, 1, four * inv2h);
        emit(0, 2, -inv2h);
        for i in 1..n - 1 {
            emit(i, i + 1, inv2h);
            emit(i, i - 1, -inv2h);
        }
        emit(n - 1, n - 1, three * inv2h);
        emit(n - 1, n - 2, -four * inv2h);
        emit(n - 1, n - 3, inv2h);
    }
}
