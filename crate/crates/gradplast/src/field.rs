//! Degree-of-freedom containers for deformation, plastic strain and
//! back-stress, plus the discrete `L^2` inner product pairing them.
//!
//! A [`Field`] stores `C` components per node in node-major order
//! (`data[node * C + c]`), so a [`MatrixField`] keeps the full 3x3 matrix
//! of a node contiguously with entry `(r, c)` at component `3*r + c`.
//! Fields are plain values: construction validates, mutation happens on
//! owned copies, sharing read-only references is always safe.

use crate::{real, Error, Grid, Real, Result, Topology};

/// Tiny fixed-size vector used for per-node arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T>(pub [T; 3]);

/// Tiny fixed-size matrix (row-major) used for per-node arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<T>(pub [T; 9]);

impl<T: Real> Vec3<T> {
    pub fn zero() -> Self {
        Vec3([T::zero(); 3])
    }

    pub fn dot(&self, o: &Vec3<T>) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn add(&self, o: &Vec3<T>) -> Self {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }

    pub fn cross(&self, o: &Vec3<T>) -> Self {
        let a = &self.0;
        let b = &o.0;
        Vec3([
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ])
    }
}

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Mat3([T::zero(); 9])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        m.0[0] = T::one();
        m.0[4] = T::one();
        m.0[8] = T::one();
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.0[3 * r + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.0[3 * r + c] = v;
    }

    pub fn row(&self, r: usize) -> Vec3<T> {
        Vec3([self.0[3 * r], self.0[3 * r + 1], self.0[3 * r + 2]])
    }

    pub fn set_row(&mut self, r: usize, v: Vec3<T>) {
        self.0[3 * r] = v.0[0];
        self.0[3 * r + 1] = v.0[1];
        self.0[3 * r + 2] = v.0[2];
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.set(r, c, self.get(c, r));
            }
        }
        out
    }

    /// Symmetric part `(M + M^T) / 2`.
    pub fn sym(&self) -> Self {
        let half = real::<T>(0.5);
        let mut out = Self::zero();
        for r in 0..3 {
            for c in 0..3 {
                out.set(r, c, (self.get(r, c) + self.get(c, r)) * half);
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        self.0[0] + self.0[4] + self.0[8]
    }

    /// Frobenius pairing `M : N`.
    pub fn dot(&self, o: &Mat3<T>) -> T {
        let mut s = T::zero();
        for i in 0..9 {
            s += self.0[i] * o.0[i];
        }
        s
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for v in out.0.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, o: &Mat3<T>) -> Self {
        let mut out = *self;
        for (v, w) in out.0.iter_mut().zip(o.0.iter()) {
            *v += *w;
        }
        out
    }

    pub fn sub(&self, o: &Mat3<T>) -> Self {
        let mut out = *self;
        for (v, w) in out.0.iter_mut().zip(o.0.iter()) {
            *v -= *w;
        }
        out
    }

    /// Largest absolute deviation from symmetry.
    pub fn asymmetry(&self) -> T {
        let mut a = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                a = a.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        a
    }
}

/// Grid-attached array with `C` scalar components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T, const C: usize> {
    grid: Grid<T>,
    data: Vec<T>,
}

pub type ScalarField<T> = Field<T, 1>;
pub type VectorField<T> = Field<T, 3>;
pub type MatrixField<T> = Field<T, 9>;

impl<T: Real, const C: usize> Field<T, C> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Field {
            grid: *grid,
            data: vec![T::zero(); grid.n_nodes() * C],
        }
    }

    /// Build a field from per-node values.
    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(usize, usize, usize) -> [T; C]) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                for k in 0..grid.nz() {
                    let n = grid.idx(i, j, k);
                    out.data[n * C..(n + 1) * C].copy_from_slice(&f(i, j, k));
                }
            }
        }
        out
    }

    pub fn from_data(grid: &Grid<T>, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.n_nodes() * C {
            return Err(Error::GridMismatch);
        }
        Ok(Field { grid: *grid, data })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn comp(&self, node: usize, c: usize) -> T {
        self.data[node * C + c]
    }

    #[inline]
    pub fn set_comp(&mut self, node: usize, c: usize, v: T) {
        self.data[node * C + c] = v;
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale_in_place(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.scale_in_place(s);
        out
    }

    /// `self += s * other`; panics on grid mismatch (internal arithmetic).
    pub fn axpy(&mut self, s: T, other: &Self) {
        assert_eq!(self.grid, other.grid, "field arithmetic on one grid only");
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += s * *y;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(T::one(), other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-T::one(), other);
        out
    }

    /// Discrete `L^2(Omega)` norm.
    pub fn norm_l2(&self) -> T {
        let mut s = T::zero();
        for v in &self.data {
            s += *v * *v;
        }
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Discrete `L^2(Omega)` inner product: node sum times cell volume.
///
/// Positive-definite, symmetric and bilinear; the pairing behind every
/// energy and duality statement in the crate.
pub fn inner_product<T: Real, const C: usize>(a: &Field<T, C>, b: &Field<T, C>) -> Result<T> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let mut s = T::zero();
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        s += *x * *y;
    }
    Ok(s * a.grid.cell_volume())
}

impl<T: Real> VectorField<T> {
    #[inline]
    pub fn vec_at(&self, node: usize) -> Vec3<T> {
        Vec3([self.comp(node, 0), self.comp(node, 1), self.comp(node, 2)])
    }

    #[inline]
    pub fn set_vec(&mut self, node: usize, v: Vec3<T>) {
        for c in 0..3 {
            self.set_comp(node, c, v.0[c]);
        }
    }

    /// Zero all components on the Dirichlet face; no-op on periodic grids.
    pub fn apply_dirichlet_mask(&self) -> Self {
        let mut out = self.clone();
        out.apply_dirichlet_mask_in_place();
        out
    }

    pub fn apply_dirichlet_mask_in_place(&mut self) {
        if self.grid.dirichlet_face().is_none() {
            return;
        }
        let grid = self.grid;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                for k in 0..grid.nz() {
                    if grid.on_dirichlet_face(i, j, k) {
                        let n = grid.idx(i, j, k);
                        for c in 0..3 {
                            self.set_comp(n, c, T::zero());
                        }
                    }
                }
            }
        }
    }

    /// True when the field vanishes on the Dirichlet face.
    pub fn is_dirichlet_zero(&self) -> bool {
        let masked = self.apply_dirichlet_mask();
        masked == *self
    }
}

impl<T: Real> MatrixField<T> {
    #[inline]
    pub fn mat_at(&self, node: usize) -> Mat3<T> {
        let mut m = [T::zero(); 9];
        m.copy_from_slice(&self.data[node * 9..(node + 1) * 9]);
        Mat3(m)
    }

    #[inline]
    pub fn set_mat(&mut self, node: usize, m: Mat3<T>) {
        self.data[node * 9..(node + 1) * 9].copy_from_slice(&m.0);
    }

    /// Zero the tangential components of every row on each boundary face a
    /// node belongs to: with outward normal along axis `a`, only column `a`
    /// of the node's matrix survives; edge and corner nodes end up fully
    /// zeroed.  Idempotent, an orthogonal projection nodewise, and a no-op
    /// on periodic grids.
    pub fn apply_tangential_mask(&self) -> Self {
        let mut out = self.clone();
        out.apply_tangential_mask_in_place();
        out
    }

    pub fn apply_tangential_mask_in_place(&mut self) {
        if self.grid.topology() != Topology::Box {
            return;
        }
        let grid = self.grid;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                for k in 0..grid.nz() {
                    let n = grid.idx(i, j, k);
                    for face in grid.faces_at(i, j, k) {
                        let keep = face.axis();
                        for r in 0..3 {
                            for c in 0..3 {
                                if c != keep {
                                    self.set_comp(n, 3 * r + c, T::zero());
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Zero the full matrix on the whole boundary (the `W^{1,r}_0` mask
    /// used when the gradient term is active).
    pub fn apply_full_boundary_mask(&self) -> Self {
        let mut out = self.clone();
        out.apply_full_boundary_mask_in_place();
        out
    }

    pub fn apply_full_boundary_mask_in_place(&mut self) {
        if self.grid.topology() != Topology::Box {
            return;
        }
        let grid = self.grid;
        for i in 0..grid.nx() {
            for j in 0..grid.ny() {
                for k in 0..grid.nz() {
                    if grid.faces_at(i, j, k).next().is_some() {
                        let n = grid.idx(i, j, k);
                        for c in 0..9 {
                            self.set_comp(n, c, T::zero());
                        }
                    }
                }
            }
        }
    }

    /// Project into the state space of the evolution: tangential-trace mask
    /// for `delta = 0`, full boundary mask for `delta > 0`.  Identity on
    /// periodic grids.
    pub fn project_state_space(&self, delta_positive: bool) -> Self {
        if delta_positive {
            self.apply_full_boundary_mask()
        } else {
            self.apply_tangential_mask()
        }
    }

    /// True when all tangential boundary components vanish.
    pub fn is_tangential_zero(&self) -> bool {
        self.apply_tangential_mask() == *self
    }
}

/// Product of axis modes used for analytic test fields and scenario
/// presets: `sin/cos(2*pi*(m . x_frac) + phase)` with `x_frac` the
/// fractional node coordinate, so integer wave vectors are exactly
/// periodic on any grid.
pub fn mode_scalar<T: Real>(grid: &Grid<T>, wave: [i32; 3], cosine: bool) -> ScalarField<T> {
    let dims = grid.dims();
    ScalarField::from_fn(grid, |i, j, k| {
        let mut phase = T::zero();
        for (axis, &idx) in [i, j, k].iter().enumerate() {
            phase += real::<T>(wave[axis] as f64) * real::<T>(idx as f64)
                / real::<T>(dims[axis] as f64);
        }
        let arg = real::<T>(2.0) * T::PI() * phase;
        [if cosine { arg.cos() } else { arg.sin() }]
    })
}

/// Single-component vector-field mode.
pub fn mode_vector<T: Real>(
    grid: &Grid<T>,
    component: usize,
    wave: [i32; 3],
    cosine: bool,
    amplitude: T,
) -> VectorField<T> {
    let s = mode_scalar(grid, wave, cosine);
    let mut out = VectorField::zeros(grid);
    for n in 0..grid.n_nodes() {
        out.set_comp(n, component, s.comp(n, 0) * amplitude);
    }
    out
}

/// Single-entry matrix-field mode.
pub fn mode_matrix<T: Real>(
    grid: &Grid<T>,
    row: usize,
    col: usize,
    wave: [i32; 3],
    cosine: bool,
    amplitude: T,
) -> MatrixField<T> {
    let s = mode_scalar(grid, wave, cosine);
    let mut out = MatrixField::zeros(grid);
    for n in 0..grid.n_nodes() {
        out.set_comp(n, 3 * row + col, s.comp(n, 0) * amplitude);
    }
    out
}
