//! Shared helpers for the integration suites: seeded random fields and
//! the dense-probe oracle machinery.

#![allow(dead_code)]

use gradplast::{Field, Grid, GridSpec, OperatorContext, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn periodic_ctx(n: usize) -> OperatorContext<f64> {
    let grid = gradplast::grid::make_grid(&GridSpec::cube(
        n,
        1.0 / n as f64,
        Topology::Periodic,
        None,
    ))
    .unwrap();
    OperatorContext::default_for(grid)
}

pub fn box_ctx(n: usize) -> OperatorContext<f64> {
    let grid = gradplast::grid::make_grid(&GridSpec::cube(
        n,
        1.0 / n as f64,
        Topology::Box,
        Some(gradplast::Face::XMin),
    ))
    .unwrap();
    OperatorContext::default_for(grid)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field<const C: usize>(
    grid: &Grid<f64>,
    rng: &mut ChaCha8Rng,
    scale: f64,
) -> Field<f64, C> {
    let mut f = Field::<f64, C>::zeros(grid);
    for v in f.data_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    f
}

/// Dense matrix of an affine map `G` restricted to the coordinates kept by
/// a diagonal 0/1 projection: probes `G(e_j) - G(0)` on the free columns.
/// Returns the reduced matrix, the reduced right-hand side `-G(0)`, and
/// the list of free (unmasked) dof indices.
pub fn assemble_affine_system(
    dim: usize,
    free: &[usize],
    mut gradient: impl FnMut(&[f64]) -> Vec<f64>,
) -> (nalgebra::DMatrix<f64>, nalgebra::DVector<f64>) {
    let g0 = gradient(&vec![0.0; dim]);
    let nf = free.len();
    let mut a = nalgebra::DMatrix::zeros(nf, nf);
    let mut x = vec![0.0; dim];
    for (jc, &j) in free.iter().enumerate() {
        x[j] = 1.0;
        let gj = gradient(&x);
        x[j] = 0.0;
        for (ic, &i) in free.iter().enumerate() {
            a[(ic, jc)] = gj[i] - g0[i];
        }
    }
    let b = nalgebra::DVector::from_iterator(nf, free.iter().map(|&i| -g0[i]));
    (a, b)
}

/// Free-dof indices of a diagonal projection: coordinates the projector
/// leaves untouched when applied to the all-ones vector... probed per
/// unit vector to be safe.
pub fn free_dofs(dim: usize, mut project: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<usize> {
    let mut x = vec![0.0; dim];
    let mut free = Vec::new();
    for j in 0..dim {
        x[j] = 1.0;
        let px = project(&x);
        x[j] = 0.0;
        if (px[j] - 1.0).abs() < 1e-14 {
            free.push(j);
        }
    }
    free
}

pub fn solve_dense(
    a: &nalgebra::DMatrix<f64>,
    b: &nalgebra::DVector<f64>,
) -> nalgebra::DVector<f64> {
    a.clone().lu().solve(b).expect("dense system solvable")
}
