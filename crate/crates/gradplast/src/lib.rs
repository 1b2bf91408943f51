//! Quasi-static strain-gradient visco-plasticity on structured 3-D grids.
//!
//! The crate implements an incremental variational time stepper for the
//! system
//!
//! ```text
//!   -div sigma = f,    sigma = Q'(sym(grad u - p)),
//!   -Sigma in d/dp W(grad u, p),    dp/dt in dR*(Sigma),
//! ```
//!
//! where the plastic energy penalizes the row-wise curl of the plastic
//! strain `p` (a dislocation-density measure) and, optionally, the full
//! gradient of `p`.  Every discrete certificate the scheme is supposed to
//! satisfy — the per-step energy inequality, the flow-rule Fenchel
//! identity, the back-stress subgradient condition, the divergence
//! identity `-div Sigma_k = f_k`, a priori bounds and time-shift
//! compactness metrics — is evaluated numerically by the [`verify`]
//! module and reported in machine-readable form.
//!
//! Module map:
//!
//! * [`grid`], [`field`] — structured box/torus discretization and the
//!   scalar/vector/matrix degree-of-freedom containers.
//! * [`operators`] — discrete gradient, row-wise curl/divergence and the
//!   smoothed r-Laplacian, with spectral (periodic) and centered schemes.
//! * [`energies`] — energy and dissipation densities `Q, R, R*, H_e, H_p`
//!   and the integrated functionals with their exact discrete gradients.
//! * [`elasticity`] — the inner minimization defining the marginal energy
//!   `E1(p; f)` plus numeric checks of its convexity/Lipschitz/coercivity
//!   properties.
//! * [`stepper`] — load discretization, per-step incremental minimization,
//!   trajectory interpolants and the energy ledger.
//! * [`helmholtz`] — row-wise Helmholtz decomposition on the torus and the
//!   div-curl pairing audit.
//! * [`verify`] — certificate aggregation and refinement studies.
//! * [`scenario`], [`snapshot`], [`cli`] — config files, binary field
//!   snapshots and the `gradplast` command-line front end.
//!
//! All numerical kernels are generic over the scalar type through the
//! [`Real`] trait; concrete `f64` aliases are exported at the crate root.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

pub mod cli;
pub mod elasticity;
pub mod energies;
pub mod error;
pub mod field;
pub mod grid;
pub mod helmholtz;
pub mod operators;
pub mod scenario;
pub mod snapshot;
pub(crate) mod solver;
pub mod stepper;
pub mod verify;

pub use error::Error;
pub use field::{inner_product, Field, MatrixField, ScalarField, VectorField};
pub use field::{Mat3, Vec3};
pub use grid::{Face, Grid, GridSpec, Topology};
pub use operators::{OperatorContext, Scheme};

/// Scalar type the numerical kernels are generic over.
///
/// `f32` and `f64` both qualify; the test and acceptance suites run at
/// `f64` where the stated tolerances are meaningful.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + FftNum
    + fmt::Display
    + fmt::LowerExp
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum<T>
        + FftNum
        + fmt::Display
        + fmt::LowerExp
{
}

/// Shorthand used throughout the crate to lift literals into `T`.
#[inline]
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

// Concrete aliases for the common double-precision instantiation.
pub type Grid64 = Grid<f64>;
pub type ScalarField64 = ScalarField<f64>;
pub type VectorField64 = VectorField<f64>;
pub type MatrixField64 = MatrixField<f64>;
pub type OperatorContext64 = OperatorContext<f64>;
pub type EnergyConfig64 = energies::EnergyConfig<f64>;
pub type TrajectoryRecord64 = stepper::TrajectoryRecord<f64>;

// Single-precision aliases; mainly useful for quick smoke runs.
pub type Grid32 = Grid<f32>;
pub type ScalarField32 = ScalarField<f32>;
pub type VectorField32 = VectorField<f32>;
pub type MatrixField32 = MatrixField<f32>;
pub type OperatorContext32 = OperatorContext<f32>;
pub type EnergyConfig32 = energies::EnergyConfig<f32>;
