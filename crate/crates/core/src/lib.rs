//! Finite-dimensional laboratory for curvature-dimension analysis on
//! discrete metric measure spaces.
//!
//! The crate bundles, at desk scale:
//!
//! * graph Dirichlet forms, carré du champ, heat flow and Hopf-Lax
//!   ([`space`]);
//! * entropy/pressure calculus with distortion coefficients and Green-kernel
//!   convexity tools ([`entropy`]);
//! * the nonlinear diffusion semigroup `∂_t ρ = Δ P(ρ)` via backward-Euler
//!   resolvents ([`diffusion`]);
//! * its backward adjoint and forward linearizations with exact discrete
//!   duality ([`linearized`]);
//! * the Γ₂ form, Bakry-Émery checks, weighted energies and Hamiltonian
//!   identities ([`gamma2`]);
//! * Wasserstein distances, 1-D geodesics, weighted actions and the
//!   convexity/EVI/contraction checkers ([`transport`]);
//! * a small ODE bench for the finite-dimensional contraction picture
//!   ([`odelab`]).
//!
//! Every inequality check returns a [`report::CheckReport`] carrying the raw
//! margin, the worst witness and a residual trajectory, so that pass/fail
//! thresholds can be re-judged downstream.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN along with the
// out-of-range sign, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod entropy;
pub mod error;
pub mod gamma2;
pub mod linearized;
pub mod odelab;
pub mod report;
pub mod space;
pub mod transport;

pub use diffusion::DiffusionTrajectory;
pub use entropy::EntropyModel;
pub use error::{Error, Result};
pub use report::{CheckReport, Verdict, Witness};
pub use space::{DensityField, Field, FiniteSpace};
pub use transport::MeasureCurve;
