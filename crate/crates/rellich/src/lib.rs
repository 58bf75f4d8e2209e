//! Numerical laboratory for improved Hardy and Rellich inequalities with
//! distance-function weights.
//!
//! The crate evaluates both sides of the inequalities for concrete test
//! functions on model geometries (point, affine subspace, slab, ball
//! boundary, convex polygon boundary), computes every closed-form constant,
//! drives near-extremizer sweeps that exhibit sharpness of those constants,
//! and brackets best constants from above by discretized minimization of the
//! Rayleigh quotients.
//!
//! Entry points:
//! - [`cascade`]: iterated-logarithm functions and their exact derivatives
//! - [`geometry`]: distance fields `d`, `∇d`, `Δd` and the sign condition
//! - [`constants`]: closed-form constants and coefficient identities
//! - [`quadrature`]: singularity-aware adaptive integration
//! - [`functionals`]: Hardy/Rellich deficits, quotients and `J_m`
//! - [`extremizers`]: near-extremizer families and epsilon sweeps
//! - [`varsolve`]: discretized Rayleigh-quotient minimization
//! - [`cli`]: batch driver behind the `rellich` binary

pub mod cascade;
pub mod cli;
pub mod constants;
pub mod extremizers;
pub mod functionals;
pub mod geometry;
pub mod quadrature;
pub mod varsolve;
