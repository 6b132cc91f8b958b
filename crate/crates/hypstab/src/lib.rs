//! Numerical stability toolkit for dissipative hyperbolic-hyperbolic systems.
//!
//! The crate instantiates second-order systems of wave-operator-regularized
//! conservation laws, checks hyperbolicity and constant-state dissipativity
//! conditions, computes planar shock profiles, evaluates Evans functions with
//! winding-number zero counts, analyzes glancing sets of the endstate
//! characteristic symbols, and measures nonlinear decay rates by direct
//! simulation.
//!
//! All core math is generic over the real scalar type; the `*64` aliases at
//! the crate root fix `f64`, which every shipped tolerance is calibrated for.

pub mod dissipativity;
pub mod evans;
pub mod glancing;
pub mod error;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod profile;
pub mod report;
pub mod spectrum;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{CMat, CVec, Cplx, RMat, RVec, Real};

/// f64 instantiations of the core types.
pub type Model64 = model::ModelDef<f64>;
pub type Profile64 = profile::Profile<f64>;
