//! Numerical certification of weak (Milnor) attractivity for equilibria whose
//! Jacobian has a single zero eigenvalue.
//!
//! The crate is organized by task:
//!
//! - [`system`]: vector fields and finite-difference derivatives.
//! - [`scenario`]: the `key = value` scenario file format and builtin systems.
//! - [`first_method`]: spectral split, Hessian definiteness, Lyapunov equation,
//!   local constants and the optimal cone-shaped invariant region.
//! - [`region`]: comparison-function conditions for forward-invariant sets and
//!   their empirical verification.
//! - [`ode`]: Runge-Kutta integration with event detection.
//! - [`observer`]: the adaptive-observer cascade, persistency of excitation and
//!   exponential-rate checks.
//! - [`tightness`]: the planar example with a sharp attractivity threshold.

pub mod first_method;
pub mod linalg;
pub mod observer;
pub mod ode;
pub mod quadrature;
pub mod region;
pub mod report;
mod sampling;
pub mod scenario;
pub mod system;
pub mod tightness;
