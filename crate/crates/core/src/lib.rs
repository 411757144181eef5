//! Pseudo-spectral solver for the incompressible Oldroyd-type system
//!
//! ```text
//! ∂ₜu + u·∇u + ∇p = νΔu + ∇·(FFᵗ),   ∇·u = 0
//! ∂ₜF + u·∇F = ∇u F,                 ∇·Fᵗ = 0
//! ```
//!
//! on the 2π-periodic square, with regularity diagnostics, closed-form
//! reference solutions and a Lagrangian flow-map cross-check.

// Grid loops index several parallel buffers; negated float comparisons
// deliberately treat NaN as invalid.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod exact;
pub mod fields;
pub mod flowmap;
pub mod snapshot;
pub mod solver;
pub mod spectral;

pub use fields::{FieldError, GridSpec, ScalarField, TensorField, VectorField};
pub use solver::{SolverConfig, SolverError, State};
