//! Numerical laboratory for higher-order geometric flows on flat tori.
//!
//! The crate evolves Riemannian metrics on `T^n` (n = 2, 3, 4) under
//! even-order curvature flows, with gauge-fixed variants, principal-symbol
//! probes of the linearized operators, a fixed-point solver built on the
//! constant-coefficient heat semigroup, and diagnostic suites (Hölder
//! seminorms, curvature invariants, gauge naturality).
//!
//! Layout conventions used throughout:
//! - fields are periodic samples on a rectangular grid, stored
//!   component-major (all grid points of one component contiguous);
//! - symmetric rank-2 tensors store the packed upper triangle;
//! - spatial derivatives are spectral or central finite differences,
//!   chosen per grid.

pub mod algebra;
pub mod cli;
pub mod curvature;
pub mod error;
pub mod evolve;
pub mod fft;
pub mod field;
pub mod flows;
pub mod grid;
pub mod holder;
pub mod interp;
pub mod invariants;
mod linalg;
pub mod snapshot;
pub mod symbol;
