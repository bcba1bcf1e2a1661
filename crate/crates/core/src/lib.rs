//! Decorrelated feature-space partitioning for high-dimensional sparse
//! regression.
//!
//! The columns of a wide design are split across workers. Before the split,
//! the rows are pre-multiplied by `√p (XXᵀ + r₁I)^(-1/2)`, which makes the
//! columns nearly orthogonal, so each worker can run its own lasso on its
//! block and the merged estimate stays consistent. An optional ridge refit on
//! the merged support removes the lasso shrinkage.
//!
//! * [`linalg`]: column-major matrices, Jacobi eigensolver, inverse square
//!   roots, ridge solves.
//! * [`datagen`]: the five synthetic benchmark designs.
//! * [`lasso`]: coordinate descent, regularization paths, KKT checks, EBIC.
//! * [`deco`]: the partitioned pipeline and its baselines.
//! * [`eval`]: metrics and design diagnostics.

pub mod datagen;
pub mod deco;
pub mod error;
pub mod eval;
pub mod lasso;
pub mod linalg;
pub mod rng;

pub use error::{DecoError, Result};
