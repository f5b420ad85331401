//! Sparse hybrid regression for discovering ordinary differential equations.
//!
//! Given noisy and possibly incomplete samples of a trajectory, `odeid` infers
//! the state trajectory and the coefficients of a sparse combination of
//! candidate terms at the same time. The building blocks are:
//!
//! - [`library`]: candidate terms (monomials and parametric exponentials),
//!   their exact derivatives, and data-driven normalization.
//! - [`discrete`]: the computational grid, midpoint residuals and the
//!   three-part loss (model error, data error, smooth-L0 penalty).
//! - [`objective`]: the loss as a function of one packed variable vector,
//!   with exact gradients and Hessian-vector products.
//! - [`curvature`]: Hessian sparsity pattern, greedy star coloring and
//!   Hessian assembly from colored Hessian-vector products.
//! - [`linalg`]: symmetric sparse matrices and an LDLᵀ factorization.
//! - [`lm`]: a Levenberg-Marquardt minimizer driven by the exact Hessian.
//! - [`selection`]: information criteria, adaptive pruning and the
//!   cross-validated hyperparameter search.
//! - [`harness`]: benchmark systems, reference integration, noise and
//!   missing-data generation, batch experiments.
//! - [`io`]: CSV and manifest formats.
//!
//! ```
//! use odeid::library::CandidateLibrary;
//!
//! let lib = CandidateLibrary::polynomial(3, 3, false).unwrap();
//! assert_eq!(lib.len(), 19);
//! ```

pub mod curvature;
pub mod discrete;
pub mod error;
pub mod harness;
pub mod io;
pub mod library;
pub mod linalg;
pub mod lm;
pub mod objective;
pub mod selection;

pub use error::{Error, Result};
