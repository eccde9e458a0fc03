//! Dictionary-based unmixing baselines for a single spectrum.
//!
//! Both solvers explain `y` as a nonnegative combination of library atoms.
//! [`sunsal`] solves the ℓ1-regularised problem
//! `min ½‖Dx − y‖² + λ‖x‖₁, x ≥ 0` by ADMM; [`nnomp`] grows a support
//! greedily and refits it by nonnegative least squares ([`nnls`]). The
//! [`harness`] turns their solutions into per-source estimates, scores
//! them, and counts how often the identified support misses a true source.

mod dictionary;
pub mod harness;
mod nnls;
mod nnomp;
mod sunsal;

pub use dictionary::{reconstruct, Components, Dictionary, SparseSolution};
pub use nnls::nnls;
pub use nnomp::{nnomp, NnompConfig};
pub use sunsal::{sunsal, sunsal_objective, SunsalConfig, SunsalSolver};
