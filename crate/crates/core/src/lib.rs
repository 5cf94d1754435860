//! Discrete spheres, spherical averages, arithmetic cutoffs and distance-set
//! verifiers on finite boxes and tori `ℤ_M^d`.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: enumeration and counting of `S_λ = {x ∈ ℤ^d : |x|² = λ}`.
//! - [`spectral`]: exact DFTs on `ℤ_M^d`, `σ̂_λ`, and the cutoffs `ψ_{q,L}`, `χ_{q,L}`.
//! - [`averaging`]: `A_λ`, the maximal operator `A_*` and its mollified form.
//! - [`arith`]: `q_η`, major arcs and annuli, Gauss sums, `σ̃`, multipliers.
//! - [`density`]: point sets, uniform-distribution tests, density increment.
//! - [`verify`]: counting identity, unpinned/pinned searches, dichotomy reports.
//! - [`report`]: experiment configuration and JSON/CSV report emission.
//!
//! With the default `parallel` feature the heavy loops run on rayon; every
//! reduction is order-fixed so results are identical for any thread count.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arith;
pub mod averaging;
pub mod density;
pub mod error;
pub mod lattice;
pub mod par;
pub mod quad;
pub mod report;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};

/// Crate version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
