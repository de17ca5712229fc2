//! Feynman–Kac semigroups for path-dependent potentials.
//!
//! The central object is the path transformation `y ↦ ŷ` solving
//! `ŷ(t) = y(t) exp(−∫_0^t c(s, ŷ) ds)` for a non-anticipative potential `c`.
//! Lifting diffusions into Hermite coefficient space turns point evaluations
//! into a linear potential, and the transformed lifted path carries the
//! Feynman–Kac weight.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod feynman_kac;
pub mod functions;
pub mod hermite;
pub mod path_core;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
pub use path_core::{GridPath, PathView};
