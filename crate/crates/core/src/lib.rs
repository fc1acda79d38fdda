//! Local proper scoring rules built from concave kernels, the score
//! divergences they induce, and Stein unbiased risk estimation, with
//! quadrature and Monte Carlo engines for verifying the identities that
//! connect them.

pub mod crossval;
pub mod density;
pub mod divergences;
pub mod error;
pub mod kernel;
pub mod numerics;
pub mod rng;
pub mod scores;
pub mod sure;

pub use error::{Error, Result};
