//! Exact and approximate text-to-pattern Hamming distances.
//!
//! The crate is organised bottom-up. [`strings`] holds the problem types and
//! brute-force oracles, [`convolution`] and [`hashing`] are the arithmetic
//! kernels, [`sumset`] counts sumset multiplicities, [`matrix`] provides the
//! equality product, [`estimate`] contains the unbiased counting estimators,
//! and [`approx`], [`exact`] and [`reductions`] build the matchers on top.

pub mod approx;
pub mod convolution;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod hashing;
pub mod matrix;
pub mod reductions;
pub mod rng;
pub mod strings;
pub mod sumset;

pub use error::{Result, TphdError};
pub use strings::{DistanceKind, DistanceVector, IntString};
