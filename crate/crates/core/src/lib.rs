//! Fast-slow random ODEs on compact matrix Lie groups.

// `!(x > 0.0)` is how the range checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops read better in the small dense kernels
#![allow(clippy::needless_range_loop)]
// `Mat` is an inline array on purpose; boxing it would cost the hot loops
#![allow(clippy::large_enum_variant)]

pub mod effective;
pub mod error;
pub mod fast;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod multiscale;
pub mod observable;
pub mod poisson;
pub mod presets;
pub mod rng;
pub mod stats;

mod parallel;

pub use error::{Error, Result};
