//! Hyperbolic trajectories, invariant manifolds and escape classification for forced,
//! damped systems near a saddle.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
pub mod bvp;
pub mod capsize;
pub mod dynamics;
pub mod error;
pub mod presets;
pub mod saddle;
pub mod validation;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
