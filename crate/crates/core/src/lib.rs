//! Wasserstein gauges, dyadic transport bounds and particle and grid solvers
//! for mean-field control problems.

mod error;
pub mod dyadic;
pub mod gauge;
pub mod measures;
pub mod mfc;
pub mod nplayer;
pub mod numerics;
pub mod transport;

pub use error::{Error, Result};
