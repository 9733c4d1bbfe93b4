//! Piecewise linear difference-of-convex (PLDC) policies for two-stage
//! stochastic linear programs, trained from optimal-basis information
//! harvested from L-Shaped and stochastic decomposition solves.

pub mod cli;
pub mod error;
pub mod linalg;
pub mod lshaped;
pub mod policy;
pub mod instance;
pub mod io;
pub mod qp;
pub mod sampling;
pub mod sd;
pub mod sequential;
pub mod simplex;
pub mod stats;

pub use error::{Error, Result};
