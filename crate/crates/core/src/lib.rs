//! Numerical core for a p(x)-Laplacian gradient flow with large diffusion on subdomains.

pub mod attractor;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod initial;
pub mod lebesgue;
pub mod semiflow;
pub mod state;
pub mod stats;
pub mod trajectory;
mod tridiag;

pub use error::{Error, Result};
