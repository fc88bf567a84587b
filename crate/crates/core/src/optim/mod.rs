//! Derivative-free minimization.

mod nelder_mead;

pub use nelder_mead::{nelder_mead, NelderMeadConfig, NelderMeadResult};
