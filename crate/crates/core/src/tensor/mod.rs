//! Dense arrays and reverse-mode automatic differentiation.

mod array;
pub mod density;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod rng;
mod tape;

pub use array::Array;
pub use density::{gaussian_kl, gaussian_log_density};
pub use gradcheck::grad_check;
pub use graph::{Eager, Graph, Unary};
pub use kernels::{sigmoid, softplus};
pub use rng::{derive_seed, splitmix64, Rng};
pub use tape::{Gradients, Tape, Var};
