//! Volatility modeling toolkit.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense matrices, a reverse-mode tape and the [`tensor::Graph`]
//!   abstraction that lets the same network code run eagerly or recorded.
//! - [`nn`]: MLP and GRU building blocks, initialization, ADAM and checkpoints.
//! - [`dsvm`]: the deep stochastic volatility model (generative network,
//!   structured inference network, single-sample ELBO).
//! - [`training`] and [`forecast`]: stochastic variational training and
//!   Monte Carlo one-step-ahead prediction.
//! - [`garch`]: GARCH, GJR-GARCH, TGARCH and EGARCH baselines with
//!   Nelder–Mead maximum likelihood.
//! - [`data`]: ingestion, windowing, splits, simulators and the Friedman test.
//!
//! Numerical code is generic over the floating point type through
//! [`Scalar`]; the aliases below fix it to `f64`, which is what the
//! training and evaluation pipeline uses.

pub mod data;
pub mod dsvm;
pub mod error;
pub mod forecast;
pub mod garch;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` dense matrix.
pub type Array = tensor::Array<f64>;
/// `f64` reverse-mode tape.
pub type Tape = tensor::Tape<f64>;
/// `f64` deep stochastic volatility model.
pub type Dsvm = dsvm::Dsvm<f64>;
/// `f64` MLP parameters.
pub type MlpParams = nn::MlpParams<f64>;
/// `f64` GRU parameters.
pub type GruParams = nn::GruParams<f64>;
/// `f64` GARCH-family parameters.
pub type GarchParams = garch::GarchParams<f64>;
/// `f64` predictive mixture.
pub type PredictiveMixture = forecast::PredictiveMixture<f64>;
