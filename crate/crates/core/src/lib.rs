//! Kalman-filter optimization of value functions.
//!
//! The crate treats policy evaluation as parameter estimation in an extended
//! Kalman filter: the value model `h(u; theta)` is the observation function,
//! Bellman targets `y(u)` are noisy observations, and each optimizer step is
//! the filter's measurement update. That update minimizes a squared TD error
//! plus a quadratic trust-region penalty weighted by the inverse error
//! covariance.
//!
//! Modules:
//!
//! - [`valuefunc`]: linear and tanh-network value models with analytic Jacobians.
//! - [`targets`]: k-step, GAE, 1-step Q and max-Q target labels; a seeded sample generator.
//! - [`optimizer`]: the KOVA step (predict, gain, parameter and covariance update).
//! - [`objectives`]: MLE and regularized losses, empirical Fisher, quadratic KL, SGD baseline.
//! - [`envs`]: chain and random MDPs with exact policy values.
//! - [`verify`]: brute-force oracles for the linear algebra behind the update.
//! - [`harness`]: configurable experiments, CSV metrics and the `kova` command line.
//!
//! ```
//! use kova::optimizer::{init_state, update, KovaConfig};
//! use kova::targets::Batch;
//! use kova::valuefunc::ValueModel;
//!
//! let model = ValueModel::tabular(2).unwrap();
//! let cfg = KovaConfig::default();
//! let state = init_state(2, model.init_params(0, 0.0).unwrap(), &cfg).unwrap();
//! let batch = Batch::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap();
//! let next = update(&state, &batch, &model, &cfg).unwrap();
//! assert!(next.theta_hat().as_slice()[1] > next.theta_hat().as_slice()[0]);
//! ```

pub mod envs;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod optimizer;
pub mod targets;
pub mod valuefunc;
pub mod verify;

pub use error::{Error, Result};
pub use optimizer::{KovaConfig, NoiseModel, OptimizerState};
pub use targets::Batch;
pub use valuefunc::{ParamVector, ValueModel};
