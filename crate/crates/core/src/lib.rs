//! Physics-informed neural network solver with Gaussian-mixture adaptive
//! collocation sampling.
//!
//! A tanh MLP is trained on the squared PDE residual plus a boundary penalty.
//! Between training rounds, the residual on a validation cloud picks the
//! means of a Gaussian mixture whose diagonal variances come from the
//! residual gradient; points drawn from the mixture are appended to the
//! training set, and old points are never discarded.

pub mod autodiff;
pub mod check;
pub mod config;
pub mod error;
pub mod metrics;
pub mod network;
pub mod pde;
pub mod points;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod trainer;

pub use config::{GasConfig, Mode, OptimizerKind, ProblemId};
pub use error::{GasError, Result};
pub use metrics::RoundMetrics;
pub use network::{AdamConfig, AdamState, MlpParams, OptimizerState};
pub use pde::{OperatorKind, PdeProblem};
pub use points::{BoxDomain, PointSet};
pub use sampler::{GaussianComponent, GaussianMixture, ResidualSample};
pub use trainer::{Dataset, GasRun};
