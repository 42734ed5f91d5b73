//! Activation relaxation: computing backprop gradients as the equilibrium of
//! a local leaky-integrator dynamical system.
//!
//! - [`math`]: dense vectors and matrices, ReLU, MSE
//! - [`network`]: bias-free MLPs and the frozen forward trace
//! - [`relaxation`]: the relaxation dynamics, its feedback/derivative-free
//!   variants, and the weight and feedback-weight updates
//! - [`oracle`]: exact reverse-mode gradients and finite differences
//! - [`daggraph`]: relaxation over explicit computation DAGs, its energy, and
//!   the Hessian structure check
//! - [`data`]: IDX loading, batching, synthetic clusters
//! - [`train`]: the minibatch training loop and metrics
//! - [`diagnostics`]: per-iteration convergence traces against the oracle
//! - [`checkpoint`]: the binary parameter container

pub mod checkpoint;
pub mod daggraph;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod math;
pub mod network;
pub mod oracle;
pub mod relaxation;
pub mod train;

pub use error::{ArError, Result};
pub use math::{Matrix, Vector};
pub use network::{
    forward, init_params, predict_class, Activation, FeedbackInit, ForwardTrace, LayerSpec,
    NetworkParams,
};
pub use oracle::{backprop, compare, GradientReport, OracleGradients};
pub use relaxation::{
    relax, relax_step, GradientEstimate, RelaxationState, Schedule, Variant, VariantConfig,
};
