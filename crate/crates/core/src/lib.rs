//! Learning discrete Lagrangians and their affine symmetries from
//! position-only trajectory data.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: input jets of scalar fields and their parameter gradients.
//! - [`model`]: the neural discrete Lagrangian, symmetry generators, checkpoints.
//! - [`systems`]: reference systems, midpoint discretizations, data generation.
//! - [`integrator`]: discrete Euler–Lagrange residuals, Newton steps, rollouts.
//! - [`loss`]: the training objective.
//! - [`trainer`]: full-batch Adam with a symmetry warmup.
//! - [`vbea`]: inverse modified and backward-error-corrected Lagrangians.
//! - [`eval`]: recreation, prediction and conservation diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod integrator;
pub mod io;
pub mod lagrangian;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod systems;
pub mod trainer;
pub mod vbea;

pub use diffcore::{eval_jet, param_grad, Dual, HyperDual, Jet, ParamGradient, Real};
pub use error::{Error, Result};
pub use integrator::{del_residual, discrete_momentum, initialize, rollout, step, NewtonConfig, Rollout};
pub use lagrangian::{DiscreteLagrangian, Lagrangian};
pub use loss::{LossBreakdown, LossWeights, TrainingSet};
pub use model::{Activation, Checkpoint, DiscreteLagrangianModel, LagrangianModel, SymmetryGenerator, TrainingMeta};
pub use systems::{SystemSpec, Trajectory, TrueMidpoint};
pub use config::ExperimentConfig;
pub use eval::{EvalOptions, Report};
pub use trainer::{train, AdamConfig, TrainConfig, TrainOutcome};
