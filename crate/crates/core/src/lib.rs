//! Velocity-potential neural fields for first-order Ambisonics room impulse
//! responses.
//!
//! A coordinate network models a scaled velocity potential `Ψ(r, t)`. The
//! four FOA channels are its derivatives, `w = (1/c₀) ∂Ψ/∂t` and `v = ∇Ψ`,
//! so predictions satisfy the linearized momentum equation exactly at every
//! point. The crate also carries the direct four-channel baselines, a
//! shoebox image-source simulator that produces FOA datasets, training with
//! physics penalties, and NMSE / correlation evaluation.
//!
//! Module map:
//!
//! - [`diffcore`]: jets, the modified sine MLP, parameter gradients, checkpoints
//! - [`field`]: model heads (direct, potential, inner-product potential)
//! - [`physics`]: medium constants and PDE residuals
//! - [`roomsim`]: shoebox image sources, FOA rendering, dataset files
//! - [`training`]: losses, Latin hypercube collocation, Adam, the training loop
//! - [`metrics`]: NMSE and Pearson correlation reports
//! - [`store`]: configuration, splits, experiment orchestration and commands

pub mod diffcore;
pub mod error;
pub mod field;
pub mod metrics;
pub mod physics;
pub mod roomsim;
pub mod store;
pub mod training;

pub use error::{Error, Result};
