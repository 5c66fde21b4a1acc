//! Adaptive model hierarchy for parametric advection-diffusion-reaction
//! outputs: a P1 finite element full-order model, a certified reduced basis
//! model that is enriched on demand, and a greedy kernel surrogate trained on
//! the data both of them produce.

pub mod banded;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod hierarchy;
pub mod kernel;
pub mod pod;
pub mod rb;
pub mod registry;
pub mod sampling;
pub mod trust;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use fem::{FomOperators, MeshSpec, ParameterBox, ParameterPoint, QoiVector, TimeGrid};
pub use hierarchy::{AdaptiveState, HierarchyConfig, ModelKind, QueryRecord};
pub use kernel::{KernelConfig, KernelModel, TrainingSet};
pub use rb::ReducedModel;
