//! Heterogeneous graph attention networks with type-aware attention layers.
//!
//! A graph's nodes and relations are typed ([`hetgraph`]). Each layer
//! ([`tal`]) projects neighbor states into the target type's space and
//! attends over relation-specific scores. The [`model`] stacks layers and
//! attaches classifiers; optional extensions are multi-task training,
//! attention shared between a relation and its reverse, and a
//! cycle-consistency penalty. Gradients come from the small reverse-mode
//! engine in [`autodiff`].

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod hetgraph;
pub mod model;
pub mod params;
pub mod synth;
pub mod tal;
pub mod trainer;
pub mod verify;

pub use config::{ModelConfig, ScoreMode, TrainConfig, Variant};
pub use hetgraph::HetGraph;
pub use model::HetSannModel;
