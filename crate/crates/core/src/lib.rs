//! Backbone-pluggable medical multi-agent pipelines.
//!
//! Three pipelines share one backend abstraction:
//!
//! - [`cod`]: candidate-pool ranking diagnosis in a single call.
//! - [`medagents`]: five-expert role-play with vote-and-refine consensus.
//! - [`agentclinic`]: doctor/patient/measurement/moderator encounter loop.
//!
//! [`evalkit`] loads datasets, samples and folds entries, runs a pipeline over
//! them and aggregates fold accuracies into reports.

pub mod agentclinic;
pub mod backend;
pub mod cod;
pub mod domain;
pub mod evalkit;
pub mod medagents;
pub mod text;
