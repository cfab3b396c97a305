//! Federated training: client selection, local SGD, masked FedAvg and the
//! mask discovery and refresh steps.

mod aggregate;
mod client;
mod config;
mod discovery;
mod metrics;
mod simulation;
mod study;

pub use aggregate::{aggregate, aggregate_sparse};
pub use client::{local_train, Client, LocalTraining};
pub use config::{FlConfig, OodSchedule, Variant};
pub use discovery::{discover_mask, Discovery};
pub use metrics::{evaluate, quantile, Evaluation, RoundMetrics};
pub use simulation::{run, MaskEvent, RunOutput, Simulation};
pub use study::{mask_study, MaskStudyRow, StudyCount};
