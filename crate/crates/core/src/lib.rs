//! Dimensionality diagnostics for multi-attribute rating systems.
//!
//! The crate ingests player-level rating tables and measures how strongly the
//! attributes compress into a general factor: internal consistency, PCA on the
//! correlation matrix, parallel analysis against Gaussian noise, bootstrap
//! stability of the leading component, cross-validated prediction of the
//! overall rating, k-means on residual components, and a random-forest
//! benchmark. [`pipeline::run_pipeline`] chains every stage and writes an
//! [`report::AuditReport`] plus per-table CSV files.

pub mod cluster;
pub mod consistency;
pub mod error;
pub mod forest;
pub mod ingest;
pub mod linalg;
pub mod matrix;
pub mod noise_gate;
pub mod pca;
pub mod pipeline;
pub mod predict;
pub mod report;
pub mod seed;
pub mod stability;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::AttributeMatrix;
pub use matrix::Matrix;
