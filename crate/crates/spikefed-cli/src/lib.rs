//! Harness around the `spikefed` simulation core: configuration files,
//! MNIST-format (IDX) dataset ingestion, CSV metrics, sweeps and reports.

pub mod config;
pub mod idx;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod sweep;
