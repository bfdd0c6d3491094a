//! Library behind the `cmdsynth` binary: synthesis campaigns, estimator
//! accuracy studies, corpus statistics, and grammar inspection. The binary
//! is a thin argument-parsing shell over these modules so integration tests
//! can drive the same code paths in-process.

pub mod budget;
pub mod campaign;
pub mod stats;
