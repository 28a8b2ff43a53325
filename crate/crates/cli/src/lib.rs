//! Benchmark harness for the entropic optimal transport solvers: image datasets, the
//! experiment runner, output files, and JSON problem I/O.

pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;

pub use data::{load_mnist, pixel_cost, synthetic_images, ImageHistogram};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, AlgoChoice, Dataset, ExperimentOutcome, ExperimentSpec};
pub use report::{write_outputs, OutputFiles};
