//! Benchmark harness: unitarity sweeps, speed benchmarks, accounting tables,
//! quantization tables, cosine-sine plans and a toy fitting task.

pub mod checks;
pub mod error;
pub mod exec;
pub mod kind;
pub mod report;
pub mod speed;
pub mod tables;
pub mod train;
pub mod unitarity;

pub use error::{BenchError, BenchResult};
