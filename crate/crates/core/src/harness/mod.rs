//! Instance generation, file formats, the comparison baseline and the
//! complexity benchmark.

mod baseline;
mod bench;
mod generate;
pub mod io;

pub use baseline::baseline_constant_edf;
pub use bench::{bench_complexity, BenchRow};
pub use generate::{generate, GeneratorConfig, UnitRng};
