use std::time::{Duration, Instant};

use crate::error::Result;
use crate::harness::{generate, GeneratorConfig};
use crate::power::PowerModel;
use crate::scheduler::solve;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub wall: Duration,
    pub iterations: usize,
    /// Largest number of candidate windows examined in one iteration.
    pub max_candidates: usize,
    pub total_candidates: usize,
}

impl BenchRow {
    pub fn within_bounds(&self) -> bool {
        self.iterations <= self.n && self.max_candidates <= self.n * self.n
    }
}

/// Solves one generated instance per size and records the scheduler's counters.
pub fn bench_complexity(sizes: &[usize], seed: u64) -> Result<Vec<BenchRow>> {
    let model = PowerModel::default();
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let config = GeneratorConfig {
            n,
            horizon: n as f64,
            seed,
            ..GeneratorConfig::default()
        };
        let instance = generate(&config)?;
        let started = Instant::now();
        let schedule = solve(&instance, &model)?;
        let wall = started.elapsed();
        let trace = schedule.trace.unwrap_or_default();
        rows.push(BenchRow {
            n,
            wall,
            iterations: trace.len(),
            max_candidates: trace.max_candidates(),
            total_candidates: trace.iterations.iter().map(|it| it.candidates).sum(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sizes_within_bounds() {
        let rows = bench_complexity(&[10, 20, 40], 3).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.within_bounds(), "{r:?}");
            assert!(r.iterations >= 1);
        }
    }

    #[test]
    fn empty_sizes() {
        assert!(bench_complexity(&[], 0).unwrap().is_empty());
    }
}
