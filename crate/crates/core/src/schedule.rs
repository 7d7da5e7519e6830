//! Transmission schedules: per-packet rates, per-epoch allocations and the
//! concrete timeline of segments.

use crate::error::{Error, Result};
use crate::model::{EpochDecomposition, Instance};
use crate::power::{schedule_energy, PowerModel, RateUse};
use crate::scheduler::IterationTrace;

/// A maximal stretch of time during which one packet transmits at a fixed rate.
///
/// `packet` is the zero-based packet index (id minus one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub packet: usize,
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn bits(&self) -> f64 {
        self.len() * self.rate
    }
}

/// A complete schedule for a normalized instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Constant rate of each packet, indexed by packet.
    pub rates: Vec<f64>,
    /// `tau[i][j]`: seconds packet `i` transmits inside epoch `j`.
    pub tau: Vec<Vec<f64>>,
    /// Time-ordered segments. Empty for allocation-only schedules.
    pub segments: Vec<Segment>,
    pub energy: f64,
    pub trace: Option<IterationTrace>,
}

impl Schedule {
    /// Builds a schedule from a segment timeline; τ comes from intersecting
    /// the segments with the epoch grid.
    pub fn from_segments(
        instance: &Instance,
        decomposition: &EpochDecomposition,
        rates: Vec<f64>,
        mut segments: Vec<Segment>,
        model: &PowerModel,
    ) -> Result<Self> {
        if rates.len() != instance.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rates for {} packets",
                rates.len(),
                instance.len()
            )));
        }
        segments.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.packet.cmp(&b.packet)));
        let tau = allocation_of(instance.len(), decomposition, &segments)?;
        let energy = energy_of(instance, &rates, model)?;
        Ok(Schedule {
            rates,
            tau,
            segments,
            energy,
            trace: None,
        })
    }

    /// Builds a schedule from a τ table alone. Rates follow from
    /// `bits / sum_j tau[i][j]`, and each epoch is laid out by packet index.
    pub fn from_allocation(
        instance: &Instance,
        decomposition: &EpochDecomposition,
        tau: Vec<Vec<f64>>,
        model: &PowerModel,
    ) -> Result<Self> {
        let n = instance.len();
        let m = decomposition.num_epochs();
        if tau.len() != n || tau.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch(format!("tau must be {n}x{m}")));
        }
        let rates: Vec<f64> = instance
            .packets()
            .iter()
            .zip(&tau)
            .map(|(p, row)| p.bits / row.iter().sum::<f64>())
            .collect();
        let mut segments = Vec::new();
        for j in 0..m {
            let mut t = decomposition.epoch(j).0;
            for (i, row) in tau.iter().enumerate() {
                if row[j] > 0.0 {
                    segments.push(Segment {
                        packet: i,
                        start: t,
                        end: t + row[j],
                        rate: rates[i],
                    });
                    t += row[j];
                }
            }
        }
        let energy = energy_of(instance, &rates, model)?;
        Ok(Schedule {
            rates,
            tau,
            segments,
            energy,
            trace: None,
        })
    }

    pub fn total_time(&self, packet: usize) -> f64 {
        self.tau[packet].iter().sum()
    }
}

/// Objective value of a rate vector.
pub fn energy_of(instance: &Instance, rates: &[f64], model: &PowerModel) -> Result<f64> {
    let uses: Vec<RateUse> = instance
        .packets()
        .iter()
        .zip(rates)
        .enumerate()
        .map(|(i, (p, &rate))| RateUse {
            packet: i,
            rate,
            time: p.bits / rate,
        })
        .collect();
    schedule_energy(model, &uses)
}

/// Intersects segments with the epoch grid.
pub fn allocation_of(
    n: usize,
    decomposition: &EpochDecomposition,
    segments: &[Segment],
) -> Result<Vec<Vec<f64>>> {
    let m = decomposition.num_epochs();
    let mut tau = vec![vec![0.0; m]; n];
    for s in segments {
        if s.packet >= n {
            return Err(Error::DimensionMismatch(format!(
                "segment for packet index {}",
                s.packet
            )));
        }
        let mut j = decomposition.epoch_at(s.start);
        while j < m {
            let (a, b) = decomposition.epoch(j);
            if a >= s.end {
                break;
            }
            let overlap = s.end.min(b) - s.start.max(a);
            if overlap > 0.0 {
                tau[s.packet][j] += overlap;
            }
            j += 1;
        }
    }
    Ok(tau)
}
