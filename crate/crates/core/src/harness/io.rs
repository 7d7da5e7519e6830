//! JSON and CSV formats for instances, schedules and τ traces.
//!
//! Files carry the caller's original packet ids and clock. Conversions go
//! through a [`Normalized`] instance, which remembers both.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{decompose, normalize_instance, Instance, Normalized, Packet};
use crate::power::PowerModel;
use crate::schedule::{Schedule, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power: Option<f64>,
    pub packets: Vec<Packet>,
}

impl InstanceFile {
    pub fn from_instance(instance: &Instance, noise_power: Option<f64>) -> Self {
        InstanceFile {
            noise_power,
            packets: instance.packets().to_vec(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn normalize(&self) -> Result<Normalized> {
        normalize_instance(&self.packets)
    }

    /// Shannon model with this file's noise power (1 W when absent).
    pub fn shannon(&self) -> Result<PowerModel> {
        PowerModel::shannon(self.noise_power.unwrap_or(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub id: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub id: u64,
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub rate: f64,
    pub packets: Vec<u64>,
    pub pieces: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub energy: f64,
    pub rates: Vec<RateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<SegmentEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<Vec<IterationEntry>>,
}

impl ScheduleFile {
    pub fn from_schedule(
        normalized: &Normalized,
        schedule: &Schedule,
        with_segments: bool,
    ) -> Self {
        let ids = &normalized.original_ids;
        let off = normalized.offset;
        let rates = schedule
            .rates
            .iter()
            .enumerate()
            .map(|(i, &rate)| RateEntry { id: ids[i], rate })
            .collect();
        let segments = with_segments.then(|| {
            schedule
                .segments
                .iter()
                .map(|s| SegmentEntry {
                    id: ids[s.packet],
                    start: s.start + off,
                    end: s.end + off,
                    rate: s.rate,
                })
                .collect()
        });
        let iterations = schedule.trace.as_ref().map(|t| {
            t.iterations
                .iter()
                .map(|it| IterationEntry {
                    rate: it.rate,
                    packets: it.packets.iter().map(|&i| ids[i]).collect(),
                    pieces: it.pieces.iter().map(|&(s, e)| [s + off, e + off]).collect(),
                })
                .collect()
        });
        ScheduleFile {
            energy: schedule.energy,
            rates,
            segments,
            iterations,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    /// Rebuilds a schedule on the normalized instance. Needs segments; τ is
    /// recomputed from them and energy from the listed rates.
    pub fn to_schedule(&self, normalized: &Normalized, model: &PowerModel) -> Result<Schedule> {
        let n = normalized.instance.len();
        let index: HashMap<u64, usize> = normalized
            .original_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        let lookup = |id: u64| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::DimensionMismatch(format!("unknown packet id {id}")))
        };

        let mut rates = vec![None; n];
        for r in &self.rates {
            let i = lookup(r.id)?;
            if rates[i].replace(r.rate).is_some() {
                return Err(Error::DimensionMismatch(format!(
                    "packet {} listed twice",
                    r.id
                )));
            }
        }
        let rates: Vec<f64> = rates
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "no rate for packet {}",
                        normalized.original_ids[i]
                    ))
                })
            })
            .collect::<Result<_>>()?;

        let entries = self
            .segments
            .as_ref()
            .ok_or_else(|| Error::Json("schedule has no segments".into()))?;
        let off = normalized.offset;
        let segments = entries
            .iter()
            .map(|s| {
                Ok(Segment {
                    packet: lookup(s.id)?,
                    start: s.start - off,
                    end: s.end - off,
                    rate: s.rate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decomposition = decompose(&normalized.instance);
        Schedule::from_segments(&normalized.instance, &decomposition, rates, segments, model)
    }
}

/// Per-epoch allocation as CSV with header `packet,epoch,start,end,tau`.
/// Only cells inside a packet's lifetime are listed.
pub fn trace_csv(normalized: &Normalized, schedule: &Schedule) -> String {
    let d = decompose(&normalized.instance);
    let mut out = String::from("packet,epoch,start,end,tau\n");
    for i in 0..normalized.instance.len() {
        for j in d.epochs_of(i) {
            let (s, e) = d.epoch(j);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                normalized.original_ids[i],
                j,
                s + normalized.offset,
                e + normalized.offset,
                schedule.tau[i][j]
            );
        }
    }
    out
}
