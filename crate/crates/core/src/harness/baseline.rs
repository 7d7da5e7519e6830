use crate::error::{Error, Result};
use crate::model::{decompose, Instance};
use crate::power::PowerModel;
use crate::schedule::{Schedule, Segment};

/// Constant-rate EDF baseline.
///
/// Packets are taken in deadline order. Each one claims the earliest part of
/// the still-free time in its window, sized in proportion to its bits against
/// the bits every unscheduled packet would send inside that window at its
/// average rate, and sends at the single rate that finishes in that time.
/// Always feasible, generally suboptimal.
pub fn baseline_constant_edf(instance: &Instance, model: &PowerModel) -> Result<Schedule> {
    let packets = instance.packets();
    let n = packets.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        packets[a]
            .deadline
            .total_cmp(&packets[b].deadline)
            .then(packets[a].id.cmp(&packets[b].id))
    });

    // Busy intervals kept sorted and disjoint.
    let mut busy: Vec<(f64, f64)> = Vec::new();
    let mut done = vec![false; n];
    let mut rates = vec![0.0; n];
    let mut segments = Vec::new();

    for &i in &order {
        let p = packets[i];
        let free = free_in(&busy, p.arrival, p.deadline);
        let available: f64 = free.iter().map(|(s, e)| e - s).sum();
        let competing: f64 = (0..n)
            .filter(|&k| !done[k] && k != i)
            .map(|k| {
                let q = packets[k];
                let overlap = (q.deadline.min(p.deadline) - q.arrival.max(p.arrival)).max(0.0);
                q.bits * overlap / q.window()
            })
            .sum();
        let share = available * p.bits / (p.bits + competing);
        if share <= 0.0 {
            return Err(Error::InternalIdle { at: p.arrival });
        }

        let rate = p.bits / share;
        let mut left = share;
        for (s, e) in free {
            if left <= 1e-12 * share {
                break;
            }
            let end = if e - s >= left { s + left } else { e };
            segments.push(Segment {
                packet: i,
                start: s,
                end,
                rate,
            });
            insert_busy(&mut busy, (s, end));
            left -= end - s;
        }
        rates[i] = rate;
        done[i] = true;
    }

    Schedule::from_segments(instance, &decompose(instance), rates, segments, model)
}

fn free_in(busy: &[(f64, f64)], from: f64, to: f64) -> Vec<(f64, f64)> {
    let mut free = Vec::new();
    let mut t = from;
    for &(s, e) in busy {
        if e <= t {
            continue;
        }
        if s >= to {
            break;
        }
        if s > t {
            free.push((t, s));
        }
        t = t.max(e);
    }
    if t < to {
        free.push((t, to));
    }
    free
}

fn insert_busy(busy: &mut Vec<(f64, f64)>, interval: (f64, f64)) {
    let pos = busy.partition_point(|b| b.0 < interval.0);
    busy.insert(pos, interval);
    // Merge touching neighbours so lookups stay short.
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(busy.len());
    for &b in busy.iter() {
        match merged.last_mut() {
            Some(last) if b.0 <= last.1 => last.1 = last.1.max(b.1),
            _ => merged.push(b),
        }
    }
    *busy = merged;
}
