//! The optimal offline scheduler.
//!
//! Each round picks the sub-interval with the largest required rate (total
//! bits of the packets whose life time it contains, divided by its length),
//! serves those packets by EDF at that rate inside the real-time image of the
//! sub-interval, then cuts the sub-interval out of the timeline and repeats
//! with the remaining packets. Rounds are recorded in an [`IterationTrace`]
//! so that any shifted interval can be mapped back to real time.

use crate::error::{Error, Result};
use crate::model::{decompose, Instance, Packet, TIME_TOL};
use crate::power::PowerModel;
use crate::schedule::{Schedule, Segment};

/// Relative tolerance under which two candidate rates count as equal.
pub const RATE_TIE_TOL: f64 = 1e-12;

/// A packet's life time in the current (shifted) time coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedPacket {
    pub packet: usize,
    pub bits: f64,
    pub arrival: f64,
    pub deadline: f64,
}

/// Candidate window `[start, end]` and the packets whose shifted life time it
/// contains.
#[derive(Debug, Clone, PartialEq)]
pub struct SubInterval {
    pub start: f64,
    pub end: f64,
    /// Packet indices, ascending.
    pub contained: Vec<usize>,
    /// Minimum rate that fits the contained bits into the window.
    pub rate: f64,
}

/// One round of the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct Iteration {
    /// Selected window in the shifted coordinates of this round.
    pub shifted: (f64, f64),
    /// Real-time image of `shifted`: disjoint ascending pieces.
    pub pieces: Vec<(f64, f64)>,
    pub rate: f64,
    /// Packets scheduled in this round (ascending indices).
    pub packets: Vec<usize>,
    /// Candidate windows examined.
    pub candidates: usize,
}

/// History of all rounds. Round `g` removed `iterations[g].shifted` from the
/// timeline, so it doubles as the shift map for later rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub iterations: Vec<Iteration>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterations.iter().map(|it| it.rate)
    }

    pub fn max_candidates(&self) -> usize {
        self.iterations
            .iter()
            .map(|it| it.candidates)
            .max()
            .unwrap_or(0)
    }
}

fn distinct_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|b, a| *b - *a <= TIME_TOL);
    v
}

fn contains(start: f64, end: f64, p: &ShiftedPacket) -> bool {
    p.arrival >= start - TIME_TOL && p.deadline <= end + TIME_TOL
}

/// Lists every window from an arrival to a later deadline that contains at
/// least one life time, with its rate.
pub fn enumerate_subintervals(active: &[ShiftedPacket]) -> Vec<SubInterval> {
    let starts = distinct_sorted(active.iter().map(|p| p.arrival).collect());
    let ends = distinct_sorted(active.iter().map(|p| p.deadline).collect());
    let mut out = Vec::new();
    for &s in &starts {
        for &e in &ends {
            if e - s <= TIME_TOL {
                continue;
            }
            let contained: Vec<usize> = active
                .iter()
                .filter(|p| contains(s, e, p))
                .map(|p| p.packet)
                .collect();
            if contained.is_empty() {
                continue;
            }
            let bits: f64 = active
                .iter()
                .filter(|p| contains(s, e, p))
                .map(|p| p.bits)
                .sum();
            out.push(SubInterval {
                start: s,
                end: e,
                contained,
                rate: bits / (e - s),
            });
        }
    }
    out
}

/// `true` if a candidate `(rate, start, end)` should replace the incumbent.
fn beats(rate: f64, start: f64, end: f64, best: (f64, f64, f64)) -> bool {
    let (br, bs, be) = best;
    let scale = rate.abs().max(br.abs());
    if rate > br + RATE_TIE_TOL * scale {
        return true;
    }
    if rate < br - RATE_TIE_TOL * scale {
        return false;
    }
    (start, end) < (bs, be)
}

/// Maximum-rate candidate; ties go to the smallest start, then smallest end.
pub fn select_max_rate(candidates: &[SubInterval]) -> Result<SubInterval> {
    let mut best: Option<&SubInterval> = None;
    for c in candidates {
        match best {
            Some(b) if !beats(c.rate, c.start, c.end, (b.rate, b.start, b.end)) => {}
            _ => best = Some(c),
        }
    }
    best.cloned().ok_or(Error::NoCandidates)
}

/// Best window and the number of candidates examined, in O(N^2) without
/// materializing every contained set.
fn best_window(active: &[ShiftedPacket]) -> Option<((f64, f64, f64), usize)> {
    let starts = distinct_sorted(active.iter().map(|p| p.arrival).collect());
    let ends = distinct_sorted(active.iter().map(|p| p.deadline).collect());
    let mut by_deadline: Vec<&ShiftedPacket> = active.iter().collect();
    by_deadline.sort_by(|a, b| a.deadline.total_cmp(&b.deadline));

    let mut best: Option<(f64, f64, f64)> = None;
    let mut count = 0;
    for &s in &starts {
        let mut k = 0;
        let mut bits = 0.0;
        let mut members = 0;
        for &e in &ends {
            while k < by_deadline.len() && by_deadline[k].deadline <= e + TIME_TOL {
                if by_deadline[k].arrival >= s - TIME_TOL {
                    bits += by_deadline[k].bits;
                    members += 1;
                }
                k += 1;
            }
            if e - s <= TIME_TOL || members == 0 {
                continue;
            }
            count += 1;
            let rate = bits / (e - s);
            match best {
                Some(b) if !beats(rate, s, e, b) => {}
                _ => best = Some((rate, s, e)),
            }
        }
    }
    best.map(|b| (b, count))
}

/// Cuts `[a, d]` out of the shifted timeline for the packets still waiting.
///
/// Times at or before `a` stay, times inside `(a, d]` collapse onto `a`, and
/// later times move left by `d - a`.
pub fn shift_out(window: (f64, f64), packets: &mut [ShiftedPacket]) {
    let (a, d) = window;
    let shift = |t: f64| {
        if t <= a {
            t
        } else if t <= d {
            a
        } else {
            t - (d - a)
        }
    };
    for p in packets {
        p.arrival = shift(p.arrival);
        p.deadline = shift(p.deadline);
    }
}

/// Maps a window expressed in the shifted coordinates of round `round` back
/// to real time by undoing the removals of rounds `round - 1, ..., 0`.
pub fn unshift(
    trace: &IterationTrace,
    round: usize,
    window: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    if round > trace.len() {
        return Err(Error::InconsistentTrace(format!(
            "round {round} beyond {} recorded rounds",
            trace.len()
        )));
    }
    if window.1 < window.0 {
        return Err(Error::InconsistentTrace(format!(
            "reversed window {window:?}"
        )));
    }
    let mut pieces = vec![window];
    for it in trace.iterations[..round].iter().rev() {
        let (a, d) = it.shifted;
        let gap = d - a;
        let mut next = Vec::with_capacity(pieces.len() + 1);
        for &(s, e) in &pieces {
            if e <= a + TIME_TOL {
                next.push((s, e));
            } else if s >= a - TIME_TOL {
                next.push((s + gap, e + gap));
            } else {
                next.push((s, a));
                next.push((d, e + gap));
            }
        }
        pieces = next;
    }
    pieces.retain(|&(s, e)| e - s > TIME_TOL);
    Ok(pieces)
}

fn check_window_in_domain(horizon: f64, window: (f64, f64)) -> Result<()> {
    if window.0 < -TIME_TOL || window.1 > horizon + TIME_TOL {
        return Err(Error::InconsistentTrace(format!(
            "window {window:?} outside shifted domain [0, {horizon}]"
        )));
    }
    Ok(())
}

/// Serves `members` earliest-deadline-first at a common `rate` over the
/// disjoint ascending `pieces`, using the members' real-time life times.
///
/// Every member gets exactly `bits / rate` seconds. Running out of work while
/// time remains, or reaching a deadline with work left, is reported as an
/// internal error: a correctly selected window never does either.
pub fn edf_fill(
    pieces: &[(f64, f64)],
    members: &[(usize, Packet)],
    rate: f64,
) -> Result<Vec<Segment>> {
    let span = pieces.last().map_or(1.0, |p| p.1.abs().max(1.0));
    let snap = 1e-12 * span;
    let idle_tol = 1e-9 * span;

    let mut remaining: Vec<f64> = members.iter().map(|(_, p)| p.bits / rate).collect();
    let mut segments: Vec<Segment> = Vec::new();

    for &(ps, pe) in pieces {
        let mut t = ps;
        while pe - t > snap {
            let pick = members
                .iter()
                .enumerate()
                .filter(|&(k, (_, p))| remaining[k] > 0.0 && p.arrival <= t + snap)
                .min_by(|(_, (ia, a)), (_, (ib, b))| {
                    a.deadline.total_cmp(&b.deadline).then(ia.cmp(ib))
                })
                .map(|(k, _)| k);
            let next_arrival = members
                .iter()
                .enumerate()
                .filter(|&(k, (_, p))| remaining[k] > 0.0 && p.arrival > t + snap)
                .map(|(_, (_, p))| p.arrival)
                .fold(f64::INFINITY, f64::min);

            let Some(k) = pick else {
                let resume = next_arrival.min(pe);
                if resume - t > idle_tol {
                    return Err(Error::InternalIdle { at: t });
                }
                t = resume;
                continue;
            };
            let (packet, p) = members[k];
            if p.deadline < t - idle_tol {
                return Err(Error::InternalDeadlineMiss {
                    packet,
                    deadline: p.deadline,
                });
            }
            let mut end = (t + remaining[k]).min(pe).min(next_arrival);
            if pe - end <= snap {
                end = pe;
            }
            let run = end - t;
            remaining[k] -= run;
            if remaining[k] <= snap {
                remaining[k] = 0.0;
                if end > p.deadline + idle_tol {
                    return Err(Error::InternalDeadlineMiss {
                        packet,
                        deadline: p.deadline,
                    });
                }
            }
            match segments.last_mut() {
                Some(last) if last.packet == packet && (last.end - t).abs() <= snap => {
                    last.end = end
                }
                _ => segments.push(Segment {
                    packet,
                    start: t,
                    end,
                    rate,
                }),
            }
            t = end;
        }
    }
    for (k, &(packet, p)) in members.iter().enumerate() {
        if remaining[k] > idle_tol {
            return Err(Error::InternalDeadlineMiss {
                packet,
                deadline: p.deadline,
            });
        }
    }
    Ok(segments)
}

/// Computes an energy-optimal schedule.
pub fn solve(instance: &Instance, model: &PowerModel) -> Result<Schedule> {
    let packets = instance.packets();
    let n = packets.len();
    let mut active: Vec<ShiftedPacket> = packets
        .iter()
        .enumerate()
        .map(|(i, p)| ShiftedPacket {
            packet: i,
            bits: p.bits,
            arrival: p.arrival,
            deadline: p.deadline,
        })
        .collect();
    let mut trace = IterationTrace::default();
    let mut rates = vec![0.0; n];
    let mut segments = Vec::new();
    let mut shifted_horizon = instance.horizon();

    while !active.is_empty() {
        if trace.len() >= n {
            return Err(Error::InconsistentTrace(format!("more than {n} rounds")));
        }
        let ((rate, start, end), candidates) = best_window(&active).ok_or(Error::NoCandidates)?;
        check_window_in_domain(shifted_horizon, (start, end))?;

        let (chosen, rest): (Vec<ShiftedPacket>, Vec<ShiftedPacket>) =
            active.into_iter().partition(|p| contains(start, end, p));
        active = rest;

        let pieces = unshift(&trace, trace.len(), (start, end))?;
        let members: Vec<(usize, Packet)> = chosen
            .iter()
            .map(|p| (p.packet, packets[p.packet]))
            .collect();
        segments.extend(edf_fill(&pieces, &members, rate)?);
        for p in &chosen {
            rates[p.packet] = rate;
        }

        trace.iterations.push(Iteration {
            shifted: (start, end),
            pieces,
            rate,
            packets: chosen.iter().map(|p| p.packet).collect(),
            candidates,
        });
        shift_out((start, end), &mut active);
        shifted_horizon -= end - start;
    }

    let decomposition = decompose(instance);
    let mut schedule = Schedule::from_segments(instance, &decomposition, rates, segments, model)?;
    schedule.trace = Some(trace);
    Ok(schedule)
}
