//! Reference solvers for the allocation problem, independent of the
//! sub-interval scheduler.
//!
//! Both solvers work directly on the per-epoch allocation table τ. With
//! `T_i = sum_j tau[i][j]` the total time of packet `i`, the energy is
//! `sum_i h_i(T_i)` where `h_i(T) = T f(B_i / T)` is convex and decreasing, and
//! the feasible set is `tau >= 0`, `tau[i][j] = 0` outside the packet's life
//! time, and `sum_i tau[i][j] <= |E_j|` per epoch.

use crate::error::{Error, Result};
use crate::model::{decompose, EpochDecomposition, Instance};
use crate::power::{PowerModel, RateCurve};
use crate::schedule::Schedule;

/// Lower bound on a packet's total time while iterating.
const TIME_FLOOR: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub tau: Vec<Vec<f64>>,
    pub total_times: Vec<f64>,
    pub rates: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    /// Projected gradient: relative Frank-Wolfe gap, an upper bound on
    /// `(energy - optimum) / energy`. Grid: the coarsest grid step in seconds.
    pub residual: f64,
    pub converged: bool,
}

impl OracleSolution {
    /// Turns an unconverged run into [`Error::DidNotConverge`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::DidNotConverge {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }

    /// The allocation as a [`Schedule`] with segments laid out per epoch.
    pub fn to_schedule(&self, instance: &Instance, model: &PowerModel) -> Result<Schedule> {
        Schedule::from_allocation(instance, &decompose(instance), self.tau.clone(), model)
    }
}

/// `h(T) = T f(B / T)`.
pub fn packet_energy(model: &PowerModel, bits: f64, time: f64) -> f64 {
    time * model.power(bits / time)
}

/// `h'(T) = f(r) - r f'(r) = -g(r)` with `r = B / T`.
pub fn packet_energy_slope(model: &PowerModel, bits: f64, time: f64) -> f64 {
    -model.marginal(bits / time)
}

/// Euclidean projection of `y` onto `{x >= 0, sum x <= cap}`.
pub fn project_capped_simplex(y: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|&v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    project_simplex(y, cap)
}

/// Euclidean projection of `y` onto `{x >= 0, sum x = cap}`. Adding the same
/// constant to every entry of `y` leaves the result unchanged.
fn project_simplex(y: &[f64], cap: f64) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - cap) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Projects `x - step * slopes` onto the capped simplex. Slopes can be many
/// orders of magnitude larger than `x`, so when the cap binds the steepest
/// slope is subtracted first to keep the differences exact.
fn project_step(x: &[f64], slopes: &[f64], step: f64, cap: f64) -> Vec<f64> {
    let moved: Vec<f64> = x.iter().zip(slopes).map(|(v, s)| v - step * s).collect();
    let clipped_sum: f64 = moved.iter().map(|v| v.max(0.0)).sum();
    if clipped_sum <= cap {
        return moved.iter().map(|v| v.max(0.0)).collect();
    }
    let steepest = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = x
        .iter()
        .zip(slopes)
        .map(|(v, s)| v - step * (s - steepest))
        .collect();
    project_simplex(&shifted, cap)
}

struct Allocation<'a> {
    bits: Vec<f64>,
    decomposition: &'a EpochDecomposition,
    model: &'a PowerModel,
}

impl Allocation<'_> {
    fn totals(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut t = vec![0.0; self.bits.len()];
        for (j, xj) in x.iter().enumerate() {
            for (&i, &v) in self.decomposition.packets_in(j).iter().zip(xj) {
                t[i] += v;
            }
        }
        t
    }

    fn energy(&self, totals: &[f64]) -> f64 {
        self.bits
            .iter()
            .zip(totals)
            .map(|(&b, &t)| packet_energy(self.model, b, t.max(TIME_FLOOR)))
            .sum()
    }

    fn slopes(&self, totals: &[f64]) -> Vec<f64> {
        self.bits
            .iter()
            .zip(totals)
            .map(|(&b, &t)| packet_energy_slope(self.model, b, t.max(TIME_FLOOR)))
            .collect()
    }

    /// `sum grad . (x - s)` maximized over feasible `s`: each epoch's linear
    /// minimizer puts its whole length on the steepest packet.
    fn frank_wolfe_gap(&self, x: &[Vec<f64>], slopes: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, xj)| {
                let f = self.decomposition.packets_in(j);
                let here: f64 = f.iter().zip(xj).map(|(&i, &v)| slopes[i] * v).sum();
                let best = f.iter().map(|&i| slopes[i]).fold(0.0, f64::min);
                here - best * self.decomposition.epoch_len(j)
            })
            .sum()
    }

    fn directional(&self, direction: &[Vec<f64>], slopes: &[f64]) -> f64 {
        direction
            .iter()
            .enumerate()
            .map(|(j, dj)| {
                self.decomposition
                    .packets_in(j)
                    .iter()
                    .zip(dj)
                    .map(|(&i, &d)| slopes[i] * d)
                    .sum::<f64>()
            })
            .sum()
    }

    fn to_table(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut tau = vec![vec![0.0; x.len()]; self.bits.len()];
        for (j, xj) in x.iter().enumerate() {
            for (&i, &v) in self.decomposition.packets_in(j).iter().zip(xj) {
                tau[i][j] = v;
            }
        }
        tau
    }
}

fn solution(
    bits: &[f64],
    tau: Vec<Vec<f64>>,
    model: &PowerModel,
    iterations: usize,
    residual: f64,
    converged: bool,
) -> OracleSolution {
    let total_times: Vec<f64> = tau.iter().map(|row| row.iter().sum()).collect();
    let rates: Vec<f64> = bits
        .iter()
        .zip(&total_times)
        .map(|(&b, &t)| b / t)
        .collect();
    let energy = bits
        .iter()
        .zip(&total_times)
        .map(|(&b, &t)| packet_energy(model, b, t))
        .sum();
    OracleSolution {
        tau,
        total_times,
        rates,
        energy,
        iterations,
        residual,
        converged,
    }
}

/// Minimizes the energy over the allocation polytope by spectral projected
/// gradient descent with Armijo backtracking.
///
/// Stops once the Frank-Wolfe gap, an upper bound on the distance to the
/// optimal energy, drops below `tol` times the current energy, or when
/// floating point admits no further descent (counted as converged for any
/// positive `tol`). If neither happens within `max_iters` steps the returned
/// solution has `converged == false` and is still a feasible upper bound.
pub fn solve_projected_gradient(
    instance: &Instance,
    model: &PowerModel,
    tol: f64,
    max_iters: usize,
) -> Result<OracleSolution> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::ConfigInvalid(format!(
            "tolerance {tol} must be non-negative"
        )));
    }
    let decomposition = decompose(instance);
    let problem = Allocation {
        bits: instance.packets().iter().map(|p| p.bits).collect(),
        decomposition: &decomposition,
        model,
    };
    let m = decomposition.num_epochs();
    let caps: Vec<f64> = (0..m).map(|j| decomposition.epoch_len(j)).collect();

    // fair split of every epoch among the packets that may use it
    let mut x: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let k = decomposition.packets_in(j).len();
            vec![caps[j] / k as f64; k]
        })
        .collect();
    let totals = problem.totals(&x);
    let mut energy = problem.energy(&totals);
    let mut slopes = problem.slopes(&totals);
    let mut gap = problem.frank_wolfe_gap(&x, &slopes);
    let mut spectral: f64 = 1.0;
    let mut converged = gap <= tol * energy;
    let mut iterations = 0;

    while !converged && iterations < max_iters {
        iterations += 1;
        // projected point for the spectral step, searched along by halving
        let target: Vec<Vec<f64>> = x
            .iter()
            .enumerate()
            .map(|(j, xj)| {
                let s: Vec<f64> = decomposition
                    .packets_in(j)
                    .iter()
                    .map(|&i| slopes[i])
                    .collect();
                project_step(xj, &s, spectral, caps[j])
            })
            .collect();
        let direction: Vec<Vec<f64>> = target
            .iter()
            .zip(&x)
            .map(|(tj, xj)| tj.iter().zip(xj).map(|(t, v)| t - v).collect())
            .collect();
        let change = problem.directional(&direction, &slopes);
        if change.is_nan() || change >= 0.0 {
            converged = tol > 0.0;
            break;
        }

        let mut lambda: f64 = 1.0;
        let accepted = loop {
            let candidate: Vec<Vec<f64>> = x
                .iter()
                .zip(&direction)
                .map(|(xj, dj)| {
                    xj.iter()
                        .zip(dj)
                        .map(|(v, d)| (v + lambda * d).max(0.0))
                        .collect()
                })
                .collect();
            let cand_totals = problem.totals(&candidate);
            let cand_energy = problem.energy(&cand_totals);
            if cand_energy < energy && cand_energy <= energy + ARMIJO * lambda * change {
                break Some((candidate, cand_totals, cand_energy));
            }
            lambda *= 0.5;
            if lambda < 1e-30 {
                break None;
            }
        };
        let Some((cand, cand_totals, cand_energy)) = accepted else {
            // no descent possible in floating point
            converged = tol > 0.0;
            break;
        };

        let cand_slopes = problem.slopes(&cand_totals);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for (j, (cj, xj)) in cand.iter().zip(&x).enumerate() {
            for (&i, (c, v)) in decomposition.packets_in(j).iter().zip(cj.iter().zip(xj)) {
                let step = c - v;
                ss += step * step;
                sy += step * (cand_slopes[i] - slopes[i]);
            }
        }
        spectral = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            1e12
        };

        x = cand;
        energy = cand_energy;
        slopes = cand_slopes;
        gap = problem.frank_wolfe_gap(&x, &slopes);
        converged = gap <= tol * energy;
    }
    let tau = problem.to_table(&x);
    Ok(solution(
        &problem.bits,
        tau,
        model,
        iterations,
        gap / energy,
        converged,
    ))
}

/// Largest instance the grid search accepts.
pub const GRID_MAX_PACKETS: usize = 3;
pub const GRID_MAX_EPOCHS: usize = 5;

/// Exhaustive search over a simplex grid of per-epoch allocations.
///
/// Each epoch is split among its feasible packets in multiples of
/// `1 / resolution` of its length, with every epoch fully used. All grid
/// points are enumerated except the split between the last two packets of the
/// last shared epoch: along that line the energy is convex, so its grid
/// minimum is one of the two grid points around the continuous minimizer,
/// which has a closed form.
pub fn solve_grid(
    instance: &Instance,
    model: &PowerModel,
    resolution: usize,
) -> Result<OracleSolution> {
    let decomposition = decompose(instance);
    let n = instance.len();
    let m = decomposition.num_epochs();
    if n > GRID_MAX_PACKETS || m > GRID_MAX_EPOCHS {
        return Err(Error::TooLarge(format!(
            "{n} packets and {m} epochs; grid search handles at most {GRID_MAX_PACKETS} and {GRID_MAX_EPOCHS}"
        )));
    }
    if resolution < 10 {
        return Err(Error::ConfigInvalid(format!(
            "resolution {resolution} below 10"
        )));
    }
    let bits: Vec<f64> = instance.packets().iter().map(|p| p.bits).collect();

    let mut blocks: Vec<Block> = Vec::new();
    let mut base = vec![0.0; n];
    for j in 0..m {
        let f = decomposition.packets_in(j);
        let len = decomposition.epoch_len(j);
        if let [only] = f {
            base[*only] += len;
        } else if !f.is_empty() {
            blocks.push(Block {
                packets: f.to_vec(),
                length: len,
                epoch: j,
            });
        }
    }

    let mut search = GridSearch {
        model,
        bits: &bits,
        blocks: &blocks,
        resolution,
        levels: blocks.iter().map(|b| vec![0; b.packets.len()]).collect(),
        best_energy: f64::INFINITY,
        best_levels: Vec::new(),
        evaluated: 0,
    };
    let mut totals = base.clone();
    search.descend(0, &mut totals);

    let mut tau = vec![vec![0.0; m]; n];
    for (j, i) in (0..m).filter_map(|j| match decomposition.packets_in(j) {
        [only] => Some((j, *only)),
        _ => None,
    }) {
        tau[i][j] = decomposition.epoch_len(j);
    }
    for (b, lv) in blocks.iter().zip(&search.best_levels) {
        for (&i, &l) in b.packets.iter().zip(lv) {
            tau[i][b.epoch] = b.length * l as f64 / resolution as f64;
        }
    }
    let step = blocks.iter().map(|b| b.length).fold(0.0, f64::max) / resolution as f64;
    Ok(solution(&bits, tau, model, search.evaluated, step, true))
}

struct Block {
    packets: Vec<usize>,
    length: f64,
    epoch: usize,
}

struct GridSearch<'a> {
    model: &'a PowerModel,
    bits: &'a [f64],
    blocks: &'a [Block],
    resolution: usize,
    levels: Vec<Vec<usize>>,
    best_energy: f64,
    best_levels: Vec<Vec<usize>>,
    evaluated: usize,
}

impl GridSearch<'_> {
    fn energy(&self, totals: &[f64]) -> f64 {
        self.bits
            .iter()
            .zip(totals)
            .map(|(&b, &t)| {
                if t > TIME_FLOOR {
                    packet_energy(self.model, b, t)
                } else {
                    f64::INFINITY
                }
            })
            .sum()
    }

    fn descend(&mut self, block: usize, totals: &mut [f64]) {
        if block == self.blocks.len() {
            self.evaluated += 1;
            let e = self.energy(totals);
            if e < self.best_energy {
                self.best_energy = e;
                self.best_levels = self.levels.clone();
            }
            return;
        }
        let last = block + 1 == self.blocks.len();
        let k = self.blocks[block].packets.len();
        self.split(block, 0, self.resolution, last, k, totals);
    }

    /// Assigns levels to packets `slot..` of `block` from `left` units.
    fn split(
        &mut self,
        block: usize,
        slot: usize,
        left: usize,
        last: bool,
        k: usize,
        totals: &mut [f64],
    ) {
        let unit = self.blocks[block].length / self.resolution as f64;
        let pkt = self.blocks[block].packets[slot];
        if slot + 1 == k {
            self.levels[block][slot] = left;
            totals[pkt] += left as f64 * unit;
            self.descend(block + 1, totals);
            totals[pkt] -= left as f64 * unit;
            return;
        }
        if last && slot + 2 == k {
            let other = self.blocks[block].packets[slot + 1];
            let (ba, bb) = (self.bits[pkt], self.bits[other]);
            let (pa, pb) = (totals[pkt], totals[other]);
            let room = left as f64 * unit;
            // equal rates: (pa + x) / ba = (pb + room - x) / bb
            let x = ((ba * (pb + room) - bb * pa) / (ba + bb)).clamp(0.0, room);
            let lo = ((x / unit).floor() as usize).min(left);
            for a in [lo, (lo + 1).min(left)] {
                self.levels[block][slot] = a;
                totals[pkt] += a as f64 * unit;
                self.split(block, slot + 1, left - a, last, k, totals);
                totals[pkt] -= a as f64 * unit;
            }
            return;
        }
        for a in 0..=left {
            self.levels[block][slot] = a;
            totals[pkt] += a as f64 * unit;
            self.split(block, slot + 1, left - a, last, k, totals);
            totals[pkt] -= a as f64 * unit;
        }
    }
}
