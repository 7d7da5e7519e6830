//! Feasibility and optimality checks for arbitrary schedules.
//!
//! A feasible schedule is optimal exactly when
//! - every packet is sent at one constant rate,
//! - no epoch has idle time, and
//! - within each epoch, all packets that get time share one rate, and no
//!   packet that could have used the epoch but did not has a higher rate.
//!
//! When those hold, [`extract_certificate`] produces Lagrange multipliers that
//! witness optimality.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{decompose, has_tied_arrivals, EpochDecomposition, Instance};
use crate::power::{PowerModel, RateCurve};
use crate::schedule::Schedule;

/// Relative tolerance for bit conservation and rate equality.
pub const REL_TOL: f64 = 1e-9;
/// τ at or below this fraction of its epoch counts as zero time.
pub const POSITIVE_TIME_FRACTION: f64 = 1e-9;
/// Tolerance on certificate identities.
pub const CERT_TOL: f64 = 1e-8;

/// A single broken constraint. Packet and epoch fields are zero-based indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BeforeArrival {
        packet: usize,
        at: f64,
    },
    AfterDeadline {
        packet: usize,
        at: f64,
    },
    Overlap {
        first: usize,
        second: usize,
        at: f64,
    },
    Bits {
        packet: usize,
        delivered: f64,
        required: f64,
    },
    NonPositiveRate {
        packet: usize,
        rate: f64,
    },
    NegativeTime {
        packet: usize,
        epoch: usize,
        tau: f64,
    },
    OutsideLifetime {
        packet: usize,
        epoch: usize,
        tau: f64,
    },
    EpochOverfull {
        epoch: usize,
        used: f64,
        length: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::BeforeArrival { packet, at } => {
                write!(f, "packet {} transmits at {at} before arriving", packet + 1)
            }
            Violation::AfterDeadline { packet, at } => {
                write!(
                    f,
                    "packet {} transmits at {at} after its deadline",
                    packet + 1
                )
            }
            Violation::Overlap { first, second, at } => {
                write!(
                    f,
                    "packets {} and {} overlap at {at}",
                    first + 1,
                    second + 1
                )
            }
            Violation::Bits {
                packet,
                delivered,
                required,
            } => write!(
                f,
                "packet {} delivers {delivered} of {required} bits",
                packet + 1
            ),
            Violation::NonPositiveRate { packet, rate } => {
                write!(f, "packet {} has rate {rate}", packet + 1)
            }
            Violation::NegativeTime { packet, epoch, tau } => {
                write!(
                    f,
                    "packet {} has negative time {tau} in epoch {}",
                    packet + 1,
                    epoch + 1
                )
            }
            Violation::OutsideLifetime { packet, epoch, tau } => write!(
                f,
                "packet {} has time {tau} in epoch {} outside its life time",
                packet + 1,
                epoch + 1
            ),
            Violation::EpochOverfull {
                epoch,
                used,
                length,
            } => {
                write!(f, "epoch {} uses {used} s of {length} s", epoch + 1)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

fn time_tol(instance: &Instance) -> f64 {
    1e-9 * instance.horizon().max(1.0)
}

fn check_dimensions(
    instance: &Instance,
    decomposition: &EpochDecomposition,
    schedule: &Schedule,
) -> Result<()> {
    let (n, m) = (instance.len(), decomposition.num_epochs());
    if schedule.rates.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} rates for {n} packets",
            schedule.rates.len()
        )));
    }
    if schedule.tau.len() != n || schedule.tau.iter().any(|row| row.len() != m) {
        return Err(Error::DimensionMismatch(format!("tau must be {n}x{m}")));
    }
    if let Some(s) = schedule.segments.iter().find(|s| s.packet >= n) {
        return Err(Error::DimensionMismatch(format!(
            "segment for packet index {}",
            s.packet
        )));
    }
    Ok(())
}

/// Checks causality, deadlines, overlap, bit conservation and the epoch
/// capacity constraints.
pub fn check_feasible(instance: &Instance, schedule: &Schedule) -> Result<FeasibilityReport> {
    let decomposition = decompose(instance);
    check_dimensions(instance, &decomposition, schedule)?;
    let tol = time_tol(instance);
    let packets = instance.packets();
    let mut violations = Vec::new();

    for (i, &r) in schedule.rates.iter().enumerate() {
        if !(r > 0.0 && r.is_finite()) {
            violations.push(Violation::NonPositiveRate { packet: i, rate: r });
        }
    }

    let mut delivered = vec![0.0; packets.len()];
    if schedule.segments.is_empty() {
        for (i, row) in schedule.tau.iter().enumerate() {
            delivered[i] = row.iter().sum::<f64>() * schedule.rates[i];
        }
    } else {
        for s in &schedule.segments {
            let p = &packets[s.packet];
            if s.start < p.arrival - tol {
                violations.push(Violation::BeforeArrival {
                    packet: s.packet,
                    at: s.start,
                });
            }
            if s.end > p.deadline + tol {
                violations.push(Violation::AfterDeadline {
                    packet: s.packet,
                    at: s.end,
                });
            }
            delivered[s.packet] += s.bits();
        }
        let mut order: Vec<_> = schedule.segments.iter().collect();
        order.sort_by(|a, b| a.start.total_cmp(&b.start));
        for w in order.windows(2) {
            if w[1].start < w[0].end - tol {
                violations.push(Violation::Overlap {
                    first: w[0].packet,
                    second: w[1].packet,
                    at: w[1].start,
                });
            }
        }
    }
    for (i, p) in packets.iter().enumerate() {
        if (delivered[i] - p.bits).abs() > REL_TOL * p.bits {
            violations.push(Violation::Bits {
                packet: i,
                delivered: delivered[i],
                required: p.bits,
            });
        }
    }

    for (i, row) in schedule.tau.iter().enumerate() {
        let lifetime = decomposition.epochs_of(i);
        for (j, &t) in row.iter().enumerate() {
            if t < -tol {
                violations.push(Violation::NegativeTime {
                    packet: i,
                    epoch: j,
                    tau: t,
                });
            } else if t > tol && !lifetime.contains(&j) {
                violations.push(Violation::OutsideLifetime {
                    packet: i,
                    epoch: j,
                    tau: t,
                });
            }
        }
    }
    for j in 0..decomposition.num_epochs() {
        let used: f64 = schedule.tau.iter().map(|row| row[j]).sum();
        let length = decomposition.epoch_len(j);
        if used > length + tol {
            violations.push(Violation::EpochOverfull {
                epoch: j,
                used,
                length,
            });
        }
    }
    Ok(FeasibilityReport { violations })
}

/// Per-epoch split of the feasible packets by whether they get time there.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochCondition {
    /// Packets with positive time in the epoch.
    pub busy: Vec<usize>,
    /// Feasible packets with no time in the epoch.
    pub idle: Vec<usize>,
    pub non_idling: bool,
    /// Every busy packet has the same rate.
    pub equal_rates: bool,
    /// No idle packet is faster than a busy one.
    pub ordered_rates: bool,
}

impl EpochCondition {
    pub fn ok(&self) -> bool {
        self.non_idling && self.equal_rates && self.ordered_rates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub feasible: bool,
    pub constant_rate_ok: bool,
    pub epochs: Vec<EpochCondition>,
    /// `None` when the schedule carries no iteration trace.
    pub monotone_iteration_rates_ok: Option<bool>,
    /// Several packets share an arrival instant. Reported, not a failure.
    pub tied_arrivals: bool,
    pub optimal: bool,
}

impl VerificationReport {
    pub fn non_idling_ok(&self) -> bool {
        self.epochs.iter().all(|e| e.non_idling)
    }

    pub fn epoch_rates_ok(&self) -> bool {
        self.epochs.iter().all(|e| e.equal_rates && e.ordered_rates)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(f, "feasible:               {}", mark(self.feasible))?;
        writeln!(
            f,
            "constant rate per packet: {}",
            mark(self.constant_rate_ok)
        )?;
        writeln!(f, "non-idling epochs:      {}", mark(self.non_idling_ok()))?;
        writeln!(f, "epoch rate conditions:  {}", mark(self.epoch_rates_ok()))?;
        for (j, e) in self.epochs.iter().enumerate().filter(|(_, e)| !e.ok()) {
            writeln!(
                f,
                "  epoch {}: non-idling={} equal={} ordered={}",
                j + 1,
                e.non_idling,
                e.equal_rates,
                e.ordered_rates
            )?;
        }
        if let Some(ok) = self.monotone_iteration_rates_ok {
            writeln!(f, "monotone round rates:   {}", mark(ok))?;
        }
        if self.tied_arrivals {
            writeln!(f, "note: some packets share an arrival instant")?;
        }
        write!(
            f,
            "optimal:                {}",
            if self.optimal { "yes" } else { "no" }
        )
    }
}

fn rates_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

/// Rates of successive rounds never increase.
pub fn monotone_rates(rates: impl IntoIterator<Item = f64>) -> bool {
    let v: Vec<f64> = rates.into_iter().collect();
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + REL_TOL))
}

/// Checks the necessary-and-sufficient optimality conditions on a feasible
/// schedule.
pub fn check_optimality(
    instance: &Instance,
    schedule: &Schedule,
    _model: &PowerModel,
) -> Result<VerificationReport> {
    let feasibility = check_feasible(instance, schedule)?;
    if !feasibility.is_feasible() {
        return Err(Error::InfeasibleInput);
    }
    let decomposition = decompose(instance);
    let tol = time_tol(instance);
    let rates = &schedule.rates;

    let constant_rate_ok = schedule
        .segments
        .iter()
        .all(|s| rates_equal(s.rate, rates[s.packet]));

    let epochs: Vec<EpochCondition> = (0..decomposition.num_epochs())
        .map(|j| {
            let length = decomposition.epoch_len(j);
            let feasible = decomposition.packets_in(j);
            let (busy, idle): (Vec<usize>, Vec<usize>) = feasible
                .iter()
                .partition(|&&i| schedule.tau[i][j] > POSITIVE_TIME_FRACTION * length);
            let used: f64 = feasible.iter().map(|&i| schedule.tau[i][j]).sum();
            let non_idling = feasible.is_empty() || (used - length).abs() <= tol;
            let equal_rates = busy
                .windows(2)
                .all(|w| rates_equal(rates[w[0]], rates[w[1]]));
            let slowest_busy = busy.iter().map(|&i| rates[i]).fold(f64::INFINITY, f64::min);
            let ordered_rates = idle
                .iter()
                .all(|&k| slowest_busy >= rates[k] - REL_TOL * slowest_busy.max(rates[k]));
            EpochCondition {
                busy,
                idle,
                non_idling,
                equal_rates,
                ordered_rates,
            }
        })
        .collect();

    let monotone_iteration_rates_ok = schedule.trace.as_ref().map(|t| monotone_rates(t.rates()));
    let optimal = constant_rate_ok
        && epochs.iter().all(EpochCondition::ok)
        && monotone_iteration_rates_ok.unwrap_or(true);
    Ok(VerificationReport {
        feasible: true,
        constant_rate_ok,
        epochs,
        monotone_iteration_rates_ok,
        tied_arrivals: has_tied_arrivals(instance),
        optimal,
    })
}

/// Lagrange multipliers witnessing optimality.
///
/// `lambda` pairs with bit conservation per packet, `beta` with epoch
/// capacity, `gamma[j]` with non-negativity of τ for each packet feasible in
/// epoch `j` (listed in the order of [`EpochDecomposition::packets_in`]), and
/// `eta` with rate non-negativity.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<(usize, f64)>>,
    pub eta: Vec<f64>,
}

/// Builds the multiplier certificate for an optimal schedule and checks
/// stationarity and complementary slackness.
pub fn extract_certificate(
    instance: &Instance,
    schedule: &Schedule,
    model: &PowerModel,
) -> Result<KktCertificate> {
    let report = check_optimality(instance, schedule, model)?;
    if !report.optimal {
        return Err(Error::NotOptimal(report.to_string()));
    }
    let decomposition = decompose(instance);
    let rates = &schedule.rates;
    let lambda: Vec<f64> = rates.iter().map(|&r| model.marginal(r)).collect();
    let eta = vec![0.0; rates.len()];
    let mut beta = Vec::with_capacity(report.epochs.len());
    let mut gamma = Vec::with_capacity(report.epochs.len());

    for (j, cond) in report.epochs.iter().enumerate() {
        let common = cond.busy.iter().map(|&i| rates[i]).fold(0.0, f64::max);
        let b = model.marginal(common);
        let g: Vec<(usize, f64)> = decomposition
            .packets_in(j)
            .iter()
            .map(|&i| {
                if cond.busy.contains(&i) {
                    (i, 0.0)
                } else {
                    (i, b - lambda[i])
                }
            })
            .collect();
        beta.push(b);
        gamma.push(g);
    }
    let cert = KktCertificate {
        lambda,
        beta,
        gamma,
        eta,
    };
    validate_certificate(instance, &decomposition, schedule, model, &cert)?;
    Ok(cert)
}

/// Checks sign constraints, stationarity, the rate identity
/// `r_i = g^{-1}(beta_j - gamma_ij)` and complementary slackness.
pub fn validate_certificate(
    instance: &Instance,
    decomposition: &EpochDecomposition,
    schedule: &Schedule,
    model: &PowerModel,
    cert: &KktCertificate,
) -> Result<()> {
    let fail = |msg: String| Err(Error::NotOptimal(msg));
    let tol = time_tol(instance);
    for (j, (&b, g)) in cert.beta.iter().zip(&cert.gamma).enumerate() {
        if !(b.is_finite() && b >= 0.0) {
            return fail(format!("beta[{}] = {b}", j + 1));
        }
        let length = decomposition.epoch_len(j);
        let used: f64 = g.iter().map(|&(i, _)| schedule.tau[i][j]).sum();
        if (b * (used - length)).abs() > CERT_TOL * b.max(1.0) {
            return fail(format!("capacity slackness broken in epoch {}", j + 1));
        }
        for &(i, gij) in g {
            let scale = b.max(cert.lambda[i]).max(1.0);
            if !gij.is_finite() || gij < -CERT_TOL * scale {
                return fail(format!("gamma[{}][{}] = {gij}", i + 1, j + 1));
            }
            if (b - gij - cert.lambda[i]).abs() > CERT_TOL * scale {
                return fail(format!(
                    "stationarity broken for packet {} in epoch {}",
                    i + 1,
                    j + 1
                ));
            }
            if (gij * schedule.tau[i][j]).abs() > CERT_TOL * scale * tol.max(length) {
                return fail(format!(
                    "slackness broken for packet {} in epoch {}",
                    i + 1,
                    j + 1
                ));
            }
            // b - gij cancels when packet i is much slower than the epoch's
            // busy packets, so the identity may also hold on the g side
            let r = model.marginal_inverse((b - gij).max(0.0))?;
            let ri = schedule.rates[i];
            let on_g_side = (model.marginal(ri) - (b - gij)).abs() <= CERT_TOL * scale;
            if (r - ri).abs() > CERT_TOL * ri && !on_g_side {
                return fail(format!(
                    "rate identity broken for packet {} in epoch {}",
                    i + 1,
                    j + 1
                ));
            }
        }
    }
    if cert.eta.iter().any(|&e| e != 0.0) {
        return fail("eta must vanish for positive rates".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize_instance, Packet};
    use crate::schedule::Segment;
    use crate::scheduler::solve;

    fn inst(ps: &[(f64, f64, f64)]) -> Instance {
        let raw: Vec<Packet> = ps
            .iter()
            .enumerate()
            .map(|(i, &(b, a, d))| Packet::new(i as u64 + 1, b, a, d))
            .collect();
        normalize_instance(&raw).unwrap().instance
    }

    fn nested() -> Instance {
        inst(&[(2.0, 0.0, 2.0), (1.0, 0.5, 1.0)])
    }

    fn shannon() -> PowerModel {
        PowerModel::shannon(1.0).unwrap()
    }

    #[test]
    fn solver_output_is_feasible_and_optimal() {
        let i = nested();
        let s = solve(&i, &shannon()).unwrap();
        assert!(check_feasible(&i, &s).unwrap().is_feasible());
        let r = check_optimality(&i, &s, &shannon()).unwrap();
        assert!(r.optimal, "{r}");
        assert_eq!(r.epochs[1].busy, vec![1]);
        assert_eq!(r.epochs[1].idle, vec![0]);
        assert_eq!(r.monotone_iteration_rates_ok, Some(true));
    }

    #[test]
    fn causality_violation_detected() {
        let i = nested();
        let d = decompose(&i);
        // P2 starts at 0 although it arrives at 0.5
        let segs = vec![
            Segment {
                packet: 1,
                start: 0.0,
                end: 0.5,
                rate: 2.0,
            },
            Segment {
                packet: 0,
                start: 0.5,
                end: 2.0,
                rate: 4.0 / 3.0,
            },
        ];
        let s = Schedule::from_segments(&i, &d, vec![4.0 / 3.0, 2.0], segs, &shannon()).unwrap();
        let rep = check_feasible(&i, &s).unwrap();
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BeforeArrival { packet: 1, .. })));
        assert_eq!(
            check_optimality(&i, &s, &shannon()).unwrap_err(),
            Error::InfeasibleInput
        );
    }

    #[test]
    fn short_delivery_detected() {
        let i = inst(&[(1.0, 0.0, 1.0)]);
        let d = decompose(&i);
        let segs = vec![Segment {
            packet: 0,
            start: 0.0,
            end: 0.9,
            rate: 1.0,
        }];
        let s = Schedule::from_segments(&i, &d, vec![1.0], segs, &shannon()).unwrap();
        let rep = check_feasible(&i, &s).unwrap();
        assert!(matches!(
            rep.violations[..],
            [Violation::Bits { packet: 0, .. }]
        ));
    }

    #[test]
    fn overlap_and_dimension_errors() {
        let i = inst(&[(1.0, 0.0, 1.0), (1.0, 0.0, 1.0)]);
        let d = decompose(&i);
        let segs = vec![
            Segment {
                packet: 0,
                start: 0.0,
                end: 0.5,
                rate: 2.0,
            },
            Segment {
                packet: 1,
                start: 0.25,
                end: 0.75,
                rate: 2.0,
            },
        ];
        let s = Schedule::from_segments(&i, &d, vec![2.0, 2.0], segs, &shannon()).unwrap();
        let rep = check_feasible(&i, &s).unwrap();
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Overlap { .. })));

        let mut bad = s.clone();
        bad.rates.pop();
        assert!(matches!(
            check_feasible(&i, &bad),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn shifting_time_into_shared_epoch_breaks_optimality() {
        let i = nested();
        let d = decompose(&i);
        let opt = solve(&i, &shannon()).unwrap();
        let mut tau = opt.tau.clone();
        // move 1% of the shared epoch from P2 to P1
        let delta = 0.01 * d.epoch_len(1);
        tau[1][1] -= delta;
        tau[0][1] += delta;
        let s = Schedule::from_allocation(&i, &d, tau, &shannon()).unwrap();
        assert!(check_feasible(&i, &s).unwrap().is_feasible());
        let r = check_optimality(&i, &s, &shannon()).unwrap();
        assert!(!r.optimal);
        assert!(!r.epochs[1].equal_rates);
        assert!(s.energy > opt.energy);
        assert!(matches!(
            extract_certificate(&i, &s, &shannon()),
            Err(Error::NotOptimal(_))
        ));
    }

    #[test]
    fn idle_epoch_breaks_optimality() {
        let i = inst(&[(1.0, 0.0, 2.0)]);
        let d = decompose(&i);
        let segs = vec![Segment {
            packet: 0,
            start: 0.0,
            end: 1.0,
            rate: 1.0,
        }];
        let s = Schedule::from_segments(&i, &d, vec![1.0], segs, &shannon()).unwrap();
        let r = check_optimality(&i, &s, &shannon()).unwrap();
        assert!(!r.non_idling_ok());
        assert!(!r.optimal);
    }

    #[test]
    fn single_packet_trivially_optimal() {
        let i = inst(&[(3.0, 0.0, 2.0)]);
        let d = decompose(&i);
        let segs = vec![Segment {
            packet: 0,
            start: 0.0,
            end: 2.0,
            rate: 1.5,
        }];
        let s = Schedule::from_segments(&i, &d, vec![1.5], segs, &shannon()).unwrap();
        let r = check_optimality(&i, &s, &shannon()).unwrap();
        assert!(r.optimal);
        assert_eq!(r.monotone_iteration_rates_ok, None);
        let c = extract_certificate(&i, &s, &shannon()).unwrap();
        assert_eq!(c.beta, vec![shannon().marginal(1.5)]);
        assert_eq!(c.lambda, c.beta);
        assert_eq!(c.gamma, vec![vec![(0, 0.0)]]);
    }

    #[test]
    fn nested_certificate_values() {
        let i = nested();
        let m = shannon();
        let s = solve(&i, &m).unwrap();
        let c = extract_certificate(&i, &s, &m).unwrap();
        assert_eq!(c.beta[1], m.marginal(2.0));
        let (who, g12) = c.gamma[1][0];
        assert_eq!(who, 0);
        let expected = m.marginal(2.0) - m.marginal(4.0 / 3.0);
        assert!((g12 - expected).abs() <= 1e-12 * expected);
        assert!(g12 > 0.0);
        for (j, g) in c.gamma.iter().enumerate() {
            for &(pkt, gij) in g {
                let r = m.marginal_inverse(c.beta[j] - gij).unwrap();
                assert!((r - s.rates[pkt]).abs() <= 1e-8 * s.rates[pkt]);
            }
        }
    }

    #[test]
    fn verification_is_repeatable() {
        let i = nested();
        let s = solve(&i, &shannon()).unwrap();
        let before = s.clone();
        let a = check_optimality(&i, &s, &shannon()).unwrap();
        let b = check_optimality(&i, &s, &shannon()).unwrap();
        assert_eq!(a, b);
        assert_eq!(s, before);
    }

    #[test]
    fn monotone_helper() {
        assert!(monotone_rates([3.0, 2.0, 2.0, 1.0]));
        assert!(!monotone_rates([1.0, 2.0]));
        assert!(monotone_rates(std::iter::empty()));
    }
}
