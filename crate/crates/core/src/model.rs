//! Problem instances and the epoch decomposition of the timeline.
//!
//! Every arrival instant and deadline is a breakpoint. Sorting and
//! deduplicating the breakpoints yields a grid `0 = t_0 < t_1 < ... < t_M = T`;
//! the `M` intervals between adjacent breakpoints are *epochs*. A packet may
//! transmit in epoch `j` exactly when the epoch lies inside its life time
//! `[arrival, deadline]`.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two instants closer than this (seconds) are treated as the same instant.
pub const TIME_TOL: f64 = 1e-9;

/// One transmission job: `bits` must be delivered within `[arrival, deadline]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub bits: f64,
    pub arrival: f64,
    pub deadline: f64,
}

impl Packet {
    pub fn new(id: u64, bits: f64, arrival: f64, deadline: f64) -> Self {
        Packet {
            id,
            bits,
            arrival,
            deadline,
        }
    }

    pub fn window(&self) -> f64 {
        self.deadline - self.arrival
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::MalformedPacket {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if !(self.bits.is_finite() && self.arrival.is_finite() && self.deadline.is_finite()) {
            return bad("non-finite field");
        }
        if self.bits <= 0.0 {
            return bad("bits must be positive");
        }
        if self.arrival < 0.0 {
            return bad("arrival must be non-negative");
        }
        if self.deadline - self.arrival <= TIME_TOL {
            return bad("deadline must exceed arrival");
        }
        Ok(())
    }
}

/// A normalized problem instance.
///
/// Packets are sorted by arrival (ties by deadline), the first arrival is at
/// time zero, and ids are `1..=N` in sorted order. Packet with id `i` lives
/// at index `i - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    packets: Vec<Packet>,
    horizon: f64,
}

impl Instance {
    /// Wraps packets that already satisfy the normalized-form invariants.
    pub fn new(packets: Vec<Packet>) -> Result<Self> {
        if packets.is_empty() {
            return Err(Error::EmptyInstance);
        }
        for p in &packets {
            p.validate()?;
        }
        for (idx, p) in packets.iter().enumerate() {
            if p.id != idx as u64 + 1 {
                return Err(Error::MalformedPacket {
                    id: p.id,
                    reason: format!("expected id {} at position {}", idx + 1, idx),
                });
            }
        }
        if packets[0].arrival.abs() > TIME_TOL {
            return Err(Error::MalformedPacket {
                id: packets[0].id,
                reason: "first arrival must be 0".into(),
            });
        }
        if packets.windows(2).any(|w| w[1].arrival < w[0].arrival) {
            return Err(Error::MalformedPacket {
                id: 0,
                reason: "packets not sorted by arrival".into(),
            });
        }
        let horizon = packets
            .iter()
            .map(|p| p.deadline)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Instance { packets, horizon })
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Latest deadline; the schedule lives on `[0, horizon]`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn total_bits(&self) -> f64 {
        self.packets.iter().map(|p| p.bits).sum()
    }
}

/// Result of [`normalize_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub instance: Instance,
    /// `original_ids[i]` is the caller's id for the packet now numbered `i + 1`.
    pub original_ids: Vec<u64>,
    /// Amount subtracted from every time so the first arrival is zero.
    pub offset: f64,
}

/// Sorts, shifts and renumbers raw packets into an [`Instance`].
pub fn normalize_instance(raw: &[Packet]) -> Result<Normalized> {
    if raw.is_empty() {
        return Err(Error::EmptyInstance);
    }
    for p in raw {
        p.validate()?;
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = raw.iter().find(|p| !seen.insert(p.id)) {
        return Err(Error::MalformedPacket {
            id: dup.id,
            reason: "duplicate id".into(),
        });
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then(a.deadline.total_cmp(&b.deadline))
            .then(a.id.cmp(&b.id))
    });
    let offset = sorted[0].arrival;
    let original_ids = sorted.iter().map(|p| p.id).collect();
    let packets = sorted
        .iter()
        .enumerate()
        .map(|(idx, p)| Packet {
            id: idx as u64 + 1,
            bits: p.bits,
            arrival: p.arrival - offset,
            deadline: p.deadline - offset,
        })
        .collect();
    Ok(Normalized {
        instance: Instance::new(packets)?,
        original_ids,
        offset,
    })
}

/// Epoch grid plus the containment sets linking packets and epochs.
///
/// Indices are zero-based: packet index `i` is id `i + 1`, epoch index `j`
/// spans `[instants[j], instants[j + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDecomposition {
    instants: Vec<f64>,
    /// Per packet, the contiguous run of epochs inside its life time.
    epochs_of_packet: Vec<Range<usize>>,
    /// Per epoch, the packets that may transmit in it (ascending).
    packets_of_epoch: Vec<Vec<usize>>,
}

impl EpochDecomposition {
    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn num_epochs(&self) -> usize {
        self.instants.len() - 1
    }

    pub fn epoch(&self, j: usize) -> (f64, f64) {
        (self.instants[j], self.instants[j + 1])
    }

    pub fn epoch_len(&self, j: usize) -> f64 {
        self.instants[j + 1] - self.instants[j]
    }

    pub fn epochs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.instants.windows(2).map(|w| (w[0], w[1]))
    }

    /// The set C_i for packet index `i`.
    pub fn epochs_of(&self, i: usize) -> Range<usize> {
        self.epochs_of_packet[i].clone()
    }

    /// The set F_j for epoch index `j`.
    pub fn packets_in(&self, j: usize) -> &[usize] {
        &self.packets_of_epoch[j]
    }

    /// Index of the epoch containing `t` (the last epoch for `t = horizon`).
    pub fn epoch_at(&self, t: f64) -> usize {
        let m = self.num_epochs();
        match self.instants.partition_point(|&x| x <= t) {
            0 => 0,
            k => (k - 1).min(m - 1),
        }
    }
}

fn nearest_instant(instants: &[f64], t: f64) -> usize {
    let k = instants.partition_point(|&x| x < t);
    if k == instants.len() {
        return k - 1;
    }
    if k > 0 && (t - instants[k - 1]) < (instants[k] - t) {
        k - 1
    } else {
        k
    }
}

/// Builds the deduplicated instant grid and the C/F set families.
pub fn decompose(instance: &Instance) -> EpochDecomposition {
    let mut times: Vec<f64> = instance
        .packets()
        .iter()
        .flat_map(|p| [p.arrival, p.deadline])
        .collect();
    times.sort_by(f64::total_cmp);
    let mut instants: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        match instants.last() {
            Some(&last) if t - last <= TIME_TOL => {}
            _ => instants.push(t),
        }
    }
    let m = instants.len() - 1;
    let mut packets_of_epoch = vec![Vec::new(); m];
    let epochs_of_packet: Vec<Range<usize>> = instance
        .packets()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let lo = nearest_instant(&instants, p.arrival);
            let hi = nearest_instant(&instants, p.deadline);
            for f in &mut packets_of_epoch[lo..hi] {
                f.push(i);
            }
            lo..hi
        })
        .collect();
    EpochDecomposition {
        instants,
        epochs_of_packet,
        packets_of_epoch,
    }
}

/// Ids of packets whose life time is strictly nested inside the life time of
/// an earlier-arriving packet.
pub fn is_non_fifo(instance: &Instance) -> BTreeSet<u64> {
    let ps = instance.packets();
    ps.iter()
        .filter(|p| {
            ps.iter()
                .any(|k| k.arrival < p.arrival - TIME_TOL && p.deadline < k.deadline - TIME_TOL)
        })
        .map(|p| p.id)
        .collect()
}

/// True when two packets share an arrival instant (allowed, but worth flagging).
pub fn has_tied_arrivals(instance: &Instance) -> bool {
    instance
        .packets()
        .windows(2)
        .any(|w| w[1].arrival - w[0].arrival <= TIME_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(ps: &[(f64, f64, f64)]) -> Instance {
        let raw: Vec<Packet> = ps
            .iter()
            .enumerate()
            .map(|(i, &(b, a, d))| Packet::new(i as u64 + 1, b, a, d))
            .collect();
        normalize_instance(&raw).unwrap().instance
    }

    #[test]
    fn normalize_shifts_to_zero() {
        let n = normalize_instance(&[Packet::new(7, 1.0, 5.0, 6.0)]).unwrap();
        let p = n.instance.packets()[0];
        assert_eq!((p.id, p.arrival, p.deadline), (1, 0.0, 1.0));
        assert_eq!(n.instance.horizon(), 1.0);
        assert_eq!(n.original_ids, vec![7]);
        assert_eq!(n.offset, 5.0);
    }

    #[test]
    fn normalize_keeps_normalized_input() {
        let raw = [Packet::new(1, 2.0, 0.0, 2.0), Packet::new(2, 1.0, 0.5, 1.0)];
        let n = normalize_instance(&raw).unwrap();
        assert_eq!(n.instance.packets(), &raw);
        assert_eq!(n.instance.horizon(), 2.0);
    }

    #[test]
    fn normalize_sorts_and_renumbers() {
        let raw = [
            Packet::new(10, 1.0, 3.0, 4.0),
            Packet::new(20, 1.0, 1.0, 5.0),
            Packet::new(30, 1.0, 1.0, 2.0),
        ];
        let n = normalize_instance(&raw).unwrap();
        assert_eq!(n.original_ids, vec![30, 20, 10]);
        let ids: Vec<u64> = n.instance.packets().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(n.instance.packets()[0].deadline, 1.0);
    }

    #[test]
    fn normalize_rejects_bad_packets() {
        let e = normalize_instance(&[Packet::new(4, 1.0, 1.0, 0.5)]).unwrap_err();
        assert!(matches!(e, Error::MalformedPacket { id: 4, .. }));
        let e = normalize_instance(&[Packet::new(2, 0.0, 0.0, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::MalformedPacket { id: 2, .. }));
        assert_eq!(normalize_instance(&[]).unwrap_err(), Error::EmptyInstance);
        let dup = [Packet::new(3, 1.0, 0.0, 1.0), Packet::new(3, 1.0, 0.0, 2.0)];
        assert!(matches!(
            normalize_instance(&dup),
            Err(Error::MalformedPacket { id: 3, .. })
        ));
    }

    #[test]
    fn decompose_single() {
        let d = decompose(&inst(&[(1.0, 0.0, 1.0)]));
        assert_eq!(d.instants(), &[0.0, 1.0]);
        assert_eq!(d.epochs_of(0), 0..1);
        assert_eq!(d.packets_in(0), &[0]);
    }

    #[test]
    fn decompose_nested() {
        let d = decompose(&inst(&[(2.0, 0.0, 2.0), (1.0, 0.5, 1.0)]));
        assert_eq!(d.instants(), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(d.epochs_of(0), 0..3);
        assert_eq!(d.epochs_of(1), 1..2);
        assert_eq!(d.packets_in(0), &[0]);
        assert_eq!(d.packets_in(1), &[0, 1]);
        assert_eq!(d.packets_in(2), &[0]);
    }

    #[test]
    fn decompose_duplicate_windows() {
        let d = decompose(&inst(&[(1.0, 0.0, 1.0), (1.0, 0.0, 1.0)]));
        assert_eq!(d.num_epochs(), 1);
        assert_eq!(d.packets_in(0), &[0, 1]);
    }

    #[test]
    fn decompose_merges_close_instants() {
        let d = decompose(&inst(&[(1.0, 0.0, 1.0), (1.0, 0.5, 1.0 + 1e-12)]));
        assert_eq!(d.instants().len(), 3);
        assert_eq!(d.epochs_of(1), 1..2);
    }

    #[test]
    fn non_fifo_detection() {
        assert_eq!(
            is_non_fifo(&inst(&[(1.0, 0.0, 2.0), (1.0, 0.5, 1.0)])),
            BTreeSet::from([2])
        );
        assert!(is_non_fifo(&inst(&[(1.0, 0.0, 1.0), (1.0, 0.5, 2.0)])).is_empty());
        assert!(is_non_fifo(&inst(&[(1.0, 0.0, 1.0)])).is_empty());
        // shared arrival is not strict nesting
        assert!(is_non_fifo(&inst(&[(1.0, 0.0, 2.0), (1.0, 0.0, 1.0)])).is_empty());
    }

    #[test]
    fn epoch_lookup() {
        let d = decompose(&inst(&[(2.0, 0.0, 2.0), (1.0, 0.5, 1.0)]));
        assert_eq!(d.epoch_at(0.0), 0);
        assert_eq!(d.epoch_at(0.7), 1);
        assert_eq!(d.epoch_at(1.0), 2);
        assert_eq!(d.epoch_at(2.0), 2);
    }

    fn raw_packets() -> impl Strategy<Value = Vec<Packet>> {
        prop::collection::vec((0.1f64..5.0, 0.0f64..10.0, 0.05f64..5.0), 1..12).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (b, a, w))| Packet::new(i as u64 + 1, b, a, a + w))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn decomposition_properties(raw in raw_packets()) {
            let inst = normalize_instance(&raw).unwrap().instance;
            let d = decompose(&inst);
            let total: f64 = d.epochs().map(|(a, b)| b - a).sum();
            prop_assert!((total - inst.horizon()).abs() < 1e-9);
            prop_assert_eq!(d.instants()[0], 0.0);
            prop_assert_eq!(*d.instants().last().unwrap(), inst.horizon());
            prop_assert!(d.instants().windows(2).all(|w| w[1] - w[0] > TIME_TOL));
            for (i, p) in inst.packets().iter().enumerate() {
                let c = d.epochs_of(i);
                prop_assert!(!c.is_empty());
                for j in 0..d.num_epochs() {
                    let (a, b) = d.epoch(j);
                    let inside = a >= p.arrival - TIME_TOL && b <= p.deadline + TIME_TOL;
                    prop_assert_eq!(inside, c.contains(&j));
                    prop_assert_eq!(c.contains(&j), d.packets_in(j).contains(&i));
                }
            }
        }

        #[test]
        fn decomposition_ignores_input_order(raw in raw_packets(), seed in any::<u64>()) {
            let mut shuffled = raw.clone();
            let n = shuffled.len();
            let mut s = seed;
            for k in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(k, (s >> 33) as usize % (k + 1));
            }
            let a = normalize_instance(&raw).unwrap().instance;
            let b = normalize_instance(&shuffled).unwrap().instance;
            let (da, db) = (decompose(&a), decompose(&b));
            prop_assert_eq!(da.instants(), db.instants());
            for j in 0..da.num_epochs() {
                let bits_a: f64 = da.packets_in(j).iter().map(|&i| a.packets()[i].bits).sum();
                let bits_b: f64 = db.packets_in(j).iter().map(|&i| b.packets()[i].bits).sum();
                prop_assert!((bits_a - bits_b).abs() < 1e-12);
            }
        }
    }
}
