use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{normalize_instance, Instance, Packet};

/// Parameters of the random instance generator.
///
/// The stream comes from ChaCha8 seeded with `seed` through
/// `SeedableRng::seed_from_u64`; each uniform draw takes the top 53 bits of
/// one `next_u64`. Both steps are fixed so corpora are portable.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Probability that a packet's window is nested strictly inside the
    /// window of an earlier packet.
    pub non_fifo_prob: f64,
    pub bits_range: (f64, f64),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 10,
            horizon: 10.0,
            seed: 0,
            non_fifo_prob: 0.3,
            bits_range: (0.5, 2.0),
        }
    }
}

/// Uniform doubles in `[0, 1)` from a ChaCha8 stream.
pub struct UnitRng(ChaCha8Rng);

impl UnitRng {
    pub fn new(seed: u64) -> Self {
        UnitRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_index(&mut self, bound: usize) -> usize {
        ((self.next_unit() * bound as f64) as usize).min(bound - 1)
    }
}

/// Draws a random instance.
///
/// Arrivals are uniform in `[0, horizon)` and free windows last between 5%
/// and 50% of the horizon. A nested window trims 2% to 20% of the outer
/// window from each end, so repeated nesting shrinks windows only slowly.
pub fn generate(config: &GeneratorConfig) -> Result<Instance> {
    let (lo, hi) = config.bits_range;
    if config.n == 0 {
        return Err(Error::ConfigInvalid("n must be at least 1".into()));
    }
    if !(config.horizon > 0.0 && config.horizon.is_finite()) {
        return Err(Error::ConfigInvalid(format!(
            "horizon {} must be positive",
            config.horizon
        )));
    }
    if !(0.0..=1.0).contains(&config.non_fifo_prob) {
        return Err(Error::ConfigInvalid(format!(
            "non-FIFO probability {} outside [0, 1]",
            config.non_fifo_prob
        )));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::ConfigInvalid(format!(
            "bits range ({lo}, {hi}) invalid"
        )));
    }

    let mut rng = UnitRng::new(config.seed);
    let mut packets: Vec<Packet> = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let bits = lo + (hi - lo) * rng.next_unit();
        let nest = rng.next_unit();
        let (arrival, deadline) = if i > 0 && nest < config.non_fifo_prob {
            let outer = packets[rng.next_index(i)];
            let w = outer.window();
            let arrival = outer.arrival + w * (0.02 + 0.18 * rng.next_unit());
            let deadline = outer.deadline - w * (0.02 + 0.18 * rng.next_unit());
            (arrival, deadline)
        } else {
            let arrival = config.horizon * rng.next_unit();
            (
                arrival,
                arrival + config.horizon * (0.05 + 0.45 * rng.next_unit()),
            )
        };
        packets.push(Packet::new(i as u64 + 1, bits, arrival, deadline));
    }
    Ok(normalize_instance(&packets)?.instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_non_fifo;

    #[test]
    fn single_packet_never_nested() {
        for seed in 0..20 {
            let cfg = GeneratorConfig {
                n: 1,
                seed,
                non_fifo_prob: 1.0,
                ..Default::default()
            };
            let i = generate(&cfg).unwrap();
            assert_eq!(i.len(), 1);
            assert!(is_non_fifo(&i).is_empty());
        }
    }

    #[test]
    fn nesting_produces_non_fifo_packets() {
        let cfg = GeneratorConfig {
            n: 10,
            seed: 42,
            non_fifo_prob: 1.0,
            ..Default::default()
        };
        assert!(!is_non_fifo(&generate(&cfg).unwrap()).is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = GeneratorConfig {
            n: 25,
            seed: 7,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GeneratorConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            GeneratorConfig {
                n: 0,
                ..Default::default()
            },
            GeneratorConfig {
                horizon: 0.0,
                ..Default::default()
            },
            GeneratorConfig {
                non_fifo_prob: 1.5,
                ..Default::default()
            },
            GeneratorConfig {
                bits_range: (0.0, 1.0),
                ..Default::default()
            },
            GeneratorConfig {
                bits_range: (2.0, 1.0),
                ..Default::default()
            },
        ];
        for cfg in &bad {
            assert!(
                matches!(generate(cfg), Err(Error::ConfigInvalid(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn unit_draws_in_range() {
        let mut r = UnitRng::new(1);
        for _ in 0..10_000 {
            let u = r.next_unit();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
