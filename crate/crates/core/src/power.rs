//! Power-rate laws.
//!
//! A power model maps a transmission rate `r` (bits/s) to the power `f(r)`
//! (Watts) needed to sustain it. Every model here is convex and increasing
//! with `f(0) = 0`. The marginal-energy function `g(r) = r f'(r) - f(r)` and
//! its inverse connect optimal rates to the Lagrange multipliers of the
//! scheduling problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Doublings allowed when growing the bisection bracket for `g^{-1}`.
const MAX_DOUBLINGS: u32 = 1000;

/// Evaluation interface for a convex increasing power-rate law.
pub trait RateCurve {
    /// Power needed to transmit at `rate`.
    fn power(&self, rate: f64) -> f64;

    /// Derivative of [`RateCurve::power`].
    fn slope(&self, rate: f64) -> f64;

    /// Marginal energy `r f'(r) - f(r)`.
    fn marginal(&self, rate: f64) -> f64 {
        rate * self.slope(rate) - self.power(rate)
    }

    /// Inverse of [`RateCurve::marginal`].
    fn marginal_inverse(&self, y: f64) -> Result<f64> {
        bisect_marginal(self, y)
    }
}

/// Built-in power models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PowerModel {
    /// AWGN channel: `f(r) = N (2^{2r} - 1)` with noise power `N`.
    Shannon { noise_power: f64 },
    /// `f(r) = scale * r^exponent`, `exponent > 1`.
    Monomial { exponent: f64, scale: f64 },
}

impl PowerModel {
    pub fn shannon(noise_power: f64) -> Result<Self> {
        PowerModel::Shannon { noise_power }.validated()
    }

    pub fn monomial(exponent: f64, scale: f64) -> Result<Self> {
        PowerModel::Monomial { exponent, scale }.validated()
    }

    fn validated(self) -> Result<Self> {
        match self {
            PowerModel::Shannon { noise_power }
                if !(noise_power > 0.0 && noise_power.is_finite()) =>
            {
                Err(Error::InvalidModel(format!(
                    "noise power {noise_power} must be positive"
                )))
            }
            PowerModel::Monomial { exponent, scale }
                if !(exponent > 1.0
                    && exponent.is_finite()
                    && scale > 0.0
                    && scale.is_finite()) =>
            {
                Err(Error::InvalidModel(format!(
                    "monomial needs exponent > 1 and scale > 0, got {exponent}, {scale}"
                )))
            }
            m => Ok(m),
        }
    }

    /// Closed-form `g^{-1}` where one exists.
    pub fn marginal_inverse_closed_form(&self, y: f64) -> Option<f64> {
        match *self {
            PowerModel::Monomial { exponent, scale } if y >= 0.0 => {
                Some((y / (scale * (exponent - 1.0))).powf(1.0 / exponent))
            }
            _ => None,
        }
    }
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel::Shannon { noise_power: 1.0 }
    }
}

impl RateCurve for PowerModel {
    fn power(&self, rate: f64) -> f64 {
        match *self {
            PowerModel::Shannon { noise_power } => {
                noise_power * (2.0 * rate * std::f64::consts::LN_2).exp_m1()
            }
            PowerModel::Monomial { exponent, scale } => scale * rate.powf(exponent),
        }
    }

    fn slope(&self, rate: f64) -> f64 {
        match *self {
            PowerModel::Shannon { noise_power } => {
                noise_power * 2.0 * std::f64::consts::LN_2 * (2.0 * rate).exp2()
            }
            PowerModel::Monomial { exponent, scale } => {
                scale * exponent * rate.powf(exponent - 1.0)
            }
        }
    }

    fn marginal(&self, rate: f64) -> f64 {
        match *self {
            PowerModel::Shannon { noise_power } => {
                // r f'(r) - f(r) = N (1 + (2r ln2 - 1) 2^{2r}); written to stay
                // accurate near r = 0 where both terms vanish.
                let x = 2.0 * rate * std::f64::consts::LN_2;
                if x < 1e-3 {
                    // x e^x - (e^x - 1) = x^2/2 + x^3/3 + x^4/8 + x^5/30 + ...
                    noise_power * x * x * (0.5 + x * (1.0 / 3.0 + x * (0.125 + x / 30.0)))
                } else {
                    noise_power * (x * x.exp() - x.exp_m1())
                }
            }
            PowerModel::Monomial { exponent, scale } => {
                scale * (exponent - 1.0) * rate.powf(exponent)
            }
        }
    }

    fn marginal_inverse(&self, y: f64) -> Result<f64> {
        if y.is_nan() || y < 0.0 {
            return Err(Error::NegativeInput(y));
        }
        match self.marginal_inverse_closed_form(y) {
            Some(r) => Ok(r),
            None => bisect_marginal(self, y),
        }
    }
}

/// Solves `g(r) = y` by bisection on a bracket that starts at `[0, 1]` and
/// doubles its upper end until it straddles `y`.
fn bisect_marginal<M: RateCurve + ?Sized>(model: &M, y: f64) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::NegativeInput(y));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while model.marginal(hi) < y {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(Error::BracketOverflow(y));
        }
    }
    // until the bracket stops shrinking in floating point
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if model.marginal(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (glo, ghi) = (model.marginal(lo), model.marginal(hi));
    Ok(if (y - glo).abs() <= (ghi - y).abs() {
        lo
    } else {
        hi
    })
}

/// Bisection route for `g^{-1}`, bypassing any closed form.
pub fn g_inverse_bisection(model: &PowerModel, y: f64) -> Result<f64> {
    bisect_marginal(model, y)
}

/// `f(rate)`, rejecting negative rates.
pub fn power_of_rate(model: &PowerModel, rate: f64) -> Result<f64> {
    if rate.is_nan() || rate < 0.0 {
        return Err(Error::NegativeRate(rate));
    }
    Ok(model.power(rate))
}

/// `g(rate) = rate f'(rate) - f(rate)`, rejecting negative rates.
pub fn g_of_rate(model: &PowerModel, rate: f64) -> Result<f64> {
    if rate.is_nan() || rate < 0.0 {
        return Err(Error::NegativeRate(rate));
    }
    Ok(model.marginal(rate))
}

/// `g^{-1}(y)`.
pub fn g_inverse(model: &PowerModel, y: f64) -> Result<f64> {
    model.marginal_inverse(y)
}

/// One packet's contribution to the energy objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateUse {
    pub packet: usize,
    pub rate: f64,
    /// Total transmission time `bits / rate`.
    pub time: f64,
}

/// Total energy `sum_i time_i * f(rate_i)`.
pub fn schedule_energy(model: &PowerModel, uses: &[RateUse]) -> Result<f64> {
    let mut total = 0.0;
    for u in uses {
        if u.rate.is_nan() || u.rate <= 0.0 {
            return Err(Error::ZeroRate(u.packet));
        }
        total += u.time * power_of_rate(model, u.rate)?;
    }
    Ok(total)
}

/// Energy of sending `bits` over a total time `time` at constant rate.
pub fn energy_for(model: &PowerModel, bits: f64, time: f64) -> f64 {
    time * model.power(bits / time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn models() -> Vec<PowerModel> {
        vec![
            PowerModel::shannon(1.0).unwrap(),
            PowerModel::shannon(2.5).unwrap(),
            PowerModel::monomial(3.0, 1.0).unwrap(),
            PowerModel::monomial(1.5, 0.7).unwrap(),
        ]
    }

    #[test]
    fn shannon_power_values() {
        let m = PowerModel::shannon(1.0).unwrap();
        assert_eq!(power_of_rate(&m, 0.0).unwrap(), 0.0);
        assert_relative_eq!(power_of_rate(&m, 1.0).unwrap(), 3.0, max_relative = 1e-15);
        let m2 = PowerModel::shannon(2.0).unwrap();
        assert_relative_eq!(power_of_rate(&m2, 0.5).unwrap(), 2.0, max_relative = 1e-15);
        assert_eq!(
            power_of_rate(&m, -1.0).unwrap_err(),
            Error::NegativeRate(-1.0)
        );
    }

    #[test]
    fn shannon_marginal_values() {
        let m = PowerModel::shannon(1.0).unwrap();
        assert_eq!(g_of_rate(&m, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            g_of_rate(&m, 1.0).unwrap(),
            8.0 * LN2 - 3.0,
            max_relative = 1e-14
        );
        assert!((g_of_rate(&m, 1.0).unwrap() - 2.5452).abs() < 1e-4);
        // series branch agrees with the direct formula at the switch point
        let x: f64 = 1e-3;
        let direct = x * x.exp() - x.exp_m1();
        assert_relative_eq!(m.marginal(x / (2.0 * LN2)), direct, max_relative = 1e-9);
    }

    #[test]
    fn inverse_values() {
        let m = PowerModel::shannon(1.0).unwrap();
        assert_eq!(g_inverse(&m, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            g_inverse(&m, m.marginal(1.0)).unwrap(),
            1.0,
            max_relative = 1e-9
        );
        assert!((g_inverse(&m, 2.5452).unwrap() - 1.0).abs() < 1e-4);
        assert_eq!(g_inverse(&m, -0.1).unwrap_err(), Error::NegativeInput(-0.1));
    }

    #[test]
    fn monomial_closed_form_matches_bisection() {
        let m = PowerModel::monomial(2.5, 0.3).unwrap();
        for &y in &[1e-6, 0.1, 1.0, 17.0, 1e6] {
            let a = g_inverse(&m, y).unwrap();
            let b = g_inverse_bisection(&m, y).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn bracket_overflow_for_degenerate_curve() {
        struct Flat;
        impl RateCurve for Flat {
            fn power(&self, r: f64) -> f64 {
                r
            }
            fn slope(&self, _: f64) -> f64 {
                1.0
            }
        }
        assert!(matches!(
            Flat.marginal_inverse(1.0),
            Err(Error::BracketOverflow(_))
        ));
    }

    #[test]
    fn invalid_models() {
        assert!(PowerModel::shannon(0.0).is_err());
        assert!(PowerModel::monomial(1.0, 1.0).is_err());
        assert!(PowerModel::monomial(2.0, -1.0).is_err());
    }

    #[test]
    fn energy_examples() {
        let m = PowerModel::shannon(1.0).unwrap();
        let one = [RateUse {
            packet: 0,
            rate: 1.0,
            time: 1.0,
        }];
        assert_relative_eq!(
            schedule_energy(&m, &one).unwrap(),
            3.0,
            max_relative = 1e-15
        );
        let two = [
            RateUse {
                packet: 0,
                rate: 2.0,
                time: 0.5,
            },
            RateUse {
                packet: 1,
                rate: 2.0,
                time: 0.5,
            },
        ];
        assert_relative_eq!(
            schedule_energy(&m, &two).unwrap(),
            15.0,
            max_relative = 1e-15
        );
        assert_eq!(schedule_energy(&m, &[]).unwrap(), 0.0);
        let zero = [RateUse {
            packet: 3,
            rate: 0.0,
            time: 1.0,
        }];
        assert_eq!(schedule_energy(&m, &zero).unwrap_err(), Error::ZeroRate(3));
    }

    #[test]
    fn slope_matches_finite_differences() {
        for m in models() {
            for k in 1..200 {
                let r = 0.05 * k as f64;
                let h = 1e-5 * r.max(1.0);
                let fd = (m.power(r + h) - m.power(r - h)) / (2.0 * h);
                let rel = (fd - m.slope(r)).abs() / m.slope(r);
                assert!(rel <= 1e-6, "{m:?} r={r} rel={rel}");
            }
        }
    }

    #[test]
    fn energy_decreases_with_time() {
        for m in models() {
            for &b in &[0.1, 1.0, 4.0] {
                let mut prev = f64::INFINITY;
                for k in 1..100 {
                    let t = 0.05 * k as f64;
                    let e = energy_for(&m, b, t);
                    assert!(e <= prev * (1.0 + 1e-12), "{m:?} b={b} t={t}");
                    prev = e;
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn convex_on_sampled_triples(a in 0.0f64..8.0, b in 0.0f64..8.0, c in 0.0f64..8.0, which in 0usize..4) {
            let m = models()[which];
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            let [r1, r2, r3] = v;
            prop_assume!(r3 > r1);
            let w = (r2 - r1) / (r3 - r1);
            let interp = (1.0 - w) * m.power(r1) + w * m.power(r3);
            prop_assert!(m.power(r2) <= interp + 1e-9 * (1.0 + interp));
        }

        #[test]
        fn marginal_round_trip(r in 1e-4f64..20.0, which in 0usize..4) {
            let m = models()[which];
            let y = m.marginal(r);
            let back = g_inverse(&m, y).unwrap();
            prop_assert!((back - r).abs() <= 1e-9 * r, "r={} back={}", r, back);
            let bis = g_inverse_bisection(&m, y).unwrap();
            prop_assert!((m.marginal(bis) - y).abs() <= 1e-9 * y.max(1.0));
        }

        #[test]
        fn marginal_monotone(r in 0.0f64..20.0, dr in 0.0f64..1.0, which in 0usize..4) {
            let m = models()[which];
            prop_assert!(m.marginal(r) >= 0.0);
            prop_assert!(m.marginal(r + dr) >= m.marginal(r));
        }
    }
}
