//! Binary symmetric channels for overhearing links, and the Hamming-ball
//! combinatorics built on them.

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldElement;

/// `BSC(p)` with crossover probability `0 <= p <= 0.5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bsc {
    p: f64,
}

impl TryFrom<f64> for Bsc {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Bsc::new(p)
    }
}

impl From<Bsc> for f64 {
    fn from(ch: Bsc) -> f64 {
        ch.p
    }
}

/// A log-domain probability.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogProb(pub f64);

impl LogProb {
    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }
}

impl Bsc {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::param("p", format!("crossover probability {p} outside [0, 0.5]")));
        }
        Ok(Self { p })
    }

    pub fn noiseless() -> Self {
        Self { p: 0.0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Draws an n-bit error pattern, one Bernoulli(p) draw per bit.
    pub fn error_pattern<R: Rng + ?Sized>(&self, width: u8, rng: &mut R) -> u32 {
        flip_pattern(self.p, width, rng)
    }

    pub fn transmit<R: Rng + ?Sized>(&self, x: FieldElement, rng: &mut R) -> FieldElement {
        let e = self.error_pattern(x.width(), rng);
        FieldElement::from_raw(x.value() ^ e, x.width())
    }

    /// `ln( p^d (1-p)^(n-d) )` for Hamming distance `d`.
    #[inline]
    pub fn log_likelihood_at(&self, distance: u32, width: u8) -> f64 {
        let n = width as u32;
        let stay = (n - distance) as f64 * (1.0 - self.p).ln();
        if distance == 0 {
            stay
        } else {
            distance as f64 * self.p.ln() + stay
        }
    }

    /// Probability that `candidate` sent over this channel is received as `observed`.
    pub fn likelihood(&self, observed: FieldElement, candidate: FieldElement) -> Result<LogProb> {
        observed.same_width(candidate)?;
        Ok(LogProb(
            self.log_likelihood_at(observed.hamming_distance(candidate), observed.width()),
        ))
    }
}

/// n-bit mask with each bit set independently with probability `rate`.
///
/// Always consumes exactly `width` draws so that parallel streams stay aligned.
pub(crate) fn flip_pattern<R: Rng + ?Sized>(rate: f64, width: u8, rng: &mut R) -> u32 {
    let mut e = 0u32;
    for bit in 0..width {
        let u: f64 = rng.random();
        if u < rate {
            e |= 1 << bit;
        }
    }
    e
}

/// `C(n, k)` computed exactly.
pub fn binomial(n: u32, k: u32) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `|B(x, r)| = sum_{k<=r} C(n, k)`, exact.
pub fn ball_volume(n: u32, r: u32) -> Result<BigUint> {
    if r > n {
        return Err(Error::param("r", format!("radius {r} exceeds length {n}")));
    }
    Ok((0..=r).map(|k| binomial(n, k)).sum())
}

/// Smallest `r` with `P(Binomial(n, p) <= r) >= 1 - eps`.
pub fn ball_radius(ch: &Bsc, n: u32, eps: f64) -> Result<u32> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", format!("{eps} outside (0, 1)")));
    }
    let p = ch.p();
    let mut coeff = 1.0f64;
    let mut cumulative = 0.0;
    for r in 0..=n {
        if r > 0 {
            coeff *= (n - r + 1) as f64 / r as f64;
        }
        cumulative += coeff * p.powi(r as i32) * (1.0 - p).powi((n - r) as i32);
        if cumulative >= 1.0 - eps {
            return Ok(r);
        }
    }
    Ok(n)
}

/// Flip rate seen through an adversary flipping at `p_adv` followed by a channel
/// flipping at `p_ch`: `p_adv + p_ch - p_adv * p_ch`.
pub fn compose_error_rates(p_adv: f64, p_ch: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_adv) && (0.0..=1.0).contains(&p_ch));
    p_adv + p_ch - p_adv * p_ch
}
