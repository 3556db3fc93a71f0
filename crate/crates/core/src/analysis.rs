//! Closed-form detection analysis.
//!
//! Binomial sums are exact integers; conversion to floating point happens once,
//! at the final division by a power of two.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::channel::{ball_radius, ball_volume, Bsc};
use crate::error::{Error, Result};
use crate::field::{FieldElement, GaloisField};
use crate::hashing::HashSpec;

/// Binary entropy in bits.
pub fn entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Ball radii of the two-source, one-relay network, plus symbol and hash length.
///
/// `r_a_b` is the radius node `b` uses for what it overhears from node `a`
/// (node 1 and 2 are the sources, node 3 the relay).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoHopGeometry {
    pub n: u32,
    pub h: u32,
    pub r_1_2: u32,
    pub r_2_1: u32,
    pub r_3_1: u32,
    pub r_3_2: u32,
}

impl TwoHopGeometry {
    pub fn new(n: u32, h: u32, r_1_2: u32, r_2_1: u32, r_3_1: u32, r_3_2: u32) -> Result<Self> {
        let g = Self {
            n,
            h,
            r_1_2,
            r_2_1,
            r_3_1,
            r_3_2,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(n: u32, h: u32, r: u32) -> Result<Self> {
        Self::new(n, h, r, r, r, r)
    }

    /// Radii from `ball_radius` with a common `eps`, one channel per link.
    pub fn from_channels(n: u32, h: u32, links: [Bsc; 4], eps: f64) -> Result<Self> {
        let [c12, c21, c31, c32] = links;
        Self::new(
            n,
            h,
            ball_radius(&c12, n, eps)?,
            ball_radius(&c21, n, eps)?,
            ball_radius(&c31, n, eps)?,
            ball_radius(&c32, n, eps)?,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "length must be positive"));
        }
        for r in [self.r_1_2, self.r_2_1, self.r_3_1, self.r_3_2] {
            if r > self.n {
                return Err(Error::param("radius", format!("{r} exceeds n = {}", self.n)));
            }
        }
        Ok(())
    }
}

/// `min(1, num / 2^exp)` with a single rounding step.
fn capped_ratio(num: &BigUint, exp: u64) -> f64 {
    if num.bits() > exp {
        return 1.0;
    }
    let den = BigUint::one() << exp;
    if *num >= den {
        return 1.0;
    }
    let shift = num.bits().saturating_sub(62);
    let mantissa = (num >> shift).to_f64().expect("fits in 62 bits");
    let scale = shift as i64 - exp as i64;
    mantissa * pow2(scale)
}

fn pow2(e: i64) -> f64 {
    // split to stay inside powi's exponent range
    let mut out = 1.0f64;
    let mut e = e;
    while e < -1000 {
        out *= 2f64.powi(-1000);
        e += 1000;
    }
    out * 2f64.powi(e as i32)
}

fn lemma_product(g: &TwoHopGeometry, relay_radius: u32) -> Result<f64> {
    g.validate()?;
    let num = ball_volume(g.n, g.r_1_2)? * ball_volume(g.n, g.r_2_1)? * ball_volume(g.n, relay_radius)?;
    let exp = 2 * (g.h as u64 + g.n as u64) + g.h as u64;
    Ok(capped_ratio(&num, exp))
}

/// Probability a malicious relay is undetected from source 1's perspective.
pub fn misdetection_v1(g: &TwoHopGeometry) -> Result<f64> {
    lemma_product(g, g.r_3_1)
}

/// Probability a malicious relay is undetected from source 2's perspective.
pub fn misdetection_v2(g: &TwoHopGeometry) -> Result<f64> {
    lemma_product(g, g.r_3_2)
}

/// Misdetection probability β with `r = min(r_3_1, r_3_2)`.
pub fn misdetection_beta(g: &TwoHopGeometry) -> Result<f64> {
    lemma_product(g, g.r_3_1.min(g.r_3_2))
}

/// β when the two sources cannot overhear each other: `min(1, |B(r)| / 8^h)`.
pub fn misdetection_beta_no_overhearing(n: u32, h: u32, r: u32) -> Result<f64> {
    Ok(capped_ratio(&ball_volume(n, r)?, 3 * h as u64))
}

fn check_rate_lists(m: usize, rates: &[f64], d_over_n: &[f64]) -> Result<()> {
    for (what, list) in [("rates", rates), ("relative distances", d_over_n)] {
        if list.len() != m + 1 {
            return Err(Error::LengthMismatch {
                what,
                left: list.len(),
                right: m + 1,
            });
        }
        if list.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param(what, "values must lie in [0, 1]"));
        }
    }
    Ok(())
}

/// Exponent (base 2) of the expected matched-codeword count:
/// `n [Σ_i (H(p_i) - H(d_i / n)) - 1] - m δ`, summed over the `m + 1` supplied links.
pub fn matched_count_exponent(n: u32, m: usize, delta: u32, rates: &[f64], d_over_n: &[f64]) -> Result<f64> {
    check_rate_lists(m, rates, d_over_n)?;
    let spread: f64 = rates
        .iter()
        .zip(d_over_n)
        .map(|(&p, &d)| entropy(p) - entropy(d))
        .sum();
    Ok(n as f64 * (spread - 1.0) - m as f64 * delta as f64)
}

/// Expected number of matched codewords (may be below one).
pub fn matched_count_expected(n: u32, m: usize, delta: u32, rates: &[f64], d_over_n: &[f64]) -> Result<f64> {
    Ok(matched_count_exponent(n, m, delta, rates, d_over_n)?.exp2())
}

/// The same exponent with the hash length written as `δ = ε n`:
/// `n [Σ H(p_i) - (Σ H(d_i / n) + 1 + m ε)]`.
pub fn matched_count_exponent_relative(n: u32, m: usize, eps: f64, rates: &[f64], d_over_n: &[f64]) -> Result<f64> {
    check_rate_lists(m, rates, d_over_n)?;
    let channel: f64 = rates.iter().map(|&p| entropy(p)).sum();
    let redundancy: f64 = d_over_n.iter().map(|&d| entropy(d)).sum::<f64>() + 1.0 + m as f64 * eps;
    Ok(n as f64 * (channel - redundancy))
}

/// What source 1 knows when running the algebraic pass/fail check on the relay.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraicCheckInput {
    pub own_symbol: FieldElement,
    /// `(α_1, α_2)`.
    pub coeffs: [FieldElement; 2],
    pub peer_observed: FieldElement,
    pub peer_hash: u32,
    pub relay_observed: FieldElement,
    pub relay_hash: u32,
    /// `r_{2→1}`.
    pub peer_radius: u32,
    /// `r_{3→1}`.
    pub relay_radius: u32,
}

fn candidate_set(observed: FieldElement, hash: u32, radius: u32, spec: &HashSpec) -> impl Iterator<Item = u32> + '_ {
    let width = observed.width();
    (0..1u32 << width)
        .filter(move |&x| spec.eval_raw(x) == hash && (x ^ observed.value()).count_ones() <= radius)
}

/// Passes iff `{α_1 x_1 + α_2 x̂ : x̂ ∈ X̃_2} ∩ X̃_3` is nonempty, where each
/// `X̃_j` is the hash class of `x_j` intersected with a Hamming ball around
/// the overheard symbol.
pub fn algebraic_check(input: &AlgebraicCheckInput, spec: &HashSpec, field: &GaloisField) -> Result<bool> {
    let width = field.width();
    for x in [input.own_symbol, input.coeffs[0], input.coeffs[1], input.peer_observed, input.relay_observed] {
        if x.width() != width {
            return Err(Error::WidthMismatch {
                left: x.width(),
                right: width,
            });
        }
    }
    if spec.width() != width {
        return Err(Error::WidthMismatch {
            left: spec.width(),
            right: width,
        });
    }
    let mut relay_set = vec![false; field.order() as usize];
    for x in candidate_set(input.relay_observed, input.relay_hash, input.relay_radius, spec) {
        relay_set[x as usize] = true;
    }
    let base = field.mul_raw(input.coeffs[0].value(), input.own_symbol.value());
    let alpha2 = input.coeffs[1].value();
    Ok(candidate_set(input.peer_observed, input.peer_hash, input.peer_radius, spec)
        .any(|x| relay_set[(base ^ field.mul_raw(alpha2, x)) as usize]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(v: u32, w: u8) -> FieldElement {
        FieldElement::new(v, w).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(0.5), 1.0);
        assert_eq!(entropy(0.0), 0.0);
        assert_eq!(entropy(1.0), 0.0);
        // series: H(p) = (1/ln 2) [ -p ln p + p - Σ_{k>=2} p^k / (k (k-1)) ]
        let p: f64 = 0.1;
        let tail: f64 = (2..200).map(|k| p.powi(k) / (k as f64 * (k as f64 - 1.0))).sum();
        let series = (-p * p.ln() + p - tail) / std::f64::consts::LN_2;
        assert!((entropy(0.1) - series).abs() < 1e-14);
        assert!((entropy(0.1) - 0.468_995_593_589_281_2).abs() < 1e-15);
    }

    #[test]
    fn lemma_examples() {
        let zero = TwoHopGeometry::new(6, 0, 0, 0, 0, 0).unwrap();
        assert_eq!(misdetection_v1(&zero).unwrap(), 4f64.powi(-6));
        assert_eq!(misdetection_v2(&zero).unwrap(), 4f64.powi(-6));
        let full = TwoHopGeometry::uniform(4, 2, 4).unwrap();
        assert_eq!(misdetection_v1(&full).unwrap(), 0.25);
        assert_eq!(misdetection_v2(&full).unwrap(), 0.25);
        assert_eq!(misdetection_beta(&full).unwrap(), 0.25);
    }

    #[test]
    fn lemma_is_capped_at_one() {
        let g = TwoHopGeometry::uniform(4, 0, 4).unwrap();
        assert_eq!(misdetection_v1(&g).unwrap(), 1.0);
    }

    #[test]
    fn radius_out_of_range() {
        assert!(TwoHopGeometry::new(4, 1, 5, 0, 0, 0).is_err());
    }

    #[test]
    fn beta_is_min_of_lemmas() {
        let g = TwoHopGeometry::new(10, 3, 2, 4, 5, 1).unwrap();
        let b = misdetection_beta(&g).unwrap();
        assert_eq!(b, misdetection_v1(&g).unwrap().min(misdetection_v2(&g).unwrap()));
    }

    #[test]
    fn no_overhearing_reduction() {
        for (n, h, r) in [(10, 2, 3), (8, 1, 7), (12, 4, 0), (16, 5, 7)] {
            let g = TwoHopGeometry::new(n, h, n, n, r, r + 1).unwrap();
            assert_eq!(
                misdetection_beta(&g).unwrap(),
                misdetection_beta_no_overhearing(n, h, r).unwrap()
            );
        }
    }

    #[test]
    fn theorem2_examples() {
        let m = 3;
        let half = vec![0.5; m + 1];
        let zero = vec![0.0; m + 1];
        let c = matched_count_expected(10, m, 0, &half, &zero).unwrap();
        assert_eq!(c, 2f64.powi(30));
        let noiseless = matched_count_expected(10, m, 2, &zero, &zero).unwrap();
        assert!(noiseless < 1e-3);
        let tenth = vec![0.1; m + 1];
        let c = matched_count_expected(10, m, 2, &tenth, &zero).unwrap();
        let exponent = 10.0 * (4.0 * entropy(0.1) - 1.0) - 6.0;
        assert!((c - exponent.exp2()).abs() < 1e-12);
        assert!((c - 6.77).abs() < 0.01, "{c}");
        assert!(matched_count_expected(10, m, 2, &tenth[..3], &zero).is_err());
    }

    #[test]
    fn relative_exponent_agrees() {
        let rates = [0.1, 0.2, 0.05];
        let ds = [0.0, 0.1, 0.2];
        let a = matched_count_exponent(20, 2, 4, &rates, &ds).unwrap();
        let b = matched_count_exponent_relative(20, 2, 0.2, &rates, &ds).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn algebraic_check_noiseless_honest_passes() {
        let f = GaloisField::new(8).unwrap();
        let h = HashSpec::affine(8, 3, 5, 1).unwrap();
        let (x1, x2, a1, a2) = (el(200, 8), el(31, 8), el(7, 8), el(99, 8));
        let x3 = f.lincomb(&[a1, a2], &[x1, x2]).unwrap();
        let input = AlgebraicCheckInput {
            own_symbol: x1,
            coeffs: [a1, a2],
            peer_observed: x2,
            peer_hash: h.eval(x2).unwrap(),
            relay_observed: x3,
            relay_hash: h.eval(x3).unwrap(),
            peer_radius: 0,
            relay_radius: 0,
        };
        assert!(algebraic_check(&input, &h, &f).unwrap());
    }

    #[test]
    fn algebraic_check_catches_corruption_with_injective_hash() {
        let f = GaloisField::new(8).unwrap();
        let h = HashSpec::identity(8).unwrap();
        let (x1, x2, a1, a2) = (el(200, 8), el(31, 8), el(7, 8), el(99, 8));
        let x3 = f.lincomb(&[a1, a2], &[x1, x2]).unwrap();
        let bad = el(x3.value() ^ 0b100, 8);
        let input = AlgebraicCheckInput {
            own_symbol: x1,
            coeffs: [a1, a2],
            peer_observed: x2,
            peer_hash: h.eval(x2).unwrap(),
            relay_observed: bad,
            relay_hash: h.eval(bad).unwrap(),
            peer_radius: 0,
            relay_radius: 0,
        };
        assert!(!algebraic_check(&input, &h, &f).unwrap());
    }
}
