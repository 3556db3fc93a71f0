//! δ-bit hash families used to police payloads.
//!
//! Two families are provided:
//!
//! * `Polynomial` — `h(x) = sum_i a_i x^i` evaluated in GF(2^n), truncated to
//!   the low δ bits of the result.
//! * `Affine` — `h(x) = (a*x + b) mod 2^δ` on the integer bit representation,
//!   with `a` odd so that every hash class has exactly `2^(n-δ)` members.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{mask, FieldElement, FieldParams};
use crate::packet::Codebook;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashFamily {
    Polynomial,
    Affine,
}

impl fmt::Display for HashFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HashFamily::Polynomial => "polynomial",
            HashFamily::Affine => "affine",
        })
    }
}

impl FromStr for HashFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polynomial" => Ok(HashFamily::Polynomial),
            "affine" => Ok(HashFamily::Affine),
            other => Err(Error::param("family", format!("unknown hash family `{other}`"))),
        }
    }
}

/// A fully specified hash function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSpec {
    family: HashFamily,
    delta: u8,
    /// `a_0..a_d` for the polynomial family, `(a, b)` for the affine family.
    coefficients: Vec<u32>,
    field: FieldParams,
}

impl HashSpec {
    pub fn affine(width: u8, delta: u8, a: u32, b: u32) -> Result<Self> {
        let field = FieldParams::new(width)?;
        check_delta(width, delta)?;
        if delta > 0 {
            if a.is_multiple_of(2) {
                return Err(Error::param("a", "affine multiplier must be odd"));
            }
            if a >> delta != 0 || b >> delta != 0 {
                return Err(Error::param("a, b", format!("coefficients must be below 2^{delta}")));
            }
        }
        let coefficients = if delta == 0 { vec![0, 0] } else { vec![a, b] };
        Ok(Self {
            family: HashFamily::Affine,
            delta,
            coefficients,
            field,
        })
    }

    pub fn polynomial(field: FieldParams, delta: u8, coefficients: Vec<u32>) -> Result<Self> {
        check_delta(field.width(), delta)?;
        if coefficients.len() < 2 {
            return Err(Error::param("coefficients", "polynomial hash needs degree >= 1"));
        }
        if let Some(&c) = coefficients.iter().find(|&&c| c >> field.width() != 0) {
            return Err(Error::ValueOutOfRange {
                value: c,
                width: field.width(),
            });
        }
        Ok(Self {
            family: HashFamily::Polynomial,
            delta,
            coefficients,
            field,
        })
    }

    /// The injective hash `x -> x` (affine, `a = 1`, `b = 0`, `δ = n`).
    pub fn identity(width: u8) -> Result<Self> {
        Self::affine(width, width, 1, 0)
    }

    /// The empty hash (`δ = 0`).
    pub fn empty(width: u8) -> Result<Self> {
        Self::affine(width, 0, 0, 0)
    }

    pub fn family(&self) -> HashFamily {
        self.family
    }

    pub fn delta(&self) -> u8 {
        self.delta
    }

    pub fn width(&self) -> u8 {
        self.field.width()
    }

    pub fn coefficients(&self) -> &[u32] {
        &self.coefficients
    }

    /// Number of distinct hash values, `2^δ`.
    pub fn range(&self) -> u32 {
        1 << self.delta
    }

    pub fn eval(&self, x: FieldElement) -> Result<u32> {
        if x.width() != self.width() {
            return Err(Error::WidthMismatch {
                left: x.width(),
                right: self.width(),
            });
        }
        Ok(self.eval_raw(x.value()))
    }

    #[inline]
    pub fn eval_raw(&self, x: u32) -> u32 {
        if self.delta == 0 {
            return 0;
        }
        let m = mask(self.delta);
        match self.family {
            HashFamily::Affine => {
                let (a, b) = (self.coefficients[0] as u64, self.coefficients[1] as u64);
                (a.wrapping_mul(x as u64).wrapping_add(b) as u32) & m
            }
            HashFamily::Polynomial => {
                let acc = self
                    .coefficients
                    .iter()
                    .rev()
                    .fold(0u32, |acc, &c| self.field.mul_raw(acc, x) ^ c);
                acc & m
            }
        }
    }

    /// All codebook members hashing to `target`, ascending.
    pub fn collision_list(&self, target: u32, codebook: &Codebook) -> Vec<FieldElement> {
        let width = self.width();
        codebook
            .iter_raw()
            .filter(|&y| self.eval_raw(y) == target)
            .map(|y| FieldElement::from_raw(y, width))
            .collect()
    }
}

fn check_delta(width: u8, delta: u8) -> Result<()> {
    if delta > width {
        return Err(Error::param("delta", format!("hash length {delta} exceeds symbol width {width}")));
    }
    Ok(())
}

/// Draws a hash uniformly from the admissible members of `family`.
///
/// Affine: `a` uniform over odd residues mod `2^δ`, `b` uniform. Polynomial:
/// degree one, `a_1` uniform nonzero, `a_0` uniform.
pub fn sample_hash<R: Rng + ?Sized>(rng: &mut R, family: HashFamily, width: u8, delta: u8) -> Result<HashSpec> {
    let field = FieldParams::new(width)?;
    check_delta(width, delta)?;
    match family {
        HashFamily::Affine => {
            if delta == 0 {
                return HashSpec::empty(width);
            }
            let half = 1u32 << (delta - 1);
            let a = 2 * rng.random_range(0..half) + 1;
            let b = rng.random_range(0..1u32 << delta);
            HashSpec::affine(width, delta, a, b)
        }
        HashFamily::Polynomial => {
            let a1 = rng.random_range(1..field.order());
            let a0 = rng.random_range(0..field.order());
            HashSpec::polynomial(field, delta, vec![a0, a1])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn el(v: u32, w: u8) -> FieldElement {
        FieldElement::new(v, w).unwrap()
    }

    #[test]
    fn empty_hash_is_zero() {
        let h = HashSpec::empty(6).unwrap();
        assert!((0..64).all(|x| h.eval_raw(x) == 0));
    }

    #[test]
    fn identity_hash() {
        let h = HashSpec::identity(5).unwrap();
        assert!((0..32).all(|x| h.eval_raw(x) == x));
    }

    #[test]
    fn affine_direct_evaluation() {
        let h = HashSpec::affine(4, 2, 3, 1).unwrap();
        assert_eq!(h.eval(el(6, 4)).unwrap(), 3);
    }

    #[test]
    fn affine_rejects_even_multiplier() {
        assert!(HashSpec::affine(4, 2, 2, 1).is_err());
        assert!(HashSpec::affine(4, 2, 5, 1).is_err());
        assert!(HashSpec::affine(4, 5, 1, 0).is_err());
    }

    #[test]
    fn polynomial_hash_truncates_field_evaluation() {
        let p = FieldParams::new(4).unwrap();
        // h(x) = 2x + 1 over GF(16); at x = 8: 2*8 = 3, +1 = 2
        let h = HashSpec::polynomial(p, 4, vec![1, 2]).unwrap();
        assert_eq!(h.eval_raw(8), 2);
        let h2 = HashSpec::polynomial(p, 1, vec![1, 2]).unwrap();
        assert_eq!(h2.eval_raw(8), 0);
        assert!(HashSpec::polynomial(p, 1, vec![1]).is_err());
    }

    #[test]
    fn collision_list_examples() {
        let full = Codebook::full(4).unwrap();
        let id = HashSpec::identity(4).unwrap();
        assert_eq!(id.collision_list(9, &full), vec![el(9, 4)]);
        let empty = HashSpec::empty(4).unwrap();
        assert_eq!(empty.collision_list(0, &full).len(), 16);
        let h = HashSpec::affine(4, 2, 1, 0).unwrap();
        let got: Vec<u32> = h.collision_list(2, &full).iter().map(|e| e.value()).collect();
        assert_eq!(got, vec![2, 6, 10, 14]);
    }

    #[test]
    fn sample_hash_is_deterministic_and_validated() {
        let a = sample_hash(&mut ChaCha8Rng::seed_from_u64(5), HashFamily::Affine, 10, 2).unwrap();
        let b = sample_hash(&mut ChaCha8Rng::seed_from_u64(5), HashFamily::Affine, 10, 2).unwrap();
        assert_eq!(a, b);
        let z = sample_hash(&mut ChaCha8Rng::seed_from_u64(5), HashFamily::Affine, 10, 0).unwrap();
        assert_eq!(z, HashSpec::empty(10).unwrap());
        assert!(sample_hash(&mut ChaCha8Rng::seed_from_u64(5), HashFamily::Affine, 4, 5).is_err());
    }

    #[test]
    fn sampled_affine_classes_are_balanced() {
        let full = Codebook::full(10).unwrap();
        for seed in 0..50 {
            let h = sample_hash(&mut ChaCha8Rng::seed_from_u64(seed), HashFamily::Affine, 10, 2).unwrap();
            for t in 0..4 {
                assert_eq!(h.collision_list(t, &full).len(), 256, "seed {seed}");
            }
        }
    }

    #[test]
    fn family_parses() {
        assert_eq!("affine".parse::<HashFamily>().unwrap(), HashFamily::Affine);
        assert!("sha".parse::<HashFamily>().is_err());
    }
}
