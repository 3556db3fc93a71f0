//! Arithmetic over GF(2^n) for `1 <= n <= 16`.
//!
//! Elements are stored as their bit representation. Addition is xor;
//! multiplication is carry-less multiplication reduced modulo a fixed
//! irreducible polynomial. [`GaloisField`] adds log/antilog tables so that the
//! trellis inner loop is a pair of lookups.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_WIDTH: u8 = 16;

/// Primitive reduction polynomials indexed by width, including the leading term.
const DEFAULT_POLYNOMIALS: [u32; 17] = [
    0, 0x3, 0x7, 0xb, 0x13, 0x25, 0x43, 0x83, 0x11d, 0x211, 0x409, 0x805, 0x1053, 0x201b, 0x4443,
    0x8003, 0x1100b,
];

/// An element of GF(2^width).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldElement {
    value: u32,
    width: u8,
}

impl FieldElement {
    pub fn new(value: u32, width: u8) -> Result<Self> {
        check_width(width as u32)?;
        if value >> width != 0 {
            return Err(Error::ValueOutOfRange { value, width });
        }
        Ok(Self { value, width })
    }

    /// Builds an element without range checks; `value` is masked to `width` bits.
    pub(crate) fn from_raw(value: u32, width: u8) -> Self {
        Self {
            value: value & mask(width),
            width,
        }
    }

    pub fn zero(width: u8) -> Self {
        Self { value: 0, width }
    }

    pub fn one(width: u8) -> Self {
        Self { value: 1, width }
    }

    #[inline]
    pub fn value(self) -> u32 {
        self.value
    }

    #[inline]
    pub fn width(self) -> u8 {
        self.width
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    /// Number of set bits.
    pub fn weight(self) -> u32 {
        self.value.count_ones()
    }

    pub fn hamming_distance(self, other: FieldElement) -> u32 {
        (self.value ^ other.value).count_ones()
    }

    pub(crate) fn same_width(self, other: FieldElement) -> Result<()> {
        if self.width != other.width {
            return Err(Error::WidthMismatch {
                left: self.width,
                right: other.width,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#0w$b}", self.value, w = self.width as usize + 2)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[inline]
pub(crate) fn mask(width: u8) -> u32 {
    ((1u64 << width) - 1) as u32
}

fn check_width(width: u32) -> Result<()> {
    if width == 0 || width > MAX_WIDTH as u32 {
        return Err(Error::InvalidWidth(width));
    }
    Ok(())
}

/// Degree of a GF(2) polynomial given as a bit mask; `None` for the zero polynomial.
fn degree(poly: u64) -> Option<u32> {
    (poly != 0).then(|| 63 - poly.leading_zeros())
}

/// Remainder of carry-less division.
fn poly_rem(mut a: u64, b: u64) -> u64 {
    let db = degree(b).expect("division by zero polynomial");
    while let Some(da) = degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

/// Trial division by every polynomial of degree `1..=deg/2`.
pub fn is_irreducible(poly: u32) -> bool {
    let Some(deg) = degree(poly as u64) else {
        return false;
    };
    if deg == 0 {
        return false;
    }
    for d in 1..=deg / 2 {
        for low in 0..(1u64 << d) {
            let divisor = (1u64 << d) | low;
            if poly_rem(poly as u64, divisor) == 0 {
                return false;
            }
        }
    }
    true
}

/// Width and reduction polynomial of a binary extension field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldParams {
    width: u8,
    polynomial: u32,
}

impl FieldParams {
    /// Parameters with the default primitive polynomial for `width`.
    pub fn new(width: u8) -> Result<Self> {
        check_width(width as u32)?;
        Ok(Self {
            width,
            polynomial: DEFAULT_POLYNOMIALS[width as usize],
        })
    }

    pub fn with_polynomial(width: u8, polynomial: u32) -> Result<Self> {
        check_width(width as u32)?;
        if degree(polynomial as u64) != Some(width as u32) || !is_irreducible(polynomial) {
            return Err(Error::NotIrreducible {
                poly: polynomial,
                width,
            });
        }
        Ok(Self { width, polynomial })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn polynomial(&self) -> u32 {
        self.polynomial
    }

    pub fn order(&self) -> u32 {
        1 << self.width
    }

    pub fn element(&self, value: u32) -> Result<FieldElement> {
        FieldElement::new(value, self.width)
    }

    /// Shift-and-reduce product of two raw values.
    #[inline]
    pub fn mul_raw(&self, mut a: u32, mut b: u32) -> u32 {
        let top = 1u32 << self.width;
        let mut acc = 0;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.polynomial;
            }
        }
        acc
    }

    fn check(&self, a: FieldElement) -> Result<()> {
        if a.width != self.width {
            return Err(Error::WidthMismatch {
                left: a.width,
                right: self.width,
            });
        }
        Ok(())
    }
}

struct Tables {
    /// `exp[i] = g^i` for `i` in `0..2*(order-1)` so that log sums need no reduction.
    exp: Vec<u32>,
    log: Vec<u32>,
}

/// A binary extension field with precomputed log/antilog tables.
///
/// Cloning is cheap; the tables are shared.
#[derive(Clone)]
pub struct GaloisField {
    params: FieldParams,
    tables: Arc<Tables>,
}

impl fmt::Debug for GaloisField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaloisField")
            .field("params", &self.params)
            .finish()
    }
}

impl GaloisField {
    pub fn new(width: u8) -> Result<Self> {
        Ok(Self::from_params(FieldParams::new(width)?))
    }

    pub fn from_params(params: FieldParams) -> Self {
        let order = params.order();
        let group = order - 1;
        // An irreducible polynomial need not be primitive, so search for a generator.
        let generator = (2..order)
            .find(|&g| multiplicative_order(&params, g) == group)
            .unwrap_or(1);
        let mut exp = vec![0u32; (2 * group.max(1)) as usize];
        let mut log = vec![0u32; order as usize];
        let mut x = 1u32;
        for i in 0..group {
            exp[i as usize] = x;
            log[x as usize] = i;
            x = params.mul_raw(x, generator);
        }
        for i in group..2 * group {
            exp[i as usize] = exp[(i - group) as usize];
        }
        Self {
            params,
            tables: Arc::new(Tables { exp, log }),
        }
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn width(&self) -> u8 {
        self.params.width
    }

    pub fn order(&self) -> u32 {
        self.params.order()
    }

    pub fn element(&self, value: u32) -> Result<FieldElement> {
        self.params.element(value)
    }

    /// Iterator over every element of the field in ascending value order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        let width = self.width();
        (0..self.order()).map(move |v| FieldElement::from_raw(v, width))
    }

    #[inline]
    pub fn mul_raw(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        let t = &self.tables;
        t.exp[(t.log[a as usize] + t.log[b as usize]) as usize]
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.params.check(a)?;
        self.params.check(b)?;
        Ok(FieldElement::from_raw(a.value ^ b.value, a.width))
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.params.check(a)?;
        self.params.check(b)?;
        Ok(FieldElement::from_raw(self.mul_raw(a.value, b.value), a.width))
    }

    pub fn inverse(&self, a: FieldElement) -> Result<FieldElement> {
        self.params.check(a)?;
        if a.is_zero() {
            return Err(Error::param("a", "zero has no multiplicative inverse"));
        }
        let group = self.order() - 1;
        let t = &self.tables;
        let inv = t.exp[((group - t.log[a.value as usize]) % group) as usize];
        Ok(FieldElement::from_raw(inv, a.width))
    }

    /// `sum_j coeffs[j] * symbols[j]`.
    pub fn lincomb(&self, coeffs: &[FieldElement], symbols: &[FieldElement]) -> Result<FieldElement> {
        if coeffs.is_empty() || symbols.is_empty() {
            return Err(Error::EmptyCombination);
        }
        if coeffs.len() != symbols.len() {
            return Err(Error::LengthMismatch {
                what: "coefficients vs symbols",
                left: coeffs.len(),
                right: symbols.len(),
            });
        }
        let mut acc = 0;
        for (&a, &x) in coeffs.iter().zip(symbols) {
            self.params.check(a)?;
            self.params.check(x)?;
            acc ^= self.mul_raw(a.value, x.value);
        }
        Ok(FieldElement::from_raw(acc, self.width()))
    }
}

fn multiplicative_order(params: &FieldParams, g: u32) -> u32 {
    let mut x = g;
    let mut k = 1;
    while x != 1 {
        x = params.mul_raw(x, g);
        k += 1;
        if k > params.order() {
            return 0;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf4() -> GaloisField {
        GaloisField::new(4).unwrap()
    }

    fn el(v: u32) -> FieldElement {
        FieldElement::new(v, 4).unwrap()
    }

    #[test]
    fn add_examples() {
        let f = gf4();
        assert_eq!(f.add(el(0b1010), el(0b0110)).unwrap(), el(0b1100));
        for a in f.elements() {
            assert!(f.add(a, a).unwrap().is_zero());
            assert_eq!(f.add(a, el(0)).unwrap(), a);
        }
    }

    #[test]
    fn mul_examples() {
        let f = gf4();
        // x * x^3 = x^4 = x + 1 mod x^4 + x + 1
        assert_eq!(f.mul(el(0b0010), el(0b1000)).unwrap(), el(0b0011));
        for a in f.elements() {
            assert_eq!(f.mul(a, el(1)).unwrap(), a);
            assert!(f.mul(a, el(0)).unwrap().is_zero());
        }
    }

    #[test]
    fn lincomb_examples() {
        let f = gf4();
        assert_eq!(f.lincomb(&[el(1)], &[el(9)]).unwrap(), el(9));
        assert_eq!(f.lincomb(&[el(0), el(0)], &[el(9), el(3)]).unwrap(), el(0));
        assert_eq!(f.lincomb(&[el(2), el(3)], &[el(8), el(1)]).unwrap(), el(0));
        assert_eq!(f.lincomb(&[], &[]), Err(Error::EmptyCombination));
        assert!(matches!(
            f.lincomb(&[el(1)], &[el(1), el(2)]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let f = gf4();
        let wide = FieldElement::new(3, 5).unwrap();
        assert!(matches!(f.add(el(1), wide), Err(Error::WidthMismatch { .. })));
        assert!(matches!(f.mul(wide, el(1)), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn element_range() {
        assert!(FieldElement::new(16, 4).is_err());
        assert!(FieldElement::new(15, 4).is_ok());
        assert_eq!(FieldElement::new(0, 17), Err(Error::InvalidWidth(17)));
    }

    #[test]
    fn default_polynomials_are_irreducible_and_primitive() {
        for w in 1..=MAX_WIDTH {
            let p = FieldParams::new(w).unwrap();
            assert!(is_irreducible(p.polynomial()), "width {w}");
            if w > 1 {
                assert_eq!(multiplicative_order(&p, 2), p.order() - 1, "width {w}");
            }
        }
    }

    #[test]
    fn reducible_polynomial_rejected() {
        // x^4 + 1 = (x + 1)^4
        assert!(FieldParams::with_polynomial(4, 0x11).is_err());
        // degree mismatch
        assert!(FieldParams::with_polynomial(4, 0x25).is_err());
        // x^4 + x^3 + x^2 + x + 1 is irreducible but not primitive
        let p = FieldParams::with_polynomial(4, 0x1f).unwrap();
        let f = GaloisField::from_params(p);
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(f.mul_raw(a, b), p.mul_raw(a, b));
            }
        }
    }

    #[test]
    fn table_matches_shift_and_reduce() {
        for w in [1u8, 5, 8, 10] {
            let f = GaloisField::new(w).unwrap();
            let p = *f.params();
            let step = (f.order() / 64).max(1);
            for a in (0..f.order()).step_by(step as usize) {
                for b in (0..f.order()).step_by(step as usize) {
                    assert_eq!(f.mul_raw(a, b), p.mul_raw(a, b));
                }
            }
        }
    }

    #[test]
    fn inverses() {
        let f = GaloisField::new(6).unwrap();
        for a in f.elements().skip(1) {
            let inv = f.inverse(a).unwrap();
            assert_eq!(f.mul(a, inv).unwrap(), FieldElement::one(6));
        }
        assert!(f.inverse(FieldElement::zero(6)).is_err());
    }
}
