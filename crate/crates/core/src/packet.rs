//! Packets `[coefficients, input hashes, own hash, payload]` and the checks a
//! destination applies to them.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::flip_pattern;
use crate::error::{Error, Result};
use crate::field::{FieldElement, GaloisField};
use crate::hashing::HashSpec;

/// Identifier of a node in a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// The set of payload symbols a node may send.
///
/// The default is the whole space (no payload code, minimum distance zero).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Codebook {
    Full { width: u8 },
    Explicit { width: u8, members: Vec<u32> },
}

impl Codebook {
    pub fn full(width: u8) -> Result<Self> {
        FieldElement::new(0, width)?;
        Ok(Codebook::Full { width })
    }

    pub fn explicit(width: u8, members: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut members: Vec<u32> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::param("codebook", "codebook must be nonempty"));
        }
        for &m in &members {
            FieldElement::new(m, width)?;
        }
        Ok(Codebook::Explicit { width, members })
    }

    pub fn width(&self) -> u8 {
        match self {
            Codebook::Full { width } | Codebook::Explicit { width, .. } => *width,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Codebook::Full { width } => 1 << width,
            Codebook::Explicit { members, .. } => members.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: FieldElement) -> bool {
        x.width() == self.width()
            && match self {
                Codebook::Full { .. } => true,
                Codebook::Explicit { members, .. } => members.binary_search(&x.value()).is_ok(),
            }
    }

    /// Members in ascending order, as raw values.
    pub fn iter_raw(&self) -> Box<dyn Iterator<Item = u32> + '_> {
        match self {
            Codebook::Full { width } => Box::new(0..(1u32 << width)),
            Codebook::Explicit { members, .. } => Box::new(members.iter().copied()),
        }
    }
}

/// A coded packet as sent over the air.
///
/// Header fields (`coeffs`, `input_hashes`, `own_hash`) are assumed to arrive
/// error-free; only the payload is exposed to channel noise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub coeffs: BTreeMap<NodeId, FieldElement>,
    pub input_hashes: BTreeMap<NodeId, u32>,
    pub own_hash: u32,
    pub payload: FieldElement,
}

impl Packet {
    /// A packet originating at a source: no coding header, just the symbol and its hash.
    pub fn source(symbol: FieldElement, spec: &HashSpec) -> Result<Self> {
        Ok(Self {
            coeffs: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            own_hash: spec.eval(symbol)?,
            payload: symbol,
        })
    }

    /// Byte layout, big-endian:
    ///
    /// ```text
    /// u16 coefficient count k | u8 n | u8 δ
    /// k × (u32 node id, u16 coefficient)
    /// k × (u32 node id, u16 input hash)
    /// u16 own hash | u16 payload
    /// ```
    pub fn encode(&self, delta: u8) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 12 * self.coeffs.len());
        out.extend_from_slice(&(self.coeffs.len() as u16).to_be_bytes());
        out.push(self.payload.width());
        out.push(delta);
        for (id, c) in &self.coeffs {
            out.extend_from_slice(&id.0.to_be_bytes());
            out.extend_from_slice(&(c.value() as u16).to_be_bytes());
        }
        for (id, h) in &self.input_hashes {
            out.extend_from_slice(&id.0.to_be_bytes());
            out.extend_from_slice(&(*h as u16).to_be_bytes());
        }
        out.extend_from_slice(&(self.own_hash as u16).to_be_bytes());
        out.extend_from_slice(&(self.payload.value() as u16).to_be_bytes());
        out
    }

    /// Inverse of [`Packet::encode`]; returns the packet and its δ.
    pub fn decode(bytes: &[u8]) -> Result<(Self, u8)> {
        let mut rd = Reader { bytes, pos: 0 };
        let k = rd.u16()? as usize;
        let width = rd.u8()?;
        let delta = rd.u8()?;
        let mut coeffs = BTreeMap::new();
        for _ in 0..k {
            let id = NodeId(rd.u32()?);
            coeffs.insert(id, FieldElement::new(rd.u16()? as u32, width)?);
        }
        let mut input_hashes = BTreeMap::new();
        for _ in 0..k {
            let id = NodeId(rd.u32()?);
            input_hashes.insert(id, rd.u16()? as u32);
        }
        let own_hash = rd.u16()? as u32;
        let payload = FieldElement::new(rd.u16()? as u32, width)?;
        if rd.pos != bytes.len() {
            return Err(Error::param("bytes", "trailing bytes after packet"));
        }
        Ok((
            Self {
                coeffs,
                input_hashes,
                own_hash,
                payload,
            },
            delta,
        ))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::param("bytes", "truncated packet"))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take()?))
    }
}

/// Builds the packet an honest node sends after combining `inputs` with `coeffs`.
pub fn make_packet(
    inputs: &BTreeMap<NodeId, FieldElement>,
    coeffs: &BTreeMap<NodeId, FieldElement>,
    spec: &HashSpec,
    field: &GaloisField,
) -> Result<Packet> {
    if !inputs.keys().eq(coeffs.keys()) {
        return Err(Error::param("coeffs", "coefficient and input node sets differ"));
    }
    if coeffs.values().any(|c| c.is_zero()) {
        return Err(Error::param("coeffs", "coding coefficients must be nonzero"));
    }
    let (alphas, symbols): (Vec<_>, Vec<_>) =
        coeffs.values().copied().zip(inputs.values().copied()).unzip();
    let payload = field.lincomb(&alphas, &symbols)?;
    let input_hashes = inputs
        .iter()
        .map(|(&id, &x)| spec.eval(x).map(|h| (id, h)))
        .collect::<Result<_>>()?;
    Ok(Packet {
        coeffs: coeffs.clone(),
        input_hashes,
        own_hash: spec.eval(payload)?,
        payload,
    })
}

/// Flips each payload bit with probability `p_adv` and re-hashes so that the
/// corrupted packet still passes [`destination_check`].
pub fn corrupt_payload<R: Rng + ?Sized>(pkt: &Packet, p_adv: f64, spec: &HashSpec, rng: &mut R) -> Result<Packet> {
    if !(0.0..=1.0).contains(&p_adv) {
        return Err(Error::param("p_adv", format!("{p_adv} outside [0, 1]")));
    }
    let width = pkt.payload.width();
    let e = flip_pattern(p_adv, width, rng);
    let payload = FieldElement::from_raw(pkt.payload.value() ^ e, width);
    Ok(Packet {
        own_hash: spec.eval(payload)?,
        payload,
        ..pkt.clone()
    })
}

/// Widths up to which [`search_corruption`] enumerates the symbol space.
pub const SEARCH_ADVERSARY_MAX_WIDTH: u8 = 8;

/// The least conspicuous corruption an unbounded adversary can make.
///
/// Enumerates every `y != payload` and picks the one that keeps the hash
/// unchanged at the smallest Hamming distance (ties to the smallest value).
/// When no other symbol shares the hash, the closest symbol overall is used.
pub fn search_corruption(pkt: &Packet, spec: &HashSpec) -> Result<Packet> {
    let width = pkt.payload.width();
    if width > SEARCH_ADVERSARY_MAX_WIDTH {
        return Err(Error::param(
            "width",
            format!("search adversary supports n <= {SEARCH_ADVERSARY_MAX_WIDTH}"),
        ));
    }
    let x = pkt.payload.value();
    let hx = spec.eval_raw(x);
    let best = (0..1u32 << width)
        .filter(|&y| y != x)
        .min_by_key(|&y| (spec.eval_raw(y) != hx, (x ^ y).count_ones(), y))
        .ok_or_else(|| Error::param("width", "field has a single element"))?;
    let payload = FieldElement::from_raw(best, width);
    Ok(Packet {
        own_hash: spec.eval(payload)?,
        payload,
        ..pkt.clone()
    })
}

/// Destination-side consistency: `own_hash == h(payload)`.
pub fn destination_check(pkt: &Packet, spec: &HashSpec) -> bool {
    spec.eval(pkt.payload).is_ok_and(|h| h == pkt.own_hash)
}
