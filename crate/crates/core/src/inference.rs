//! The watchdog's inference engine.
//!
//! A watchdog `v_1` knows its own symbol `x_1` and the coding coefficients
//! `α_1..α_m` of the relay it polices (headers arrive error-free). It overhears
//! each peer `v_j` through a noisy channel together with the peer's hash, and
//! overhears the relay's output the same way. From this it computes:
//!
//! 1. a [`TransitionRow`] per peer: the posterior over hash-consistent
//!    candidates for the peer's symbol;
//! 2. a [`Trellis`] whose layer `i` holds the distribution of the partial
//!    combination `α_1 x_1 + ... + α_i x_i` (a sum-product forward pass);
//! 3. the consistency probability `p* = Σ_s w(s, m) · T⁻¹(s, x̃_{m+1})` of the
//!    relay's overheard output, and a threshold verdict on it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ball_radius, Bsc};
use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldParams, GaloisField};
use crate::hashing::HashSpec;
use crate::packet::Codebook;

const ROW_TOLERANCE: f64 = 1e-12;
const LAYER_TOLERANCE: f64 = 1e-9;

/// Optional Hamming-ball restriction of the candidate sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pruning {
    /// Keep every hash-consistent candidate.
    #[default]
    Off,
    /// Keep candidates within `ball_radius(channel, n, eps)` of the observation.
    Eps(f64),
    /// Keep candidates within a fixed Hamming radius of the observation.
    Radius(u32),
}

/// `off`, `eps:<f64>` or `radius:<u32>`.
impl fmt::Display for Pruning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pruning::Off => f.write_str("off"),
            Pruning::Eps(e) => write!(f, "eps:{e}"),
            Pruning::Radius(r) => write!(f, "radius:{r}"),
        }
    }
}

impl FromStr for Pruning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("pruning", format!("`{s}` is not off, eps:<f64> or radius:<int>"));
        match s.split_once(':') {
            None if s == "off" => Ok(Pruning::Off),
            Some(("eps", v)) => v.parse().map(Pruning::Eps).map_err(|_| bad()),
            Some(("radius", v)) => v.parse().map(Pruning::Radius).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl Pruning {
    fn radius(&self, ch: &Bsc, width: u8) -> Result<Option<u32>> {
        match *self {
            Pruning::Off => Ok(None),
            Pruning::Eps(eps) => ball_radius(ch, width as u32, eps).map(Some),
            Pruning::Radius(r) => Ok(Some(r)),
        }
    }
}

/// Normalized distribution over the candidates for one overheard symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRow {
    candidates: Vec<(FieldElement, f64)>,
}

impl TransitionRow {
    pub fn candidates(&self) -> &[(FieldElement, f64)] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn probability(&self, x: FieldElement) -> f64 {
        self.candidates
            .binary_search_by_key(&x, |&(c, _)| c)
            .map_or(0.0, |i| self.candidates[i].1)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Candidate distribution for an overheard `[x̃, h(x)]` pair.
pub fn transition_row(
    observed: FieldElement,
    target_hash: u32,
    ch: &Bsc,
    spec: &HashSpec,
    codebook: &Codebook,
) -> Result<TransitionRow> {
    transition_row_pruned(observed, target_hash, ch, spec, codebook, Pruning::Off)
}

pub fn transition_row_pruned(
    observed: FieldElement,
    target_hash: u32,
    ch: &Bsc,
    spec: &HashSpec,
    codebook: &Codebook,
    pruning: Pruning,
) -> Result<TransitionRow> {
    let width = observed.width();
    if codebook.width() != width || spec.width() != width {
        return Err(Error::WidthMismatch {
            left: width,
            right: codebook.width(),
        });
    }
    let radius = pruning.radius(ch, width)?;
    let scored: Vec<(FieldElement, f64)> = spec
        .collision_list(target_hash, codebook)
        .into_iter()
        .filter_map(|y| {
            let d = y.hamming_distance(observed);
            match radius {
                Some(r) if d > r => None,
                _ => Some((y, ch.log_likelihood_at(d, width))),
            }
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::NoCandidates { target: target_hash });
    }
    let norm = log_sum_exp(scored.iter().map(|&(_, l)| l));
    if norm == f64::NEG_INFINITY {
        return Err(Error::ZeroNormalizer);
    }
    let candidates: Vec<(FieldElement, f64)> = scored
        .into_iter()
        .map(|(y, l)| (y, (l - norm).exp()))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    debug_assert!((candidates.iter().map(|c| c.1).sum::<f64>() - 1.0).abs() < ROW_TOLERANCE);
    Ok(TransitionRow { candidates })
}

/// One overheard transmission: the noisy payload, the error-free hash and the
/// channel it came through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overheard {
    pub observed: FieldElement,
    pub hash: u32,
    pub channel: Bsc,
    pub codebook: Codebook,
}

impl Overheard {
    pub fn new(observed: FieldElement, hash: u32, channel: Bsc) -> Self {
        Self {
            observed,
            hash,
            channel,
            codebook: Codebook::Full {
                width: observed.width(),
            },
        }
    }
}

/// Everything watchdog `v_1` holds when policing the relay `v_{m+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatchdogObservation {
    /// `x_1`, known exactly.
    pub own_symbol: FieldElement,
    /// `α_1..α_m`; `α_1` multiplies the watchdog's own symbol.
    pub coeffs: Vec<FieldElement>,
    /// Peers `v_2..v_m`, in coefficient order.
    pub peers: Vec<Overheard>,
    pub relay: Overheard,
    pub hash: HashSpec,
    #[serde(default)]
    pub pruning: Pruning,
}

impl WatchdogObservation {
    pub fn width(&self) -> u8 {
        self.own_symbol.width()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.len() != self.peers.len() + 1 {
            return Err(Error::LengthMismatch {
                what: "coefficients vs peers + 1",
                left: self.coeffs.len(),
                right: self.peers.len() + 1,
            });
        }
        let width = self.width();
        if self.hash.width() != width {
            return Err(Error::WidthMismatch {
                left: width,
                right: self.hash.width(),
            });
        }
        for c in &self.coeffs {
            self.own_symbol.same_width(*c)?;
            if c.is_zero() {
                return Err(Error::param("coeffs", "coding coefficients must be nonzero"));
            }
        }
        for o in self.peers.iter().chain(std::iter::once(&self.relay)) {
            self.own_symbol.same_width(o.observed)?;
            if o.hash >= self.hash.range() {
                return Err(Error::param("hash", format!("{} is not a {}-bit value", o.hash, self.hash.delta())));
            }
        }
        Ok(())
    }
}

/// Layered distribution over partial linear combinations.
#[derive(Clone, Debug, PartialEq)]
pub struct Trellis {
    layers: Vec<Vec<(FieldElement, f64)>>,
    coeffs: Vec<FieldElement>,
    params: FieldParams,
}

impl Trellis {
    /// Number of layers (`m`).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Layer `i` for `i` in `1..=m`, as `(state, weight)` sorted by state.
    pub fn layer(&self, i: usize) -> &[(FieldElement, f64)] {
        &self.layers[i - 1]
    }

    pub fn final_layer(&self) -> &[(FieldElement, f64)] {
        self.layers.last().expect("trellis has at least one layer")
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn weight(&self, i: usize, s: FieldElement) -> f64 {
        self.layer(i)
            .binary_search_by_key(&s, |&(x, _)| x)
            .map_or(0.0, |k| self.layer(i)[k].1)
    }
}

/// Builds the watchdog trellis and runs the forward pass.
///
/// Layer 1 is `{α_1 x_1 ↦ 1}`. Layer `i` adds `α_i x` for every candidate `x`
/// of peer `i`, weighting by the transition probability. When pruning leaves
/// a peer without candidates the remaining layers are empty.
pub fn build_and_run_trellis(field: &GaloisField, obs: &WatchdogObservation) -> Result<Trellis> {
    obs.validate()?;
    let width = obs.width();
    if field.width() != width {
        return Err(Error::WidthMismatch {
            left: field.width(),
            right: width,
        });
    }
    let start = field.mul_raw(obs.coeffs[0].value(), obs.own_symbol.value());
    let mut layers = vec![vec![(FieldElement::from_raw(start, width), 1.0)]];

    let mut scratch = vec![0.0f64; field.order() as usize];
    let mut touched: Vec<u32> = Vec::new();
    for (alpha, peer) in obs.coeffs[1..].iter().zip(&obs.peers) {
        let row = match transition_row_pruned(
            peer.observed,
            peer.hash,
            &peer.channel,
            &obs.hash,
            &peer.codebook,
            obs.pruning,
        ) {
            Ok(row) => row,
            Err(Error::NoCandidates { .. }) if obs.pruning != Pruning::Off => TransitionRow {
                candidates: Vec::new(),
            },
            Err(e) => return Err(e),
        };
        let shifts: Vec<(u32, f64)> = row
            .candidates
            .iter()
            .map(|&(x, t)| (field.mul_raw(alpha.value(), x.value()), t))
            .collect();
        let prev = layers.last().expect("nonempty");
        for &(s, w) in prev {
            for &(shift, t) in &shifts {
                let next = (s.value() ^ shift) as usize;
                if scratch[next] == 0.0 {
                    touched.push(next as u32);
                }
                scratch[next] += w * t;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let layer: Vec<(FieldElement, f64)> = touched
            .drain(..)
            .filter_map(|s| {
                let w = std::mem::take(&mut scratch[s as usize]);
                (w > 0.0).then(|| (FieldElement::from_raw(s, width), w))
            })
            .collect();
        debug_assert!(
            layer.is_empty() || (layer.iter().map(|l| l.1).sum::<f64>() - 1.0).abs() < LAYER_TOLERANCE
        );
        layers.push(layer);
    }
    Ok(Trellis {
        layers,
        coeffs: obs.coeffs.clone(),
        params: *field.params(),
    })
}

/// `T⁻¹(candidate, x̃)`: the likelihood of the overheard relay output given
/// `candidate`, normalized over the relay's hash class.
pub fn inverse_transition(
    candidate: FieldElement,
    observed: FieldElement,
    relay_hash: u32,
    ch: &Bsc,
    spec: &HashSpec,
    codebook: &Codebook,
) -> Result<f64> {
    candidate.same_width(observed)?;
    if spec.eval(candidate)? != relay_hash || !codebook.contains(candidate) {
        return Ok(0.0);
    }
    let log_norm = relay_log_normalizer(observed, relay_hash, ch, spec, codebook);
    if log_norm == f64::NEG_INFINITY {
        return Err(Error::ZeroNormalizer);
    }
    let l = ch.log_likelihood_at(candidate.hamming_distance(observed), observed.width());
    Ok((l - log_norm).exp())
}

fn relay_log_normalizer(observed: FieldElement, relay_hash: u32, ch: &Bsc, spec: &HashSpec, codebook: &Codebook) -> f64 {
    let width = observed.width();
    let class = spec.collision_list(relay_hash, codebook);
    log_sum_exp(
        class
            .iter()
            .map(|y| ch.log_likelihood_at(y.hamming_distance(observed), width)),
    )
}

/// `p* = Σ_s w(s, m) · T⁻¹(s, x̃_{m+1})`.
///
/// Returns 0 when no member of the relay's hash class can produce the
/// overheard output (possible only on a noiseless relay channel).
pub fn consistency_probability(trellis: &Trellis, obs: &WatchdogObservation) -> Result<f64> {
    let relay = &obs.relay;
    let width = obs.width();
    let log_norm = relay_log_normalizer(relay.observed, relay.hash, &relay.channel, &obs.hash, &relay.codebook);
    if log_norm == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let p: f64 = trellis
        .final_layer()
        .iter()
        .filter(|&&(s, _)| obs.hash.eval_raw(s.value()) == relay.hash && relay.codebook.contains(s))
        .map(|&(s, w)| {
            let l = relay
                .channel
                .log_likelihood_at(s.hamming_distance(relay.observed), width);
            w * (l - log_norm).exp()
        })
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Final-layer states with positive weight whose hash equals the relay's.
pub fn matched_codewords(trellis: &Trellis, relay_hash: u32, spec: &HashSpec) -> Vec<FieldElement> {
    trellis
        .final_layer()
        .iter()
        .filter(|&&(s, w)| w > 0.0 && spec.eval_raw(s.value()) == relay_hash)
        .map(|&(s, _)| s)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    WellBehaving,
    Malicious,
}

/// Threshold rule: malicious iff `p* <= t`.
pub fn decide(p_star: f64, t: f64) -> Verdict {
    debug_assert!((0.0..=1.0).contains(&t));
    if p_star <= t {
        Verdict::Malicious
    } else {
        Verdict::WellBehaving
    }
}

/// Result of one watchdog evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct WatchdogOutcome {
    pub p_star: f64,
    pub matched: Vec<FieldElement>,
    pub trellis: Trellis,
}

/// Runs the full pipeline on one observation.
pub fn evaluate(field: &GaloisField, obs: &WatchdogObservation) -> Result<WatchdogOutcome> {
    let trellis = build_and_run_trellis(field, obs)?;
    let p_star = consistency_probability(&trellis, obs)?;
    let matched = matched_codewords(&trellis, obs.relay.hash, &obs.hash);
    Ok(WatchdogOutcome {
        p_star,
        matched,
        trellis,
    })
}
