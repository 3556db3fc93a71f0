//! Monte Carlo harness for the two-hop experiments, the brute-force p* oracle
//! and threshold calibration.
//!
//! Every trial draws from three ChaCha sub-streams keyed by `(seed, trial)`:
//! symbols (hash, source symbols, coefficients), channels (overhearing noise)
//! and adversary (payload corruption). Honest and adversarial relays share the
//! first two, so `p_adv = 0` reproduces the honest samples exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{algebraic_check, AlgebraicCheckInput};
use crate::channel::{ball_radius, Bsc};
use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldParams, GaloisField};
use crate::hashing::{sample_hash, HashFamily, HashSpec};
use crate::inference::{build_and_run_trellis, consistency_probability, matched_codewords, Overheard, Pruning, WatchdogObservation};
use crate::packet::{corrupt_payload, make_packet, NodeId};

const STREAM_SYMBOLS: u64 = 0;
const STREAM_CHANNELS: u64 = 1;
const STREAM_ADVERSARY: u64 = 2;

/// Widest field the brute-force oracle will enumerate.
pub const ORACLE_MAX_WIDTH: u8 = 6;

pub(crate) fn substream(seed: u64, index: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index << 2 | tag);
    rng
}

/// Parameters of one two-hop experiment point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoHopConfig {
    /// Number of sources feeding the relay (the watchdog is one of them).
    pub m: usize,
    pub n: u8,
    pub delta: u8,
    /// Peer-to-watchdog overhearing rate.
    pub p_s: f64,
    /// Relay-to-watchdog overhearing rate.
    pub p_relay: f64,
    pub p_adv: f64,
    pub iterations: u64,
    pub seed: u64,
    pub pruning: Pruning,
    pub family: HashFamily,
}

impl Default for TwoHopConfig {
    fn default() -> Self {
        Self {
            m: 3,
            n: 10,
            delta: 2,
            p_s: 0.1,
            p_relay: 0.1,
            p_adv: 0.1,
            iterations: 1000,
            seed: 1,
            pruning: Pruning::Off,
            family: HashFamily::Affine,
        }
    }
}

impl TwoHopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::param("m", "need at least one source"));
        }
        FieldParams::new(self.n)?;
        if self.delta > self.n {
            return Err(Error::param("delta", format!("{} exceeds n = {}", self.delta, self.n)));
        }
        Bsc::new(self.p_s).map_err(|_| Error::param("p_s", format!("{} outside [0, 0.5]", self.p_s)))?;
        Bsc::new(self.p_relay).map_err(|_| Error::param("p_relay", format!("{} outside [0, 0.5]", self.p_relay)))?;
        if !(0.0..=1.0).contains(&self.p_adv) {
            return Err(Error::param("p_adv", format!("{} outside [0, 1]", self.p_adv)));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        match self.pruning {
            Pruning::Eps(e) if !(e > 0.0 && e < 1.0) => Err(Error::param("pruning", format!("eps {e} outside (0, 1)"))),
            Pruning::Radius(r) if r > self.n as u32 => Err(Error::param("pruning", format!("radius {r} exceeds n"))),
            _ => Ok(()),
        }
    }

    pub fn field(&self) -> Result<GaloisField> {
        GaloisField::new(self.n)
    }
}

/// Ground truth and both watchdog views for one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoHopInstance {
    pub hash: HashSpec,
    /// `x_1..x_m`; `x_1` belongs to the watchdog.
    pub symbols: Vec<FieldElement>,
    pub coeffs: Vec<FieldElement>,
    /// What the relay sends when honest.
    pub combination: FieldElement,
    /// What the relay sends when adversarial.
    pub corrupted: FieldElement,
    pub honest: WatchdogObservation,
    pub adversarial: WatchdogObservation,
}

impl TwoHopInstance {
    pub fn observation(&self, adversarial: bool) -> &WatchdogObservation {
        if adversarial {
            &self.adversarial
        } else {
            &self.honest
        }
    }
}

/// Draws trial `trial` of `cfg`.
pub fn draw_instance(cfg: &TwoHopConfig, field: &GaloisField, trial: u64) -> Result<TwoHopInstance> {
    let n = cfg.n;
    let order = field.order();
    let mut sym = substream(cfg.seed, trial, STREAM_SYMBOLS);
    let hash = sample_hash(&mut sym, cfg.family, n, cfg.delta)?;
    let symbols: Vec<FieldElement> = (0..cfg.m)
        .map(|_| FieldElement::from_raw(sym.random_range(0..order), n))
        .collect();
    let coeffs: Vec<FieldElement> = (0..cfg.m)
        .map(|_| FieldElement::from_raw(sym.random_range(1..order), n))
        .collect();

    let peer_ch = Bsc::new(cfg.p_s)?;
    let relay_ch = Bsc::new(cfg.p_relay)?;
    let mut chan = substream(cfg.seed, trial, STREAM_CHANNELS);
    let peers = symbols[1..]
        .iter()
        .map(|&x| Ok(Overheard::new(peer_ch.transmit(x, &mut chan), hash.eval(x)?, peer_ch)))
        .collect::<Result<Vec<_>>>()?;
    let relay_noise = relay_ch.error_pattern(n, &mut chan);

    let ids = (1..=cfg.m as u32).map(NodeId);
    let inputs: BTreeMap<_, _> = ids.clone().zip(symbols.iter().copied()).collect();
    let alphas: BTreeMap<_, _> = ids.zip(coeffs.iter().copied()).collect();
    let packet = make_packet(&inputs, &alphas, &hash, field)?;
    let mut adv = substream(cfg.seed, trial, STREAM_ADVERSARY);
    let bad = corrupt_payload(&packet, cfg.p_adv, &hash, &mut adv)?;

    let view = |payload: FieldElement, own_hash: u32| WatchdogObservation {
        own_symbol: symbols[0],
        coeffs: coeffs.clone(),
        peers: peers.clone(),
        relay: Overheard::new(FieldElement::from_raw(payload.value() ^ relay_noise, n), own_hash, relay_ch),
        hash: hash.clone(),
        pruning: cfg.pruning,
    };
    let honest = view(packet.payload, packet.own_hash);
    let adversarial = view(bad.payload, bad.own_hash);
    Ok(TwoHopInstance {
        combination: packet.payload,
        corrupted: bad.payload,
        hash,
        symbols,
        coeffs,
        honest,
        adversarial,
    })
}

fn p_star(field: &GaloisField, obs: &WatchdogObservation) -> Result<f64> {
    let trellis = build_and_run_trellis(field, obs)?;
    consistency_probability(&trellis, obs)
}

/// p* seen by the watchdog in trial `trial`.
pub fn run_trial(cfg: &TwoHopConfig, field: &GaloisField, trial: u64, adversarial: bool) -> Result<f64> {
    let inst = draw_instance(cfg, field, trial)?;
    p_star(field, inst.observation(adversarial))
}

/// Execution knobs that do not change results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Thread count; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub keep_samples: bool,
}

/// Runs `f(0..count)` in parallel and returns results in trial order.
pub(crate) fn par_trials<T, F>(count: u64, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let work = || (0..count).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        None => work(),
        Some(0) => Err(Error::param("workers", "must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?
            .install(work),
    }
}

/// Population mean and variance, summed in input order.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Per-trial p* values, in trial order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub relay: Vec<f64>,
    pub adv: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub trials: u64,
    pub mean_p_relay: f64,
    pub var_relay: f64,
    pub std_relay: f64,
    pub mean_p_adv: f64,
    pub var_adv: f64,
    pub std_adv: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Samples>,
}

impl ExperimentStats {
    fn from_samples(relay: Vec<f64>, adv: Vec<f64>, keep: bool) -> Self {
        let (mean_p_relay, var_relay) = mean_var(&relay);
        let (mean_p_adv, var_adv) = mean_var(&adv);
        Self {
            trials: relay.len() as u64,
            mean_p_relay,
            var_relay,
            std_relay: var_relay.sqrt(),
            mean_p_adv,
            var_adv,
            std_adv: var_adv.sqrt(),
            samples: keep.then_some(Samples { relay, adv }),
        }
    }

    /// `mean_p_relay - mean_p_adv`.
    pub fn separation(&self) -> f64 {
        self.mean_p_relay - self.mean_p_adv
    }
}

/// Runs `cfg.iterations` trials, each evaluated with an honest and an
/// adversarial relay.
pub fn run_experiment(cfg: &TwoHopConfig, opts: RunOptions) -> Result<ExperimentStats> {
    cfg.validate()?;
    let field = cfg.field()?;
    let pairs = par_trials(cfg.iterations, opts.workers, |t| {
        let inst = draw_instance(cfg, &field, t)?;
        Ok((p_star(&field, &inst.honest)?, p_star(&field, &inst.adversarial)?))
    })?;
    let (relay, adv) = pairs.into_iter().unzip();
    Ok(ExperimentStats::from_samples(relay, adv, opts.keep_samples))
}

/// Honest-relay p* samples only.
pub fn honest_samples(cfg: &TwoHopConfig, opts: RunOptions) -> Result<Vec<f64>> {
    cfg.validate()?;
    let field = cfg.field()?;
    par_trials(cfg.iterations, opts.workers, |t| {
        p_star(&field, &draw_instance(cfg, &field, t)?.honest)
    })
}

/// The `gamma` empirical quantile: the `floor(gamma N)`-th smallest sample,
/// or 0 when that index is zero. `decide` at this threshold flags at least a
/// `floor(gamma N) / N` share of the samples.
pub fn quantile_threshold(samples: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", format!("{gamma} outside (0, 1)")));
    }
    if samples.is_empty() {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (gamma * sorted.len() as f64).floor() as usize;
    Ok(if k == 0 { 0.0 } else { sorted[k - 1] })
}

/// Threshold `t` such that an honest relay is flagged with frequency close to
/// `gamma`, estimated from `cfg.iterations` honest trials.
pub fn calibrate_threshold(cfg: &TwoHopConfig, gamma: f64, opts: RunOptions) -> Result<f64> {
    quantile_threshold(&honest_samples(cfg, opts)?, gamma)
}

/// Means of consecutive, non-overlapping windows of `window` samples; a
/// trailing partial window is dropped.
pub fn window_means(samples: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    samples
        .chunks_exact(window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Brute-force p*: enumerates every tuple of hash-consistent peer symbols.
///
/// Uses plain products of `p^d (1-p)^(n-d)` and shift-and-reduce field
/// multiplication; shares nothing with the trellis beyond the inputs.
pub fn oracle_p_star(params: &FieldParams, obs: &WatchdogObservation) -> Result<f64> {
    let n = obs.width();
    if n > ORACLE_MAX_WIDTH {
        return Err(Error::param("n", format!("oracle enumerates n <= {ORACLE_MAX_WIDTH}, got {n}")));
    }
    if params.width() != n {
        return Err(Error::WidthMismatch {
            left: params.width(),
            right: n,
        });
    }
    obs.validate()?;
    let order = 1u32 << n;
    let lik = |ch: &Bsc, observed: u32, x: u32| {
        let d = (observed ^ x).count_ones() as i32;
        ch.p().powi(d) * (1.0 - ch.p()).powi(n as i32 - d)
    };

    let mut rows = Vec::with_capacity(obs.peers.len());
    for peer in &obs.peers {
        let radius = match obs.pruning {
            Pruning::Off => n as u32,
            Pruning::Eps(eps) => ball_radius(&peer.channel, n as u32, eps)?,
            Pruning::Radius(r) => r,
        };
        let row: Vec<(u32, f64)> = (0..order)
            .filter(|&x| {
                obs.hash.eval_raw(x) == peer.hash
                    && (x ^ peer.observed.value()).count_ones() <= radius
                    && peer.codebook.contains(FieldElement::from_raw(x, n))
            })
            .map(|x| (x, lik(&peer.channel, peer.observed.value(), x)))
            .collect();
        let z: f64 = row.iter().map(|r| r.1).sum();
        if z == 0.0 {
            return Ok(0.0);
        }
        rows.push(row.into_iter().map(|(x, l)| (x, l / z)).collect::<Vec<_>>());
    }

    let relay = &obs.relay;
    let relay_class: Vec<u32> = (0..order)
        .filter(|&y| obs.hash.eval_raw(y) == relay.hash && relay.codebook.contains(FieldElement::from_raw(y, n)))
        .collect();
    let m_norm: f64 = relay_class
        .iter()
        .map(|&y| lik(&relay.channel, relay.observed.value(), y))
        .sum();
    if m_norm == 0.0 {
        return Ok(0.0);
    }

    let start = params.mul_raw(obs.coeffs[0].value(), obs.own_symbol.value());
    let mut index = vec![0usize; rows.len()];
    let mut total = 0.0;
    'tuples: loop {
        let mut s = start;
        let mut w = 1.0;
        for (j, row) in rows.iter().enumerate() {
            let (x, t) = row[index[j]];
            s ^= params.mul_raw(obs.coeffs[j + 1].value(), x);
            w *= t;
        }
        if relay_class.contains(&s) {
            total += w * lik(&relay.channel, relay.observed.value(), s) / m_norm;
        }
        // odometer over candidate lists
        for j in 0..rows.len() {
            index[j] += 1;
            if index[j] < rows[j].len() {
                continue 'tuples;
            }
            index[j] = 0;
        }
        break;
    }
    Ok(total)
}

/// Mean number of matched codewords on honest trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedCountStats {
    pub trials: u64,
    pub mean: f64,
    pub var: f64,
}

pub fn matched_count_experiment(cfg: &TwoHopConfig, opts: RunOptions) -> Result<MatchedCountStats> {
    cfg.validate()?;
    let field = cfg.field()?;
    let counts = par_trials(cfg.iterations, opts.workers, |t| {
        let inst = draw_instance(cfg, &field, t)?;
        let trellis = build_and_run_trellis(&field, &inst.honest)?;
        Ok(matched_codewords(&trellis, inst.honest.relay.hash, &inst.hash).len() as f64)
    })?;
    let (mean, var) = mean_var(&counts);
    Ok(MatchedCountStats {
        trials: cfg.iterations,
        mean,
        var,
    })
}

/// Monte Carlo setup for the two-source algebraic pass/fail check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicCheckConfig {
    pub n: u8,
    pub delta: u8,
    pub p_s: f64,
    pub p_relay: f64,
    /// Tolerance handed to `ball_radius` for both overheard links.
    pub eps: f64,
    pub p_adv: f64,
    pub iterations: u64,
    pub seed: u64,
}

/// Fraction of trials in which the relay passes the algebraic check.
///
/// With `adversarial = false` this estimates `1 - γ`; with an adversary it
/// estimates the misdetection probability.
pub fn algebraic_pass_rate(cfg: &AlgebraicCheckConfig, adversarial: bool, opts: RunOptions) -> Result<f64> {
    let two_hop = TwoHopConfig {
        m: 2,
        n: cfg.n,
        delta: cfg.delta,
        p_s: cfg.p_s,
        p_relay: cfg.p_relay,
        p_adv: cfg.p_adv,
        iterations: cfg.iterations,
        seed: cfg.seed,
        pruning: Pruning::Off,
        family: HashFamily::Affine,
    };
    two_hop.validate()?;
    let field = two_hop.field()?;
    let peer_radius = ball_radius(&Bsc::new(cfg.p_s)?, cfg.n as u32, cfg.eps)?;
    let relay_radius = ball_radius(&Bsc::new(cfg.p_relay)?, cfg.n as u32, cfg.eps)?;
    let passes = par_trials(cfg.iterations, opts.workers, |t| {
        let inst = draw_instance(&two_hop, &field, t)?;
        let obs = inst.observation(adversarial);
        let input = AlgebraicCheckInput {
            own_symbol: obs.own_symbol,
            coeffs: [obs.coeffs[0], obs.coeffs[1]],
            peer_observed: obs.peers[0].observed,
            peer_hash: obs.peers[0].hash,
            relay_observed: obs.relay.observed,
            relay_hash: obs.relay.hash,
            peer_radius,
            relay_radius,
        };
        algebraic_check(&input, &inst.hash, &field)
    })?;
    Ok(passes.iter().filter(|&&p| p).count() as f64 / cfg.iterations as f64)
}

/// Parameter swept by a two-hop experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "p_adv")]
    PAdv,
    #[serde(rename = "delta")]
    Delta,
    /// Moves the peer and relay overhearing rates together.
    #[serde(rename = "p_s")]
    PS,
    #[serde(rename = "m")]
    M,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PAdv => "p_adv",
            SweepAxis::Delta => "delta",
            SweepAxis::PS => "p_s",
            SweepAxis::M => "m",
        }
    }

    /// The axis values of the corresponding published figure.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::PAdv => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            SweepAxis::Delta => vec![0.0, 1.0, 2.0, 4.0],
            SweepAxis::PS => vec![0.05, 0.1, 0.2, 0.3, 0.4],
            SweepAxis::M => vec![2.0, 3.0, 4.0, 5.0],
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &TwoHopConfig, value: f64) -> Result<TwoHopConfig> {
        let integral = |name: &'static str| {
            if value >= 0.0 && value.fract() == 0.0 && value <= u8::MAX as f64 {
                Ok(value as u8)
            } else {
                Err(Error::param(name, format!("{value} is not a small non-negative integer")))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::PAdv => cfg.p_adv = value,
            SweepAxis::Delta => cfg.delta = integral("delta")?,
            SweepAxis::PS => {
                cfg.p_s = value;
                cfg.p_relay = value;
            }
            SweepAxis::M => cfg.m = integral("m")? as usize,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_adv" => Ok(SweepAxis::PAdv),
            "delta" => Ok(SweepAxis::Delta),
            "p_s" => Ok(SweepAxis::PS),
            "m" => Ok(SweepAxis::M),
            other => Err(Error::param("sweep", format!("unknown axis `{other}` (expected p_adv, delta, p_s or m)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub config: TwoHopConfig,
    pub stats: ExperimentStats,
}

/// Runs one experiment per axis value. Every point reuses `base.seed`, so
/// neighbouring points see the same symbols and noise.
pub fn run_sweep(base: &TwoHopConfig, axis: SweepAxis, values: &[f64], opts: RunOptions) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::param("values", "sweep needs at least one value"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("values", "sweep values must be strictly increasing"));
    }
    values
        .iter()
        .map(|&value| {
            let config = axis.apply(base, value)?;
            let stats = run_experiment(&config, opts)?;
            Ok(SweepPoint { value, config, stats })
        })
        .collect()
}
