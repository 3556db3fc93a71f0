//! Round-based protocol simulation on a hypergraph: nodes transmit per a
//! schedule, neighbours overhear through noisy channels, and honest nodes
//! randomly police their downstream neighbours with the two-hop watchdog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Bsc;
use crate::error::{Error, Result};
use crate::field::{FieldElement, GaloisField};
use crate::hashing::{sample_hash, HashFamily, HashSpec};
use crate::inference::{build_and_run_trellis, consistency_probability, decide, Overheard, Pruning, Verdict, WatchdogObservation};
use crate::packet::{corrupt_payload, destination_check, make_packet, NodeId, Packet};
use crate::sim::{quantile_threshold, substream, window_means};

const STREAM_SYMBOLS: u64 = 0;
const STREAM_CHANNELS: u64 = 1;
const STREAM_ADVERSARY: u64 = 2;
const STREAM_CHECKS: u64 = 3;
const HASH_SALT: u64 = 0x005e_ed0f_4a54;

/// Default rolling-window length of the trust ledger.
pub const DEFAULT_WINDOW: usize = 25;

/// Topology `G = (V, E1, E2)`: intended links plus noisy overhearing edges.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hypergraph {
    nodes: BTreeSet<NodeId>,
    links: BTreeSet<(NodeId, NodeId)>,
    /// `(speaker, listener) -> channel`.
    interference: BTreeMap<(NodeId, NodeId), Bsc>,
}

impl Hypergraph {
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            nodes: nodes.into_iter().collect(),
            ..Self::default()
        }
    }

    fn check_node(&self, v: NodeId) -> Result<()> {
        if self.nodes.contains(&v) {
            Ok(())
        } else {
            Err(Error::UnknownNode(v.to_string()))
        }
    }

    pub fn add_link(&mut self, from: NodeId, to: NodeId) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::Topology(format!("self-loop on {from}")));
        }
        self.links.insert((from, to));
        Ok(())
    }

    /// `listener` overhears `speaker` through `BSC(p)`.
    pub fn add_interference(&mut self, speaker: NodeId, listener: NodeId, p: f64) -> Result<()> {
        self.check_node(speaker)?;
        self.check_node(listener)?;
        self.interference.insert((speaker, listener), Bsc::new(p)?);
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn has_link(&self, from: NodeId, to: NodeId) -> bool {
        self.links.contains(&(from, to))
    }

    pub fn parents(&self, v: NodeId) -> Vec<NodeId> {
        self.links.iter().filter(|l| l.1 == v).map(|l| l.0).collect()
    }

    pub fn children(&self, v: NodeId) -> Vec<NodeId> {
        self.links.iter().filter(|l| l.0 == v).map(|l| l.1).collect()
    }

    pub fn overhearing(&self, speaker: NodeId, listener: NodeId) -> Option<Bsc> {
        self.interference.get(&(speaker, listener)).copied()
    }

    fn listeners(&self, speaker: NodeId) -> impl Iterator<Item = (NodeId, Bsc)> + '_ {
        self.interference
            .iter()
            .filter(move |(k, _)| k.0 == speaker)
            .map(|(k, &ch)| (k.1, ch))
    }

    /// Checks that `watcher` holds every overhearing edge needed to police `watched`.
    pub fn can_police(&self, watcher: NodeId, watched: NodeId) -> Result<()> {
        if !self.has_link(watcher, watched) {
            return Err(Error::Topology(format!("{watcher} is not a parent of {watched}")));
        }
        if self.overhearing(watched, watcher).is_none() {
            return Err(Error::Topology(format!("{watcher} cannot overhear {watched}")));
        }
        for u in self.parents(watched) {
            if u != watcher && self.overhearing(u, watcher).is_none() {
                return Err(Error::Topology(format!("{watcher} cannot overhear {u}, a parent of {watched}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Honest,
    /// Flips each payload bit with probability `p_adv` and re-hashes. Adversarial
    /// nodes collude: they never police anyone, even with `p_adv = 0`.
    Adversarial { p_adv: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeBehavior {
    pub role: Role,
    pub check_probability: f64,
}

impl NodeBehavior {
    pub fn new(role: Role, check_probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&check_probability) {
            return Err(Error::param("check_probability", format!("{check_probability} outside [0, 1]")));
        }
        if let Role::Adversarial { p_adv } = role {
            if !(0.0..=1.0).contains(&p_adv) {
                return Err(Error::param("p_adv", format!("{p_adv} outside [0, 1]")));
            }
        }
        Ok(Self { role, check_probability })
    }

    pub fn honest(check_probability: f64) -> Result<Self> {
        Self::new(Role::Honest, check_probability)
    }

    pub fn adversarial(p_adv: f64) -> Result<Self> {
        Self::new(Role::Adversarial { p_adv }, 0.0)
    }

    pub fn is_honest(&self) -> bool {
        self.role == Role::Honest
    }

    /// True when the node injects errors.
    pub fn corrupts(&self) -> bool {
        matches!(self.role, Role::Adversarial { p_adv } if p_adv > 0.0)
    }
}

/// A topology with behaviours, a transmission schedule and the shared code.
#[derive(Clone)]
pub struct Network {
    pub graph: Hypergraph,
    pub behaviors: BTreeMap<NodeId, NodeBehavior>,
    /// Slots of one round; nodes within a slot transmit in id order.
    pub schedule: Vec<Vec<NodeId>>,
    pub field: GaloisField,
    pub hash: HashSpec,
}

impl Network {
    pub fn new(
        graph: Hypergraph,
        behaviors: BTreeMap<NodeId, NodeBehavior>,
        schedule: Vec<Vec<NodeId>>,
        field: GaloisField,
        hash: HashSpec,
    ) -> Result<Self> {
        if hash.width() != field.width() {
            return Err(Error::WidthMismatch {
                left: hash.width(),
                right: field.width(),
            });
        }
        for v in graph.nodes() {
            if !behaviors.contains_key(&v) {
                return Err(Error::param("behaviors", format!("no behaviour for {v}")));
            }
        }
        if let Some(v) = behaviors.keys().find(|v| !graph.nodes.contains(v)) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        let mut seen = BTreeSet::new();
        for v in schedule.iter().flatten() {
            graph.check_node(*v)?;
            if !seen.insert(*v) {
                return Err(Error::Topology(format!("{v} is scheduled twice in one round")));
            }
        }
        Ok(Self {
            graph,
            behaviors,
            schedule,
            field,
            hash,
        })
    }

    pub fn behavior(&self, v: NodeId) -> &NodeBehavior {
        &self.behaviors[&v]
    }

    fn slot_order(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.schedule.iter().flat_map(|slot| {
            let mut s = slot.clone();
            s.sort();
            s
        })
    }

    /// The same network with every adversary made harmless (colluders stay colluders).
    pub fn without_corruption(&self) -> Self {
        let mut out = self.clone();
        for b in out.behaviors.values_mut() {
            if let Role::Adversarial { p_adv } = &mut b.role {
                *p_adv = 0.0;
            }
        }
        out
    }
}

/// The header part of a packet, delivered error-free to every neighbour.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub coeffs: BTreeMap<NodeId, FieldElement>,
    pub input_hashes: BTreeMap<NodeId, u32>,
    pub own_hash: u32,
}

/// Everything that happened in one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTranscript {
    pub round: u64,
    sent: BTreeMap<NodeId, Packet>,
    /// What each node would have sent if every node were honest.
    reference: BTreeMap<NodeId, FieldElement>,
    /// `(listener, speaker) -> noisy payload`.
    overheard: BTreeMap<(NodeId, NodeId), FieldElement>,
}

/// The part of a transcript one node legitimately holds.
#[derive(Clone, Debug)]
pub struct WatcherView<'a> {
    pub watcher: NodeId,
    own: Option<FieldElement>,
    transcript: &'a RoundTranscript,
}

impl WatcherView<'_> {
    /// The payload this node transmitted.
    pub fn own_payload(&self) -> Option<FieldElement> {
        self.own
    }

    pub fn header(&self, v: NodeId) -> Option<Header> {
        self.transcript.header(v)
    }

    pub fn overheard(&self, speaker: NodeId) -> Option<FieldElement> {
        self.transcript.overheard.get(&(self.watcher, speaker)).copied()
    }
}

impl RoundTranscript {
    pub fn header(&self, v: NodeId) -> Option<Header> {
        self.sent.get(&v).map(|p| Header {
            coeffs: p.coeffs.clone(),
            input_hashes: p.input_hashes.clone(),
            own_hash: p.own_hash,
        })
    }

    pub fn transmitted(&self, v: NodeId) -> bool {
        self.sent.contains_key(&v)
    }

    pub fn view(&self, watcher: NodeId) -> WatcherView<'_> {
        WatcherView {
            watcher,
            own: self.sent.get(&watcher).map(|p| p.payload),
            transcript: self,
        }
    }

    /// Packets `v` received over its intended links, keyed by parent.
    pub fn received(&self, g: &Hypergraph, v: NodeId) -> BTreeMap<NodeId, Packet> {
        g.parents(v)
            .into_iter()
            .filter_map(|u| self.sent.get(&u).map(|p| (u, p.clone())))
            .collect()
    }

    /// Whether `v` received a payload that differs from the all-honest reference.
    pub fn corrupted_at(&self, g: &Hypergraph, v: NodeId) -> bool {
        g.parents(v)
            .into_iter()
            .any(|u| matches!((self.sent.get(&u), self.reference.get(&u)), (Some(p), Some(r)) if p.payload != *r))
    }

    /// Flat record for line-delimited trace dumps.
    pub fn trace_record(&self) -> TraceRecord {
        TraceRecord {
            round: self.round,
            transmissions: self
                .sent
                .iter()
                .map(|(&node, p)| TraceTransmission {
                    node: node.0,
                    payload: p.payload.value(),
                    reference: self.reference[&node].value(),
                    own_hash: p.own_hash,
                    coeffs: p.coeffs.iter().map(|(k, c)| (k.0, c.value())).collect(),
                    input_hashes: p.input_hashes.iter().map(|(k, &h)| (k.0, h)).collect(),
                })
                .collect(),
            overheard: self
                .overheard
                .iter()
                .map(|(&(listener, speaker), x)| TraceOverhearing {
                    listener: listener.0,
                    speaker: speaker.0,
                    observed: x.value(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTransmission {
    pub node: u32,
    pub payload: u32,
    pub reference: u32,
    pub own_hash: u32,
    pub coeffs: Vec<(u32, u32)>,
    pub input_hashes: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOverhearing {
    pub listener: u32,
    pub speaker: u32,
    pub observed: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    pub transmissions: Vec<TraceTransmission>,
    pub overheard: Vec<TraceOverhearing>,
}

/// Plays one round of the schedule. Sources draw fresh uniform symbols;
/// every other node combines what its parents sent with fresh nonzero
/// coefficients.
pub fn run_round(net: &Network, seed: u64, round: u64) -> Result<RoundTranscript> {
    let n = net.field.width();
    let order = net.field.order();
    let mut sym = substream(seed, round, STREAM_SYMBOLS);
    let mut chan = substream(seed, round, STREAM_CHANNELS);
    let mut adv = substream(seed, round, STREAM_ADVERSARY);
    let mut t = RoundTranscript {
        round,
        sent: BTreeMap::new(),
        reference: BTreeMap::new(),
        overheard: BTreeMap::new(),
    };
    for v in net.slot_order() {
        let parents = net.graph.parents(v);
        let (honest, reference) = if parents.is_empty() {
            let x = FieldElement::from_raw(sym.random_range(0..order), n);
            (Packet::source(x, &net.hash)?, x)
        } else {
            let mut inputs = BTreeMap::new();
            let mut reference_inputs = Vec::new();
            for &u in &parents {
                let Some(p) = t.sent.get(&u) else {
                    return Err(Error::Topology(format!("{v} is scheduled before its parent {u} transmitted")));
                };
                inputs.insert(u, p.payload);
                reference_inputs.push(t.reference[&u]);
            }
            let coeffs: BTreeMap<_, _> = parents
                .iter()
                .map(|&u| (u, FieldElement::from_raw(sym.random_range(1..order), n)))
                .collect();
            let alphas: Vec<_> = coeffs.values().copied().collect();
            let reference = net.field.lincomb(&alphas, &reference_inputs)?;
            (make_packet(&inputs, &coeffs, &net.hash, &net.field)?, reference)
        };
        let packet = match net.behavior(v).role {
            Role::Honest => honest,
            Role::Adversarial { p_adv } => corrupt_payload(&honest, p_adv, &net.hash, &mut adv)?,
        };
        for (listener, ch) in net.graph.listeners(v) {
            t.overheard.insert((listener, v), ch.transmit(packet.payload, &mut chan));
        }
        t.reference.insert(v, reference);
        t.sent.insert(v, packet);
    }
    Ok(t)
}

/// Builds the watchdog observation `watcher` forms about `watched` from its view.
pub fn observation_for(net: &Network, view: &WatcherView<'_>, watched: NodeId) -> Result<WatchdogObservation> {
    let watcher = view.watcher;
    net.graph.can_police(watcher, watched)?;
    let header = view
        .header(watched)
        .ok_or_else(|| Error::Topology(format!("{watched} did not transmit this round")))?;
    let own_symbol = view
        .own_payload()
        .ok_or_else(|| Error::Topology(format!("{watcher} did not transmit this round")))?;
    let missing = |u: NodeId| Error::Topology(format!("{watcher} holds no overhearing of {u}"));

    let mut coeffs = vec![header.coeffs[&watcher]];
    let mut peers = Vec::new();
    for u in net.graph.parents(watched) {
        if u == watcher {
            continue;
        }
        let ch = net.graph.overhearing(u, watcher).ok_or_else(|| missing(u))?;
        coeffs.push(header.coeffs[&u]);
        peers.push(Overheard::new(view.overheard(u).ok_or_else(|| missing(u))?, header.input_hashes[&u], ch));
    }
    let ch = net.graph.overhearing(watched, watcher).ok_or_else(|| missing(watched))?;
    let relay = Overheard::new(view.overheard(watched).ok_or_else(|| missing(watched))?, header.own_hash, ch);
    Ok(WatchdogObservation {
        own_symbol,
        coeffs,
        peers,
        relay,
        hash: net.hash.clone(),
        pruning: Pruning::Off,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub samples: Vec<f64>,
    pub verdict: Option<Verdict>,
}

/// Per (watcher, watched) p* history with a rolling-mean verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustLedger {
    pub window: usize,
    pub threshold: f64,
    entries: BTreeMap<(NodeId, NodeId), LedgerEntry>,
}

impl TrustLedger {
    pub fn new(window: usize, threshold: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("window", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::param("threshold", format!("{threshold} outside [0, 1]")));
        }
        Ok(Self {
            window,
            threshold,
            entries: BTreeMap::new(),
        })
    }

    pub fn record(&mut self, watcher: NodeId, watched: NodeId, p_star: f64) {
        debug_assert!((0.0..=1.0).contains(&p_star));
        let (window, threshold) = (self.window, self.threshold);
        let e = self.entries.entry((watcher, watched)).or_default();
        e.samples.push(p_star);
        let tail = &e.samples[e.samples.len().saturating_sub(window)..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        e.verdict = Some(decide(mean, threshold));
    }

    pub fn samples(&self, watcher: NodeId, watched: NodeId) -> &[f64] {
        self.entries.get(&(watcher, watched)).map_or(&[], |e| &e.samples)
    }

    /// Current verdict; well-behaving until evidence arrives.
    pub fn verdict(&self, watcher: NodeId, watched: NodeId) -> Verdict {
        self.entries
            .get(&(watcher, watched))
            .and_then(|e| e.verdict)
            .unwrap_or(Verdict::WellBehaving)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.entries.keys().copied()
    }

    pub fn flagged(&self) -> Vec<(NodeId, NodeId)> {
        self.pairs()
            .filter(|&(a, b)| self.verdict(a, b) == Verdict::Malicious)
            .collect()
    }
}

/// Runs the watchdog of `watcher` on `watched` and appends p* to the ledger.
pub fn police(
    net: &Network,
    watcher: NodeId,
    watched: NodeId,
    transcript: &RoundTranscript,
    ledger: &mut TrustLedger,
) -> Result<f64> {
    let obs = observation_for(net, &transcript.view(watcher), watched)?;
    let trellis = build_and_run_trellis(&net.field, &obs)?;
    let p = consistency_probability(&trellis, &obs)?;
    ledger.record(watcher, watched, p);
    Ok(p)
}

/// Outcome of several protocol rounds.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub ledger: TrustLedger,
    pub transcripts: Vec<RoundTranscript>,
    /// Rounds in which some sink received a corrupted payload whose hash
    /// still checked out.
    pub corrupted_deliveries: u64,
    pub rounds: u64,
}

/// Nodes without children that are not scheduled to transmit.
pub fn sinks(net: &Network) -> Vec<NodeId> {
    let scheduled: BTreeSet<_> = net.schedule.iter().flatten().copied().collect();
    net.graph
        .nodes()
        .filter(|v| net.graph.children(*v).is_empty() && !scheduled.contains(v))
        .collect()
}

/// Algorithm: every round, transmit per schedule; each honest node then
/// decides with its check probability whether to police every downstream
/// neighbour it holds the overhearing edges for.
pub fn run_protocol(net: &Network, rounds: u64, seed: u64, mut ledger: TrustLedger, keep_transcripts: bool) -> Result<ProtocolRun> {
    let sinks = sinks(net);
    let mut transcripts = Vec::new();
    let mut corrupted_deliveries = 0;
    for r in 0..rounds {
        let t = run_round(net, seed, r)?;
        let mut checks = substream(seed, r, STREAM_CHECKS);
        for v in net.graph.nodes() {
            let b = net.behavior(v);
            let u: f64 = checks.random();
            if !b.is_honest() || u >= b.check_probability || !t.transmitted(v) {
                continue;
            }
            for child in net.graph.children(v) {
                if t.transmitted(child) && net.graph.can_police(v, child).is_ok() {
                    police(net, v, child, &t, &mut ledger)?;
                }
            }
        }
        let corrupted = sinks.iter().any(|&s| {
            t.corrupted_at(&net.graph, s)
                && t.received(&net.graph, s).values().all(|p| destination_check(p, &net.hash))
        });
        corrupted_deliveries += corrupted as u64;
        if keep_transcripts {
            transcripts.push(t);
        }
    }
    Ok(ProtocolRun {
        ledger,
        transcripts,
        corrupted_deliveries,
        rounds,
    })
}

/// Rolling-mean threshold for `watcher` policing `watched`: the `gamma`
/// quantile of `windows` honest window means of length `window`.
pub fn calibrate_window_threshold(
    net: &Network,
    watcher: NodeId,
    watched: NodeId,
    gamma: f64,
    window: usize,
    windows: u64,
    seed: u64,
) -> Result<f64> {
    net.graph.can_police(watcher, watched)?;
    let honest = net.without_corruption();
    let mut ledger = TrustLedger::new(window, 0.0)?;
    for r in 0..windows * window as u64 {
        let t = run_round(&honest, seed, r)?;
        police(&honest, watcher, watched, &t, &mut ledger)?;
    }
    quantile_threshold(&window_means(ledger.samples(watcher, watched), window), gamma)
}

/// The three min-cut situations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// One honest source can police the corrupting relay.
    OneHonestPath,
    /// Every parent of the corrupting relay colludes with it.
    AllParentsMalicious,
    /// Every child of the relay colludes; the child corrupts out of reach of
    /// any honest watcher.
    AllChildrenMalicious,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::OneHonestPath,
        ScenarioKind::AllParentsMalicious,
        ScenarioKind::AllChildrenMalicious,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::OneHonestPath => "one-honest-path",
            ScenarioKind::AllParentsMalicious => "all-parents-malicious",
            ScenarioKind::AllChildrenMalicious => "all-children-malicious",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param("scenario", format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n: u8,
    pub delta: u8,
    pub p_overhear: f64,
    pub p_adv: f64,
    pub rounds: u64,
    pub window: usize,
    pub gamma: f64,
    /// Skips calibration when set.
    pub threshold: Option<f64>,
    pub calibration_windows: u64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n: 10,
            delta: 2,
            p_overhear: 0.1,
            p_adv: 0.5,
            rounds: 50,
            window: DEFAULT_WINDOW,
            gamma: 0.05,
            threshold: None,
            calibration_windows: 200,
            seed: 1,
        }
    }
}

fn ids<const K: usize>() -> [NodeId; K] {
    std::array::from_fn(|i| NodeId(i as u32 + 1))
}

fn network_hash(seed: u64, family: HashFamily, n: u8, delta: u8) -> Result<HashSpec> {
    sample_hash(&mut ChaCha8Rng::seed_from_u64(seed ^ HASH_SALT), family, n, delta)
}

/// Built-in topology for `kind`.
///
/// * one-honest-path: sources v1..v3 feed relay v4, which feeds sink v5.
///   v1 is honest and overhears v2, v3 and v4; v2, v3 collude silently.
/// * all-parents-malicious: colluding sources v1, v2 feed corrupting relay v3,
///   which feeds sink v4.
/// * all-children-malicious: honest sources v1, v2 feed relay v3, which
///   behaves on air; its only child v4 colludes and corrupts before sink v5.
pub fn scenario_network(kind: ScenarioKind, params: &ScenarioParams) -> Result<Network> {
    let field = GaloisField::new(params.n)?;
    let hash = network_hash(params.seed, HashFamily::Affine, params.n, params.delta)?;
    let p = params.p_overhear;
    let colluder = NodeBehavior::adversarial(0.0)?;
    let corrupter = NodeBehavior::adversarial(params.p_adv)?;
    let honest = NodeBehavior::honest(1.0)?;
    match kind {
        ScenarioKind::OneHonestPath => {
            let [s1, s2, s3, r, d] = ids::<5>();
            let mut g = Hypergraph::new([s1, s2, s3, r, d]);
            for s in [s1, s2, s3] {
                g.add_link(s, r)?;
            }
            g.add_link(r, d)?;
            for u in [s2, s3, r] {
                g.add_interference(u, s1, p)?;
            }
            let behaviors = BTreeMap::from([(s1, honest), (s2, colluder), (s3, colluder), (r, corrupter), (d, honest)]);
            Network::new(g, behaviors, vec![vec![s1, s2, s3], vec![r]], field, hash)
        }
        ScenarioKind::AllParentsMalicious => {
            let [s1, s2, r, d] = ids::<4>();
            let mut g = Hypergraph::new([s1, s2, r, d]);
            g.add_link(s1, r)?;
            g.add_link(s2, r)?;
            g.add_link(r, d)?;
            for (a, b) in [(s2, s1), (s1, s2), (r, s1), (r, s2)] {
                g.add_interference(a, b, p)?;
            }
            let behaviors = BTreeMap::from([(s1, colluder), (s2, colluder), (r, corrupter), (d, honest)]);
            Network::new(g, behaviors, vec![vec![s1, s2], vec![r]], field, hash)
        }
        ScenarioKind::AllChildrenMalicious => {
            let [s1, s2, r, c, d] = ids::<5>();
            let mut g = Hypergraph::new([s1, s2, r, c, d]);
            g.add_link(s1, r)?;
            g.add_link(s2, r)?;
            g.add_link(r, c)?;
            g.add_link(c, d)?;
            for (a, b) in [(s2, s1), (s1, s2), (r, s1), (r, s2), (c, r)] {
                g.add_interference(a, b, p)?;
            }
            let behaviors = BTreeMap::from([(s1, honest), (s2, honest), (r, colluder), (c, corrupter), (d, honest)]);
            Network::new(g, behaviors, vec![vec![s1, s2], vec![r], vec![c]], field, hash)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub rounds: u64,
    pub threshold: f64,
    pub window: usize,
    /// Rounds where a corrupted payload reached a sink with a valid hash.
    pub corrupted_deliveries: u64,
    /// Corrupting nodes some honest node could police.
    pub policeable: Vec<NodeId>,
    /// Honest (watcher, watched) pairs whose final verdict is malicious.
    pub flagged: Vec<(NodeId, NodeId)>,
    /// Some corrupting node is flagged by an honest watcher.
    pub detected: bool,
    pub undetected_corruption: bool,
}

/// Honest pairs (watcher, corrupter) with the overhearing edges to police.
pub fn policing_pairs(net: &Network) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for w in net.graph.nodes().filter(|&w| net.behavior(w).is_honest()) {
        for v in net.graph.children(w) {
            if net.behavior(v).corrupts() && net.graph.can_police(w, v).is_ok() {
                out.push((w, v));
            }
        }
    }
    out
}

/// Threshold from `params`, or calibrated on the first honest policing pair.
pub fn resolve_threshold(net: &Network, params: &ScenarioParams) -> Result<f64> {
    match (params.threshold, policing_pairs(net).first()) {
        (Some(t), _) => Ok(t),
        (None, Some(&(w, v))) => calibrate_window_threshold(
            net,
            w,
            v,
            params.gamma,
            params.window,
            params.calibration_windows,
            params.seed.wrapping_add(1),
        ),
        (None, None) => Ok(0.0),
    }
}

/// Runs `net` for `params.rounds` rounds and reports whether corruption
/// reached a sink undetected.
pub fn run_network(name: &str, net: &Network, params: &ScenarioParams) -> Result<ScenarioReport> {
    let threshold = resolve_threshold(net, params)?;
    let ledger = TrustLedger::new(params.window, threshold)?;
    let run = run_protocol(net, params.rounds, params.seed, ledger, false)?;
    let flagged: Vec<_> = run
        .ledger
        .flagged()
        .into_iter()
        .filter(|&(w, _)| net.behavior(w).is_honest())
        .collect();
    let detected = flagged.iter().any(|&(_, v)| net.behavior(v).corrupts());
    Ok(ScenarioReport {
        scenario: name.to_string(),
        rounds: run.rounds,
        threshold,
        window: params.window,
        corrupted_deliveries: run.corrupted_deliveries,
        policeable: policing_pairs(net).iter().map(|p| p.1).collect(),
        flagged,
        detected,
        undetected_corruption: run.corrupted_deliveries > 0 && !detected,
    })
}

/// Runs the built-in topology for `kind`.
pub fn mincut_scenario(kind: ScenarioKind, params: &ScenarioParams) -> Result<ScenarioReport> {
    run_network(kind.name(), &scenario_network(kind, params)?, params)
}

/// Declarative network description, loaded from a config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n: u8,
    pub delta: u8,
    #[serde(default = "default_family")]
    pub family: HashFamily,
    pub schedule: Vec<Vec<u32>>,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeConfig>,
    #[serde(rename = "link", default)]
    pub links: Vec<LinkConfig>,
    #[serde(rename = "overhear", default)]
    pub overhearing: Vec<OverhearConfig>,
}

fn default_family() -> HashFamily {
    HashFamily::Affine
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleName {
    Honest,
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u32,
    pub role: RoleName,
    #[serde(default)]
    pub p_adv: f64,
    #[serde(default = "one")]
    pub check_probability: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub from: u32,
    pub to: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverhearConfig {
    pub from: u32,
    pub to: u32,
    pub p: f64,
}

impl NetworkConfig {
    pub fn build(&self, seed: u64) -> Result<Network> {
        let mut g = Hypergraph::new(self.nodes.iter().map(|c| NodeId(c.id)));
        for l in &self.links {
            g.add_link(NodeId(l.from), NodeId(l.to))?;
        }
        for o in &self.overhearing {
            g.add_interference(NodeId(o.from), NodeId(o.to), o.p)?;
        }
        let behaviors = self
            .nodes
            .iter()
            .map(|c| {
                let role = match c.role {
                    RoleName::Honest => Role::Honest,
                    RoleName::Adversarial => Role::Adversarial { p_adv: c.p_adv },
                };
                Ok((NodeId(c.id), NodeBehavior::new(role, c.check_probability)?))
            })
            .collect::<Result<_>>()?;
        let schedule = self
            .schedule
            .iter()
            .map(|slot| slot.iter().map(|&v| NodeId(v)).collect())
            .collect();
        let field = GaloisField::new(self.n)?;
        let hash = network_hash(seed, self.family, self.n, self.delta)?;
        Network::new(g, behaviors, schedule, field, hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(p: f64, role: Role) -> Network {
        let [s, r, d] = ids::<3>();
        let mut g = Hypergraph::new([s, r, d]);
        g.add_link(s, r).unwrap();
        g.add_link(r, d).unwrap();
        g.add_interference(r, s, p).unwrap();
        let behaviors = BTreeMap::from([
            (s, NodeBehavior::honest(1.0).unwrap()),
            (r, NodeBehavior::new(role, 0.0).unwrap()),
            (d, NodeBehavior::honest(1.0).unwrap()),
        ]);
        let field = GaloisField::new(8).unwrap();
        let hash = HashSpec::affine(8, 2, 3, 1).unwrap();
        Network::new(g, behaviors, vec![vec![s], vec![r]], field, hash).unwrap()
    }

    /// The six-node example: sources v1..v4, v5 fed by v1..v3, v6 fed by v3, v4,
    /// both feeding v7, which delivers to v8.
    fn example_network(adversary: NodeId) -> Network {
        let nodes: Vec<_> = (1..=8).map(NodeId).collect();
        let v = |i: u32| NodeId(i);
        let mut g = Hypergraph::new(nodes.clone());
        for (a, b) in [(1, 5), (2, 5), (3, 5), (3, 6), (4, 6), (5, 7), (6, 7), (7, 8)] {
            g.add_link(v(a), v(b)).unwrap();
        }
        for (a, b) in [(2, 1), (3, 1), (5, 1), (4, 3), (6, 3), (3, 4), (6, 4), (6, 5), (5, 6)] {
            g.add_interference(v(a), v(b), 0.1).unwrap();
        }
        let behaviors = nodes
            .iter()
            .map(|&n| {
                let b = if n == adversary {
                    NodeBehavior::adversarial(0.5).unwrap()
                } else {
                    NodeBehavior::honest(1.0).unwrap()
                };
                (n, b)
            })
            .collect();
        let schedule = vec![vec![v(1), v(2), v(3), v(4)], vec![v(5), v(6)], vec![v(7)]];
        Network::new(g, behaviors, schedule, GaloisField::new(10).unwrap(), HashSpec::affine(10, 2, 1, 0).unwrap()).unwrap()
    }

    #[test]
    fn honest_noiseless_chain_delivers_source_symbol() {
        let net = chain(0.0, Role::Honest);
        for r in 0..20 {
            let t = run_round(&net, 3, r).unwrap();
            let src = t.sent[&NodeId(1)].payload;
            let got = t.received(&net.graph, NodeId(3))[&NodeId(2)].clone();
            let alpha = got.coeffs[&NodeId(1)];
            assert_eq!(got.payload, net.field.mul(alpha, src).unwrap());
            assert!(!t.corrupted_at(&net.graph, NodeId(3)));
        }
    }

    #[test]
    fn transcripts_hold_adversarial_overhearings() {
        let net = example_network(NodeId(6));
        let t = run_round(&net, 9, 0).unwrap();
        for listener in [3, 4] {
            assert!(t.view(NodeId(listener)).overheard(NodeId(6)).is_some());
        }
        let rec = t.trace_record();
        assert_eq!(rec.transmissions.len(), 7);
        assert!(rec.overheard.iter().any(|o| o.listener == 3 && o.speaker == 6));
    }

    #[test]
    fn rounds_are_deterministic() {
        let net = example_network(NodeId(6));
        assert_eq!(run_round(&net, 4, 2).unwrap(), run_round(&net, 4, 2).unwrap());
        assert_ne!(run_round(&net, 4, 2).unwrap(), run_round(&net, 5, 2).unwrap());
    }

    #[test]
    fn example_network_policing_rights() {
        let net = example_network(NodeId(6));
        assert!(net.graph.can_police(NodeId(1), NodeId(5)).is_ok());
        assert!(net.graph.can_police(NodeId(3), NodeId(6)).is_ok());
        assert!(net.graph.can_police(NodeId(4), NodeId(6)).is_ok());
        // v2 does not overhear v1 or v3
        assert!(net.graph.can_police(NodeId(2), NodeId(5)).is_err());
        assert!(net.graph.can_police(NodeId(1), NodeId(6)).is_err());
        let run = run_protocol(&net, 5, 1, TrustLedger::new(25, 0.0).unwrap(), false).unwrap();
        assert_eq!(run.ledger.samples(NodeId(3), NodeId(6)).len(), 5);
    }

    #[test]
    fn police_without_edges_is_usage_error() {
        let net = example_network(NodeId(6));
        let t = run_round(&net, 1, 0).unwrap();
        let mut ledger = TrustLedger::new(25, 0.0).unwrap();
        let err = police(&net, NodeId(2), NodeId(5), &t, &mut ledger).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
        assert!(ledger.samples(NodeId(2), NodeId(5)).is_empty());
    }

    #[test]
    fn scheduling_before_parents_fails() {
        let mut net = chain(0.0, Role::Honest);
        net.schedule = vec![vec![NodeId(2)], vec![NodeId(1)]];
        assert!(matches!(run_round(&net, 0, 0), Err(Error::Topology(_))));
    }

    #[test]
    fn empty_ledger_defaults_to_well_behaving() {
        let ledger = TrustLedger::new(25, 0.5).unwrap();
        assert_eq!(ledger.verdict(NodeId(1), NodeId(2)), Verdict::WellBehaving);
    }

    #[test]
    fn ledger_uses_rolling_mean() {
        let mut ledger = TrustLedger::new(2, 0.3).unwrap();
        let (a, b) = (NodeId(1), NodeId(2));
        ledger.record(a, b, 0.1);
        assert_eq!(ledger.verdict(a, b), Verdict::Malicious);
        ledger.record(a, b, 0.9);
        assert_eq!(ledger.verdict(a, b), Verdict::WellBehaving);
        ledger.record(a, b, 0.0);
        ledger.record(a, b, 0.0);
        assert_eq!(ledger.flagged(), vec![(a, b)]);
    }

    #[test]
    fn colluding_scenarios_pass_corruption() {
        let params = ScenarioParams {
            n: 8,
            rounds: 30,
            ..ScenarioParams::default()
        };
        for kind in [ScenarioKind::AllParentsMalicious, ScenarioKind::AllChildrenMalicious] {
            let rep = mincut_scenario(kind, &params).unwrap();
            assert!(rep.policeable.is_empty(), "{kind}");
            assert!(!rep.detected);
            assert!(rep.undetected_corruption);
        }
    }

    #[test]
    fn config_round_trip() {
        let doc = r#"
            n = 8
            delta = 2
            schedule = [[1], [2]]
            [[node]]
            id = 1
            role = "honest"
            [[node]]
            id = 2
            role = "adversarial"
            p_adv = 0.5
            [[node]]
            id = 3
            role = "honest"
            [[link]]
            from = 1
            to = 2
            [[link]]
            from = 2
            to = 3
            [[overhear]]
            from = 2
            to = 1
            p = 0.1
        "#;
        let cfg: NetworkConfig = toml::from_str(doc).unwrap();
        let net = cfg.build(3).unwrap();
        assert!(net.graph.can_police(NodeId(1), NodeId(2)).is_ok());
        assert_eq!(sinks(&net), vec![NodeId(3)]);
        let bad = doc.replace("p = 0.1", "p = 0.9");
        assert!(toml::from_str::<NetworkConfig>(&bad).unwrap().build(3).is_err());
    }
}
