//! Experiment configuration and the frozen output rows of the `watchdog` CLI.
//!
//! Each subcommand turns a request into a list of flat rows; the binary writes
//! them as CSV and mirrors them in a JSON summary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    matched_count_exponent, misdetection_beta, misdetection_v1, misdetection_v2, TwoHopGeometry,
};
use crate::channel::{ball_radius, Bsc};
use crate::error::{Error, Result};
use crate::hashing::HashFamily;
use crate::inference::Pruning;
use crate::multihop::{mincut_scenario, resolve_threshold, run_network, NetworkConfig, ScenarioKind, ScenarioParams, ScenarioReport};
use crate::sim::{draw_instance, oracle_p_star, run_sweep, RunOptions, SweepAxis, TwoHopConfig};

/// A config document: shared keys plus one optional section per subcommand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(rename = "two-hop")]
    pub two_hop: Option<TwoHopSection>,
    pub multihop: Option<MultihopSection>,
    pub analysis: Option<AnalysisSection>,
    pub oracle: Option<OracleSection>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoHopSection {
    pub m: Option<usize>,
    pub n: Option<u8>,
    pub delta: Option<u8>,
    pub p_s: Option<f64>,
    pub p_relay: Option<f64>,
    pub p_adv: Option<f64>,
    pub iterations: Option<u64>,
    pub pruning: Option<Pruning>,
    pub family: Option<HashFamily>,
    pub sweep: Option<SweepAxis>,
    pub values: Option<Vec<f64>>,
}

impl TwoHopSection {
    /// Overwrites the fields of `cfg` that this section sets.
    pub fn apply(&self, cfg: &mut TwoHopConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(m, n, delta, p_s, p_relay, p_adv, iterations, pruning, family);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultihopSection {
    pub scenario: Option<ScenarioKind>,
    pub network: Option<NetworkConfig>,
    pub n: Option<u8>,
    pub delta: Option<u8>,
    pub p_overhear: Option<f64>,
    pub p_adv: Option<f64>,
    pub rounds: Option<u64>,
    pub window: Option<usize>,
    pub gamma: Option<f64>,
    pub threshold: Option<f64>,
    pub calibration_windows: Option<u64>,
    pub trials: Option<u64>,
}

impl MultihopSection {
    pub fn apply(&self, p: &mut ScenarioParams) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(n, delta, p_overhear, p_adv, rounds, window, gamma, calibration_windows);
        if self.threshold.is_some() {
            p.threshold = self.threshold;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub table: Option<AnalysisTable>,
    pub n: Option<Vec<u32>>,
    pub h: Option<Vec<u32>>,
    pub m: Option<Vec<usize>>,
    pub radii: Option<[u32; 4]>,
    pub eps: Option<f64>,
    pub p: Option<f64>,
    pub d_over_n: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n: Option<u8>,
    pub trials: Option<u64>,
    pub m: Option<Vec<usize>>,
    pub delta: Option<Vec<u8>>,
    pub p: Option<Vec<f64>>,
    pub p_adv: Option<f64>,
}

/// Row of `two-hop` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoHopRow {
    pub sweep: String,
    pub value: f64,
    pub m: usize,
    pub n: u8,
    pub delta: u8,
    pub p_s: f64,
    pub p_relay: f64,
    pub p_adv: f64,
    pub iterations: u64,
    pub seed: u64,
    pub pruning: String,
    pub family: String,
    pub mean_p_relay: f64,
    pub var_relay: f64,
    pub std_relay: f64,
    pub mean_p_adv: f64,
    pub var_adv: f64,
    pub std_adv: f64,
    pub separation: f64,
}

pub fn two_hop_rows(base: &TwoHopConfig, axis: SweepAxis, values: &[f64], opts: RunOptions) -> Result<Vec<TwoHopRow>> {
    Ok(run_sweep(base, axis, values, opts)?
        .into_iter()
        .map(|pt| {
            let c = &pt.config;
            let s = &pt.stats;
            TwoHopRow {
                sweep: axis.name().to_string(),
                value: pt.value,
                m: c.m,
                n: c.n,
                delta: c.delta,
                p_s: c.p_s,
                p_relay: c.p_relay,
                p_adv: c.p_adv,
                iterations: c.iterations,
                seed: c.seed,
                pruning: c.pruning.to_string(),
                family: c.family.to_string(),
                mean_p_relay: s.mean_p_relay,
                var_relay: s.var_relay,
                std_relay: s.std_relay,
                mean_p_adv: s.mean_p_adv,
                var_adv: s.var_adv,
                std_adv: s.std_adv,
                separation: s.separation(),
            }
        })
        .collect())
}

/// Where a multihop run gets its topology.
#[derive(Clone, Debug, PartialEq)]
pub enum MultihopSource {
    Scenario(ScenarioKind),
    Network(NetworkConfig),
}

/// Row of `multihop` output, one per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultihopRow {
    pub scenario: String,
    pub seed: u64,
    pub n: u8,
    pub delta: u8,
    pub p_overhear: f64,
    pub p_adv: f64,
    pub rounds: u64,
    pub window: usize,
    pub gamma: f64,
    pub threshold: f64,
    pub corrupted_deliveries: u64,
    pub policeable: String,
    pub flagged: String,
    pub detected: bool,
    pub undetected_corruption: bool,
}

fn multihop_row(params: &ScenarioParams, (n, delta): (u8, u8), r: &ScenarioReport) -> MultihopRow {
    let join = |xs: Vec<String>| xs.join(";");
    MultihopRow {
        scenario: r.scenario.clone(),
        seed: params.seed,
        n,
        delta,
        p_overhear: params.p_overhear,
        p_adv: params.p_adv,
        rounds: r.rounds,
        window: r.window,
        gamma: params.gamma,
        threshold: r.threshold,
        corrupted_deliveries: r.corrupted_deliveries,
        policeable: join(r.policeable.iter().map(|v| v.to_string()).collect()),
        flagged: join(r.flagged.iter().map(|(a, b)| format!("{a}>{b}")).collect()),
        detected: r.detected,
        undetected_corruption: r.undetected_corruption,
    }
}

/// Runs `trials` independent seeds starting at `params.seed`; the threshold is
/// calibrated once, on the first seed, and reused.
pub fn multihop_rows(source: &MultihopSource, params: &ScenarioParams, trials: u64) -> Result<Vec<MultihopRow>> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let mut params = params.clone();
    let mut rows = Vec::new();
    for k in 0..trials {
        let p = ScenarioParams {
            seed: params.seed.wrapping_add(k),
            ..params.clone()
        };
        let (report, dims) = match source {
            MultihopSource::Scenario(kind) => (mincut_scenario(*kind, &p)?, (p.n, p.delta)),
            MultihopSource::Network(cfg) => {
                let net = cfg.build(p.seed)?;
                (run_network("custom", &net, &p)?, (cfg.n, cfg.delta))
            }
        };
        if params.threshold.is_none() {
            params.threshold = Some(report.threshold);
        }
        rows.push(multihop_row(&p, dims, &report));
    }
    Ok(rows)
}

/// Calibrated threshold for a multihop source without running it.
pub fn multihop_threshold(source: &MultihopSource, params: &ScenarioParams) -> Result<f64> {
    match source {
        MultihopSource::Scenario(kind) => resolve_threshold(&crate::multihop::scenario_network(*kind, params)?, params),
        MultihopSource::Network(cfg) => resolve_threshold(&cfg.build(params.seed)?, params),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisTable {
    Lemma2,
    Lemma3,
    Theorem1,
    Theorem2,
}

impl AnalysisTable {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisTable::Lemma2 => "lemma2",
            AnalysisTable::Lemma3 => "lemma3",
            AnalysisTable::Theorem1 => "theorem1",
            AnalysisTable::Theorem2 => "theorem2",
        }
    }
}

impl fmt::Display for AnalysisTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnalysisTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [AnalysisTable::Lemma2, AnalysisTable::Lemma3, AnalysisTable::Theorem1, AnalysisTable::Theorem2]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::param("table", format!("unknown table `{s}` (expected lemma2, lemma3, theorem1 or theorem2)")))
    }
}

/// Formula sweep request. For the theorem2 table `h` is read as δ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub table: AnalysisTable,
    pub n: Vec<u32>,
    pub h: Vec<u32>,
    pub m: Vec<usize>,
    /// `[r_1_2, r_2_1, r_3_1, r_3_2]`; defaults to `n` for every radius.
    pub radii: Option<[u32; 4]>,
    /// Derive radii from `ball_radius(BSC(p), n, eps)` instead.
    pub eps: Option<f64>,
    pub p: f64,
    pub d_over_n: f64,
}

impl Default for AnalysisRequest {
    fn default() -> Self {
        Self {
            table: AnalysisTable::Theorem1,
            n: vec![10],
            h: vec![2],
            m: vec![3],
            radii: None,
            eps: None,
            p: 0.1,
            d_over_n: 0.0,
        }
    }
}

impl AnalysisRequest {
    pub fn apply(&mut self, s: &AnalysisSection) {
        if let Some(t) = s.table {
            self.table = t;
        }
        if let Some(v) = &s.n {
            self.n = v.clone();
        }
        if let Some(v) = &s.h {
            self.h = v.clone();
        }
        if let Some(v) = &s.m {
            self.m = v.clone();
        }
        if s.radii.is_some() {
            self.radii = s.radii;
        }
        if s.eps.is_some() {
            self.eps = s.eps;
        }
        if let Some(p) = s.p {
            self.p = p;
        }
        if let Some(d) = s.d_over_n {
            self.d_over_n = d;
        }
    }
}

/// Row of the lemma2, lemma3 and theorem1 tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub table: String,
    pub n: u32,
    pub h: u32,
    pub r_1_2: u32,
    pub r_2_1: u32,
    pub r_3_1: u32,
    pub r_3_2: u32,
    pub p: Option<f64>,
    pub eps: Option<f64>,
    pub value: f64,
}

/// Row of the theorem2 table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Row {
    pub table: String,
    pub n: u32,
    pub m: usize,
    pub delta: u32,
    pub p: f64,
    pub d_over_n: f64,
    pub exponent: f64,
    pub expected_count: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisRows {
    Geometry(Vec<GeometryRow>),
    Theorem2(Vec<Theorem2Row>),
}

pub fn analysis_rows(req: &AnalysisRequest) -> Result<AnalysisRows> {
    if req.n.is_empty() || req.h.is_empty() {
        return Err(Error::param("n", "need at least one n and one h"));
    }
    if req.table == AnalysisTable::Theorem2 {
        let mut rows = Vec::new();
        for &n in &req.n {
            for &m in &req.m {
                for &delta in &req.h {
                    let rates = vec![req.p; m + 1];
                    let ds = vec![req.d_over_n; m + 1];
                    let exponent = matched_count_exponent(n, m, delta, &rates, &ds)?;
                    rows.push(Theorem2Row {
                        table: req.table.to_string(),
                        n,
                        m,
                        delta,
                        p: req.p,
                        d_over_n: req.d_over_n,
                        exponent,
                        expected_count: exponent.exp2(),
                    });
                }
            }
        }
        return Ok(AnalysisRows::Theorem2(rows));
    }
    let mut rows = Vec::new();
    for &n in &req.n {
        let radii = match (req.radii, req.eps) {
            (Some(r), _) => r,
            (None, Some(eps)) => [ball_radius(&Bsc::new(req.p)?, n, eps)?; 4],
            (None, None) => [n; 4],
        };
        for &h in &req.h {
            let g = TwoHopGeometry::new(n, h, radii[0], radii[1], radii[2], radii[3])?;
            let value = match req.table {
                AnalysisTable::Lemma2 => misdetection_v1(&g)?,
                AnalysisTable::Lemma3 => misdetection_v2(&g)?,
                _ => misdetection_beta(&g)?,
            };
            rows.push(GeometryRow {
                table: req.table.to_string(),
                n,
                h,
                r_1_2: g.r_1_2,
                r_2_1: g.r_2_1,
                r_3_1: g.r_3_1,
                r_3_2: g.r_3_2,
                p: req.eps.map(|_| req.p),
                eps: req.eps,
                value,
            });
        }
    }
    Ok(AnalysisRows::Geometry(rows))
}

/// Trellis-versus-enumeration check request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub n: u8,
    pub trials: u64,
    pub m: Vec<usize>,
    pub delta: Vec<u8>,
    pub p: Vec<f64>,
    pub p_adv: f64,
    pub seed: u64,
}

impl Default for OracleRequest {
    fn default() -> Self {
        Self {
            n: 4,
            trials: 100,
            m: vec![2, 3],
            delta: vec![0, 1, 2],
            p: vec![0.05, 0.1, 0.3],
            p_adv: 0.3,
            seed: 1,
        }
    }
}

impl OracleRequest {
    pub fn apply(&mut self, s: &OracleSection) {
        if let Some(n) = s.n {
            self.n = n;
        }
        if let Some(t) = s.trials {
            self.trials = t;
        }
        if let Some(v) = &s.m {
            self.m = v.clone();
        }
        if let Some(v) = &s.delta {
            self.delta = v.clone();
        }
        if let Some(v) = &s.p {
            self.p = v.clone();
        }
        if let Some(v) = s.p_adv {
            self.p_adv = v;
        }
    }
}

/// Tolerance of the oracle check.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: u8,
    pub m: usize,
    pub delta: u8,
    pub p: f64,
    pub p_adv: f64,
    pub trials: u64,
    pub seed: u64,
    pub instances: u64,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares trellis p* with the brute-force oracle on honest and adversarial
/// views of `trials` instances per (m, δ, p) combination.
pub fn oracle_rows(req: &OracleRequest, opts: RunOptions) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    for &m in &req.m {
        for &delta in &req.delta {
            for &p in &req.p {
                let cfg = TwoHopConfig {
                    m,
                    n: req.n,
                    delta,
                    p_s: p,
                    p_relay: p,
                    p_adv: req.p_adv,
                    iterations: req.trials,
                    seed: req.seed,
                    ..TwoHopConfig::default()
                };
                cfg.validate()?;
                let field = cfg.field()?;
                let errs = crate::sim::par_trials(req.trials, opts.workers, |t| {
                    let inst = draw_instance(&cfg, &field, t)?;
                    let mut worst: f64 = 0.0;
                    for obs in [&inst.honest, &inst.adversarial] {
                        let trellis = crate::inference::build_and_run_trellis(&field, obs)?;
                        let a = crate::inference::consistency_probability(&trellis, obs)?;
                        let b = oracle_p_star(field.params(), obs)?;
                        worst = worst.max(relative_error(a, b));
                    }
                    Ok(worst)
                })?;
                let max_rel_error = errs.into_iter().fold(0.0, f64::max);
                rows.push(OracleRow {
                    n: req.n,
                    m,
                    delta,
                    p,
                    p_adv: req.p_adv,
                    trials: req.trials,
                    seed: req.seed,
                    instances: 2 * req.trials,
                    max_rel_error,
                    pass: max_rel_error <= ORACLE_TOLERANCE,
                });
            }
        }
    }
    Ok(rows)
}

/// CSV with a header row.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Output(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Output(e.to_string()))
}

#[derive(Serialize)]
struct Summary<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a C,
    rows: &'a [R],
}

/// Pretty JSON with the command, seed, config echo and the same rows as the CSV.
pub fn summary_json<C: Serialize, R: Serialize>(command: &str, seed: u64, config: &C, rows: &[R]) -> Result<String> {
    serde_json::to_string_pretty(&Summary {
        command,
        seed,
        config,
        rows,
    })
    .map_err(|e| Error::Output(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem1_hand_example() {
        let req = AnalysisRequest {
            n: vec![4],
            h: vec![2],
            ..AnalysisRequest::default()
        };
        let AnalysisRows::Geometry(rows) = analysis_rows(&req).unwrap() else {
            panic!("geometry table expected");
        };
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, 0.25);
        let csv = to_csv(&rows).unwrap();
        assert!(csv.starts_with("table,n,h,r_1_2,r_2_1,r_3_1,r_3_2,p,eps,value\n"));
        assert!(csv.contains("theorem1,4,2,4,4,4,4,,,0.25"));
    }

    #[test]
    fn theorem2_table() {
        let req = AnalysisRequest {
            table: AnalysisTable::Theorem2,
            ..AnalysisRequest::default()
        };
        let AnalysisRows::Theorem2(rows) = analysis_rows(&req).unwrap() else {
            panic!("theorem2 table expected");
        };
        assert!((rows[0].expected_count - 6.77).abs() < 0.01);
    }

    #[test]
    fn config_sections_parse_and_apply() {
        let text = r#"
            seed = 9
            [two-hop]
            m = 2
            p_adv = 0.4
            pruning = { eps = 0.05 }
            sweep = "delta"
            values = [0.0, 2.0]
            [analysis]
            table = "lemma2"
            n = [4, 6]
        "#;
        let cfg = FileConfig::parse(text).unwrap();
        let mut base = TwoHopConfig::default();
        cfg.two_hop.as_ref().unwrap().apply(&mut base);
        assert_eq!((base.m, base.p_adv, base.pruning), (2, 0.4, Pruning::Eps(0.05)));
        assert_eq!(cfg.two_hop.unwrap().sweep, Some(SweepAxis::Delta));
        let mut req = AnalysisRequest::default();
        req.apply(cfg.analysis.as_ref().unwrap());
        assert_eq!(req.table, AnalysisTable::Lemma2);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = FileConfig::parse("[two-hop]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn oracle_rows_pass_small() {
        let req = OracleRequest {
            trials: 10,
            ..OracleRequest::default()
        };
        let rows = oracle_rows(&req, RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 18);
        assert!(rows.iter().all(|r| r.pass));
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }
}
