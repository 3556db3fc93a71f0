use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use watchdog_core::cli::{
    analysis_rows, multihop_rows, multihop_threshold, oracle_rows, summary_json, to_csv, two_hop_rows, AnalysisRequest,
    AnalysisRows, AnalysisTable, FileConfig, MultihopSource, OracleRequest, ORACLE_TOLERANCE,
};
use watchdog_core::hashing::HashFamily;
use watchdog_core::inference::Pruning;
use watchdog_core::multihop::{run_protocol, scenario_network, NetworkConfig, ScenarioKind, ScenarioParams, TrustLedger};
use watchdog_core::sim::{RunOptions, SweepAxis, TwoHopConfig};

/// Algebraic watchdog experiments.
#[derive(Parser, Debug)]
#[command(name = "watchdog", version)]
struct Cli {
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for `<command>.csv` and `<command>.json`. Without it the CSV
    /// goes to stdout and the JSON summary to stderr.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep one parameter of the two-hop experiment.
    TwoHop(TwoHopArgs),
    /// Run a multi-hop protocol scenario.
    Multihop(MultihopArgs),
    /// Tabulate the closed-form evaluators.
    Analysis(AnalysisArgs),
    /// Check trellis p* against brute-force enumeration.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct TwoHopArgs {
    #[arg(long)]
    sweep: Option<SweepAxis>,
    /// Comma-separated axis values (default: the published axis).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<u8>,
    #[arg(long)]
    delta: Option<u8>,
    #[arg(long)]
    p_s: Option<f64>,
    #[arg(long)]
    p_relay: Option<f64>,
    #[arg(long)]
    p_adv: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// off, eps:<f64> or radius:<int>
    #[arg(long)]
    pruning: Option<Pruning>,
    #[arg(long)]
    family: Option<HashFamily>,
}

#[derive(Args, Debug)]
struct MultihopArgs {
    #[arg(long, conflicts_with = "network")]
    scenario: Option<ScenarioKind>,
    /// TOML network description.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    p_adv: Option<f64>,
    #[arg(long)]
    p_overhear: Option<f64>,
    #[arg(long)]
    calibration_windows: Option<u64>,
    /// Independent seeds to run, starting at `--seed`.
    #[arg(long)]
    trials: Option<u64>,
    /// Line-delimited JSON transcript of the first seed.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalysisArgs {
    #[arg(long)]
    table: Option<AnalysisTable>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u32>>,
    /// Hash length(s); read as δ for theorem2.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// r_1_2,r_2_1,r_3_1,r_3_2
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<u32>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    d_over_n: Option<f64>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    n: Option<u8>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<u8>>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    p_adv: Option<f64>,
}

/// A failed internal check (exit code 2).
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

struct Output<'a> {
    dir: Option<&'a Path>,
}

impl Output<'_> {
    fn emit<C: Serialize, R: Serialize>(&self, command: &str, seed: u64, config: &C, rows: &[R]) -> anyhow::Result<()> {
        let csv = to_csv(rows)?;
        let json = summary_json(command, seed, config, rows)? + "\n";
        match self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for (ext, body) in [("csv", &csv), ("json", &json)] {
                    let path = dir.join(format!("{command}.{ext}"));
                    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            None => {
                print!("{csv}");
                eprint!("{json}");
            }
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let internal = e.downcast_ref::<CheckFailed>().is_some()
                || e.downcast_ref::<watchdog_core::Error>().is_some_and(|e| e.is_structural());
            ExitCode::from(if internal { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            FileConfig::parse(&text)?
        }
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(1);
    let opts = RunOptions {
        workers: cli.workers.or(file.workers),
        keep_samples: false,
    };
    let out = Output { dir: cli.out.as_deref() };
    match cli.command {
        Command::TwoHop(a) => two_hop(a, &file, seed, opts, &out),
        Command::Multihop(a) => multihop(a, &file, seed, &out),
        Command::Analysis(a) => analysis(a, &file, seed, &out),
        Command::Oracle(a) => oracle(a, &file, seed, opts, &out),
    }
}

fn two_hop(a: TwoHopArgs, file: &FileConfig, seed: u64, opts: RunOptions, out: &Output) -> anyhow::Result<()> {
    let section = file.two_hop.clone().unwrap_or_default();
    let mut cfg = TwoHopConfig {
        seed,
        ..TwoHopConfig::default()
    };
    section.apply(&mut cfg);
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
    }
    set!(m, n, delta, p_s, p_relay, p_adv, iterations, pruning, family);
    let Some(axis) = a.sweep.or(section.sweep) else {
        bail!("missing field `sweep` (p_adv, delta, p_s or m)");
    };
    let values = a.values.or(section.values).unwrap_or_else(|| axis.default_values());
    cfg.validate()?;
    let rows = two_hop_rows(&cfg, axis, &values, opts)?;

    #[derive(Serialize)]
    struct Echo<'a> {
        base: &'a TwoHopConfig,
        sweep: SweepAxis,
        values: &'a [f64],
    }
    out.emit("two-hop", seed, &Echo { base: &cfg, sweep: axis, values: &values }, &rows)
}

fn multihop(a: MultihopArgs, file: &FileConfig, seed: u64, out: &Output) -> anyhow::Result<()> {
    let section = file.multihop.clone().unwrap_or_default();
    let mut params = ScenarioParams {
        seed,
        ..ScenarioParams::default()
    };
    section.apply(&mut params);
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { params.$f = v; })* };
    }
    set!(rounds, window, gamma, p_adv, p_overhear, calibration_windows);
    if a.threshold.is_some() {
        params.threshold = a.threshold;
    }
    let source = match (a.scenario, &a.network, section.scenario, section.network) {
        (Some(kind), _, _, _) => MultihopSource::Scenario(kind),
        (None, Some(path), _, _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg: NetworkConfig =
                toml::from_str(&text).map_err(|e| watchdog_core::Error::Config(e.to_string()))?;
            MultihopSource::Network(cfg)
        }
        (None, None, Some(kind), _) => MultihopSource::Scenario(kind),
        (None, None, None, Some(cfg)) => MultihopSource::Network(cfg),
        (None, None, None, None) => bail!("missing field `scenario` (or a network description)"),
    };
    let trials = a.trials.or(section.trials).unwrap_or(1);
    if params.threshold.is_none() {
        params.threshold = Some(multihop_threshold(&source, &params)?);
    }
    let rows = multihop_rows(&source, &params, trials)?;

    if let Some(path) = &a.trace {
        let net = match &source {
            MultihopSource::Scenario(kind) => scenario_network(*kind, &params)?,
            MultihopSource::Network(cfg) => cfg.build(params.seed)?,
        };
        let ledger = TrustLedger::new(params.window, params.threshold.unwrap_or(0.0))?;
        let run = run_protocol(&net, params.rounds, params.seed, ledger, true)?;
        let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        for t in &run.transcripts {
            serde_json::to_writer(&mut f, &t.trace_record())?;
            writeln!(f)?;
        }
    }

    #[derive(Serialize)]
    struct Echo<'a> {
        source: String,
        params: &'a ScenarioParams,
        trials: u64,
    }
    let name = match &source {
        MultihopSource::Scenario(kind) => kind.to_string(),
        MultihopSource::Network(_) => "custom".to_string(),
    };
    out.emit("multihop", seed, &Echo { source: name, params: &params, trials }, &rows)
}

fn analysis(a: AnalysisArgs, file: &FileConfig, seed: u64, out: &Output) -> anyhow::Result<()> {
    let mut req = AnalysisRequest::default();
    if let Some(s) = &file.analysis {
        req.apply(s);
    }
    if let Some(t) = a.table {
        req.table = t;
    }
    if let Some(v) = a.n {
        req.n = v;
    }
    if let Some(v) = a.h {
        req.h = v;
    }
    if let Some(v) = a.m {
        req.m = v;
    }
    if let Some(r) = a.radii {
        let Ok(r) = <[u32; 4]>::try_from(r) else {
            bail!("--radii takes four values: r_1_2,r_2_1,r_3_1,r_3_2");
        };
        req.radii = Some(r);
    }
    if a.eps.is_some() {
        req.eps = a.eps;
    }
    if let Some(p) = a.p {
        req.p = p;
    }
    if let Some(d) = a.d_over_n {
        req.d_over_n = d;
    }
    match analysis_rows(&req)? {
        AnalysisRows::Geometry(rows) => out.emit("analysis", seed, &req, &rows),
        AnalysisRows::Theorem2(rows) => out.emit("analysis", seed, &req, &rows),
    }
}

fn oracle(a: OracleArgs, file: &FileConfig, seed: u64, opts: RunOptions, out: &Output) -> anyhow::Result<()> {
    let mut req = OracleRequest {
        seed,
        ..OracleRequest::default()
    };
    if let Some(s) = &file.oracle {
        req.apply(s);
    }
    if let Some(n) = a.n {
        req.n = n;
    }
    if let Some(t) = a.trials {
        req.trials = t;
    }
    if let Some(v) = a.m {
        req.m = v;
    }
    if let Some(v) = a.delta {
        req.delta = v;
    }
    if let Some(v) = a.p {
        req.p = v;
    }
    if let Some(v) = a.p_adv {
        req.p_adv = v;
    }
    let rows = oracle_rows(&req, opts)?;
    out.emit("oracle", seed, &req, &rows)?;
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    eprintln!("max relative error {worst:e} over {} instances", rows.iter().map(|r| r.instances).sum::<u64>());
    if worst > ORACLE_TOLERANCE {
        return Err(CheckFailed(format!("max relative error {worst:e} exceeds {ORACLE_TOLERANCE:e}")).into());
    }
    Ok(())
}
