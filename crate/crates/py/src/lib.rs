//! Python bindings for the algebraic watchdog.
//!
//! Field elements cross the boundary as plain integers; the width comes from
//! the field or hash they are used with.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use watchdog_core::analysis::{self, TwoHopGeometry};
use watchdog_core::channel::{self, Bsc};
use watchdog_core::field::{FieldElement, FieldParams, GaloisField};
use watchdog_core::hashing::{self, HashFamily, HashSpec};
use watchdog_core::inference::{self, Overheard, Pruning, Verdict, WatchdogObservation};
use watchdog_core::multihop::{self, NetworkConfig, ScenarioKind, ScenarioParams, ScenarioReport};
use watchdog_core::sim::{self, AlgebraicCheckConfig, ExperimentStats, RunOptions, SweepAxis, TwoHopConfig};
use watchdog_core::Error;

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for watchdog_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(|e| {
            if e.is_structural() {
                PyRuntimeError::new_err(e.to_string())
            } else {
                PyValueError::new_err(e.to_string())
            }
        })
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn element(value: u32, width: u8) -> PyResult<FieldElement> {
    FieldElement::new(value, width).py()
}

fn opts(workers: Option<usize>, keep_samples: bool) -> RunOptions {
    RunOptions { workers, keep_samples }
}

/// GF(2^n) for 1 <= n <= 16.
#[pyclass(name = "GaloisField", module = "algebraic_watchdog", frozen)]
struct PyGaloisField(GaloisField);

#[pymethods]
impl PyGaloisField {
    #[new]
    #[pyo3(signature = (n, polynomial = None))]
    fn new(n: u8, polynomial: Option<u32>) -> PyResult<Self> {
        let params = match polynomial {
            Some(p) => FieldParams::with_polynomial(n, p),
            None => FieldParams::new(n),
        }
        .py()?;
        Ok(Self(GaloisField::from_params(params)))
    }

    #[getter]
    fn width(&self) -> u8 {
        self.0.width()
    }

    #[getter]
    fn order(&self) -> u32 {
        self.0.order()
    }

    #[getter]
    fn polynomial(&self) -> u32 {
        self.0.params().polynomial()
    }

    fn add(&self, a: u32, b: u32) -> PyResult<u32> {
        let n = self.0.width();
        Ok(self.0.add(element(a, n)?, element(b, n)?).py()?.value())
    }

    fn mul(&self, a: u32, b: u32) -> PyResult<u32> {
        let n = self.0.width();
        Ok(self.0.mul(element(a, n)?, element(b, n)?).py()?.value())
    }

    fn inverse(&self, a: u32) -> PyResult<u32> {
        Ok(self.0.inverse(element(a, self.0.width())?).py()?.value())
    }

    /// `Σ coeffs[i] · symbols[i]`.
    fn lincomb(&self, coeffs: Vec<u32>, symbols: Vec<u32>) -> PyResult<u32> {
        let n = self.0.width();
        let c = coeffs.into_iter().map(|v| element(v, n)).collect::<PyResult<Vec<_>>>()?;
        let s = symbols.into_iter().map(|v| element(v, n)).collect::<PyResult<Vec<_>>>()?;
        Ok(self.0.lincomb(&c, &s).py()?.value())
    }

    fn __repr__(&self) -> String {
        format!("GaloisField(n={}, polynomial={:#x})", self.0.width(), self.0.params().polynomial())
    }
}

/// A δ-bit hash on n-bit symbols.
#[pyclass(name = "HashSpec", module = "algebraic_watchdog", frozen)]
struct PyHashSpec(HashSpec);

#[pymethods]
impl PyHashSpec {
    /// `(a·x + b) mod 2^δ` with `a` odd and `a, b < 2^δ`.
    #[staticmethod]
    fn affine(width: u8, delta: u8, a: u32, b: u32) -> PyResult<Self> {
        HashSpec::affine(width, delta, a, b).py().map(Self)
    }

    /// A polynomial over `field`, truncated to δ bits.
    #[staticmethod]
    fn polynomial(field: &PyGaloisField, delta: u8, coefficients: Vec<u32>) -> PyResult<Self> {
        HashSpec::polynomial(*field.0.params(), delta, coefficients).py().map(Self)
    }

    /// A member of `family` drawn with a seeded generator.
    #[staticmethod]
    #[pyo3(signature = (family, width, delta, seed))]
    fn sample(family: &str, width: u8, delta: u8, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        hashing::sample_hash(&mut rng, parse::<HashFamily>(family)?, width, delta).py().map(Self)
    }

    #[getter]
    fn width(&self) -> u8 {
        self.0.width()
    }

    #[getter]
    fn delta(&self) -> u8 {
        self.0.delta()
    }

    #[getter]
    fn family(&self) -> String {
        self.0.family().to_string()
    }

    fn eval(&self, x: u32) -> PyResult<u32> {
        self.0.eval(element(x, self.0.width())?).py()
    }

    /// Every symbol whose hash is `target`, ascending.
    fn collision_list(&self, target: u32) -> PyResult<Vec<u32>> {
        let book = watchdog_core::Codebook::full(self.0.width()).py()?;
        Ok(self.0.collision_list(target, &book).into_iter().map(FieldElement::value).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "HashSpec(family={}, width={}, delta={}, coefficients={:?})",
            self.0.family(),
            self.0.width(),
            self.0.delta(),
            self.0.coefficients()
        )
    }
}

/// What watchdog `v_1` holds when policing a relay.
///
/// `peers` is a list of `(observed, hash, p)` and `relay` one such triple,
/// where `p` is the overhearing channel's flip rate.
#[pyclass(name = "Observation", module = "algebraic_watchdog", frozen)]
struct PyObservation(WatchdogObservation);

fn overheard((observed, hash, p): (u32, u32, f64), width: u8) -> PyResult<Overheard> {
    Ok(Overheard::new(element(observed, width)?, hash, Bsc::new(p).py()?))
}

#[pymethods]
impl PyObservation {
    #[new]
    #[pyo3(signature = (own_symbol, coeffs, peers, relay, hash, pruning = "off"))]
    fn new(
        own_symbol: u32,
        coeffs: Vec<u32>,
        peers: Vec<(u32, u32, f64)>,
        relay: (u32, u32, f64),
        hash: &PyHashSpec,
        pruning: &str,
    ) -> PyResult<Self> {
        let n = hash.0.width();
        let obs = WatchdogObservation {
            own_symbol: element(own_symbol, n)?,
            coeffs: coeffs.into_iter().map(|c| element(c, n)).collect::<PyResult<_>>()?,
            peers: peers.into_iter().map(|p| overheard(p, n)).collect::<PyResult<_>>()?,
            relay: overheard(relay, n)?,
            hash: hash.0.clone(),
            pruning: parse::<Pruning>(pruning)?,
        };
        obs.validate().py()?;
        Ok(Self(obs))
    }

    /// The consistency probability p* of the relay's overheard output.
    fn p_star(&self, field: &PyGaloisField) -> PyResult<f64> {
        Ok(inference::evaluate(&field.0, &self.0).py()?.p_star)
    }

    /// Final-layer states with positive weight matching the relay's hash.
    fn matched_codewords(&self, field: &PyGaloisField) -> PyResult<Vec<u32>> {
        Ok(inference::evaluate(&field.0, &self.0)
            .py()?
            .matched
            .into_iter()
            .map(FieldElement::value)
            .collect())
    }

    /// p* by brute-force enumeration; widths up to 6 only.
    fn p_star_enumerated(&self, field: &PyGaloisField) -> PyResult<f64> {
        sim::oracle_p_star(field.0.params(), &self.0).py()
    }
}

/// Parameters of one two-hop experiment point.
#[pyclass(name = "TwoHopConfig", module = "algebraic_watchdog", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyTwoHopConfig {
    m: usize,
    n: u8,
    delta: u8,
    p_s: f64,
    p_relay: f64,
    p_adv: f64,
    iterations: u64,
    seed: u64,
    /// `off`, `eps:<f64>` or `radius:<int>`.
    pruning: String,
    family: String,
}

impl PyTwoHopConfig {
    fn to_core(&self) -> PyResult<TwoHopConfig> {
        let cfg = TwoHopConfig {
            m: self.m,
            n: self.n,
            delta: self.delta,
            p_s: self.p_s,
            p_relay: self.p_relay,
            p_adv: self.p_adv,
            iterations: self.iterations,
            seed: self.seed,
            pruning: parse(&self.pruning)?,
            family: parse(&self.family)?,
        };
        cfg.validate().py()?;
        Ok(cfg)
    }
}

#[pymethods]
impl PyTwoHopConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let d = TwoHopConfig::default();
        let mut cfg = Self {
            m: d.m,
            n: d.n,
            delta: d.delta,
            p_s: d.p_s,
            p_relay: d.p_relay,
            p_adv: d.p_adv,
            iterations: d.iterations,
            seed: d.seed,
            pruning: d.pruning.to_string(),
            family: d.family.to_string(),
        };
        if let Some(kwargs) = kwargs {
            let py = kwargs.py();
            let obj = Bound::new(py, cfg)?;
            for (k, v) in kwargs.iter() {
                let key: String = k.extract()?;
                if !obj.hasattr(key.as_str())? {
                    return Err(PyValueError::new_err(format!("unknown TwoHopConfig field `{key}`")));
                }
                obj.setattr(key.as_str(), v)?;
            }
            cfg = obj.borrow().clone();
        }
        cfg.to_core()?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "TwoHopConfig(m={}, n={}, delta={}, p_s={}, p_relay={}, p_adv={}, iterations={}, seed={}, pruning='{}', family='{}')",
            self.m, self.n, self.delta, self.p_s, self.p_relay, self.p_adv, self.iterations, self.seed, self.pruning, self.family
        )
    }
}

/// Mean and population variance of p* for honest and adversarial relays.
#[pyclass(name = "ExperimentStats", module = "algebraic_watchdog", frozen)]
struct PyExperimentStats(ExperimentStats);

#[pymethods]
impl PyExperimentStats {
    #[getter]
    fn trials(&self) -> u64 {
        self.0.trials
    }
    #[getter]
    fn mean_p_relay(&self) -> f64 {
        self.0.mean_p_relay
    }
    #[getter]
    fn var_relay(&self) -> f64 {
        self.0.var_relay
    }
    #[getter]
    fn std_relay(&self) -> f64 {
        self.0.std_relay
    }
    #[getter]
    fn mean_p_adv(&self) -> f64 {
        self.0.mean_p_adv
    }
    #[getter]
    fn var_adv(&self) -> f64 {
        self.0.var_adv
    }
    #[getter]
    fn std_adv(&self) -> f64 {
        self.0.std_adv
    }
    #[getter]
    fn separation(&self) -> f64 {
        self.0.separation()
    }
    /// Per-trial p* for the honest relay, if samples were kept.
    #[getter]
    fn samples_relay(&self) -> Option<Vec<f64>> {
        self.0.samples.as_ref().map(|s| s.relay.clone())
    }
    #[getter]
    fn samples_adv(&self) -> Option<Vec<f64>> {
        self.0.samples.as_ref().map(|s| s.adv.clone())
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentStats(trials={}, mean_p_relay={:.6}, mean_p_adv={:.6}, separation={:.6})",
            self.0.trials,
            self.0.mean_p_relay,
            self.0.mean_p_adv,
            self.0.separation()
        )
    }
}

/// Outcome of a multi-hop protocol run.
#[pyclass(name = "ScenarioReport", module = "algebraic_watchdog", frozen)]
struct PyScenarioReport(ScenarioReport);

#[pymethods]
impl PyScenarioReport {
    #[getter]
    fn scenario(&self) -> String {
        self.0.scenario.clone()
    }
    #[getter]
    fn rounds(&self) -> u64 {
        self.0.rounds
    }
    #[getter]
    fn threshold(&self) -> f64 {
        self.0.threshold
    }
    #[getter]
    fn window(&self) -> usize {
        self.0.window
    }
    #[getter]
    fn corrupted_deliveries(&self) -> u64 {
        self.0.corrupted_deliveries
    }
    #[getter]
    fn policeable(&self) -> Vec<u32> {
        self.0.policeable.iter().map(|v| v.0).collect()
    }
    /// `(watcher, watched)` pairs with a malicious verdict.
    #[getter]
    fn flagged(&self) -> Vec<(u32, u32)> {
        self.0.flagged.iter().map(|(a, b)| (a.0, b.0)).collect()
    }
    #[getter]
    fn detected(&self) -> bool {
        self.0.detected
    }
    #[getter]
    fn undetected_corruption(&self) -> bool {
        self.0.undetected_corruption
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioReport(scenario='{}', corrupted_deliveries={}, detected={}, undetected_corruption={})",
            self.0.scenario, self.0.corrupted_deliveries, self.0.detected, self.0.undetected_corruption
        )
    }
}

/// Runs honest and adversarial relays on the same draws.
#[pyfunction]
#[pyo3(signature = (config, workers = None, keep_samples = false))]
fn run_experiment(py: Python<'_>, config: &PyTwoHopConfig, workers: Option<usize>, keep_samples: bool) -> PyResult<PyExperimentStats> {
    let cfg = config.to_core()?;
    py.detach(|| sim::run_experiment(&cfg, opts(workers, keep_samples))).py().map(PyExperimentStats)
}

/// One experiment per value of `axis` (`p_adv`, `delta`, `p_s` or `m`).
#[pyfunction]
#[pyo3(signature = (config, axis, values = None, workers = None))]
fn run_sweep(
    py: Python<'_>,
    config: &PyTwoHopConfig,
    axis: &str,
    values: Option<Vec<f64>>,
    workers: Option<usize>,
) -> PyResult<Vec<(f64, PyExperimentStats)>> {
    let cfg = config.to_core()?;
    let axis: SweepAxis = parse(axis)?;
    let values = values.unwrap_or_else(|| axis.default_values());
    let points = py.detach(|| sim::run_sweep(&cfg, axis, &values, opts(workers, false))).py()?;
    Ok(points.into_iter().map(|p| (p.value, PyExperimentStats(p.stats))).collect())
}

/// Honest-relay p* samples, for threshold calibration.
#[pyfunction]
#[pyo3(signature = (config, workers = None))]
fn honest_samples(py: Python<'_>, config: &PyTwoHopConfig, workers: Option<usize>) -> PyResult<Vec<f64>> {
    let cfg = config.to_core()?;
    py.detach(|| sim::honest_samples(&cfg, opts(workers, false))).py()
}

/// Largest t with at most a `gamma` fraction of `samples` strictly below it.
#[pyfunction]
fn quantile_threshold(samples: Vec<f64>, gamma: f64) -> PyResult<f64> {
    sim::quantile_threshold(&samples, gamma).py()
}

/// `"malicious"` iff `p_star <= t`, else `"well-behaving"`.
#[pyfunction]
fn decide(p_star: f64, t: f64) -> PyResult<&'static str> {
    if !(0.0..=1.0).contains(&t) {
        return Err(PyValueError::new_err(format!("threshold {t} outside [0, 1]")));
    }
    Ok(match inference::decide(p_star, t) {
        Verdict::Malicious => "malicious",
        Verdict::WellBehaving => "well-behaving",
    })
}

/// Smallest r with P(more than r flips in n bits) <= eps.
#[pyfunction]
fn ball_radius(p: f64, n: u32, eps: f64) -> PyResult<u32> {
    channel::ball_radius(&Bsc::new(p).py()?, n, eps).py()
}

/// Flip rate of an adversary composed with a channel.
#[pyfunction]
fn compose_error_rates(p_adv: f64, p_ch: f64) -> f64 {
    channel::compose_error_rates(p_adv, p_ch)
}

/// Misdetection probabilities `(v1, v2, beta)` for a two-hop geometry.
#[pyfunction]
#[pyo3(signature = (n, h, r_1_2, r_2_1, r_3_1, r_3_2))]
fn misdetection(n: u32, h: u32, r_1_2: u32, r_2_1: u32, r_3_1: u32, r_3_2: u32) -> PyResult<(f64, f64, f64)> {
    let g = TwoHopGeometry::new(n, h, r_1_2, r_2_1, r_3_1, r_3_2).py()?;
    Ok((
        analysis::misdetection_v1(&g).py()?,
        analysis::misdetection_v2(&g).py()?,
        analysis::misdetection_beta(&g).py()?,
    ))
}

/// β when the sources cannot overhear each other.
#[pyfunction]
fn misdetection_no_overhearing(n: u32, h: u32, r: u32) -> PyResult<f64> {
    analysis::misdetection_beta_no_overhearing(n, h, r).py()
}

/// Expected matched-codeword count; `rates` and `d_over_n` have m + 1 entries.
#[pyfunction]
fn matched_count_expected(n: u32, m: usize, delta: u32, rates: Vec<f64>, d_over_n: Vec<f64>) -> PyResult<f64> {
    analysis::matched_count_expected(n, m, delta, &rates, &d_over_n).py()
}

/// Fraction of two-source trials where the relay passes the algebraic check.
#[pyfunction]
#[pyo3(signature = (n = 10, delta = 2, p_s = 0.1, p_relay = 0.1, eps = 0.05, p_adv = 0.0, iterations = 1000, seed = 1, adversarial = false, workers = None))]
#[allow(clippy::too_many_arguments)]
fn algebraic_pass_rate(
    py: Python<'_>,
    n: u8,
    delta: u8,
    p_s: f64,
    p_relay: f64,
    eps: f64,
    p_adv: f64,
    iterations: u64,
    seed: u64,
    adversarial: bool,
    workers: Option<usize>,
) -> PyResult<f64> {
    let cfg = AlgebraicCheckConfig {
        n,
        delta,
        p_s,
        p_relay,
        eps,
        p_adv,
        iterations,
        seed,
    };
    py.detach(|| sim::algebraic_pass_rate(&cfg, adversarial, opts(workers, false))).py()
}

#[allow(clippy::too_many_arguments)]
fn scenario_params(
    n: u8,
    delta: u8,
    p_overhear: f64,
    p_adv: f64,
    rounds: u64,
    window: usize,
    gamma: f64,
    threshold: Option<f64>,
    seed: u64,
) -> ScenarioParams {
    ScenarioParams {
        n,
        delta,
        p_overhear,
        p_adv,
        rounds,
        window,
        gamma,
        threshold,
        seed,
        ..ScenarioParams::default()
    }
}

/// Runs a built-in scenario: `one-honest-path`, `all-parents-malicious` or
/// `all-children-malicious`.
#[pyfunction]
#[pyo3(signature = (kind, n = 10, delta = 2, p_overhear = 0.1, p_adv = 0.5, rounds = 50, window = 25, gamma = 0.05, threshold = None, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn run_scenario(
    py: Python<'_>,
    kind: &str,
    n: u8,
    delta: u8,
    p_overhear: f64,
    p_adv: f64,
    rounds: u64,
    window: usize,
    gamma: f64,
    threshold: Option<f64>,
    seed: u64,
) -> PyResult<PyScenarioReport> {
    let kind: ScenarioKind = parse(kind)?;
    let params = scenario_params(n, delta, p_overhear, p_adv, rounds, window, gamma, threshold, seed);
    py.detach(|| multihop::mincut_scenario(kind, &params)).py().map(PyScenarioReport)
}

/// Runs a network described in TOML (the same format the CLI reads).
#[pyfunction]
#[pyo3(signature = (network_toml, rounds = 50, window = 25, gamma = 0.05, threshold = None, seed = 1))]
fn run_network(
    py: Python<'_>,
    network_toml: &str,
    rounds: u64,
    window: usize,
    gamma: f64,
    threshold: Option<f64>,
    seed: u64,
) -> PyResult<PyScenarioReport> {
    let cfg: NetworkConfig = toml::from_str(network_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let params = scenario_params(cfg.n, cfg.delta, 0.0, 0.0, rounds, window, gamma, threshold, seed);
    py.detach(|| {
        let net = cfg.build(seed)?;
        multihop::run_network("custom", &net, &params)
    })
    .py()
    .map(PyScenarioReport)
}

#[pymodule]
fn algebraic_watchdog(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaloisField>()?;
    m.add_class::<PyHashSpec>()?;
    m.add_class::<PyObservation>()?;
    m.add_class::<PyTwoHopConfig>()?;
    m.add_class::<PyExperimentStats>()?;
    m.add_class::<PyScenarioReport>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(honest_samples, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(ball_radius, m)?)?;
    m.add_function(wrap_pyfunction!(compose_error_rates, m)?)?;
    m.add_function(wrap_pyfunction!(misdetection, m)?)?;
    m.add_function(wrap_pyfunction!(misdetection_no_overhearing, m)?)?;
    m.add_function(wrap_pyfunction!(matched_count_expected, m)?)?;
    m.add_function(wrap_pyfunction!(algebraic_pass_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_network, m)?)?;
    Ok(())
}
