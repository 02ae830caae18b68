//! Python bindings for blitzsim.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use blitzsim::congestion::{self, BlitzstartConfig, CubicParams, Mode};
use blitzsim::engine::SimTime;
use blitzsim::harness::scenario::{parse_size, ScenarioConfig, Variant};
use blitzsim::harness::stats::{self, ComparisonStats};
use blitzsim::harness::{run_scenario, validate, RunResult};
use blitzsim::signaling::{self, AccessTech, BandwidthHint, Factor};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn factor(f: f64) -> PyResult<Factor> {
    Factor::from_f64(f).map_err(value_err)
}

#[pyclass(name = "Hint", module = "blitzsim_py", eq, frozen)]
#[derive(Clone, PartialEq)]
struct PyHint(BandwidthHint);

#[pymethods]
impl PyHint {
    #[new]
    #[pyo3(signature = (access_tech, bandwidth_kbps, min_rtt_us = None))]
    fn new(access_tech: &str, bandwidth_kbps: u32, min_rtt_us: Option<u32>) -> PyResult<Self> {
        let tech: AccessTech = access_tech.parse().map_err(PyValueError::new_err)?;
        Ok(PyHint(BandwidthHint { access_tech: tech, bandwidth_kbps, min_rtt_us }))
    }

    #[getter]
    fn access_tech(&self) -> &'static str {
        self.0.access_tech.name()
    }

    #[getter]
    fn bandwidth_kbps(&self) -> u32 {
        self.0.bandwidth_kbps
    }

    #[getter]
    fn min_rtt_us(&self) -> Option<u32> {
        self.0.min_rtt_us
    }

    fn encode<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &signaling::encode_hint(&self.0))
    }

    /// Raises `ValueError` on malformed input.
    #[staticmethod]
    fn decode(data: &[u8]) -> PyResult<Self> {
        signaling::decode_hint(data).map(PyHint).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Hint(access_tech='{}', bandwidth_kbps={}, min_rtt_us={})",
            self.0.access_tech,
            self.0.bandwidth_kbps,
            self.0.min_rtt_us.map_or("None".to_string(), |v| v.to_string())
        )
    }
}

#[pyclass(name = "RunResult", module = "blitzsim_py", frozen)]
#[derive(Clone)]
struct PyRunResult(RunResult);

#[pymethods]
impl PyRunResult {
    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    /// Flow completion time of the short flow in milliseconds, `None` on
    /// timeout.
    #[getter]
    fn fct_ms(&self) -> Option<f64> {
        self.0.fct.map(SimTime::as_millis_f64)
    }

    #[getter]
    fn lost_pkts(&self) -> u64 {
        self.0.lost_pkts
    }

    #[getter]
    fn retransmitted_bytes(&self) -> u64 {
        self.0.retransmitted_bytes
    }

    #[getter]
    fn inflation_ratio(&self) -> f64 {
        self.0.inflation_ratio
    }

    #[getter]
    fn fairness_ratio(&self) -> Option<f64> {
        self.0.fairness_ratio
    }

    #[getter]
    fn timeout(&self) -> bool {
        self.0.timeout
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(fct_ms={:?}, lost_pkts={}, inflation_ratio={:.3}, timeout={})",
            self.fct_ms(),
            self.0.lost_pkts,
            self.0.inflation_ratio,
            self.0.timeout
        )
    }
}

#[pyclass(name = "Scenario", module = "blitzsim_py")]
#[derive(Clone)]
struct PyScenario(ScenarioConfig);

#[pymethods]
impl PyScenario {
    /// One of the presets: DSL-slow, DSL-fast, 3G, LTE.
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        ScenarioConfig::preset(name).map(PyScenario).map_err(value_err)
    }

    /// Parse `key = value` config text.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        ScenarioConfig::parse(text).map(PyScenario).map_err(value_err)
    }

    #[staticmethod]
    fn presets() -> Vec<Self> {
        ScenarioConfig::presets().into_iter().map(PyScenario).collect()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn rtt_ms(&self) -> f64 {
        self.0.rtt.as_millis_f64()
    }

    #[getter]
    fn bottleneck_kbps(&self) -> u32 {
        self.0.bottleneck_kbps
    }

    #[getter]
    fn buffer_pkts(&self) -> usize {
        self.0.buffer_pkts
    }

    #[getter]
    fn access_tech(&self) -> &'static str {
        self.0.access_tech.name()
    }

    #[getter]
    fn bdp_bytes(&self) -> u64 {
        self.0.bdp_bytes()
    }

    #[getter]
    fn short_flow_bytes(&self) -> u64 {
        self.0.short_flow_bytes
    }

    /// Accepts `70K`, `2M`, `10M` or a byte count.
    #[setter]
    fn set_short_flow_bytes(&mut self, size: Bound<'_, PyAny>) -> PyResult<()> {
        self.0.short_flow_bytes = match size.extract::<u64>() {
            Ok(n) => n,
            Err(_) => parse_size(&size.extract::<String>()?).map_err(value_err)?,
        };
        Ok(())
    }

    #[getter]
    fn variant(&self) -> String {
        self.0.variant.to_string()
    }

    /// `baseline` or `blitz:<factor>[:overest]`.
    #[setter]
    fn set_variant(&mut self, v: &str) -> PyResult<()> {
        self.0.variant = v.parse::<Variant>().map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn seed_base(&self) -> u64 {
        self.0.seed_base
    }

    #[setter]
    fn set_seed_base(&mut self, seed: u64) {
        self.0.seed_base = seed;
    }

    #[getter]
    fn short_flow_start_ms(&self) -> f64 {
        self.0.short_flow_start.as_millis_f64()
    }

    #[setter]
    fn set_short_flow_start_ms(&mut self, ms: u64) {
        self.0.short_flow_start = SimTime::from_millis(ms);
    }

    /// Simulate one repetition.
    #[pyo3(signature = (rep = 0))]
    fn run(&self, py: Python<'_>, rep: u32) -> PyResult<PyRunResult> {
        self.0.validate().map_err(value_err)?;
        let cfg = self.0.clone();
        Ok(PyRunResult(py.allow_threads(|| run_scenario(&cfg, rep))))
    }

    /// Simulate repetitions `0..reps`.
    fn run_reps(&self, py: Python<'_>, reps: u32) -> PyResult<Vec<PyRunResult>> {
        self.0.validate().map_err(value_err)?;
        let cfg = self.0.clone();
        let out = py.allow_threads(|| (0..reps).map(|r| run_scenario(&cfg, r)).collect::<Vec<_>>());
        Ok(out.into_iter().map(PyRunResult).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario('{}', rtt_ms={}, bottleneck_kbps={}, buffer_pkts={}, variant='{}')",
            self.0.name,
            self.rtt_ms(),
            self.0.bottleneck_kbps,
            self.0.buffer_pkts,
            self.0.variant
        )
    }
}

fn stats_dict(py: Python<'_>, s: &ComparisonStats) -> PyResult<PyObject> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("n", s.n)?;
    d.set_item("mean_fct_factor", s.mean_fct_factor)?;
    d.set_item("mean_loss_factor", s.mean_loss_factor)?;
    d.set_item("fct_delta_ms", s.fct.delta)?;
    d.set_item("fct_ci95_ms", (s.fct.ci95.lo, s.fct.ci95.hi))?;
    d.set_item("fct_significant", s.fct.significant)?;
    d.set_item("fct_anova_p", s.fct.anova.p)?;
    d.set_item("loss_delta", s.loss.delta)?;
    d.set_item("loss_ci95", (s.loss.ci95.lo, s.loss.ci95.hi))?;
    d.set_item("loss_significant", s.loss.significant)?;
    d.set_item("mean_inflation", s.mean_inflation)?;
    d.set_item("median_fairness", s.median_fairness)?;
    d.set_item("timeouts", s.timeouts)?;
    Ok(d.into_any().unbind())
}

/// Paired comparison of variant runs against baseline runs of equal seeds.
#[pyfunction]
fn compare(py: Python<'_>, variant: Vec<PyRunResult>, baseline: Vec<PyRunResult>) -> PyResult<PyObject> {
    let v: Vec<RunResult> = variant.into_iter().map(|r| r.0).collect();
    let b: Vec<RunResult> = baseline.into_iter().map(|r| r.0).collect();
    let s = stats::aggregate(&v, &b).map_err(value_err)?;
    stats_dict(py, &s)
}

/// `bandwidth * factor * rtt / 8` in bytes, rounded down.
#[pyfunction]
#[pyo3(signature = (bandwidth_kbps, rtt_us, factor = 1.0))]
fn bdp_bytes(bandwidth_kbps: u32, rtt_us: u64, factor: f64) -> PyResult<u64> {
    let f = self::factor(factor)?;
    Ok(congestion::bdp_bytes(bandwidth_kbps, f, SimTime::from_micros(rtt_us)))
}

/// Initial `(cwnd_bytes, mode)` a Blitzstart server derives from a hint.
#[pyfunction]
#[pyo3(signature = (hint, rtt_us, overestimate = 1.0))]
fn blitzstart_window(hint: &PyHint, rtt_us: u64, overestimate: f64) -> PyResult<(u64, &'static str)> {
    let cfg = BlitzstartConfig { overestimate: factor(overestimate)?, pace_all: false };
    let st = congestion::blitzstart_init(
        &hint.0,
        SimTime::from_micros(rtt_us),
        &cfg,
        &CubicParams::default(),
        SimTime::ZERO,
    );
    let mode = match st.mode {
        Mode::SlowStart => "slow_start",
        Mode::CongestionAvoidance => "avoidance",
        Mode::Recovery => "recovery",
    };
    Ok((st.cwnd, mode))
}

/// Run the invariant suite; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn run_validation(py: Python<'_>, seed: u64) -> Vec<(&'static str, bool, String)> {
    py.allow_threads(|| validate::run_all(seed)).into_iter().map(|c| (c.name, c.passed, c.detail)).collect()
}

#[pymodule]
fn blitzsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHint>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(bdp_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(blitzstart_window, m)?)?;
    m.add_function(wrap_pyfunction!(run_validation, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_helpers() {
        assert_eq!(bdp_bytes(50_000, 50_000, 1.0).unwrap(), 312_500);
        assert_eq!(bdp_bytes(50_000, 50_000, 1.5).unwrap(), 468_750);
        assert!(bdp_bytes(50_000, 50_000, 0.0).is_err());
        let hint = PyHint::new("dsl", 50_000, None).unwrap();
        assert_eq!(blitzstart_window(&hint, 50_000, 1.0).unwrap(), (312_500, "avoidance"));
        let empty = PyHint::new("dsl", 0, None).unwrap();
        assert_eq!(blitzstart_window(&empty, 50_000, 1.0).unwrap().1, "slow_start");
    }

    #[test]
    fn hint_roundtrip() {
        let h = PyHint::new("LTE", 32_000, Some(70_000)).unwrap();
        let bytes = signaling::encode_hint(&h.0);
        assert!(PyHint::decode(&bytes).unwrap() == h);
        assert!(PyHint::decode(&bytes[..3]).is_err());
        assert!(PyHint::new("satellite", 1, None).is_err());
    }

    #[test]
    fn scenario_setters() {
        let mut sc = PyScenario::new("3G").unwrap();
        assert_eq!(sc.bdp_bytes(), 90_000);
        sc.set_variant("blitz:1.5").unwrap();
        assert_eq!(sc.variant(), "blitz:1.5");
        assert!(sc.set_variant("fast").is_err());
        assert!(PyScenario::new("Satellite").is_err());
    }
}
