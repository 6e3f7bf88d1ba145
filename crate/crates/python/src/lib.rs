//! Python bindings: factory construction, thresholds, allocation, the
//! two-level simulator with its failure-delay estimate, Pareto composition,
//! baselines and the pair benchmark.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use magicpipe::allocator::{self, AllocationProblem, Objective};
use magicpipe::bench;
use magicpipe::composer::{self, ComposeOptions};
use magicpipe::failure;
use magicpipe::model::{self, FactoryCost, Preset, Protocol};
use magicpipe::scheduler::{self, Rate};
use magicpipe::simulator::{self, TwoLevelConfig};

create_exception!(magicpipe, MagicpipeError, PyException);

fn err(e: magicpipe::Error) -> PyErr {
    MagicpipeError::new_err(e.to_string())
}

#[pyclass(name = "PhysicalParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: model::PhysicalParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(t_2q_ns: f64, t_meas_ns: f64, p_phys: f64, eps_raw: f64) -> PyResult<Self> {
        let inner = model::PhysicalParams::new(t_2q_ns, t_meas_ns, p_phys, eps_raw).map_err(err)?;
        Ok(Self { inner })
    }

    /// `table1`, `supercond` or `majorana`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let p: Preset = name.parse().map_err(err)?;
        Ok(Self { inner: p.params() })
    }

    #[getter]
    fn t_2q_ns(&self) -> f64 {
        self.inner.t_2q_ns
    }
    #[getter]
    fn t_meas_ns(&self) -> f64 {
        self.inner.t_meas_ns
    }
    #[getter]
    fn p_phys(&self) -> f64 {
        self.inner.p_phys
    }
    #[getter]
    fn eps_raw(&self) -> f64 {
        self.inner.eps_raw
    }

    /// Duration of one stabilizer round in nanoseconds.
    fn stab_round_ns(&self) -> f64 {
        self.inner.stab_round_ns()
    }

    fn rounds_to_seconds(&self, rounds: f64) -> f64 {
        self.inner.rounds_to_seconds(rounds)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "PhysicalParams(t_2q_ns={}, t_meas_ns={}, p_phys={:e}, eps_raw={:e})",
            p.t_2q_ns, p.t_meas_ns, p.p_phys, p.eps_raw
        )
    }
}

#[pyclass(name = "FactorySpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyFactory {
    inner: model::FactorySpec,
}

#[pymethods]
impl PyFactory {
    #[getter]
    fn code_distance(&self) -> u32 {
        self.inner.code_distance
    }
    #[getter]
    fn physical_qubits(&self) -> u64 {
        self.inner.physical_qubits
    }
    #[getter]
    fn duration_rounds(&self) -> u64 {
        self.inner.duration_rounds
    }
    #[getter]
    fn burst_demand(&self) -> u64 {
        self.inner.burst_demand
    }
    #[getter]
    fn total_demand(&self) -> u64 {
        self.inner.total_demand
    }
    #[getter]
    fn outputs(&self) -> u64 {
        self.inner.outputs
    }
    #[getter]
    fn eps_in(&self) -> f64 {
        self.inner.eps_in
    }
    #[getter]
    fn eps_out(&self) -> f64 {
        self.inner.eps_out
    }
    #[getter]
    fn p_succ(&self) -> f64 {
        self.inner.p_succ
    }
    #[getter]
    fn consumption_offsets(&self) -> Vec<(u64, u64)> {
        self.inner.consumption_offsets.clone()
    }

    fn duration_seconds(&self, params: &PyParams) -> f64 {
        self.inner.duration_seconds(&params.inner)
    }

    fn improves_fidelity(&self) -> bool {
        self.inner.improves_fidelity()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "FactorySpec(d={}, qubits={}, rounds={}, eps_out={:e}, p_succ={})",
            s.code_distance, s.physical_qubits, s.duration_rounds, s.eps_out, s.p_succ
        )
    }
}

#[pyfunction]
fn build_15to1(d: u32, eps_in: f64, params: &PyParams) -> PyResult<PyFactory> {
    let inner = model::build_15to1(d, eps_in, &params.inner).map_err(err)?;
    Ok(PyFactory { inner })
}

/// One 15-to-1 level per distance, each fed by the one below.
#[pyfunction]
fn build_levels(distances: Vec<u32>, params: &PyParams) -> PyResult<Vec<PyFactory>> {
    let specs =
        model::build_levels(&distances, Protocol::FifteenToOne, &params.inner).map_err(err)?;
    Ok(specs.into_iter().map(|inner| PyFactory { inner }).collect())
}

fn rate((states, rounds): (u64, u64)) -> PyResult<Rate> {
    if rounds == 0 {
        return Err(MagicpipeError::new_err("rate denominator must be positive"));
    }
    Ok(Rate::new(states, rounds))
}

/// Rates are `(states, rounds)` pairs.
#[pyfunction]
fn launch_threshold(
    n_total: u64,
    n_burst: u64,
    r_cons: (u64, u64),
    r_prod: (u64, u64),
    n_buf: u64,
) -> PyResult<u64> {
    if n_burst == 0 || n_burst > n_total {
        return Err(MagicpipeError::new_err("need 1 <= n_burst <= n_total"));
    }
    let r_cons = rate(r_cons)?;
    if r_cons.is_zero() {
        return Err(MagicpipeError::new_err("consumption rate must be positive"));
    }
    Ok(scheduler::launch_threshold(
        n_total,
        n_burst,
        &r_cons,
        &rate(r_prod)?,
        n_buf,
    ))
}

#[pyfunction]
fn resume_threshold(
    n_rot: u64,
    r_cons: (u64, u64),
    r_prod: (u64, u64),
    n_buf: u64,
) -> PyResult<u64> {
    let r_cons = rate(r_cons)?;
    if r_cons.is_zero() {
        return Err(MagicpipeError::new_err("consumption rate must be positive"));
    }
    Ok(scheduler::resume_threshold(
        n_rot,
        &r_cons,
        &rate(r_prod)?,
        n_buf,
    ))
}

fn costs(factories: Vec<(u64, u64, u64)>) -> Vec<FactoryCost> {
    factories
        .into_iter()
        .map(|(qubits, duration, outputs)| FactoryCost {
            qubits,
            duration,
            outputs,
        })
        .collect()
}

/// Factories are `(qubits, duration, outputs)`. Returns `(rounds, copies)`.
#[pyfunction]
fn min_time_fill(
    factories: Vec<(u64, u64, u64)>,
    q_max: u64,
    n_threshold: u64,
) -> PyResult<(u64, Vec<u64>)> {
    let fs = costs(factories);
    let n = fs.len();
    let a =
        allocator::min_time_fill(&AllocationProblem::fill(fs, q_max, n_threshold)).map_err(err)?;
    let copies = (0..n).map(|i| a.copies_of(i)).collect();
    Ok((a.duration().unwrap_or(0), copies))
}

/// Returns `((states, rounds), copies)` with the rate in lowest terms.
#[pyfunction]
fn max_rate_alloc(factories: Vec<(u64, u64, u64)>, q_max: u64) -> PyResult<((u64, u64), Vec<u64>)> {
    let fs = costs(factories);
    let n = fs.len();
    let a = allocator::max_rate_alloc(&AllocationProblem::rate(fs, q_max)).map_err(err)?;
    let Objective::Rate(r) = &a.objective else {
        return Err(MagicpipeError::new_err("rate program returned a duration"));
    };
    let ratio = r.as_ratio();
    let as_u64 = |x: &num_bigint::BigInt| {
        u64::try_from(x).map_err(|e| MagicpipeError::new_err(e.to_string()))
    };
    let copies = (0..n).map(|i| a.copies_of(i)).collect();
    Ok(((as_u64(ratio.numer())?, as_u64(ratio.denom())?), copies))
}

#[pyclass(name = "SimTrace", frozen)]
struct PyTrace {
    inner: simulator::SimTrace,
    n_buf: u64,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn total_rounds(&self) -> u64 {
        self.inner.total_rounds
    }
    #[getter]
    fn qubits_used(&self) -> u64 {
        self.inner.qubits_used
    }
    #[getter]
    fn launch_round(&self) -> u64 {
        self.inner.launch_round
    }
    #[getter]
    fn stall_count(&self) -> u64 {
        self.inner.stall_count
    }
    #[getter]
    fn p_succ(&self) -> f64 {
        self.inner.p_succ
    }
    #[getter]
    fn buffer_series(&self) -> Vec<u64> {
        self.inner.buffer_series.clone()
    }
    #[getter]
    fn produced_series(&self) -> Vec<u64> {
        self.inner.produced_series.clone()
    }
    #[getter]
    fn consumed_series(&self) -> Vec<u64> {
        self.inner.consumed_series.clone()
    }
    /// `(phase, start, end)` half-open intervals.
    #[getter]
    fn phase_intervals(&self) -> Vec<(&'static str, u64, u64)> {
        self.inner
            .phase_intervals
            .iter()
            .map(|iv| (iv.phase.as_str(), iv.start, iv.end))
            .collect()
    }

    fn check_invariants(&self) -> PyResult<()> {
        self.inner.check_invariants(self.n_buf).map_err(err)
    }

    /// Expected rounds added by low-level failures (Markov estimate).
    fn expected_delay(&self) -> PyResult<f64> {
        Ok(failure::expected_delay(&self.inner)
            .map_err(err)?
            .expected_delay)
    }

    #[pyo3(signature = (samples, seed=0))]
    fn monte_carlo_delay(&self, samples: u64, seed: u64) -> PyResult<f64> {
        failure::monte_carlo_delay(&self.inner, samples, seed).map_err(err)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner
            .write_csv(&mut buf)
            .map_err(|e| MagicpipeError::new_err(e.to_string()))?;
        String::from_utf8(buf).map_err(|e| MagicpipeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "SimTrace(total_rounds={}, qubits_used={}, stall_count={})",
            self.inner.total_rounds, self.inner.qubits_used, self.inner.stall_count
        )
    }
}

/// Simulate a two-level pipeline of 15-to-1 factories at distances
/// `(d_low, d_high)`. `q_budget=None` runs the forced-sequential corner.
#[pyfunction]
#[pyo3(signature = (d_low, d_high, params, q_budget=None, n_buf=15))]
fn simulate(
    d_low: u32,
    d_high: u32,
    params: &PyParams,
    q_budget: Option<u64>,
    n_buf: u64,
) -> PyResult<PyTrace> {
    let p = params.inner;
    let specs = model::build_levels(&[d_low, d_high], Protocol::FifteenToOne, &p).map_err(err)?;
    let low = vec![specs[0].producer()];
    let cfg = match q_budget {
        Some(b) => TwoLevelConfig::new(low, specs[1].clone(), b, n_buf, p),
        None => TwoLevelConfig::forced_sequential(low, specs[1].clone(), p),
    };
    let inner = simulator::simulate_two_level(&cfg).map_err(err)?;
    Ok(PyTrace {
        inner,
        n_buf: cfg.n_buf,
    })
}

#[pyclass(name = "ParetoPoint", frozen)]
struct PyPoint {
    #[pyo3(get)]
    q: u64,
    /// Rounds including the expected failure delay.
    #[pyo3(get)]
    t: f64,
    #[pyo3(get)]
    budget: u64,
    #[pyo3(get)]
    buffer_size: u64,
    #[pyo3(get)]
    rounds: u64,
    #[pyo3(get)]
    expected_delay: f64,
    #[pyo3(get)]
    distances: Vec<u32>,
}

#[pymethods]
impl PyPoint {
    fn volume(&self) -> f64 {
        composer::volume(self.q, self.t)
    }

    fn __repr__(&self) -> String {
        format!(
            "ParetoPoint(q={}, t={}, budget={}, buffer_size={})",
            self.q, self.t, self.budget, self.buffer_size
        )
    }
}

/// Pareto front of the full pipeline, `q` ascending.
#[pyfunction]
#[pyo3(signature = (distances, params, budget_points=24, include_failure_delay=true))]
fn compose_pareto(
    py: Python<'_>,
    distances: Vec<u32>,
    params: &PyParams,
    budget_points: usize,
    include_failure_delay: bool,
) -> PyResult<Vec<PyPoint>> {
    let opts = ComposeOptions {
        budget_points,
        include_failure_delay,
        ..ComposeOptions::default()
    };
    let p = params.inner;
    let front = py
        .detach(|| composer::compose_pareto(&distances, Protocol::FifteenToOne, &p, &opts))
        .map_err(err)?;
    Ok(front
        .points
        .into_iter()
        .map(|pt| PyPoint {
            q: pt.q,
            t: pt.t,
            budget: pt.config.budget,
            buffer_size: pt.config.buffer_size,
            rounds: pt.config.rounds,
            expected_delay: pt.config.expected_delay,
            distances: pt.config.distances,
        })
        .collect())
}

/// `(qubits, rounds, copies_per_level)` of the sequential baseline.
#[pyfunction]
fn sequential_baseline(levels: Vec<PyFactory>) -> PyResult<(u64, u64, Vec<u64>)> {
    let specs: Vec<_> = levels.into_iter().map(|l| l.inner).collect();
    let b = composer::sequential_baseline(&specs).map_err(err)?;
    Ok((b.q, b.t, b.copies_per_level))
}

/// `(qubits, rounds, copies_per_level)` of the parallel baseline.
#[pyfunction]
fn parallel_baseline(levels: Vec<PyFactory>) -> PyResult<(u64, u64, Vec<u64>)> {
    let specs: Vec<_> = levels.into_iter().map(|l| l.inner).collect();
    let b = composer::parallel_baseline(&specs).map_err(err)?;
    Ok((b.q, b.t, b.copies_per_level))
}

/// Best dynamic volume of one distance pair and its reductions against both
/// baselines, as a dict.
#[pyfunction]
#[pyo3(signature = (d1, d2, params, budget_points=24))]
fn bench_pair<'py>(
    py: Python<'py>,
    d1: u32,
    d2: u32,
    params: &PyParams,
    budget_points: usize,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let opts = ComposeOptions {
        budget_points,
        ..ComposeOptions::default()
    };
    let p = params.inner;
    let r = py
        .detach(|| bench::two_level_pair(d1, d2, &p, &opts))
        .map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("d1", r.d1)?;
    d.set_item("d2", r.d2)?;
    d.set_item("dynamic_q", r.dynamic_q)?;
    d.set_item("dynamic_t", r.dynamic_t)?;
    d.set_item("dynamic_buffer", r.dynamic_buffer)?;
    d.set_item("dynamic_volume", r.dynamic_volume)?;
    d.set_item("corner_volume", r.corner_volume)?;
    d.set_item("sequential_volume", r.sequential_volume)?;
    d.set_item("parallel_volume", r.parallel_volume)?;
    d.set_item("reduction_vs_sequential", r.reduction_vs_sequential)?;
    d.set_item("reduction_vs_parallel", r.reduction_vs_parallel)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "magicpipe")]
fn magicpipe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MagicpipeError", m.py().get_type::<MagicpipeError>())?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyFactory>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyPoint>()?;
    m.add_function(wrap_pyfunction!(build_15to1, m)?)?;
    m.add_function(wrap_pyfunction!(build_levels, m)?)?;
    m.add_function(wrap_pyfunction!(launch_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(resume_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(min_time_fill, m)?)?;
    m.add_function(wrap_pyfunction!(max_rate_alloc, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compose_pareto, m)?)?;
    m.add_function(wrap_pyfunction!(sequential_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(parallel_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(bench_pair, m)?)?;
    Ok(())
}
