//! Python bindings: closed-form analytics, churn probabilities, scenario
//! simulation, and chain-file round-tripping.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use zeroblock::analytics;
use zeroblock::chain::PowCheck;
use zeroblock::chainfile;
use zeroblock::churn::{self, ChurnParams};
use zeroblock::scenario;
use zeroblock::simnet;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
#[pyo3(signature = (rho, lam=1.0))]
fn poisson_pmf(rho: u64, lam: f64) -> PyResult<f64> {
    if lam <= 0.0 {
        return Err(PyValueError::new_err("lambda must be positive"));
    }
    Ok(analytics::poisson_pmf(rho, lam))
}

#[pyfunction]
fn selfish_threshold_lower(gamma: f64) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(PyValueError::new_err("gamma outside [0, 1]"));
    }
    Ok(analytics::selfish_threshold_lower(gamma))
}

#[pyfunction]
fn event4_max_probability(sp: f64) -> PyResult<f64> {
    if !(0.0..=0.5).contains(&sp) {
        return Err(PyValueError::new_err("sp outside [0, 0.5]"));
    }
    Ok(analytics::event4_max_probability(sp))
}

#[pyfunction]
fn event4_empirical(sp: f64, trials: u64, seed: u64) -> PyResult<f64> {
    if !(0.0..=0.5).contains(&sp) {
        return Err(PyValueError::new_err("sp outside [0, 0.5]"));
    }
    Ok(analytics::event4_empirical(sp, trials, seed))
}

fn params(n: u64, sigma: u64, eta: u64) -> PyResult<ChurnParams> {
    ChurnParams::new(n, sigma, eta).map_err(value_err)
}

#[pyfunction]
fn join_majority_probability(n: u64, sigma: u64, eta: u64) -> PyResult<f64> {
    Ok(churn::join_majority_probability(params(n, sigma, eta)?))
}

#[pyfunction]
fn homogeneous_probability(n: u64, sigma: u64, eta: u64) -> PyResult<(f64, f64, f64)> {
    Ok(churn::homogeneous_probability(params(n, sigma, eta)?))
}

#[pyfunction]
fn retry_success_probability(n: u64, sigma: u64, eta: u64, m: u32) -> PyResult<f64> {
    Ok(churn::retry_success_probability(params(n, sigma, eta)?, m))
}

/// Results of one simulation repetition.
#[pyclass(frozen)]
struct SimResult {
    #[pyo3(get)]
    selfish_share: f64,
    #[pyo3(get)]
    accidental_fork_rate: f64,
    #[pyo3(get)]
    total_fork_rate: f64,
    #[pyo3(get)]
    withholding_violations: u64,
    #[pyo3(get)]
    reference_height: u64,
    #[pyo3(get)]
    complete: bool,
    trace: String,
    revenue: String,
}

#[pymethods]
impl SimResult {
    /// The full event trace, one CSV line per record.
    fn trace_csv(&self) -> &str {
        &self.trace
    }

    /// Per-miner revenue report as CSV.
    fn revenue_csv(&self) -> &str {
        &self.revenue
    }

    fn __repr__(&self) -> String {
        format!(
            "SimResult(selfish_share={:.6}, reference_height={}, complete={})",
            self.selfish_share, self.reference_height, self.complete
        )
    }
}

/// Parses a scenario file's text and runs repetition `rep`.
#[pyfunction]
#[pyo3(signature = (text, rep=0))]
fn run_scenario(text: &str, rep: u32) -> PyResult<SimResult> {
    let sc = scenario::parse(text).map_err(value_err)?;
    if rep >= sc.repetitions {
        return Err(PyValueError::new_err(format!(
            "rep {rep} out of range (scenario has {})",
            sc.repetitions
        )));
    }
    let trace = simnet::run(sc.rep_config(rep)).map_err(value_err)?;
    let revenue = analytics::revenue_shares(&trace);
    let forks = analytics::fork_report(&trace);
    Ok(SimResult {
        selfish_share: revenue.selfish_share(),
        accidental_fork_rate: forks.accidental_rate(),
        total_fork_rate: forks.total_rate(),
        withholding_violations: analytics::withholding_violations(&trace),
        reference_height: revenue.reference_height,
        complete: trace.complete,
        trace: trace.serialize_records(),
        revenue: revenue.to_csv(),
    })
}

/// Validates a chain file's text; returns (blocks, standard_height).
#[pyfunction]
fn validate_chain(text: &str) -> PyResult<(u64, u64)> {
    let chain = chainfile::parse(text).map_err(value_err)?;
    chain.validate(&PowCheck::Assumed).map_err(value_err)?;
    Ok((chain.len(), chain.standard_height()))
}

/// Replaces interior dummy runs with gap commitments; returns the compacted
/// chain file text.
#[pyfunction]
fn compact_chain(text: &str) -> PyResult<String> {
    let chain = chainfile::parse(text).map_err(value_err)?;
    Ok(chainfile::serialize(&zeroblock::chain::compact(&chain)))
}

#[pymodule]
fn zeroblock_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(poisson_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(selfish_threshold_lower, m)?)?;
    m.add_function(wrap_pyfunction!(event4_max_probability, m)?)?;
    m.add_function(wrap_pyfunction!(event4_empirical, m)?)?;
    m.add_function(wrap_pyfunction!(join_majority_probability, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneous_probability, m)?)?;
    m.add_function(wrap_pyfunction!(retry_success_probability, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(validate_chain, m)?)?;
    m.add_function(wrap_pyfunction!(compact_chain, m)?)?;
    m.add_class::<SimResult>()?;
    Ok(())
}
