//! Python bindings: thin wrappers returning plain lists and dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spinfield_core::equilibria::{self, Stability};
use spinfield_core::{critical, limit, oracle, sim, InitialLaw, ModelParams, MomentVector, SimOptions, Tolerances};

fn err(e: spinfield_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(ms: &[MomentVector]) -> Vec<Vec<f64>> {
    ms.iter().map(|m| m.0.to_vec()).collect()
}

/// Simulates one replica from a product law; returns
/// `(times, moments, events, r0)` with moments in the order
/// `m_eta, m_sigma, m_omega, m_sigma_omega, m_sigma_eta, m_omega_eta, m_sigma_omega_eta`.
#[pyfunction]
#[pyo3(signature = (beta, gamma, h, n, t_end, sample_dt, lam=None, seed=0, stream=0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    beta: f64,
    gamma: f64,
    h: f64,
    n: usize,
    t_end: f64,
    sample_dt: f64,
    lam: Option<[f64; 4]>,
    seed: u64,
    stream: u64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, u64, f64)> {
    let p = ModelParams::new(beta, gamma, h, n).map_err(err)?;
    let law = InitialLaw::product(lam.unwrap_or([0.25; 4]));
    let rec = sim::simulate(p, &law, t_end, sample_dt, seed, stream, SimOptions::default()).map_err(err)?;
    Ok((rec.sample_times, rows(&rec.moments), rec.events, rec.r0))
}

/// Integrates the moment ODE from `m0` (seven moments); returns `(times, states)`.
#[pyfunction]
#[pyo3(signature = (beta, gamma, h, m0, t_end, sample_dt, rtol=1e-10, atol=1e-12))]
#[allow(clippy::too_many_arguments)]
fn integrate(
    beta: f64,
    gamma: f64,
    h: f64,
    m0: [f64; 7],
    t_end: f64,
    sample_dt: f64,
    rtol: f64,
    atol: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = ModelParams::limit(beta, gamma, h).map_err(err)?;
    let m0 = MomentVector::new(m0).map_err(err)?;
    let path = limit::integrate(&m0, &p, t_end, sample_dt, Tolerances { rel: rtol, abs: atol }).map_err(err)?;
    Ok((path.times, rows(&path.states)))
}

/// Equilibria of the limit dynamics: a dict with `phase`, `m_sigma` (list)
/// and `stable` (list of bools).
#[pyfunction]
fn fixed_points<'py>(py: Python<'py>, beta: f64, gamma: f64, h: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = ModelParams::limit(beta, gamma, h).map_err(err)?;
    let pp = equilibria::solve_fixed_points(&p).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("phase", pp.phase)?;
    d.set_item("m_sigma", pp.roots.iter().map(|r| r.m_sigma).collect::<Vec<_>>())?;
    d.set_item("stable", pp.roots.iter().map(|r| r.stability == Stability::Stable).collect::<Vec<_>>())?;
    Ok(d)
}

/// Closed-form and numerical spectra of the Jacobian at the neutral
/// equilibrium.
#[pyfunction]
fn neutral_spectrum(beta: f64, gamma: f64, h: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = ModelParams::limit(beta, gamma, h).map_err(err)?;
    let s = equilibria::jacobian_at_neutral(&p);
    Ok((s.closed_form.to_vec(), s.numerical))
}

/// Critical coupling for `(beta, h)`, or `None` when there is none.
#[pyfunction]
fn critical_gamma(beta: f64, h: f64) -> PyResult<Option<f64>> {
    Ok(critical::critical_params(beta, h).map_err(err)?.map(|p| p.gamma))
}

/// Total-variation distance between the simulated and exact two-site laws.
#[pyfunction]
#[pyo3(signature = (beta, gamma, h, t, replicas, lam=None, seed=0))]
fn oracle_tv(beta: f64, gamma: f64, h: f64, t: f64, replicas: usize, lam: Option<[f64; 4]>, seed: u64) -> PyResult<f64> {
    let p = ModelParams::new(beta, gamma, h, 2).map_err(err)?;
    let cmp = oracle::compare(&p, lam.unwrap_or([0.25; 4]), t, replicas, seed).map_err(err)?;
    Ok(cmp.total_variation())
}

#[pymodule]
fn spinfield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", spinfield_core::io::VERSION)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_points, m)?)?;
    m.add_function(wrap_pyfunction!(neutral_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(critical_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_tv, m)?)?;
    Ok(())
}
