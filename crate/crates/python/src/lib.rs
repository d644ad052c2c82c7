//! Python bindings. Reports come back as plain dicts and lists.

use latticenf::algebra::{self, HamPoly};
use latticenf::dynamics::{self, IntegratorConfig, Scheme};
use latticenf::lattice::BoxSpec;
use latticenf::media::{self, FrequencyMap, InnerParams, Media};
use latticenf::normal_form::{self as nf, BnfConfig};
use latticenf::selftest::{run_selftest, SelfTestOptions};
use latticenf::state::StateVector;
use latticenf::{nonres, Error};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::EmptySupport
        | Error::InvalidBox(_)
        | Error::InvalidPerturbation(_)
        | Error::EpsTooLarge { .. }
        | Error::InvalidInput(_)
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// The box `{j in Z^d : |j|_inf <= L}`.
#[pyclass(name = "Lattice", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyLattice(BoxSpec);

#[pymethods]
impl PyLattice {
    #[new]
    fn new(d: usize, radius: u32) -> PyResult<Self> {
        BoxSpec::new(d, radius).map(PyLattice).map_err(err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn radius(&self) -> u32 {
        self.0.radius()
    }

    fn num_sites(&self) -> usize {
        self.0.num_sites()
    }

    /// Sites in canonical order; every per-site list uses this order.
    fn sites(&self) -> Vec<Vec<i32>> {
        self.0.sites().map(|s| s.coords().to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Lattice(d={}, radius={})", self.0.dim(), self.0.radius())
    }
}

#[pyclass(name = "Poly", skip_from_py_object)]
#[derive(Clone)]
struct PyPoly(HamPoly);

#[pymethods]
impl PyPoly {
    #[new]
    fn new() -> Self {
        PyPoly(HamPoly::zero())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        HamPoly::from_json(text).map(PyPoly).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    /// Term records `{alpha, beta, gamma, re, im}`.
    fn terms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.to_records())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __add__(&self, other: &PyPoly) -> PyPoly {
        PyPoly(self.0.add(&other.0))
    }

    fn __sub__(&self, other: &PyPoly) -> PyPoly {
        PyPoly(self.0.sub(&other.0))
    }

    fn scale(&self, factor: Complex64) -> PyPoly {
        PyPoly(self.0.scale(factor))
    }

    fn degrees(&self) -> Option<(u32, u32)> {
        Some((self.0.min_degree()?, self.0.max_degree()?))
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn is_action_only(&self) -> bool {
        self.0.keys().all(|k| k.is_action_only())
    }

    /// `{self, other}` in the variables `(J, q, qbar)` at scale `eps`.
    fn bracket(&self, other: &PyPoly, eps: f64) -> PyPoly {
        PyPoly(algebra::poisson_bracket(&self.0, &other.0, eps))
    }

    fn evaluate(&self, lattice: &PyLattice, q: Vec<Complex64>, zeta: Vec<f64>, eps: f64) -> PyResult<Complex64> {
        let c = algebra::CompiledPoly::new(&self.0, lattice.0, &zeta, eps).map_err(err)?;
        check_len(lattice, q.len())?;
        Ok(c.eval(&q))
    }

    fn __repr__(&self) -> String {
        format!("Poly({} terms)", self.0.len())
    }
}

fn check_len(lattice: &PyLattice, n: usize) -> PyResult<()> {
    if n != lattice.0.num_sites() {
        return Err(PyValueError::new_err(format!(
            "expected {} values, one per site, got {n}",
            lattice.0.num_sites()
        )));
    }
    Ok(())
}

fn media_of(lattice: &PyLattice, v: Vec<f64>) -> PyResult<Media> {
    Media::from_values(lattice.0, v).map_err(err)
}

fn inner_of(lattice: &PyLattice, zeta: Vec<f64>, sigma: f64) -> PyResult<InnerParams> {
    InnerParams::from_values(lattice.0, zeta, sigma).map_err(err)
}

fn omega_of(lattice: &PyLattice, omega: Vec<f64>, eps: f64) -> PyResult<FrequencyMap> {
    FrequencyMap::from_values(lattice.0, omega, eps).map_err(err)
}

#[pyfunction]
fn short_range_family(lattice: &PyLattice, coeff: f64) -> PyPoly {
    PyPoly(algebra::short_range_family(lattice.0, coeff))
}

#[pyfunction]
fn nearest_neighbour_coupling(lattice: &PyLattice, coeff: f64) -> PyPoly {
    PyPoly(algebra::nearest_neighbour_coupling(lattice.0, coeff))
}

#[pyfunction]
fn sample_media(seed: u64, lattice: &PyLattice) -> Vec<f64> {
    media::sample_media(seed, lattice.0).values().to_vec()
}

#[pyfunction]
fn sample_inner(seed: u64, lattice: &PyLattice, sigma: f64) -> Vec<f64> {
    media::sample_inner(seed, lattice.0, sigma).values().to_vec()
}

/// `omega_j = (v_j + zeta_j) / eps^2`.
#[pyfunction]
fn frequencies(lattice: &PyLattice, media: Vec<f64>, zeta: Vec<f64>, sigma: f64, eps: f64) -> PyResult<Vec<f64>> {
    let m = media_of(lattice, media)?;
    let z = inner_of(lattice, zeta, sigma)?;
    Ok(media::frequencies(&m, &z, eps).map_err(err)?.values().to_vec())
}

#[pyfunction]
fn choose_m<'py>(py: Python<'py>, eps: f64, sigma: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = nf::choose_m(eps, sigma).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("M", c.m)?;
    d.set_item("formula", c.formula)?;
    d.set_item("remainder_exponent", c.remainder_exponent)?;
    d.set_item("clamped", c.clamped)?;
    Ok(d)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn model_hamiltonian(
    lattice: &PyLattice,
    eps: f64,
    r: &PyPoly,
    media: Vec<f64>,
    zeta: Vec<f64>,
    sigma: f64,
) -> PyResult<PyPoly> {
    let m = media_of(lattice, media)?;
    let z = inner_of(lattice, zeta, sigma)?;
    algebra::build_model_hamiltonian(lattice.0, eps, &r.0, &z, &m).map(PyPoly).map_err(err)
}

#[pyfunction]
fn original_hamiltonian(lattice: &PyLattice, media: Vec<f64>, r: &PyPoly) -> PyResult<PyPoly> {
    let m = media_of(lattice, media)?;
    algebra::build_original_hamiltonian(lattice.0, &m, &r.0, false).map(PyPoly).map_err(err)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn check_nonresonance<'py>(
    py: Python<'py>,
    lattice: &PyLattice,
    omega: Vec<f64>,
    eps: f64,
    eta: f64,
    m: u32,
    sigma: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let w = omega_of(lattice, omega, eps)?;
    let rep = nonres::check_nonresonance(&w, eta, m, sigma, lattice.0).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn measure<'py>(
    py: Python<'py>,
    lattice: &PyLattice,
    media: Vec<f64>,
    eta: f64,
    m: u32,
    sigma: f64,
    eps: f64,
    trials: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let md = media_of(lattice, media)?;
    let res = py
        .detach(|| nonres::measure_mc(eta, m, lattice.0, sigma, eps, &md, trials, seed))
        .map_err(err)?;
    to_py(py, &res)
}

/// Runs the normal-form construction; returns `(z_final, report)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn normal_form<'py>(
    py: Python<'py>,
    lattice: &PyLattice,
    h: &PyPoly,
    omega: Vec<f64>,
    eps: f64,
    eta: f64,
    sigma: f64,
    m: u32,
) -> PyResult<(PyPoly, Bound<'py, PyAny>)> {
    let cfg = BnfConfig::new(eps, eta, sigma, m, lattice.0).map_err(err)?;
    let w = omega_of(lattice, omega, eps)?;
    let res = py.detach(|| nf::run_bnf(&h.0, &w, &cfg)).map_err(err)?;
    Ok((PyPoly(res.z_final), to_py(py, &res.report)?))
}

/// Integrates `h` from `q0`; returns a dict with `times`, `energies`,
/// `drift` (per sample, per site) and `energy_imag_max`.
#[pyfunction]
#[pyo3(signature = (lattice, h, q0, zeta, sigma, eps, dt, t_end, sample_every=1, scheme="strang"))]
#[allow(clippy::too_many_arguments)]
fn integrate<'py>(
    py: Python<'py>,
    lattice: &PyLattice,
    h: &PyPoly,
    q0: Vec<Complex64>,
    zeta: Vec<f64>,
    sigma: f64,
    eps: f64,
    dt: f64,
    t_end: f64,
    sample_every: usize,
    scheme: &str,
) -> PyResult<Bound<'py, PyDict>> {
    check_len(lattice, q0.len())?;
    let scheme = match scheme {
        "strang" => Scheme::Strang,
        "rk4_reference" => Scheme::Rk4Reference,
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    let z = inner_of(lattice, zeta, sigma)?;
    let q = StateVector::from_amplitudes(lattice.0, q0);
    let cfg = IntegratorConfig { dt, t_end, scheme, sample_every };
    let traj = py.detach(|| dynamics::integrate(&h.0, &q, &cfg, &z, eps)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("times", &traj.times)?;
    d.set_item("energies", &traj.energies)?;
    d.set_item("drift", &traj.drift)?;
    d.set_item("energy_imag_max", traj.energy_imag_max)?;
    d.set_item("final_state", traj.states.last().map(|s| s.amplitudes().to_vec()))?;
    Ok(d)
}

#[pyfunction]
fn admissible_state(seed: u64, trial: u64, lattice: &PyLattice, sigma: f64, eps: f64) -> Vec<Complex64> {
    dynamics::sample_admissible_state(seed, trial, lattice.0, sigma, eps).amplitudes().to_vec()
}

#[pyfunction]
#[pyo3(signature = (seed=None))]
fn selftest<'py>(py: Python<'py>, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let mut opts = SelfTestOptions::default();
    if let Some(s) = seed {
        opts.seed = s;
    }
    let summary = py.detach(|| run_selftest(&opts));
    to_py(py, &summary)
}

#[pymodule]
fn latticenf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PyPoly>()?;
    m.add_function(wrap_pyfunction!(short_range_family, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_neighbour_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(sample_media, m)?)?;
    m.add_function(wrap_pyfunction!(sample_inner, m)?)?;
    m.add_function(wrap_pyfunction!(frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(choose_m, m)?)?;
    m.add_function(wrap_pyfunction!(model_hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(original_hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(check_nonresonance, m)?)?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(normal_form, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(admissible_state, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
