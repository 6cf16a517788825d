//! Python bindings: frequency tables, states, the polynomial algebra, the
//! normal-form construction and the split-step simulator.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::collections::BTreeMap;

use nlkg_core::integrator;
use nlkg_core::nonlin;
use nlkg_core::normal_form;
use nlkg_core::poly;
use nlkg_core::resonance;
use nlkg_core::rng::{substream, Stream};
use nlkg_core::spectral;
use nlkg_core::state;

fn err(e: nlkg_core::Error) -> PyErr {
    match &e {
        nlkg_core::Error::InvalidParam { .. }
        | nlkg_core::Error::IndexOutOfRange { .. }
        | nlkg_core::Error::LengthMismatch { .. }
        | nlkg_core::Error::Config { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Frequencies, eigenvalues and smoothing multipliers at fixed `c`.
#[pyclass(name = "FrequencyTable", from_py_object)]
#[derive(Clone)]
struct PyFrequencyTable {
    inner: spectral::FrequencyTable,
}

#[pymethods]
impl PyFrequencyTable {
    /// Build from the derived potential coefficients `v_k` (k = 1..K).
    #[new]
    fn new(c: f64, potential: Vec<f64>) -> PyResult<Self> {
        Ok(PyFrequencyTable {
            inner: spectral::FrequencyTable::new(c, &potential).map_err(err)?,
        })
    }

    /// Sample `v'_k` from a seed and build the table.
    #[staticmethod]
    fn sampled(c: f64, s: f64, m_scale: f64, k_max: usize, seed: u64) -> PyResult<Self> {
        let pot = spectral::PotentialSpec::sampled(s, m_scale, k_max, seed);
        Ok(PyFrequencyTable {
            inner: spectral::FrequencyTable::from_spec(c, &pot).map_err(err)?,
        })
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }

    #[getter]
    fn k_max(&self) -> usize {
        self.inner.k_max()
    }

    fn omegas(&self) -> Vec<f64> {
        self.inner.omegas().to_vec()
    }

    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambdas().to_vec()
    }

    fn multiplier(&self, k: usize) -> PyResult<f64> {
        self.inner.check_mode(k).map_err(err)?;
        Ok(self.inner.multiplier(k))
    }

    fn __repr__(&self) -> String {
        format!("FrequencyTable(c={}, k_max={})", self.inner.c(), self.inner.k_max())
    }
}

/// Truncated phase-space point `(xi, eta)`.
#[pyclass(name = "State", from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: state::State,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(xi: Vec<Complex64>, eta: Vec<Complex64>) -> PyResult<Self> {
        Ok(PyState {
            inner: state::State::from_parts(xi, eta).map_err(err)?,
        })
    }

    #[staticmethod]
    fn zero(k_max: usize) -> Self {
        PyState {
            inner: state::State::zero(k_max),
        }
    }

    /// Random real state with exponential profile, `analytic_norm(rho) = norm`.
    #[staticmethod]
    fn random_real(k_max: usize, rho: f64, norm: f64, seed: u64) -> Self {
        let mut rng = substream(seed, Stream::InitialData, 7);
        PyState {
            inner: state::random_real_state(k_max, rho, norm, &mut rng),
        }
    }

    #[getter]
    fn k_max(&self) -> usize {
        self.inner.k_max()
    }

    fn xi(&self) -> Vec<Complex64> {
        self.inner.xi_slice().to_vec()
    }

    fn eta(&self) -> Vec<Complex64> {
        self.inner.eta_slice().to_vec()
    }

    fn analytic_norm(&self, rho: f64) -> PyResult<f64> {
        self.inner.analytic_norm(rho).map_err(err)
    }

    fn tail_norm(&self, rho: f64, n: usize) -> PyResult<f64> {
        self.inner.tail_norm(rho, n).map_err(err)
    }

    fn action(&self, k: usize) -> PyResult<Complex64> {
        self.inner.action(k).map_err(err)
    }

    fn action_distance(&self, other: &PyState, rho: f64) -> PyResult<f64> {
        self.inner.action_distance(&other.inner, rho).map_err(err)
    }

    fn reality_defect(&self) -> f64 {
        self.inner.reality_defect()
    }

    fn __repr__(&self) -> String {
        format!("State(k_max={})", self.inner.k_max())
    }
}

/// Sparse zero-momentum polynomial over signed modes; terms are lists of
/// signed integers (`+k` for `xi_k`, `-k` for `eta_k`) with a complex
/// coefficient.
#[pyclass(name = "Polynomial", from_py_object)]
#[derive(Clone)]
struct PyPolynomial {
    inner: poly::Polynomial,
}

fn modes_from_signed(signed: &[i64]) -> PyResult<Vec<poly::Mode>> {
    signed
        .iter()
        .map(|&v| {
            if v == 0 || v.unsigned_abs() > u32::MAX as u64 {
                Err(PyValueError::new_err("mode labels are non-zero signed integers"))
            } else {
                Ok(poly::Mode::new(
                    v.unsigned_abs() as usize,
                    if v > 0 { 1 } else { -1 },
                ))
            }
        })
        .collect()
}

#[pymethods]
impl PyPolynomial {
    #[new]
    fn new(terms: Vec<(Vec<i64>, Complex64)>) -> PyResult<Self> {
        let mut p = poly::Polynomial::zero();
        for (signed, coeff) in terms {
            let modes = modes_from_signed(&signed)?;
            p.add_term(poly::MultiIndex::new(modes), coeff);
        }
        Ok(PyPolynomial { inner: p })
    }

    #[staticmethod]
    fn zero() -> Self {
        PyPolynomial {
            inner: poly::Polynomial::zero(),
        }
    }

    fn terms(&self) -> Vec<(Vec<i64>, Complex64)> {
        self.inner
            .terms()
            .map(|(j, a)| {
                let signed = j
                    .entries()
                    .iter()
                    .map(|m| m.k() as i64 * m.delta() as i64)
                    .collect();
                (signed, *a)
            })
            .collect()
    }

    fn num_terms(&self) -> usize {
        self.inner.num_terms()
    }

    fn norm(&self) -> f64 {
        self.inner.poly_norm()
    }

    fn is_zero_momentum(&self) -> bool {
        self.inner.is_zero_momentum()
    }

    fn reality_defect(&self) -> f64 {
        self.inner.reality_defect()
    }

    fn evaluate(&self, z: &PyState) -> PyResult<Complex64> {
        self.inner.evaluate(&z.inner).map_err(err)
    }

    fn vector_field(&self, z: &PyState) -> PyResult<PyState> {
        Ok(PyState {
            inner: self.inner.vector_field(&z.inner).map_err(err)?,
        })
    }

    fn bracket(&self, other: &PyPolynomial) -> PyPolynomial {
        PyPolynomial {
            inner: self.inner.poisson_bracket(&other.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!("Polynomial({} terms)", self.inner.num_terms())
    }
}

/// `omega_k = c sqrt(c^2 + k^2 + v_k)` on the cancellation-free branch.
#[pyfunction]
fn frequency(k: usize, c: f64, v_k: f64) -> PyResult<f64> {
    spectral::frequency(k, c, v_k).map_err(err)
}

/// Smoothing multiplier `(c / sqrt(c^2 + lambda_k))^{1/2}`.
#[pyfunction]
fn smoothing_multiplier(k: usize, c: f64, v_k: f64) -> PyResult<f64> {
    spectral::smoothing_multiplier(k, c, v_k).map_err(err)
}

/// Exact `int_0^pi prod sin(k_i x) dx`.
#[pyfunction]
fn sine_product_integral(ks: Vec<usize>) -> f64 {
    nonlin::sine_product_integral(&ks)
}

/// Exact `int_0^pi prod phi_{k_i}(x) dx` with `phi_k = pi^{-1/2} sin(kx)`.
#[pyfunction]
fn basis_product_integral(ks: Vec<usize>) -> f64 {
    nonlin::basis_product_integral(&ks)
}

/// Expands the nonlinearity `f(u) = sum f_m u^m` into homogeneous pieces;
/// returns `{degree: Polynomial}`.
#[pyfunction]
#[pyo3(signature = (taylor, freq, max_degree, strict=true, max_terms=4_000_000))]
fn expand_nonlinearity(
    taylor: Vec<(u32, f64)>,
    freq: &PyFrequencyTable,
    max_degree: usize,
    strict: bool,
    max_terms: u64,
) -> PyResult<BTreeMap<usize, PyPolynomial>> {
    let spec = nonlin::NonlinearitySpec::new(taylor, 0.25, 1.0).map_err(err)?;
    let projection = if strict {
        nonlin::MomentumProjection::Strict
    } else {
        nonlin::MomentumProjection::KeepAll
    };
    let polys = nonlin::expand_nonlinearity(&spec, &freq.inner, max_degree, projection, max_terms)
        .map_err(err)?;
    Ok(polys
        .into_iter()
        .map(|(d, p)| (d, PyPolynomial { inner: p }))
        .collect())
}

/// Runs the recursive construction; returns `(chi, zed, diagnostics)` where
/// `chi` and `zed` map degree -> Polynomial.
#[pyfunction]
#[pyo3(signature = (n_polys, r, n_cutoff, freq, gamma_floor=1e-9, tau=0.0, max_terms=4_000_000))]
#[allow(clippy::type_complexity)]
fn recursive_construct(
    py: Python<'_>,
    n_polys: BTreeMap<usize, PyPolynomial>,
    r: usize,
    n_cutoff: usize,
    freq: &PyFrequencyTable,
    gamma_floor: f64,
    tau: f64,
    max_terms: u64,
) -> PyResult<(
    BTreeMap<usize, PyPolynomial>,
    BTreeMap<usize, PyPolynomial>,
    Vec<Py<PyDict>>,
)> {
    let inner: BTreeMap<usize, poly::Polynomial> = n_polys
        .into_iter()
        .map(|(d, p)| (d, p.inner))
        .collect();
    let res =
        normal_form::recursive_construct(&inner, r, n_cutoff, &freq.inner, gamma_floor, tau, max_terms)
            .map_err(err)?;
    let chi = res
        .chi
        .iter()
        .map(|(d, p)| (*d, PyPolynomial { inner: p.clone() }))
        .collect();
    let zed = res
        .zed
        .iter()
        .map(|(d, p)| (*d, PyPolynomial { inner: p.clone() }))
        .collect();
    let mut diags = Vec::new();
    for d in &res.diagnostics {
        let dict = PyDict::new(py);
        dict.set_item("degree", d.degree)?;
        dict.set_item("chi_norm", d.chi_norm)?;
        dict.set_item("zed_norm", d.zed_norm)?;
        dict.set_item("q_norm", d.q_norm)?;
        dict.set_item("min_divisor", d.min_divisor)?;
        dict.set_item("min_scaled_divisor", d.min_scaled_divisor)?;
        dict.set_item("bound_ratio", d.growth_ratio)?;
        diags.push(dict.into());
    }
    Ok((chi, zed, diags))
}

/// Time-`t` flow of the generator's Hamiltonian vector field.
#[pyfunction]
fn lie_flow(chi: &PyPolynomial, z: &PyState, t: f64) -> PyResult<PyState> {
    Ok(PyState {
        inner: normal_form::lie_flow(&chi.inner, &z.inner, t).map_err(err)?,
    })
}

/// Numeric conjugation defect of a constructed `(chi, Z)` pair at the
/// samples' amplitude.
#[pyfunction]
fn remainder_probe(
    n_polys: BTreeMap<usize, PyPolynomial>,
    chi: &PyPolynomial,
    zed: &PyPolynomial,
    freq: &PyFrequencyTable,
    samples: Vec<PyState>,
) -> PyResult<f64> {
    let inner: BTreeMap<usize, poly::Polynomial> = n_polys
        .into_iter()
        .map(|(d, p)| (d, p.inner))
        .collect();
    let states: Vec<state::State> = samples.into_iter().map(|s| s.inner).collect();
    normal_form::remainder_probe(&inner, &chi.inner, &zed.inner, &freq.inner, &states)
        .map_err(err)
}

/// Monte-Carlo violation fraction of the non-resonance condition on the
/// cell `c in [n, n+1]`.
#[pyfunction]
#[pyo3(signature = (n_cell, s, m_scale, k_max, gamma, tau, r, n_cutoff, samples, seed))]
#[allow(clippy::too_many_arguments)]
fn measure_scan(
    py: Python<'_>,
    n_cell: u32,
    s: f64,
    m_scale: f64,
    k_max: usize,
    gamma: f64,
    tau: f64,
    r: u32,
    n_cutoff: usize,
    samples: u32,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let params = resonance::NonresParams {
        gamma,
        tau,
        r,
        n_cutoff,
    };
    let res = resonance::measure_scan(n_cell, s, m_scale, k_max, &params, samples, seed, 1 << 26)
        .map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("gamma", res.gamma)?;
    dict.set_item("n", res.n_cell)?;
    dict.set_item("samples", res.samples)?;
    dict.set_item("violations", res.violations)?;
    dict.set_item("fraction", res.fraction)?;
    dict.set_item("ci95", res.ci95)?;
    Ok(dict.into())
}

/// Evolves the truncated system with the pseudo-spectral Strang splitting;
/// returns the recorded diagnostics as a dict of lists.
#[pyfunction]
#[pyo3(signature = (taylor, freq, z0, dt, t_final, rho, n_tail, record_stride=10))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    taylor: Vec<(u32, f64)>,
    freq: &PyFrequencyTable,
    z0: &PyState,
    dt: f64,
    t_final: f64,
    rho: f64,
    n_tail: usize,
    record_stride: usize,
) -> PyResult<Py<PyDict>> {
    let spec = nonlin::NonlinearitySpec::new(taylor, 0.25, 1.0).map_err(err)?;
    let backend = integrator::KickBackend::spectral(spec, &freq.inner);
    let cfg = integrator::SimConfig {
        k_max: freq.inner.k_max(),
        dt,
        t_final,
        rho,
        n_tail,
        amplitude: 0.0,
        seed: 0,
        record_stride,
    };
    let diag = integrator::simulate(&cfg, &freq.inner, &backend, &z0.inner).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("t", diag.t)?;
    dict.set_item("norm_rho", diag.norm_rho)?;
    dict.set_item("tail_norm", diag.tail_norm)?;
    dict.set_item("action_dist", diag.action_dist)?;
    dict.set_item("hamiltonian", diag.hamiltonian)?;
    dict.set_item("reality_defect", diag.reality_defect)?;
    Ok(dict.into())
}

/// Exact Bernoulli number `B_k` of `z/(e^z - 1)` as a `(numerator,
/// denominator)` string pair.
#[pyfunction]
fn bernoulli(k: u32) -> PyResult<(String, String)> {
    let b = normal_form::bernoulli(k).map_err(err)?;
    Ok((b.numer().to_string(), b.denom().to_string()))
}

#[pymodule]
fn pynlkg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrequencyTable>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyPolynomial>()?;
    m.add_function(wrap_pyfunction!(frequency, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(sine_product_integral, m)?)?;
    m.add_function(wrap_pyfunction!(basis_product_integral, m)?)?;
    m.add_function(wrap_pyfunction!(expand_nonlinearity, m)?)?;
    m.add_function(wrap_pyfunction!(recursive_construct, m)?)?;
    m.add_function(wrap_pyfunction!(lie_flow, m)?)?;
    m.add_function(wrap_pyfunction!(remainder_probe, m)?)?;
    m.add_function(wrap_pyfunction!(measure_scan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(bernoulli, m)?)?;
    Ok(())
}
