//! Python module `invsq`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use invsq_core::angular::{self, AngularMode};
use invsq_core::approxefn::{self, PhiConfig};
use invsq_core::config;
use invsq_core::counterexamples::{self, CounterexampleT};
use invsq_core::exterior::{self, ExteriorOptions};
use invsq_core::ladder::{self, LadderOptions};
use invsq_core::oscillation::{self, CountOptions};
use invsq_core::potential::Envelope;

fn core_err(e: invsq_core::Error) -> PyErr {
    match e {
        invsq_core::Error::InvalidInput(_) | invsq_core::Error::HypothesisViolation(_) | invsq_core::Error::Unsupported(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn spec_err(e: config::SpecError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parsed potential-spec document.
#[pyclass(frozen, module = "invsq")]
pub struct PotentialSpec {
    inner: config::PotentialSpec,
}

#[pymethods]
impl PotentialSpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        config::PotentialSpec::from_json_str(text).map(|inner| Self { inner }).map_err(spec_err)
    }

    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        config::PotentialSpec::from_path(&path).map(|inner| Self { inner }).map_err(spec_err)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension
    }

    /// Canonical JSON text of the spec.
    fn to_json(&self) -> String {
        self.inner.source.to_string()
    }

    fn interior_model(&self) -> PyResult<InteriorModel> {
        self.inner.interior_model().map(|inner| InteriorModel { inner }).map_err(spec_err)
    }
}

/// One angular eigenvalue class −μ.
#[pyclass(frozen, get_all, skip_from_py_object, module = "invsq")]
#[derive(Clone)]
pub struct Mode {
    index: usize,
    eigenvalue: f64,
    mu: f64,
    multiplicity: usize,
    critical: bool,
    tau: f64,
    alpha: (f64, f64),
}

impl From<&AngularMode> for Mode {
    fn from(m: &AngularMode) -> Self {
        Self {
            index: m.index,
            eigenvalue: m.eigenvalue,
            mu: m.mu,
            multiplicity: m.multiplicity,
            critical: m.critical,
            tau: m.tau,
            alpha: (m.alpha.re, m.alpha.im),
        }
    }
}

#[pymethods]
impl Mode {
    fn __repr__(&self) -> String {
        format!("Mode(index={}, mu={}, multiplicity={}, critical={})", self.index, self.mu, self.multiplicity, self.critical)
    }
}

/// Angular eigenvalue classes of Δ_S + P, lowest first.
#[pyfunction]
#[pyo3(signature = (spec, basis = angular::DEFAULT_BASIS, tol = 1e-8))]
fn angular_spectrum(py: Python<'_>, spec: &PotentialSpec, basis: usize, tol: f64) -> PyResult<Vec<Mode>> {
    let s = py.detach(|| angular::angular_spectrum(&spec.inner.angular, basis, tol)).map_err(core_err)?;
    Ok(s.modes.iter().map(Mode::from).collect())
}

#[pyclass(frozen, get_all, module = "invsq")]
pub struct CountReport {
    e_grid: Vec<f64>,
    mode_indices: Vec<usize>,
    multiplicities: Vec<usize>,
    per_mode_counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
    predicted: Vec<f64>,
    predicted_slope: f64,
    slope: Option<f64>,
    max_residual: Option<f64>,
}

/// Bound-state counts N(E) over an E grid.
#[pyfunction]
#[pyo3(signature = (spec, e_grid, sign = None, all_modes = false, basis = angular::DEFAULT_BASIS, tol = oscillation::DEFAULT_ODE_TOL))]
fn count(py: Python<'_>, spec: &PotentialSpec, e_grid: Vec<f64>, sign: Option<&str>, all_modes: bool, basis: usize, tol: f64) -> PyResult<CountReport> {
    let mut t = spec.inner.radial.clone();
    match sign {
        None => {}
        Some("plus") => t.envelope = Envelope::Plus,
        Some("minus") => t.envelope = Envelope::Minus,
        Some(other) => return Err(PyValueError::new_err(format!("sign must be 'plus' or 'minus', got {other:?}"))),
    }
    let (s, rep) = py
        .detach(|| {
            let s = angular::angular_spectrum(&spec.inner.angular, basis, 1e-8)?;
            let rep = oscillation::count_report(&s, &t, &e_grid, CountOptions { tol, exhaustive: all_modes })?;
            Ok((s, rep))
        })
        .map_err(core_err)?;
    Ok(CountReport {
        predicted_slope: oscillation::predicted_slope(&s),
        slope: rep.slope_fit.map(|f| f.slope),
        max_residual: rep.slope_fit.map(|f| f.max_abs_residual),
        e_grid: rep.e_grid,
        mode_indices: rep.mode_indices,
        multiplicities: rep.multiplicities,
        per_mode_counts: rep.per_mode_counts,
        totals: rep.totals,
        predicted: rep.predicted,
    })
}

/// (X, X′) of the decaying exterior solution at the given ascending radii.
#[pyfunction]
#[pyo3(signature = (mu, lam, radii, dimension = 3, tol = 1e-12))]
fn exterior_solution(py: Python<'_>, mu: f64, lam: f64, radii: Vec<f64>, dimension: usize, tol: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let opts = ExteriorOptions {
        tol,
        ..ExteriorOptions::default()
    };
    let sol = py.detach(|| exterior::evaluate_exterior_on(mu, dimension, lam, &radii, &opts)).map_err(core_err)?;
    let scale = sol.log_scale.exp();
    let x = sol.mantissa.iter().map(|u| u * scale).collect();
    let dx = sol.r_derivative.iter().zip(&sol.r).map(|(v, r)| v / r * scale).collect();
    Ok((x, dx))
}

/// Radial model with one critical sector.
#[pyclass(frozen, skip_from_py_object, module = "invsq")]
#[derive(Clone)]
pub struct InteriorModel {
    inner: ladder::InteriorModel,
}

#[pymethods]
impl InteriorModel {
    /// Constant coupling with ladder ratio σ = 1/2, r₀ = 1, s-wave only.
    #[staticmethod]
    fn sigma_half() -> Self {
        Self {
            inner: ladder::InteriorModel::sigma_half(),
        }
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.inner.r0
    }

    #[getter]
    fn mu1(&self) -> PyResult<f64> {
        let s = self.inner.critical_sector().map_err(core_err)?;
        Ok(self.inner.sectors[s].mode.mu)
    }
}

#[pyclass(frozen, module = "invsq")]
pub struct Ladder {
    model: ladder::InteriorModel,
    inner: ladder::EigenLadder,
}

#[pymethods]
impl Ladder {
    #[getter]
    fn n(&self) -> Vec<usize> {
        self.inner.n.clone()
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.inner.lambda.clone()
    }

    #[getter]
    fn xi(&self) -> Vec<f64> {
        self.inner.xi.clone()
    }

    #[getter]
    fn ratios(&self) -> Vec<f64> {
        self.inner.ratios.clone()
    }

    #[getter]
    fn a_estimates(&self) -> Vec<f64> {
        self.inner.a_estimates.clone()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn xi_onset(&self) -> Option<usize> {
        self.inner.xi_onset
    }

    /// Regression slope of ln λ_n over n_lo ≤ n ≤ n_hi.
    fn log_slope(&self, n_lo: usize, n_hi: usize) -> PyResult<f64> {
        self.inner.log_slope(n_lo, n_hi).map_err(core_err)
    }

    /// Equal-tail annulus holding 1 − ε of the n-th eigenfunction's mass.
    #[pyo3(signature = (n, epsilon = 0.1))]
    fn localization<'py>(&self, py: Python<'py>, n: usize, epsilon: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = py
            .detach(|| ladder::localization(&self.model, &self.inner, n, epsilon, &LadderOptions::default()))
            .map_err(core_err)?;
        let d = PyDict::new(py);
        d.set_item("n", r.n)?;
        d.set_item("lambda", r.lambda)?;
        d.set_item("mass_fraction", r.mass_fraction)?;
        d.set_item("annulus", r.annulus)?;
        d.set_item("c_minus", r.c_minus)?;
        d.set_item("c_plus", r.c_plus)?;
        d.set_item("interior_fraction", r.interior_fraction)?;
        Ok(d)
    }
}

/// Eigenvalues λ_1 > λ_2 > ... of the critical sector up to n_max.
#[pyfunction]
#[pyo3(signature = (model, n_max = 25))]
fn compute_ladder(py: Python<'_>, model: &InteriorModel, n_max: usize) -> PyResult<Ladder> {
    let m = model.inner.clone();
    let inner = py.detach(|| ladder::compute_ladder(&m, n_max, &LadderOptions::default())).map_err(core_err)?;
    Ok(Ladder { model: m, inner })
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "invsq")]
#[derive(Clone)]
pub struct ResidualRow {
    n: usize,
    lambda_: f64,
    rho: f64,
    xi: f64,
    residual: f64,
    ratio: f64,
    phi1: f64,
    norm: f64,
}

/// Approximate eigenpairs for labels n_lo..=n_hi and their residuals.
#[pyfunction]
#[pyo3(signature = (model, n_lo, n_hi, delta = approxefn::DEFAULT_DELTA, mode_cut = 1, psi = None))]
fn phi_residual(py: Python<'_>, model: &InteriorModel, n_lo: usize, n_hi: usize, delta: f64, mode_cut: usize, psi: Option<Vec<f64>>) -> PyResult<Vec<ResidualRow>> {
    let cfg = PhiConfig {
        delta,
        mode_cut,
        psi: psi.unwrap_or_else(|| PhiConfig::default().psi),
    };
    let ns: Vec<usize> = (n_lo..=n_hi).collect();
    let rows = py
        .detach(|| {
            let opts = approxefn::default_options();
            let pd = ladder::PhaseData::new(&model.inner, 12, &opts)?;
            approxefn::residual_sweep(&model.inner, &pd, &ns, &cfg, &opts)
        })
        .map_err(core_err)?;
    Ok(rows
        .into_iter()
        .map(|r| ResidualRow {
            n: r.n,
            lambda_: r.lambda,
            rho: r.rho,
            xi: r.xi,
            residual: r.residual,
            ratio: r.ratio,
            phi1: r.phi1,
            norm: r.norm,
        })
        .collect())
}

/// Zero counts at critical coupling with the oscillating counterexample perturbation.
#[pyfunction]
#[pyo3(signature = (e_grid, tol = oscillation::DEFAULT_ODE_TOL))]
fn counterexample_counts(py: Python<'_>, e_grid: Vec<f64>, tol: f64) -> PyResult<Vec<u64>> {
    py.detach(|| {
        let t = CounterexampleT::default_construction()?.perturbation();
        counterexamples::sharpness_experiment(&t, 3, &e_grid, tol)
    })
    .map_err(core_err)
}

/// λ_min and counts for the even and odd hemisphere potentials.
#[pyfunction]
#[pyo3(signature = (epsilon = 0.01, e_grid = None, basis = angular::DEFAULT_BASIS))]
fn hemisphere<'py>(py: Python<'py>, epsilon: f64, e_grid: Option<Vec<f64>>, basis: usize) -> PyResult<Bound<'py, PyDict>> {
    let grid = e_grid.unwrap_or_else(counterexamples::hemisphere_e_grid);
    let r = py
        .detach(|| counterexamples::hemisphere_experiment(epsilon, &grid, basis, oscillation::DEFAULT_ODE_TOL))
        .map_err(core_err)?;
    let d = PyDict::new(py);
    d.set_item("lambda_min_even", r.lambda_min_even)?;
    d.set_item("lambda_min_odd", r.lambda_min_odd)?;
    d.set_item("e_grid", r.e_grid)?;
    d.set_item("counts_even", r.counts_even)?;
    d.set_item("counts_odd", r.counts_odd)?;
    d.set_item("predicted_even", r.predicted_even)?;
    Ok(d)
}

#[pymodule]
fn invsq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", invsq_core::VERSION)?;
    m.add_class::<PotentialSpec>()?;
    m.add_class::<Mode>()?;
    m.add_class::<CountReport>()?;
    m.add_class::<InteriorModel>()?;
    m.add_class::<Ladder>()?;
    m.add_class::<ResidualRow>()?;
    m.add_function(wrap_pyfunction!(angular_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(count, m)?)?;
    m.add_function(wrap_pyfunction!(exterior_solution, m)?)?;
    m.add_function(wrap_pyfunction!(compute_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(phi_residual, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_counts, m)?)?;
    m.add_function(wrap_pyfunction!(hemisphere, m)?)?;
    Ok(())
}
