//! Python bindings: grid fields, Lagrangians, the cell solver, envelopes,
//! aiming rollouts, the holonomic LP and the experiment runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use weakkam_core::aiming::{simulate_traced, AimingSchedule};
use weakkam_core::cell_solver::solve_cell_cascade;
use weakkam_core::envelope::{lower_envelope, upper_envelope, EnvelopeResult};
use weakkam_core::experiment::{is_usage_error, run, ExperimentConfig};
use weakkam_core::lagrangian::hamiltonian;
use weakkam_core::mather::{build_lp, solve_lp, HolonomyBasis};
use weakkam_core::process::{ControlledProcess, Partition};
use weakkam_core::{Error, GridScalarField, GridSpec, LagrangianSpec, TorusPoint, Vector, VelocityBox};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::BoxTooSmall { .. } | Error::Parse(_) | Error::Json(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn point(x: &[f64]) -> PyResult<TorusPoint> {
    TorusPoint::wrap(x).map_err(py_err)
}

fn vector(v: &[f64]) -> PyResult<Vector> {
    Vector::new(v).map_err(py_err)
}

/// Values of a scalar field on the uniform grid of `T^d`.
#[pyclass(frozen, skip_from_py_object, name = "GridField")]
#[derive(Clone)]
struct PyGridField {
    inner: GridScalarField,
}

#[pymethods]
impl PyGridField {
    #[new]
    fn new(d: usize, n: usize, values: Vec<f64>) -> PyResult<Self> {
        let grid = GridSpec::new(d, n).map_err(py_err)?;
        let inner = GridScalarField::new(grid, values).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let inner = GridScalarField::read_csv(text.as_bytes()).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.grid().dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.grid().n()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn interpolate(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.interpolate(&point(&x)?))
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }

    fn __repr__(&self) -> String {
        format!("GridField(d={}, n={})", self.d(), self.n())
    }
}

/// A Lagrangian `L(x, v) = kinetic(v) - V(x)` from one of the built-in
/// families, described by the same JSON as the experiment configs.
#[pyclass(frozen, skip_from_py_object, name = "Lagrangian")]
#[derive(Clone)]
struct PyLagrangian {
    inner: LagrangianSpec,
}

#[pymethods]
impl PyLagrangian {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let inner = LagrangianSpec::from_json(json).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family_name()
    }

    fn __call__(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.eval(&point(&x)?, &vector(&v)?))
    }

    /// `H(x, p)` maximized over a velocity lattice wide enough for `|p|`.
    #[pyo3(signature = (x, p, samples = 256))]
    fn hamiltonian(&self, x: Vec<f64>, p: Vec<f64>, samples: usize) -> PyResult<f64> {
        let p = vector(&p)?;
        let vbox = VelocityBox::for_slope(&self.inner, p.dim(), p.norm(), samples).map_err(py_err)?;
        hamiltonian(&self.inner, &point(&x)?, &p, &vbox).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| py_err(e.into()))
    }

    fn __repr__(&self) -> String {
        format!("Lagrangian({})", self.inner.family_name())
    }
}

/// Converged cell problem: `phi` normalized to minimum 0 and the estimate of
/// the effective Hamiltonian.
#[pyclass(frozen, name = "CellSolution")]
struct PyCellSolution {
    #[pyo3(get)]
    phi: PyGridField,
    #[pyo3(get)]
    hbar: f64,
    #[pyo3(get)]
    residual_sup: f64,
    #[pyo3(get)]
    iterations: usize,
}

#[pymethods]
impl PyCellSolution {
    fn __repr__(&self) -> String {
        format!("CellSolution(hbar={}, residual_sup={:e})", self.hbar, self.residual_sup)
    }
}

#[pyfunction]
#[pyo3(signature = (lagrangian, d, n, tol = 1e-5, max_iter = 2_000_000))]
fn solve_cell(
    py: Python<'_>,
    lagrangian: &PyLagrangian,
    d: usize,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyCellSolution> {
    let grid = GridSpec::new(d, n).map_err(py_err)?;
    let spec = lagrangian.inner.clone();
    let sol = py
        .detach(|| solve_cell_cascade(&spec, grid, tol, max_iter))
        .map_err(py_err)?;
    Ok(PyCellSolution {
        phi: PyGridField { inner: sol.phi },
        hbar: sol.hbar,
        residual_sup: sol.residual_sup,
        iterations: sol.iterations,
    })
}

fn envelope_tuple(e: EnvelopeResult) -> (f64, Vec<f64>, Vec<f64>) {
    (e.value, e.b.as_slice().to_vec(), e.p.as_slice().to_vec())
}

/// `(value, b, p)` of the lower Moreau–Yosida transform at `x`.
#[pyfunction]
fn lower_envelope_at(phi: &PyGridField, kappa: f64, x: Vec<f64>) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    lower_envelope(&phi.inner, kappa, &point(&x)?).map(envelope_tuple).map_err(py_err)
}

/// `(value, b, p)` of the upper Moreau–Yosida transform at `x`.
#[pyfunction]
fn upper_envelope_at(phi: &PyGridField, kappa: f64, x: Vec<f64>) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    upper_envelope(&phi.inner, kappa, &point(&x)?).map(envelope_tuple).map_err(py_err)
}

/// Piecewise-constant process: times, positions, velocities and cost.
#[pyclass(frozen, name = "Process")]
struct PyProcess {
    inner: ControlledProcess,
}

#[pymethods]
impl PyProcess {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn positions(&self) -> Vec<Vec<f64>> {
        self.inner.positions().iter().map(|x| x.as_slice().to_vec()).collect()
    }

    #[getter]
    fn velocities(&self) -> Vec<Vec<f64>> {
        self.inner.velocities().iter().map(|v| v.as_slice().to_vec()).collect()
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn total_functional(&self, phi: &PyGridField) -> f64 {
        self.inner.total_functional(&phi.inner)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.inner.segments()
    }
}

/// Proximal-aiming rollout from `y` over `[0, horizon]`. Without `steps`
/// the schedule for `epsilon` fixes both `kappa` and the partition.
#[pyfunction]
#[pyo3(signature = (phi, lagrangian, y, horizon, epsilon = 0.1, steps = None))]
fn aim(
    py: Python<'_>,
    phi: &PyGridField,
    lagrangian: &PyLagrangian,
    y: Vec<f64>,
    horizon: f64,
    epsilon: f64,
    steps: Option<usize>,
) -> PyResult<PyProcess> {
    let (phi, spec) = (&phi.inner, &lagrangian.inner);
    let schedule = AimingSchedule::new(spec, phi, epsilon).map_err(py_err)?;
    let partition = match steps {
        Some(n) => Partition::uniform(horizon, n),
        None => schedule.partition(horizon),
    }
    .map_err(py_err)?;
    let y = point(&y)?;
    let (inner, _) = py
        .detach(|| simulate_traced(y, phi, schedule.kappa, &partition, spec))
        .map_err(py_err)?;
    Ok(PyProcess { inner })
}

/// Optimum of the holonomic-measure LP (an estimate of `-Hbar`).
#[pyfunction]
#[pyo3(signature = (lagrangian, d, n, max_mode, velocity_radius = 4.0, velocity_samples = 128))]
fn mather_lp(
    py: Python<'_>,
    lagrangian: &PyLagrangian,
    d: usize,
    n: usize,
    max_mode: usize,
    velocity_radius: f64,
    velocity_samples: usize,
) -> PyResult<f64> {
    let grid = GridSpec::new(d, n).map_err(py_err)?;
    let vbox = VelocityBox::new(d, velocity_radius, velocity_samples).map_err(py_err)?;
    let basis = HolonomyBasis::new(d, max_mode).map_err(py_err)?;
    let problem = build_lp(&lagrangian.inner, grid, vbox, basis).map_err(py_err)?;
    py.detach(|| solve_lp(&problem)).map(|(v, _, _)| v).map_err(py_err)
}

/// Runs an experiment from its JSON config. Returns the report as a dict;
/// with `out` set, also writes every artifact there.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run_experiment<'py>(py: Python<'py>, config: &str, out: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_json(config).map_err(py_err)?;
    let outcome = py.detach(|| run(&cfg)).map_err(|e| {
        if is_usage_error(&e) {
            PyValueError::new_err(e.to_string())
        } else {
            py_err(e)
        }
    })?;
    if let Some(dir) = out {
        outcome.write(&dir).map_err(py_err)?;
    }
    let text = serde_json::to_string(&outcome.report).map_err(|e| py_err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))?.cast_into::<PyDict>().map_err(Into::into)
}

#[pymodule]
fn weakkam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridField>()?;
    m.add_class::<PyLagrangian>()?;
    m.add_class::<PyCellSolution>()?;
    m.add_class::<PyProcess>()?;
    m.add_function(wrap_pyfunction!(solve_cell, m)?)?;
    m.add_function(wrap_pyfunction!(lower_envelope_at, m)?)?;
    m.add_function(wrap_pyfunction!(upper_envelope_at, m)?)?;
    m.add_function(wrap_pyfunction!(aim, m)?)?;
    m.add_function(wrap_pyfunction!(mather_lp, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
