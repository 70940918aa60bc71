//! Python bindings: thin wrappers over the core solvers that trade in plain
//! lists of floats. Shapes are validated here so Python callers get
//! ValueError instead of a panic; a numerical blow-up maps to RuntimeError.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use acougrad_core::error::Error;
use acougrad_core::experiments::{synthesize_data, SynthesisMode};
use acougrad_core::forward::{
    solve_forward, trace_at_zero, FirstLayer, InitialData, NeumannMode, SchemeOptions,
    SchemeVariant,
};
use acougrad_core::gradient::{gradient_continuous, gradient_discrete, GradientBoundary};
use acougrad_core::grid::{CoefficientVector, Grid as CoreGrid, ObservedTrace};
use acougrad_core::objective::{landweber_run, run_inversion, DescentConfig, LineSearch};
use acougrad_core::transforms::{impedance_profile, impedance_to_potential, MediumProfile};
use acougrad_core::{adjoint, io, objective as obj};

fn err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn coeff_of(grid: CoreGrid, v: Vec<f64>) -> PyResult<CoefficientVector> {
    if v.len() != grid.nodes() {
        return Err(PyValueError::new_err(format!(
            "coefficient needs {} values (N + 1), got {}",
            grid.nodes(),
            v.len()
        )));
    }
    Ok(CoefficientVector {
        grid,
        values: v.into(),
    })
}

fn trace_of(grid: CoreGrid, v: Vec<f64>) -> PyResult<ObservedTrace> {
    if v.len() != grid.layers() {
        return Err(PyValueError::new_err(format!(
            "trace needs {} values (M + 1), got {}",
            grid.layers(),
            v.len()
        )));
    }
    Ok(ObservedTrace {
        grid,
        values: v.into(),
    })
}

fn scheme_of(variant: &str, start: &str, neumann: &str) -> PyResult<SchemeOptions> {
    let variant = match variant {
        "plain" => SchemeVariant::Plain,
        "hat" => SchemeVariant::HatPotential,
        other => {
            return Err(PyValueError::new_err(format!(
                "variant must be 'plain' or 'hat', got '{other}'"
            )))
        }
    };
    let first_layer = match start {
        "taylor" => FirstLayer::TaylorSecondOrder,
        "euler" => FirstLayer::EulerFirstOrder,
        other => {
            return Err(PyValueError::new_err(format!(
                "start must be 'taylor' or 'euler', got '{other}'"
            )))
        }
    };
    let neumann = match neumann {
        "mirror" => NeumannMode::MirrorGhost,
        "one-sided" => NeumannMode::OneSidedFirstOrder,
        other => {
            return Err(PyValueError::new_err(format!(
                "neumann must be 'mirror' or 'one-sided', got '{other}'"
            )))
        }
    };
    Ok(SchemeOptions {
        variant,
        first_layer,
        neumann,
    })
}

/// Uniform space-time grid over [0, L] x [0, T].
#[pyclass(name = "Grid", skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid {
    inner: CoreGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(length: f64, duration: f64, n: usize, m: usize) -> PyResult<Self> {
        Ok(PyGrid {
            inner: CoreGrid::new(length, duration, n, m).map_err(err)?,
        })
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length
    }
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }
    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }
    #[getter]
    fn cfl_ratio(&self) -> f64 {
        self.inner.cfl_ratio
    }

    /// Node coordinates x_0..x_N.
    fn x_nodes(&self) -> Vec<f64> {
        (0..self.inner.nodes()).map(|i| self.inner.x(i)).collect()
    }

    /// Layer times t_0..t_M.
    fn t_layers(&self) -> Vec<f64> {
        (0..self.inner.layers())
            .map(|j| self.inner.time(j))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(length={}, duration={}, n={}, m={})",
            self.inner.length, self.inner.duration, self.inner.n, self.inner.m
        )
    }
}

/// Outcome of an inversion run.
#[pyclass(name = "InversionResult")]
struct PyInversionResult {
    #[pyo3(get)]
    p_final: Vec<f64>,
    #[pyo3(get)]
    j_history: Vec<f64>,
    #[pyo3(get)]
    alpha_history: Vec<f64>,
    #[pyo3(get)]
    grad_norm_history: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    stop_reason: String,
}

impl PyInversionResult {
    fn from_state(state: acougrad_core::objective::InversionState) -> Self {
        PyInversionResult {
            p_final: state.iterate.values.to_vec(),
            j_history: state.j_history,
            alpha_history: state.alpha_history,
            grad_norm_history: state.grad_norm_history,
            iterations: state.n,
            stop_reason: state
                .stop_reason
                .map(|s| s.to_string())
                .unwrap_or_else(|| "none".into()),
        }
    }
}

/// Boundary trace u(0, t) of the forward problem with initial data p.
#[pyfunction]
#[pyo3(signature = (grid, p, variant = "plain", start = "taylor", neumann = "mirror"))]
fn forward_trace(
    grid: PyRef<'_, PyGrid>,
    p: Vec<f64>,
    variant: &str,
    start: &str,
    neumann: &str,
) -> PyResult<Vec<f64>> {
    let g = grid.inner;
    let p = coeff_of(g, p)?;
    let opts = scheme_of(variant, start, neumann)?;
    let y = solve_forward(g, &p, &InitialData::CoefficientAsInitial, opts).map_err(err)?;
    Ok(trace_at_zero(&y).values.to_vec())
}

/// Misfit J(p) against observed data.
#[pyfunction]
fn objective(grid: PyRef<'_, PyGrid>, p: Vec<f64>, data: Vec<f64>) -> PyResult<f64> {
    let g = grid.inner;
    let p = coeff_of(g, p)?;
    let f = trace_of(g, data)?;
    obj::objective(g, &p, &f, SchemeOptions::default()).map_err(err)
}

/// Misfit gradient at p, by the adjoint method.
#[pyfunction]
#[pyo3(signature = (grid, p, data, formulation = "discrete", variant = "plain", start = "taylor", neumann = "mirror"))]
fn gradient(
    grid: PyRef<'_, PyGrid>,
    p: Vec<f64>,
    data: Vec<f64>,
    formulation: &str,
    variant: &str,
    start: &str,
    neumann: &str,
) -> PyResult<Vec<f64>> {
    let g = grid.inner;
    let p = coeff_of(g, p)?;
    let f = trace_of(g, data)?;
    let opts = scheme_of(variant, start, neumann)?;
    let y = solve_forward(g, &p, &InitialData::CoefficientAsInitial, opts).map_err(err)?;
    let r = adjoint::residual(&trace_at_zero(&y), &f).map_err(err)?;
    let grad = match formulation {
        "discrete" => {
            let phi = adjoint::solve_adjoint_discrete(g, &p, &r, opts).map_err(err)?;
            gradient_discrete(&y, &phi, opts, GradientBoundary::HalfCellExact).map_err(err)?
        }
        "continuous" => {
            let psi = adjoint::solve_adjoint_continuous(g, &p, &r).map_err(err)?;
            gradient_continuous(&y, &psi, GradientBoundary::HalfCellExact).map_err(err)?
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "formulation must be 'discrete' or 'continuous', got '{other}'"
            )))
        }
    };
    Ok(grad.values.to_vec())
}

/// Observed data from a known coefficient, optionally noisy.
#[pyfunction]
#[pyo3(signature = (grid, q_true, noise = 0.0, seed = 0, mode = "same-grid"))]
fn synthesize(
    grid: PyRef<'_, PyGrid>,
    q_true: Vec<f64>,
    noise: f64,
    seed: u64,
    mode: &str,
) -> PyResult<Vec<f64>> {
    let g = grid.inner;
    let q = coeff_of(g, q_true)?;
    let mode = match mode {
        "same-grid" => SynthesisMode::SameGrid,
        "refined-2x" => SynthesisMode::Refined2x,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'same-grid' or 'refined-2x', got '{other}'"
            )))
        }
    };
    let f = synthesize_data(g, &q, noise, seed, mode, SchemeOptions::default()).map_err(err)?;
    Ok(f.values.to_vec())
}

/// Line-searched descent from p0 (zero when omitted).
#[pyfunction]
#[pyo3(signature = (grid, data, p0 = None, max_iter = 200, line_search = "backtracking"))]
fn invert(
    grid: PyRef<'_, PyGrid>,
    data: Vec<f64>,
    p0: Option<Vec<f64>>,
    max_iter: usize,
    line_search: &str,
) -> PyResult<PyInversionResult> {
    let g = grid.inner;
    let f = trace_of(g, data)?;
    let start = match p0 {
        Some(v) => coeff_of(g, v)?,
        None => CoefficientVector::zeros(g),
    };
    let cfg = DescentConfig {
        max_iter,
        line_search: match line_search {
            "backtracking" => LineSearch::Backtracking,
            "golden" => LineSearch::GoldenSection,
            "quadratic" => LineSearch::QuadraticFit,
            other => {
                return Err(PyValueError::new_err(format!(
                    "line_search must be 'backtracking', 'golden', or 'quadratic', got '{other}'"
                )))
            }
        },
        ..DescentConfig::default()
    };
    let state = run_inversion(g, start, &f, &cfg).map_err(err)?;
    Ok(PyInversionResult::from_state(state))
}

/// Fixed-step iteration from p0 (zero when omitted).
#[pyfunction]
#[pyo3(signature = (grid, data, alpha, p0 = None, max_iter = 200))]
fn landweber(
    grid: PyRef<'_, PyGrid>,
    data: Vec<f64>,
    alpha: f64,
    p0: Option<Vec<f64>>,
    max_iter: usize,
) -> PyResult<PyInversionResult> {
    let g = grid.inner;
    let f = trace_of(g, data)?;
    let start = match p0 {
        Some(v) => coeff_of(g, v)?,
        None => CoefficientVector::zeros(g),
    };
    let cfg = DescentConfig {
        max_iter,
        landweber_alpha: alpha,
        ..DescentConfig::default()
    };
    let state = landweber_run(g, start, &f, &cfg).map_err(err)?;
    Ok(PyInversionResult::from_state(state))
}

/// Travel-time coordinates of depth samples with speeds c.
#[pyfunction]
fn travel_time(z: Vec<f64>, c: Vec<f64>) -> PyResult<Vec<f64>> {
    let n = z.len();
    let m = MediumProfile::new(z.into(), c.into(), vec![1.0; n].into()).map_err(err)?;
    Ok(acougrad_core::transforms::travel_time_map(&m).to_vec())
}

/// Potential q on `grid` from a depth-domain medium (z, c, rho).
#[pyfunction]
fn potential_from_medium(
    grid: PyRef<'_, PyGrid>,
    z: Vec<f64>,
    c: Vec<f64>,
    rho: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let m = MediumProfile::new(z.into(), c.into(), rho.into()).map_err(err)?;
    let prof = impedance_profile(&m).map_err(err)?;
    let q = impedance_to_potential(&prof, grid.inner).map_err(err)?;
    Ok(q.values.to_vec())
}

/// Adjoint-vs-finite-difference check at p; returns the report as JSON.
#[pyfunction]
fn gradcheck_json(
    grid: PyRef<'_, PyGrid>,
    p: Vec<f64>,
    data: Vec<f64>,
    eps: Vec<f64>,
) -> PyResult<String> {
    let g = grid.inner;
    let p = coeff_of(g, p)?;
    let f = trace_of(g, data)?;
    let rep =
        acougrad_core::experiments::gradcheck_report(g, &p, &f, &eps, SchemeOptions::default())
            .map_err(err)?;
    Ok(io::render_report_json(&rep))
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pymodule]
fn acougrad_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyInversionResult>()?;
    m.add_function(wrap_pyfunction!(forward_trace, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(invert, m)?)?;
    m.add_function(wrap_pyfunction!(landweber, m)?)?;
    m.add_function(wrap_pyfunction!(travel_time, m)?)?;
    m.add_function(wrap_pyfunction!(potential_from_medium, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck_json, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
