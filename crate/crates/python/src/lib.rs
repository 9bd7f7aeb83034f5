//! Python bindings. Matrices cross the boundary as nested lists of complex
//! numbers; anything indexable the same way (numpy arrays included) is
//! accepted as input.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use vnh::bbgky::{
    additive_dispersion, average_particle_number, correlation_from_marginals, marginals_from_density,
    solve_bbgky_cumulant, MarginalState,
};
use vnh::cumulants::{cumulant_matrix, CumulantOptions};
use vnh::evolution::evolve_density_sequence;
use vnh::hierarchy::{cluster_expand, cluster_invert, oracle_solution, solve_chaos, solve_hierarchy};
use vnh::partitions::{bell, partition_alternating_sum, stirling2};
use vnh::random::random_spec;
use vnh::verify::{run_suite, SuiteContext};
use vnh::{
    CMatrix, CorrelationState, DensityState, Dynamics, Error, OperatorSequence, SystemSpec, C64,
};

type Rows = Vec<Vec<C64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Capacity { .. } | Error::Overflow(_) => PyOverflowError::new_err(e.to_string()),
        Error::Numerical(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Rows) -> PyResult<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn to_rows(m: &CMatrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn sequence(components: Vec<Rows>, scalar0: f64) -> PyResult<OperatorSequence> {
    let first = components.first().ok_or_else(|| PyValueError::new_err("need at least one component"))?;
    let d = first.len();
    let rest = components.into_iter().map(to_matrix).collect::<PyResult<_>>()?;
    OperatorSequence::plain(d, C64::new(scalar0, 0.0), rest).map_err(py_err)
}

/// A finite-dimensional many-particle system: one-body Hamiltonian and
/// symmetric k-body potentials.
#[pyclass(name = "System", frozen)]
struct PySystem {
    dynamics: Arc<Dynamics>,
}

impl PySystem {
    fn from_spec(spec: SystemSpec) -> Self {
        Self { dynamics: Arc::new(Dynamics::new(spec)) }
    }

    fn spec(&self) -> &SystemSpec {
        self.dynamics.spec()
    }
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (one_body, potentials = BTreeMap::new(), hbar = 1.0))]
    fn new(one_body: Rows, potentials: BTreeMap<usize, Rows>, hbar: f64) -> PyResult<Self> {
        let h1 = to_matrix(one_body)?;
        let pots = potentials.into_iter().map(|(k, m)| Ok((k, to_matrix(m)?))).collect::<PyResult<_>>()?;
        Ok(Self::from_spec(SystemSpec::new(h1.nrows(), hbar, h1, pots).map_err(py_err)?))
    }

    /// Seeded GUE one-body part and symmetric potentials of the given orders.
    #[staticmethod]
    #[pyo3(signature = (seed, orders, dim_single = 2, coupling = 1.0))]
    fn random(seed: u64, orders: Vec<usize>, dim_single: usize, coupling: f64) -> PyResult<Self> {
        Ok(Self::from_spec(random_spec(seed, dim_single, &orders, coupling).map_err(py_err)?))
    }

    fn without_interaction(&self) -> Self {
        Self::from_spec(self.spec().without_interaction())
    }

    #[getter]
    fn dim_single(&self) -> usize {
        self.spec().dim_single()
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.spec().hbar()
    }

    #[getter]
    fn orders(&self) -> Vec<usize> {
        self.spec().orders()
    }

    fn hamiltonian(&self, n: usize) -> PyResult<Rows> {
        Ok(to_rows(&self.dynamics.hamiltonian(n).map_err(py_err)?))
    }

    /// `e^{-itH/ħ} f e^{itH/ħ}` on `n` particles.
    fn evolve(&self, t: f64, n: usize, f: Rows) -> PyResult<Rows> {
        Ok(to_rows(&self.dynamics.evolve(t, n, &to_matrix(f)?).map_err(py_err)?))
    }

    /// Cumulant of the evolution over clusters given as slot lists.
    fn cumulant(&self, t: f64, clusters: Vec<Vec<usize>>, f: Rows) -> PyResult<Rows> {
        let m = cumulant_matrix(&self.dynamics, t, &clusters, &to_matrix(f)?, CumulantOptions::default());
        Ok(to_rows(&m.map_err(py_err)?))
    }

    fn __repr__(&self) -> String {
        format!("System(dim_single={}, orders={:?}, hbar={})", self.dim_single(), self.orders(), self.hbar())
    }
}

/// Correlation operators `g_1..g_n`.
#[pyclass(name = "CorrelationState", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCorrelation {
    inner: CorrelationState,
}

#[pymethods]
impl PyCorrelation {
    /// `components[k]` is the (k+1)-particle correlation.
    #[new]
    fn new(components: Vec<Rows>) -> PyResult<Self> {
        Ok(Self { inner: CorrelationState::new(sequence(components, 0.0)?).map_err(py_err)? })
    }

    /// One-particle correlation only.
    #[staticmethod]
    fn chaos(g1: Rows, n_max: usize) -> PyResult<Self> {
        Ok(Self { inner: CorrelationState::chaos(&to_matrix(g1)?, n_max).map_err(py_err)? })
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max()
    }

    fn component(&self, n: usize) -> PyResult<Rows> {
        if n == 0 || n > self.inner.n_max() {
            return Err(PyValueError::new_err(format!("component {n} outside 1..={}", self.inner.n_max())));
        }
        Ok(to_rows(self.inner.component(n)))
    }

    /// Largest componentwise trace-norm difference.
    fn distance(&self, other: &PyCorrelation) -> PyResult<f64> {
        self.inner.distance(&other.inner).map_err(py_err)
    }

    fn expand(&self) -> PyResult<PyDensity> {
        Ok(PyDensity { inner: cluster_expand(&self.inner).map_err(py_err)? })
    }

    fn __repr__(&self) -> String {
        format!("CorrelationState(n_max={}, dim_single={})", self.n_max(), self.inner.seq().dim_single())
    }
}

/// Density sequence `(1, D_1, .., D_n)` of a state with a variable number
/// of particles.
#[pyclass(name = "DensityState", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDensity {
    inner: DensityState,
}

impl PyDensity {
    fn marginal_state(&self) -> PyResult<MarginalState> {
        marginals_from_density(&self.inner).map_err(py_err)
    }
}

#[pymethods]
impl PyDensity {
    /// `components[k]` is `D_{k+1}`; with `physical` every component must
    /// be a density operator.
    #[new]
    #[pyo3(signature = (components, physical = false))]
    fn new(components: Vec<Rows>, physical: bool) -> PyResult<Self> {
        let seq = sequence(components, 1.0)?;
        let inner = if physical { DensityState::physical(seq) } else { DensityState::new(seq) };
        Ok(Self { inner: inner.map_err(py_err)? })
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max()
    }

    fn component(&self, n: usize) -> PyResult<Rows> {
        if n == 0 || n > self.inner.n_max() {
            return Err(PyValueError::new_err(format!("component {n} outside 1..={}", self.inner.n_max())));
        }
        Ok(to_rows(self.inner.component(n)))
    }

    /// Correlations of this state, optionally padded to a larger cutoff.
    #[pyo3(signature = (cutoff = None))]
    fn correlations(&self, cutoff: Option<usize>) -> PyResult<PyCorrelation> {
        let padded = match cutoff {
            Some(c) => DensityState::new(self.inner.seq().with_cutoff(c).map_err(py_err)?).map_err(py_err)?,
            None => self.inner.clone(),
        };
        Ok(PyCorrelation { inner: cluster_invert(&padded).map_err(py_err)? })
    }

    fn evolve(&self, system: &PySystem, t: f64) -> PyResult<PyDensity> {
        let seq = evolve_density_sequence(&system.dynamics, self.inner.seq(), t).map_err(py_err)?;
        Ok(PyDensity { inner: DensityState::new(seq).map_err(py_err)? })
    }

    /// Reduced `s`-particle operator `F_s`.
    fn marginal(&self, s: usize) -> PyResult<Rows> {
        let f = self.marginal_state()?;
        Ok(to_rows(f.component_op(s).map_err(py_err)?.matrix()))
    }

    /// `s`-particle correlation of the marginals.
    fn marginal_correlation(&self, s: usize) -> PyResult<Rows> {
        Ok(to_rows(correlation_from_marginals(&self.marginal_state()?, s).map_err(py_err)?.matrix()))
    }

    fn partition_function(&self) -> PyResult<f64> {
        Ok(self.marginal_state()?.normalization())
    }

    fn particle_number(&self) -> PyResult<f64> {
        Ok(average_particle_number(&self.marginal_state()?).map_err(py_err)?.value)
    }

    /// Dispersion of the additive observable built from one-particle `a`.
    fn dispersion(&self, a: Rows) -> PyResult<f64> {
        additive_dispersion(&to_matrix(a)?, &self.marginal_state()?).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("DensityState(n_max={}, dim_single={})", self.n_max(), self.inner.seq().dim_single())
    }
}

/// Correlations at time `t` from the cumulant solution of the hierarchy.
#[pyfunction]
fn solve(system: &PySystem, g0: &PyCorrelation, t: f64) -> PyResult<PyCorrelation> {
    Ok(PyCorrelation { inner: solve_hierarchy(&system.dynamics, &g0.inner, t).map_err(py_err)? })
}

/// Correlations at time `t` by expanding, evolving every density and inverting.
#[pyfunction]
fn solve_oracle(system: &PySystem, g0: &PyCorrelation, t: f64) -> PyResult<PyCorrelation> {
    Ok(PyCorrelation { inner: oracle_solution(&system.dynamics, &g0.inner, t).map_err(py_err)? })
}

/// `n`-particle correlation at time `t` created from one-particle data.
#[pyfunction]
fn chaos(system: &PySystem, g1: Rows, n: usize, t: f64) -> PyResult<Rows> {
    Ok(to_rows(solve_chaos(&system.dynamics, &to_matrix(g1)?, n, t).map_err(py_err)?.matrix()))
}

/// Reduced `s`-particle operator at time `t`, evolved from the marginals of `d0`.
#[pyfunction]
fn marginal_at(system: &PySystem, d0: &PyDensity, s: usize, t: f64) -> PyResult<Rows> {
    let f0 = d0.marginal_state()?;
    Ok(to_rows(solve_bbgky_cumulant(&system.dynamics, &f0, s, t).map_err(py_err)?.matrix()))
}

/// Runs a property suite and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (suite, tol_scale = 1.0, seed = 42))]
fn verify<'py>(py: Python<'py>, suite: &str, tol_scale: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let ctx = SuiteContext { tol_scale, seed, ..Default::default() };
    let report = py.detach(|| run_suite(suite, &ctx)).map_err(py_err)?;
    let text = serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction(name = "partition_alternating_sum")]
fn py_alternating_sum(n: usize) -> PyResult<i64> {
    partition_alternating_sum(n).map_err(py_err)
}

#[pyfunction(name = "bell")]
fn py_bell(n: usize) -> PyResult<u64> {
    bell(n).map_err(py_err)
}

#[pyfunction(name = "stirling2")]
fn py_stirling2(n: usize, k: usize) -> PyResult<u64> {
    stirling2(n, k).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "vonneumann_hierarchy")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyCorrelation>()?;
    m.add_class::<PyDensity>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(chaos, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_at, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(py_alternating_sum, m)?)?;
    m.add_function(wrap_pyfunction!(py_bell, m)?)?;
    m.add_function(wrap_pyfunction!(py_stirling2, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
