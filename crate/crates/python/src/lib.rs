//! Python bindings: `import stabindex_py`.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use stabindex::analytic::{self, StabilityClass};
use stabindex::config::{DEFAULT_SAMPLES, DEFAULT_SEED};
use stabindex::fit::FitOptions;
use stabindex::measure::{self, default_ladder, default_local_ladder, uniform_rungs, MeasureOptions, Window};
use stabindex::output::ladder_csv;
use stabindex::sampling::Sampler;
use stabindex::verify::{cases_for, render_table, run_case};
use stabindex::{integrator, Error, ExtendedReal, Family, IntegratorConfig, MeasureSample, State, SystemSpec};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn sampler(name: &str) -> PyResult<Sampler> {
    name.parse().map_err(py_err)
}

/// A planar system from one of the supported families.
#[pyclass(name = "System", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PySystem(SystemSpec);

#[pymethods]
impl PySystem {
    /// Parses `"power-attract a=2"`, `"power-attract a=2 p=2"`, `"phi"`, ...
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        spec.parse().map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn power_attract(a: f64) -> PyResult<Self> {
        SystemSpec::power_attract(a).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn power_repel(a: f64) -> PyResult<Self> {
        SystemSpec::power_repel(a).map(Self).map_err(py_err)
    }

    /// Power-attract after the change of variables `x = u^p`.
    #[staticmethod]
    fn transformed(a: f64, p: f64) -> PyResult<Self> {
        SystemSpec::transformed(a, p).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn phi() -> Self {
        Self(SystemSpec::phi_system())
    }

    #[staticmethod]
    fn piecewise() -> Self {
        Self(SystemSpec::piecewise())
    }

    /// The power-law system whose index is `sigma`.
    #[staticmethod]
    fn for_target_sigma(sigma: f64) -> PyResult<Self> {
        analytic::a_for_target_sigma(sigma).map(Self).map_err(py_err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family.name()
    }

    #[getter]
    fn a(&self) -> Option<f64> {
        self.0.exponent()
    }

    #[getter]
    fn p(&self) -> Option<f64> {
        self.0.p
    }

    /// Velocity `(dx, dy)` at `(x, y)`.
    fn rhs(&self, x: f64, y: f64) -> (f64, f64) {
        let v = self.0.rhs(State::new(x, y));
        (v.dx, v.dy)
    }

    /// Closed-form `(sigma, sigma_loc)`; infinite values come back as `±inf`.
    fn analytic_sigma(&self) -> (f64, f64) {
        let (g, l) = analytic::analytic_sigma(&self.0);
        (g.to_f64(), l.to_f64())
    }

    /// Stability class of the closed-form index.
    fn stability_class(&self) -> &'static str {
        StabilityClass::from_sigma(analytic::analytic_sigma(&self.0).0).label()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("System({:?})", self.0.to_string())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

/// One rung: the fraction of `[-eps, eps]²` (intersected with the δ-ball for
/// local runs) lying in the basin.
#[pyclass(name = "Sample", frozen, from_py_object)]
#[derive(Clone)]
struct PySample(MeasureSample);

#[pymethods]
impl PySample {
    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps
    }

    #[getter]
    fn delta(&self) -> Option<f64> {
        self.0.delta
    }

    #[getter]
    fn n_total(&self) -> u64 {
        self.0.n_total
    }

    #[getter]
    fn n_basin(&self) -> u64 {
        self.0.n_basin
    }

    #[getter]
    fn n_local(&self) -> Option<u64> {
        self.0.n_local
    }

    #[getter]
    fn n_timeout(&self) -> u64 {
        self.0.n_timeout
    }

    #[getter]
    fn fraction(&self) -> f64 {
        self.0.fraction()
    }

    /// The fraction the fit uses: `Σ_{ε,δ}` for local runs, else `Σ_ε`.
    #[getter]
    fn fitted_fraction(&self) -> f64 {
        self.0.fitted_fraction()
    }

    #[getter]
    fn stderr(&self) -> f64 {
        self.0.binomial_stderr()
    }

    fn __repr__(&self) -> String {
        format!("Sample(eps={}, n_total={}, fraction={})", self.0.eps, self.0.n_total, self.0.fitted_fraction())
    }
}

/// Fitted indices; infinite slopes come back as `±inf`.
#[pyclass(name = "IndexEstimate", frozen)]
struct PyIndexEstimate(stabindex::IndexEstimate);

fn ext(v: ExtendedReal) -> f64 {
    v.to_f64()
}

#[pymethods]
impl PyIndexEstimate {
    #[getter]
    fn sigma(&self) -> f64 {
        ext(self.0.sigma)
    }

    #[getter]
    fn sigma_minus(&self) -> f64 {
        ext(self.0.sigma_minus)
    }

    #[getter]
    fn sigma_plus(&self) -> f64 {
        ext(self.0.sigma_plus)
    }

    #[getter]
    fn stderr(&self) -> f64 {
        self.0.slope_stderr
    }

    #[getter]
    fn stability_class(&self) -> &'static str {
        StabilityClass::from_sigma(self.0.sigma).label()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    #[getter]
    fn ladder(&self) -> Vec<PySample> {
        self.0.ladder.iter().cloned().map(PySample).collect()
    }

    /// The ladder in the `ladder.csv` format.
    fn ladder_csv(&self) -> String {
        ladder_csv(&self.0.ladder)
    }

    fn __repr__(&self) -> String {
        format!("IndexEstimate(sigma={}, stderr={:.4})", self.0.sigma, self.0.slope_stderr)
    }
}

fn measure_options(spec: &SystemSpec, sampler_name: &str, cones: bool) -> PyResult<MeasureOptions> {
    Ok(MeasureOptions { sampler: sampler(sampler_name)?, oracle_cones: cones, ..MeasureOptions::for_spec(spec) })
}

/// Basin label of `(x, y)`: `"in_basin"`, `"in_local_basin"` or `"out_of_basin"`.
#[pyfunction]
#[pyo3(signature = (system, x, y, delta=None, cones=true))]
fn classify(py: Python<'_>, system: PySystem, x: f64, y: f64, delta: Option<f64>, cones: bool) -> PyResult<&'static str> {
    let spec = system.0;
    let cfg = IntegratorConfig::for_spec(&spec).with_delta(delta);
    py.detach(|| integrator::classify(&spec, State::new(x, y), &cfg, cones))
        .map(|c| c.label.name())
        .map_err(py_err)
}

/// Integrates from `(x, y)`; returns `(outcome, t_exit, x_final, y_final, steps)`.
#[pyfunction]
#[pyo3(signature = (system, x, y, delta=None))]
fn integrate(py: Python<'_>, system: PySystem, x: f64, y: f64, delta: Option<f64>) -> PyResult<(String, f64, f64, f64, u64)> {
    let spec = system.0;
    let cfg = IntegratorConfig::for_spec(&spec).with_delta(delta);
    let o = py.detach(|| stabindex::integrate(&spec, State::new(x, y), &cfg)).map_err(py_err)?;
    Ok((format!("{:?}", o.kind), o.t_exit, o.final_state.x, o.final_state.y, o.steps))
}

#[pyfunction]
#[pyo3(signature = (system, eps, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED, delta=None, sampler="sobol"))]
fn estimate_fraction(
    py: Python<'_>,
    system: PySystem,
    eps: f64,
    samples: u64,
    seed: u64,
    delta: Option<f64>,
    sampler: &str,
) -> PyResult<PySample> {
    let spec = system.0;
    let opts = measure_options(&spec, sampler, true)?;
    py.detach(|| stabindex::estimate_fraction(&spec, eps, delta, samples, seed, &opts))
        .map(PySample)
        .map_err(py_err)
}

/// Global index from a ladder of neighbourhood radii.
#[pyfunction]
#[pyo3(signature = (system, eps_ladder=None, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED, sampler="sobol"))]
fn estimate_index(
    py: Python<'_>,
    system: PySystem,
    eps_ladder: Option<Vec<f64>>,
    samples: u64,
    seed: u64,
    sampler: &str,
) -> PyResult<PyIndexEstimate> {
    let spec = system.0;
    let opts = measure_options(&spec, sampler, true)?;
    let rungs = uniform_rungs(&eps_ladder.unwrap_or_else(default_ladder), samples);
    let fit = FitOptions::for_sampler(opts.sampler);
    py.detach(|| measure::estimate_index(&spec, &rungs, seed, &opts, &fit))
        .map(PyIndexEstimate)
        .map_err(py_err)
}

/// Local index at each δ; returns `[(delta, IndexEstimate)]` in decreasing δ.
#[pyfunction]
#[pyo3(signature = (system, deltas, eps_ladder=None, samples=DEFAULT_SAMPLES, seed=DEFAULT_SEED, sampler="sobol"))]
fn local_index(
    py: Python<'_>,
    system: PySystem,
    deltas: Vec<f64>,
    eps_ladder: Option<Vec<f64>>,
    samples: u64,
    seed: u64,
    sampler: &str,
) -> PyResult<Vec<(f64, PyIndexEstimate)>> {
    let spec = system.0;
    let opts = measure_options(&spec, sampler, true)?;
    let fit = FitOptions::for_sampler(opts.sampler);
    let rungs = |d: f64| uniform_rungs(&eps_ladder.clone().unwrap_or_else(|| default_local_ladder(d)), samples);
    let report = py.detach(|| measure::local_index(&spec, &deltas, rungs, seed, &opts, &fit)).map_err(py_err)?;
    Ok(report.per_delta.into_iter().map(|d| (d.delta, PyIndexEstimate(d.estimate))).collect())
}

/// Labels an `nx × ny` grid of cell centres; returns `[(x, y, label)]`.
#[pyfunction]
#[pyo3(signature = (system, window, nx, ny, delta=None))]
fn basin_map(
    py: Python<'_>,
    system: PySystem,
    window: (f64, f64, f64, f64),
    nx: usize,
    ny: usize,
    delta: Option<f64>,
) -> PyResult<Vec<(f64, f64, &'static str)>> {
    let spec = system.0;
    let (x_min, x_max, y_min, y_max) = window;
    let opts = MeasureOptions::for_spec(&spec);
    let cells = py
        .detach(|| measure::basin_map(&spec, Window { x_min, x_max, y_min, y_max }, nx, ny, delta, &opts))
        .map_err(py_err)?;
    Ok(cells.into_iter().map(|c| (c.x, c.y, c.label.name())).collect())
}

/// Runs the reference checks for `system`; returns `(passed, table)`.
#[pyfunction]
#[pyo3(signature = (system, eps_ladder=None, samples=None, seed=DEFAULT_SEED, sampler="sobol"))]
fn verify(
    py: Python<'_>,
    system: PySystem,
    eps_ladder: Option<Vec<f64>>,
    samples: Option<u64>,
    seed: u64,
    sampler: &str,
) -> PyResult<(bool, String)> {
    let sampler = self::sampler(sampler)?;
    let cases: Vec<_> = cases_for(&system.0)
        .into_iter()
        .map(|c| c.with_overrides(eps_ladder.as_deref(), samples))
        .collect();
    let results = py
        .detach(|| cases.iter().map(|c| run_case(c, seed, sampler)).collect::<stabindex::Result<Vec<_>>>())
        .map_err(py_err)?;
    let rows: Vec<_> = results.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    Ok((results.iter().all(|r| r.passed()), render_table(&rows)))
}

/// Names of the supported families.
#[pyfunction]
fn families() -> Vec<&'static str> {
    Family::ALL.iter().map(|f| f.name()).collect()
}

#[pymodule]
fn stabindex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyIndexEstimate>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_index, m)?)?;
    m.add_function(wrap_pyfunction!(local_index, m)?)?;
    m.add_function(wrap_pyfunction!(basin_map, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(families, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
