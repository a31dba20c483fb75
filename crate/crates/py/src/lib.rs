//! Python bindings: the main types and operations of the laboratory, enough
//! to build weight models, evaluate the paraproduct quadratic form both
//! ways, query the kernel constants and drive whole experiments.

use a2lab::experiment::{self, Delta0Rule, ExperimentSpec, NmaxRule};
use a2lab::forge::{ConstructionParams, SeedConvention, WeightModel};
use a2lab::mat2;
use a2lab::mat2::Vec2;
use a2lab::operators;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Symmetric 2x2 matrix (three stored entries).
#[pyclass(name = "SymMat2", from_py_object)]
#[derive(Clone, Copy)]
struct PySymMat2 {
    inner: mat2::SymMat2,
}

#[pymethods]
impl PySymMat2 {
    #[new]
    fn new(a11: f64, a12: f64, a22: f64) -> Self {
        PySymMat2 { inner: mat2::SymMat2::new(a11, a12, a22) }
    }

    #[staticmethod]
    fn identity() -> Self {
        PySymMat2 { inner: mat2::SymMat2::identity() }
    }

    #[staticmethod]
    fn diag(a: f64, b: f64) -> Self {
        PySymMat2 { inner: mat2::SymMat2::diag(a, b) }
    }

    #[getter]
    fn a11(&self) -> f64 {
        self.inner.a11
    }

    #[getter]
    fn a12(&self) -> f64 {
        self.inner.a12
    }

    #[getter]
    fn a22(&self) -> f64 {
        self.inner.a22
    }

    fn det(&self) -> f64 {
        self.inner.det()
    }

    fn eigenvalues(&self) -> (f64, f64) {
        self.inner.eigenvalues()
    }

    fn inverse(&self) -> PyResult<Self> {
        Ok(PySymMat2 { inner: self.inner.inverse().map_err(err)? })
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let v = self.inner.apply(Vec2::new(x, y));
        (v.x, v.y)
    }

    fn __repr__(&self) -> String {
        format!("SymMat2({}, {}, {})", self.inner.a11, self.inner.a12, self.inner.a22)
    }
}

/// `||v^{1/2} w^{1/2}||^2` for positive definite v, w.
#[pyfunction]
fn a2_pair_char(v: &PySymMat2, w: &PySymMat2) -> PyResult<f64> {
    mat2::a2_pair_char(v.inner, w.inner).map_err(err)
}

/// Loewner order check `A <= B` up to a relative eigenvalue tolerance.
#[pyfunction]
fn loewner_leq(a: &PySymMat2, b: &PySymMat2, tol: f64) -> bool {
    mat2::loewner_leq(a.inner, b.inner, tol)
}

/// Terminal completion: child values (W_plus, W_minus) reproducing the
/// averages (w, v) of the weight and its inverse.
#[pyfunction]
fn terminal_children(w: &PySymMat2, v: &PySymMat2, tol: f64) -> PyResult<(PySymMat2, PySymMat2)> {
    let (p, m) = mat2::terminal_children(w.inner, v.inner, tol).map_err(err)?;
    Ok((PySymMat2 { inner: p }, PySymMat2 { inner: m }))
}

/// Scalar stretching step with ratio r = 2 - 1/Q.
#[pyfunction]
fn stretch_step(x: f64, y: f64, s: f64, q: f64) -> PyResult<((f64, f64), (f64, f64))> {
    a2lab::forge::stretch_step(x, y, s, q).map_err(err)
}

/// The constructed weight family.
#[pyclass(name = "WeightModel")]
struct PyWeightModel {
    inner: WeightModel,
}

#[pymethods]
impl PyWeightModel {
    /// Build a model; `q_small = 0` disables rotations (the degenerate
    /// control), `alpha0` pins the seed eigenvalue instead of the symmetric
    /// convention.
    #[new]
    #[pyo3(signature = (q, delta0=None, n_max=None, q_small=0.1, alpha0=None))]
    fn new(q: f64, delta0: Option<f64>, n_max: Option<usize>, q_small: f64, alpha0: Option<f64>) -> PyResult<Self> {
        let delta0 = delta0.unwrap_or_else(|| ConstructionParams::default_delta0(q));
        let n_max = n_max.unwrap_or_else(|| ConstructionParams::default_n_max(q));
        let mut p = ConstructionParams::new(q, delta0, n_max);
        p.q_small = q_small;
        if let Some(a0) = alpha0 {
            p.convention = SeedConvention::Alpha0Fixed(a0);
        }
        Ok(PyWeightModel { inner: WeightModel::build(p).map_err(err)? })
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q_target()
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.n_max()
    }

    fn dyadic_a2(&self) -> f64 {
        self.inner.dyadic_a2()
    }

    /// `||f||^2_{L2(W)}` for the witness `f = 1_{I0} W^{-1} b`.
    #[pyo3(signature = (mix=false))]
    fn f_norm2(&self, mix: bool) -> f64 {
        self.inner.f_norm2(self.inner.witness(mix))
    }

    /// Fast frame-recursion evaluation of `||Pi f||^2_{L2(W)}`; returns
    /// (diagonal, offdiag_total, total).
    #[pyo3(signature = (mix=false))]
    fn pi_quadratic_fast(&self, mix: bool) -> (f64, f64, f64) {
        let rep = operators::pi_quadratic_fast(&self.inner, self.inner.witness(mix));
        (rep.diagonal, rep.offdiag_total, rep.total)
    }

    /// Exhaustive evaluation over stopping pairs (small n_max only).
    #[pyo3(signature = (mix=false))]
    fn pi_quadratic_bruteforce(&self, mix: bool) -> PyResult<(f64, f64, f64)> {
        let rep = operators::pi_quadratic_bruteforce(&self.inner, self.inner.witness(mix)).map_err(err)?;
        Ok((rep.diagonal, rep.offdiag_total, rep.total))
    }

    /// `(Pi f, Pi* f)_{L2(W)}` with the four sign groups, as
    /// (diagonal, minus_side, plus_side, swapped, total).
    #[pyo3(signature = (mix=false))]
    fn pi_pistar(&self, mix: bool) -> PyResult<(f64, f64, f64, f64, f64)> {
        let r = operators::pi_pistar_pairing(&self.inner, self.inner.witness(mix)).map_err(err)?;
        Ok((r.diagonal_group, r.minus_side_group, r.plus_side_group, r.swapped_group, r.total))
    }

    /// Norms of the controlled operators on the witness, normalized by
    /// ||f||: [pi, pi1, pi2, pi3, sl, sl_star].
    #[pyo3(signature = (mix=false))]
    fn controlled_norms(&self, mix: bool) -> Vec<f64> {
        let b = self.inner.witness(mix);
        let f2 = self.inner.f_norm2(b);
        vec![
            (operators::pi_quadratic_fast(&self.inner, b).total / f2).sqrt(),
            (operators::pi1_norm2_fast(&self.inner, b) / f2).sqrt(),
            (operators::pi2_norm2_fast(&self.inner, b).total / f2).sqrt(),
            (operators::pi3_norm2_fast(&self.inner, b) / f2).sqrt(),
            (operators::sl_norm2_fast(&self.inner, b) / f2).sqrt(),
            (operators::sl_star_norm2_fast(&self.inner, b).total / f2).sqrt(),
        ]
    }

    /// Per-generation eigenvalue table as CSV text.
    fn table_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_table_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }
}

/// Structural constants (c0, c1, c2, c1_err, c2_err).
#[pyfunction]
#[pyo3(signature = (tol=1e-6))]
fn kernel_constants(tol: f64) -> PyResult<(f64, f64, f64, f64, f64)> {
    let k = a2lab::hilbert::compute_constants(tol).map_err(err)?;
    Ok((k.c0, k.c1, k.c2, k.c1_err, k.c2_err))
}

/// Least-squares exponent fit on log-log data: (slope, intercept, ci95).
#[pyfunction]
fn fit_exponent(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = experiment::fit_exponent(&points).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((f.slope, f.intercept, f.ci95))
}

/// Run a named experiment; returns (all_passed, checks) where checks is a
/// list of (name, passed, detail).
#[pyfunction]
#[pyo3(signature = (name, q_grid=None, n_max=None, delta0=None, seed=None, n_family=None))]
fn run_experiment(
    name: &str,
    q_grid: Option<Vec<f64>>,
    n_max: Option<usize>,
    delta0: Option<f64>,
    seed: Option<u64>,
    n_family: Option<Vec<u32>>,
) -> PyResult<(bool, Vec<(String, bool, String)>)> {
    let mut spec = ExperimentSpec::named(name);
    if let Some(g) = q_grid {
        spec.q_grid = g;
    }
    if let Some(n) = n_max {
        spec.n_max = NmaxRule::Fixed(n);
    }
    if let Some(d) = delta0 {
        spec.delta0 = Delta0Rule::Fixed(d);
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(f) = n_family {
        spec.n_family = f;
    }
    let result = experiment::run(&spec).map_err(err)?;
    let checks = result.checks.iter().map(|c| (c.name.clone(), c.passed, c.detail.clone())).collect();
    Ok((result.all_passed(), checks))
}

/// List of experiment names `run_experiment` accepts.
#[pyfunction]
fn experiments() -> Vec<String> {
    experiment::EXPERIMENTS.iter().map(|s| s.to_string()).collect()
}

#[pymodule]
fn a2lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySymMat2>()?;
    m.add_class::<PyWeightModel>()?;
    m.add_function(wrap_pyfunction!(a2_pair_char, m)?)?;
    m.add_function(wrap_pyfunction!(loewner_leq, m)?)?;
    m.add_function(wrap_pyfunction!(terminal_children, m)?)?;
    m.add_function(wrap_pyfunction!(stretch_step, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_constants, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    Ok(())
}
