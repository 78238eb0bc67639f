//! Python module `manifold_plm`.
//!
//! Points are passed as flat float sequences in the same encoding the CSV
//! reader uses: `d` coordinates on `euclidean:d`, a unit 3-vector on the
//! sphere, `(angle, height)` on the cylinder.

use std::path::PathBuf;

use manifold_plm::bandwidth::BandwidthScore;
use manifold_plm::io::{read_dataset_file, write_dataset};
use manifold_plm::simulation::{self, DesignKind, SimDesign};
use manifold_plm::{
    BandwidthGrid, Kernel, ManifoldPoint, ManifoldSpec, PairGeometry, PlmFit, SmootherConfig,
};
use nalgebra::DVector;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    manifold_plm,
    PlmError,
    PyValueError,
    "Model or input error."
);

fn err(e: manifold_plm::Error) -> PyErr {
    match e {
        manifold_plm::Error::Io(msg) => PyOSError::new_err(msg),
        e => PlmError::new_err(format!("{} ({})", e, e.kind())),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for manifold_plm::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// A Riemannian manifold: `euclidean:d`, `sphere` or `cylinder:min:max`.
#[pyclass(name = "Manifold", module = "manifold_plm", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyManifold {
    spec: ManifoldSpec,
}

impl PyManifold {
    fn point(&self, raw: Vec<f64>) -> PyResult<ManifoldPoint> {
        self.spec.validate_point(&raw).py()
    }

    fn points(&self, raw: Vec<Vec<f64>>) -> PyResult<Vec<ManifoldPoint>> {
        raw.into_iter().map(|r| self.point(r)).collect()
    }

    fn config(&self, bandwidth: f64) -> PyResult<SmootherConfig> {
        SmootherConfig::quadratic(self.spec, bandwidth).py()
    }
}

#[pymethods]
impl PyManifold {
    /// Parses `euclidean:D`, `sphere` or `cylinder:MIN:MAX`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            spec: spec.parse().py()?,
        })
    }

    #[staticmethod]
    fn euclidean(dim: usize) -> PyResult<Self> {
        Ok(Self {
            spec: ManifoldSpec::euclidean(dim).py()?,
        })
    }

    #[staticmethod]
    fn sphere() -> Self {
        Self {
            spec: ManifoldSpec::Sphere2,
        }
    }

    #[staticmethod]
    fn cylinder(height_min: f64, height_max: f64) -> PyResult<Self> {
        Ok(Self {
            spec: ManifoldSpec::cylinder(height_min, height_max).py()?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.intrinsic_dim()
    }

    #[getter]
    fn injectivity_radius(&self) -> f64 {
        self.spec.injectivity_radius()
    }

    /// Validates a raw point and returns its canonical coordinates.
    fn validate(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.point(point)?.coords())
    }

    /// Geodesic distance.
    fn distance(&self, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
        self.spec.distance(&self.point(a)?, &self.point(b)?).py()
    }

    /// Volume density of the exponential chart at `base`, evaluated at `target`.
    fn volume_density(&self, base: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
        self.spec
            .volume_density(&self.point(base)?, &self.point(target)?)
            .py()
    }

    /// Kernel regression of `responses` at `query`.
    fn nw_regress(
        &self,
        bandwidth: f64,
        query: Vec<f64>,
        sample: Vec<Vec<f64>>,
        responses: Vec<f64>,
    ) -> PyResult<f64> {
        let cfg = self.config(bandwidth)?;
        manifold_plm::nw_regress(&cfg, &self.point(query)?, &self.points(sample)?, &responses).py()
    }

    /// Kernel density estimate at `query`.
    fn density_estimate(
        &self,
        bandwidth: f64,
        query: Vec<f64>,
        sample: Vec<Vec<f64>>,
    ) -> PyResult<f64> {
        let cfg = self.config(bandwidth)?;
        manifold_plm::density_estimate(&cfg, &self.point(query)?, &self.points(sample)?).py()
    }

    /// Normalized smoothing weights of `sample` around `query`.
    fn weights(
        &self,
        bandwidth: f64,
        query: Vec<f64>,
        sample: Vec<Vec<f64>>,
    ) -> PyResult<Vec<f64>> {
        let cfg = self.config(bandwidth)?;
        manifold_plm::normalized_weights(&cfg, &self.point(query)?, &self.points(sample)?).py()
    }

    fn __str__(&self) -> String {
        self.spec.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Manifold('{}')", self.spec)
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.spec == other.spec
    }
}

/// Observations `(y, x, t)` with `t` on a manifold.
#[pyclass(name = "Dataset", module = "manifold_plm", frozen)]
pub struct PyDataset {
    inner: manifold_plm::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(
        manifold: PyRef<'_, PyManifold>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        t: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let pts = manifold.points(t)?;
        Ok(Self {
            inner: manifold_plm::Dataset::from_rows(manifold.spec, y, &x, pts).py()?,
        })
    }

    /// Reads `y, x_1..x_p, t_1..t_k` from a headed CSV file.
    #[staticmethod]
    #[pyo3(signature = (path, manifold, p=None))]
    fn read_csv(
        path: PathBuf,
        manifold: PyRef<'_, PyManifold>,
        p: Option<usize>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: read_dataset_file(&path, &manifold.spec, p).py()?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(&path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        write_dataset(&self.inner, f).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn manifold(&self) -> PyManifold {
        PyManifold {
            spec: *self.inner.manifold(),
        }
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().iter().copied().collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner
            .x()
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn t(&self) -> Vec<Vec<f64>> {
        self.inner.t().iter().map(ManifoldPoint::coords).collect()
    }

    /// Leave-one-out cross-validation score at `bandwidth`.
    fn cv_score(&self, bandwidth: f64) -> PyResult<f64> {
        let cfg = SmootherConfig::quadratic(*self.inner.manifold(), bandwidth).py()?;
        manifold_plm::cv_score(&self.inner, &cfg).py()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(manifold='{}', n={}, p={})",
            self.inner.manifold(),
            self.inner.n(),
            self.inner.p()
        )
    }
}

fn grid_for(data: &manifold_plm::Dataset, grid: Option<Vec<f64>>) -> PyResult<BandwidthGrid> {
    match grid {
        Some(v) => BandwidthGrid::new(v, data.manifold()).py(),
        None => BandwidthGrid::from_data(data, 30).py(),
    }
}

/// `(h, score)` pairs; the score is `None` where h is infeasible.
type Scores = Vec<(f64, Option<f64>)>;

fn scores_to_py(scores: &[BandwidthScore]) -> Scores {
    scores.iter().map(|s| (s.h, s.score)).collect()
}

/// Result of a model fit. Keeps the data so ĝ can be evaluated anywhere.
#[pyclass(name = "Fit", module = "manifold_plm", frozen)]
pub struct PyFit {
    fit: PlmFit,
    data: manifold_plm::Dataset,
    #[pyo3(get)]
    cv_scores: Option<Scores>,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn beta_hat(&self) -> Vec<f64> {
        self.fit.beta_hat.iter().copied().collect()
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.fit.bandwidth
    }

    #[getter]
    fn sigma2_eps_hat(&self) -> f64 {
        self.fit.sigma2_eps_hat
    }

    #[getter]
    fn sigma_hat(&self) -> Vec<Vec<f64>> {
        self.fit
            .sigma_hat
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    #[getter]
    fn std_errors(&self) -> PyResult<Vec<f64>> {
        Ok(self.fit.standard_errors().py()?.iter().copied().collect())
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.fit.residuals.iter().copied().collect()
    }

    /// ĝ at the sample points.
    #[getter]
    fn g_at_sample(&self) -> Vec<f64> {
        self.fit.g_at_sample().iter().copied().collect()
    }

    /// ĝ at an arbitrary point; `None` when no observation lies within the bandwidth.
    fn g(&self, point: Vec<f64>) -> PyResult<Option<f64>> {
        let m = *self.data.manifold();
        let q = m.validate_point(&point).py()?;
        let cfg = SmootherConfig::new(m, self.fit.kernel, self.fit.bandwidth).py()?;
        match manifold_plm::estimate_g(&self.fit, &self.data, &cfg, &q) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.is_infeasible_bandwidth() => Ok(None),
            Err(e) => Err(err(e)),
        }
    }

    /// Wald test of `β = beta0`; returns `(statistic, dof, p_value)`.
    fn wald(&self, beta0: Vec<f64>) -> PyResult<(f64, usize, f64)> {
        let b0 = DVector::from_vec(beta0);
        let w = manifold_plm::wald_test(&self.fit, &b0, self.data.n()).py()?;
        Ok((w.statistic, w.dof, w.p_value))
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(beta_hat={:?}, bandwidth={})",
            self.beta_hat(),
            self.fit.bandwidth
        )
    }
}

/// Fits the model. Without `bandwidth`, h is chosen by leave-one-out
/// cross-validation over `grid` (default: 30 values derived from the data).
#[pyfunction]
#[pyo3(signature = (data, bandwidth=None, grid=None))]
fn fit(
    py: Python<'_>,
    data: PyRef<'_, PyDataset>,
    bandwidth: Option<f64>,
    grid: Option<Vec<f64>>,
) -> PyResult<PyFit> {
    let data = data.inner.clone();
    let grid = match bandwidth {
        Some(_) => None,
        None => Some(grid_for(&data, grid)?),
    };
    py.detach(move || {
        let geom = PairGeometry::within(*data.manifold(), data.t())?;
        let (h, cv_scores) = match (bandwidth, grid) {
            (Some(h), _) => (h, None),
            (None, Some(g)) => {
                let sel = manifold_plm::bandwidth::select_cv_with_geometry(
                    &data,
                    &geom,
                    Kernel::Quadratic,
                    &g,
                )?;
                (sel.best_h, Some(scores_to_py(&sel.scores)))
            }
            (None, None) => unreachable!("grid is built whenever bandwidth is absent"),
        };
        SmootherConfig::quadratic(*data.manifold(), h)?;
        let fit = manifold_plm::plm::fit_with_geometry(&data, &geom, Kernel::Quadratic, h)?;
        Ok(PyFit {
            fit,
            data,
            cv_scores,
        })
    })
    .py()
}

/// Cross-validation over a grid; returns `(best_h, best_score, [(h, score or None)])`.
#[pyfunction]
#[pyo3(signature = (data, grid=None))]
fn select_cv(
    py: Python<'_>,
    data: PyRef<'_, PyDataset>,
    grid: Option<Vec<f64>>,
) -> PyResult<(f64, f64, Scores)> {
    let data = data.inner.clone();
    let grid = grid_for(&data, grid)?;
    let sel = py
        .detach(move || manifold_plm::select_cv(&data, Kernel::Quadratic, &grid))
        .py()?;
    Ok((sel.best_h, sel.best_score, scores_to_py(&sel.scores)))
}

/// The quadratic kernel `(15/16)(1 − u²)²` on `[0, 1)`.
#[pyfunction]
fn kernel(u: f64) -> PyResult<f64> {
    if u.is_nan() || u < 0.0 {
        return Err(PyValueError::new_err(format!(
            "kernel argument must be >= 0, got {u}"
        )));
    }
    Ok(Kernel::Quadratic.eval(u))
}

fn design(kind: &str, n: usize, beta: f64, noise_sd: f64, seed: u64) -> PyResult<SimDesign> {
    let kind: DesignKind = kind.parse().py()?;
    SimDesign::new(kind, n, beta, noise_sd, seed).py()
}

/// One simulated dataset; returns `(Dataset, g_true)`.
#[pyfunction]
#[pyo3(signature = (design_kind, n=200, seed=1, replication=0, beta=5.0, noise_sd=1.0))]
fn simulate(
    design_kind: &str,
    n: usize,
    seed: u64,
    replication: usize,
    beta: f64,
    noise_sd: f64,
) -> PyResult<(PyDataset, Vec<f64>)> {
    let d = design(design_kind, n, beta, noise_sd, seed)?;
    let sim = simulation::generate(&d, &mut simulation::replication_rng(seed, replication)).py()?;
    Ok((PyDataset { inner: sim.data }, sim.g_true))
}

/// Monte Carlo study; returns the summary as a dict.
#[pyfunction]
#[pyo3(signature = (design_kind, n=200, reps=200, seed=1, beta=5.0, noise_sd=1.0, grid=None))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo<'py>(
    py: Python<'py>,
    design_kind: &str,
    n: usize,
    reps: usize,
    seed: u64,
    beta: f64,
    noise_sd: f64,
    grid: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = design(design_kind, n, beta, noise_sd, seed)?;
    let grid = match grid {
        Some(v) => BandwidthGrid::new(v, &d.kind.manifold()).py()?,
        None => simulation::default_grid(d.kind),
    };
    let run = py
        .detach(|| simulation::monte_carlo_run(&d, reps, &grid))
        .py()?;
    let s = &run.summary;
    let out = PyDict::new(py);
    out.set_item("design", s.design.name())?;
    out.set_item("n", s.n)?;
    out.set_item("beta_true", s.beta_true)?;
    out.set_item("reps", s.reps)?;
    out.set_item("failed", run.failed)?;
    out.set_item("mean_beta", s.mean_beta)?;
    out.set_item("sd_beta", s.sd_beta)?;
    out.set_item("mse_beta", s.mse_beta)?;
    out.set_item("mean_mse_g", s.mean_mse_g)?;
    out.set_item("mean_bandwidth", s.mean_bandwidth)?;
    out.set_item("wald_coverage_95", s.wald_coverage_95)?;
    out.set_item(
        "beta_hat",
        run.replications
            .iter()
            .map(|r| r.beta_hat)
            .collect::<Vec<_>>(),
    )?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "manifold_plm")]
fn manifold_plm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PlmError", m.py().get_type::<PlmError>())?;
    m.add_class::<PyManifold>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(select_cv, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::ffi::c_str;

    fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> R) -> R {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "manifold_plm").unwrap();
            manifold_plm_module(&m).unwrap();
            f(py, &m)
        })
    }

    fn run(code: &std::ffi::CStr) {
        with_module(|py, m| {
            let globals = PyDict::new(py);
            globals.set_item("mp", m).unwrap();
            py.run(code, Some(&globals), None).unwrap();
        });
    }

    #[test]
    fn manifold_methods() {
        run(c_str!(
            r#"
import math
s = mp.Manifold("sphere")
assert abs(s.distance([1, 0, 0], [0, 0, 1]) - math.pi / 2) < 1e-15
assert str(mp.Manifold.cylinder(-1, 1)) == "cylinder:-1:1"
assert mp.Manifold.euclidean(2).dim == 2
assert s == mp.Manifold.sphere()
"#
        ));
    }

    #[test]
    fn invalid_input_raises_plm_error() {
        run(c_str!(
            r#"
try:
    mp.Manifold("torus")
except mp.PlmError as e:
    assert "invalid_manifold" in str(e)
else:
    raise AssertionError
try:
    mp.kernel(-0.5)
except ValueError:
    pass
else:
    raise AssertionError
"#
        ));
    }

    #[test]
    fn fit_matches_core() {
        let design = SimDesign::standard(DesignKind::Sphere, 80, 4).unwrap();
        let sim = simulation::generate(&design, &mut simulation::replication_rng(4, 0)).unwrap();
        let cfg = SmootherConfig::quadratic(ManifoldSpec::Sphere2, 1.1).unwrap();
        let core = manifold_plm::fit_beta(&sim.data, &cfg).unwrap();
        with_module(|py, m| {
            let data = Py::new(
                py,
                PyDataset {
                    inner: sim.data.clone(),
                },
            )
            .unwrap();
            let fit = m.getattr("fit").unwrap().call1((data, 1.1)).unwrap();
            let beta: Vec<f64> = fit.getattr("beta_hat").unwrap().extract().unwrap();
            assert_eq!(beta[0], core.beta_hat[0]);
        });
    }

    #[test]
    fn simulate_is_seeded() {
        run(c_str!(
            r#"
a, ga = mp.simulate("cylinder", n=30, seed=9, replication=2)
b, gb = mp.simulate("cylinder", n=30, seed=9, replication=2)
c, _ = mp.simulate("cylinder", n=30, seed=9, replication=3)
assert a.y == b.y and ga == gb and a.y != c.y
assert len(a) == 30 and a.p == 1
"#
        ));
    }
}
