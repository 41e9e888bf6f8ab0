//! Python module `tbnn`. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tbnn_core::experiments::{parse_seeds, run_experiment, ExperimentConfig, ExperimentKind};
use tbnn_core::filtering::{apply_fir, matrix_exponential};
use tbnn_core::geometry::{build_geometric_graph, local_pca, DimAggregate, PcaKernel};
use tbnn_core::neural::{Activation, Checkpoint, TnnModel};
use tbnn_core::sheaf::{assemble_sheaf_laplacian, embed_signal, sample_signal, BundleSignal, SheafStructure};
use tbnn_core::spectral::{eigendecompose, evaluate_response};
use tbnn_core::{data, ExpMethod, FrequencyResponse, TbnnError};

fn to_py(e: TbnnError) -> PyErr {
    match e {
        TbnnError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "PointCloud", module = "tbnn", skip_from_py_object)]
#[derive(Clone)]
struct PyPointCloud {
    inner: tbnn_core::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(points: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: tbnn_core::PointCloud::from_rows(&points).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self {
            inner: tbnn_core::PointCloud::read_csv(file).map_err(to_py)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.inner.write_csv(file).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        rows(self.inner.points())
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(n={}, p={})", self.inner.len(), self.inner.ambient_dim())
    }
}

#[pyclass(name = "Sheaf", module = "tbnn", skip_from_py_object)]
#[derive(Clone)]
struct PySheaf {
    inner: SheafStructure,
}

#[pymethods]
impl PySheaf {
    /// Kernel graph, local PCA and Procrustes transports from a point cloud.
    #[staticmethod]
    #[pyo3(signature = (cloud, eps_n=0.5, eps_pca=0.8, d_hat=None, gamma=0.9))]
    fn build(cloud: &PyPointCloud, eps_n: f64, eps_pca: f64, d_hat: Option<usize>, gamma: f64) -> PyResult<Self> {
        let graph = build_geometric_graph(&cloud.inner, eps_n).map_err(to_py)?;
        let pca = local_pca(&cloud.inner, eps_pca, PcaKernel::Epanechnikov).map_err(to_py)?;
        let basis = match d_hat {
            Some(d) => pca.basis(d),
            None => pca.estimated_basis(gamma, DimAggregate::Median),
        }
        .map_err(to_py)?;
        let (inner, _) = assemble_sheaf_laplacian(graph, basis).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: SheafStructure::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn d_hat(&self) -> usize {
        self.inner.d_hat()
    }

    /// Maximum orthogonality and antisymmetry errors of the transports.
    fn transport_errors(&self) -> (f64, f64) {
        self.inner.transport_errors()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        rows(self.inner.laplacian().matrix())
    }

    /// Eigenvalues `λ ≥ 0` (of `−Δ`) in ascending order.
    #[pyo3(signature = (count=None))]
    fn eigenvalues(&self, count: Option<usize>) -> PyResult<Vec<f64>> {
        Ok(eigendecompose(&self.inner.laplacian(), count).map_err(to_py)?.eigenvalues().to_vec())
    }

    #[pyo3(signature = (method="pade"))]
    fn shift(&self, method: &str) -> PyResult<Vec<Vec<f64>>> {
        let m: ExpMethod = method.parse().map_err(to_py)?;
        Ok(rows(matrix_exponential(&self.inner.laplacian(), m).map_err(to_py)?.matrix()))
    }

    /// Projects an `n × p` ambient field onto the local frames; returns `n·d̂` coefficients.
    fn sample_signal(&self, field: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let s = sample_signal(&matrix(&field)?, self.inner.basis()).map_err(to_py)?;
        Ok(s.values().column(0).iter().copied().collect())
    }

    fn embed_signal(&self, coeffs: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let s = BundleSignal::from_vector(coeffs.into(), self.inner.node_count(), self.inner.d_hat()).map_err(to_py)?;
        Ok(rows(&embed_signal(&s, self.inner.basis()).map_err(to_py)?))
    }

    /// `Σ_k h_k E^k f` for a signal given as `n·d̂` coefficients.
    #[pyo3(signature = (taps, coeffs, method="pade"))]
    fn filter(&self, taps: Vec<f64>, coeffs: Vec<f64>, method: &str) -> PyResult<Vec<f64>> {
        let m: ExpMethod = method.parse().map_err(to_py)?;
        FrequencyResponse::new(taps.clone()).map_err(to_py)?;
        let shift = matrix_exponential(&self.inner.laplacian(), m).map_err(to_py)?;
        if coeffs.len() != shift.dim() {
            return Err(PyValueError::new_err(format!("expected {} coefficients", shift.dim())));
        }
        let x = DMatrix::from_column_slice(coeffs.len(), 1, &coeffs);
        Ok(apply_fir(shift.matrix(), &taps, &x).column(0).iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Sheaf(n={}, d_hat={})", self.inner.node_count(), self.inner.d_hat())
    }
}

/// Feedforward DD-TNN.
#[pyclass(name = "Tnn", module = "tbnn", skip_from_py_object)]
#[derive(Clone)]
struct PyTnn {
    inner: TnnModel,
}

#[pymethods]
impl PyTnn {
    #[new]
    #[pyo3(signature = (widths, k=2, seed=0, hidden="tanh", output="identity"))]
    fn new(widths: Vec<usize>, k: usize, seed: u64, hidden: &str, output: &str) -> PyResult<Self> {
        let h: Activation = hidden.parse().map_err(to_py)?;
        let o: Activation = output.parse().map_err(to_py)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: TnnModel::random(&mut rng, &widths, k, h, o).map_err(to_py)?,
        })
    }

    /// Forward pass on an `n·d̂ × F_in` input (list of rows).
    #[pyo3(signature = (sheaf, x, method="pade"))]
    fn predict(&self, sheaf: &PySheaf, x: Vec<Vec<f64>>, method: &str) -> PyResult<Vec<Vec<f64>>> {
        let m: ExpMethod = method.parse().map_err(to_py)?;
        let shift = matrix_exponential(&sheaf.inner.laplacian(), m).map_err(to_py)?;
        Ok(rows(&self.inner.predict(&shift, &matrix(&x)?).map_err(to_py)?))
    }

    fn to_json(&self) -> PyResult<String> {
        Checkpoint::from_tnn(&self.inner).to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::from_json(text).and_then(|c| c.to_tnn()).map_err(to_py)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (expected_n, a=0.1, b=0.3, seed=0))]
fn sample_torus(expected_n: f64, a: f64, b: f64, seed: u64) -> PyResult<PyPointCloud> {
    Ok(PyPointCloud {
        inner: data::sample_torus(expected_n, a, b, seed).map_err(to_py)?,
    })
}

/// Torus samples with the azimuthal unit field; returns `(cloud, field rows)`.
#[pyfunction]
#[pyo3(signature = (expected_n, a=0.1, b=0.3, seed=0))]
fn sample_torus_field(expected_n: f64, a: f64, b: f64, seed: u64) -> PyResult<(PyPointCloud, Vec<Vec<f64>>)> {
    let s = data::sample_torus_field(expected_n, a, b, seed).map_err(to_py)?;
    Ok((PyPointCloud { inner: s.cloud }, rows(&s.field)))
}

#[pyfunction]
#[pyo3(signature = (expected_n, seed=0))]
fn sample_klein(expected_n: f64, seed: u64) -> PyResult<PyPointCloud> {
    Ok(PyPointCloud {
        inner: data::sample_klein(expected_n, seed).map_err(to_py)?,
    })
}

/// `ĥ(λ) = Σ_k h_k e^{−kλ}` at each λ.
#[pyfunction]
fn frequency_response(taps: Vec<f64>, lambdas: Vec<f64>) -> PyResult<Vec<f64>> {
    let r = FrequencyResponse::new(taps).map_err(to_py)?;
    Ok(evaluate_response(&r, &lambdas))
}

/// Runs an experiment and returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (kind, config=None, seeds=None, synthetic_wind=false))]
fn run(kind: &str, config: Option<&str>, seeds: Option<&str>, synthetic_wind: bool) -> PyResult<String> {
    let kind: ExperimentKind = kind.parse().map_err(to_py)?;
    let mut cfg = match config {
        Some(text) => ExperimentConfig::parse(text, Some(kind)),
        None => Ok(ExperimentConfig::defaults(kind)),
    }
    .map_err(to_py)?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s).map_err(to_py)?;
    }
    cfg.synthetic_wind |= synthetic_wind;
    run_experiment(&cfg).and_then(|r| r.to_json()).map_err(to_py)
}

#[pymodule]
fn tbnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PySheaf>()?;
    m.add_class::<PyTnn>()?;
    m.add_function(wrap_pyfunction!(sample_torus, m)?)?;
    m.add_function(wrap_pyfunction!(sample_torus_field, m)?)?;
    m.add_function(wrap_pyfunction!(sample_klein, m)?)?;
    m.add_function(wrap_pyfunction!(frequency_response, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
