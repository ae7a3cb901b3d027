//! Python extension module exposing the core toolkit: matrices, the Zipf
//! ensemble generators, quantizers, spectral metrics, the random-matrix
//! formulas, and the verification protocols.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spqt_core::error::Error;
use spqt_core::quant::{self, BlockSize, QuantScheme};
use spqt_core::rmt::{self, Complex64, SpikedModel, TailBoundParams};
use spqt_core::spectral;
use spqt_core::synth::{self, ZipfEnsemble};
use spqt_core::tensorio::{self, make_stream};
use spqt_core::verify::{self, ExperimentConfig};
use spqt_core::DenseMatrix;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Dense row-major matrix of 64-bit floats.
#[pyclass(name = "Matrix", from_py_object)]
#[derive(Clone)]
struct PyMatrix {
    inner: DenseMatrix,
}

#[pymethods]
impl PyMatrix {
    /// Builds a matrix from a list of equal-length rows.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        DenseMatrix::from_rows(&rows)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.rows())
            .map(|r| self.inner.row(r).to_vec())
            .collect()
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    /// Saves as SPQT (or CSV when the path ends in .csv).
    fn save(&self, path: &str) -> PyResult<()> {
        let result = if path.to_ascii_lowercase().ends_with(".csv") {
            tensorio::save_csv(&self.inner, path)
        } else {
            tensorio::save_tensor(&self.inner, path)
        };
        result.map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let result = if path.to_ascii_lowercase().ends_with(".csv") {
            tensorio::load_csv(path)
        } else {
            tensorio::load_tensor(path)
        };
        result.map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.inner.rows(), self.inner.cols())
    }
}

/// Normalized Zipf probabilities `k^-alpha / H_V(alpha)`.
#[pyfunction]
fn zipf_probabilities(vocab: usize, alpha: f64) -> PyResult<Vec<f64>> {
    synth::zipf_probabilities(vocab, alpha).map_err(to_py_err)
}

/// The `d x n` embedding matrix of a seeded Zipf ensemble.
#[pyfunction]
fn build_embedding_matrix(
    vocab: usize,
    alpha: f64,
    d: usize,
    n: usize,
    seed: u64,
) -> PyResult<PyMatrix> {
    let ens = ZipfEnsemble::new(vocab, alpha, d, n, seed).map_err(to_py_err)?;
    synth::build_embedding_matrix(&ens)
        .map(|inner| PyMatrix { inner })
        .map_err(to_py_err)
}

/// Gaussian matrix rescaled to an exact spectral norm.
#[pyfunction]
fn synthetic_output_gradient(
    rows: usize,
    cols: usize,
    spec_norm: f64,
    seed: u64,
) -> PyResult<PyMatrix> {
    let mut rng = make_stream(seed, 0);
    synth::synthetic_output_gradient(rows, cols, spec_norm, &mut rng)
        .map(|inner| PyMatrix { inner })
        .map_err(to_py_err)
}

/// Square matrix with prescribed power-law singular values.
#[pyfunction]
#[pyo3(signature = (dim, mu, alpha, seed, head_rank=None))]
fn power_law_matrix(
    dim: usize,
    mu: f64,
    alpha: f64,
    seed: u64,
    head_rank: Option<usize>,
) -> PyMatrix {
    let mut rng = make_stream(seed, 0);
    let (m, _) = verify::power_law_matrix(dim, mu, alpha, head_rank, &mut rng);
    PyMatrix { inner: m }
}

fn scheme_from_args(preset: &str, block: Option<usize>, levels: Option<u32>, step: Option<f64>)
    -> PyResult<QuantScheme>
{
    let mut scheme = match preset {
        "int4" => QuantScheme::int4(),
        "nvfp4" => QuantScheme::nvfp4(),
        "mxfp4" => QuantScheme::mxfp4(),
        "step" => QuantScheme::uniform_step(
            step.ok_or_else(|| PyValueError::new_err("step preset needs step="))?,
        ),
        other => {
            // Full control through a scheme JSON object.
            serde_json::from_str(other).map_err(|_| {
                PyValueError::new_err(format!(
                    "unknown preset {other:?}; use int4/nvfp4/mxfp4/step or a scheme JSON"
                ))
            })?
        }
    };
    if let Some(l) = levels {
        scheme.l = Some(l);
    }
    if let Some(b) = block {
        scheme.block_size = if b == 0 {
            BlockSize::Global
        } else {
            BlockSize::Size(b)
        };
    }
    scheme.validate().map_err(to_py_err)?;
    Ok(scheme)
}

/// Block-wise quantization. Returns a dict with the quantized matrix, the
/// per-block scales, and error statistics.
#[pyfunction]
#[pyo3(signature = (matrix, preset="nvfp4", block=None, levels=None, step=None))]
fn quantize<'py>(
    py: Python<'py>,
    matrix: &PyMatrix,
    preset: &str,
    block: Option<usize>,
    levels: Option<u32>,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let scheme = scheme_from_args(preset, block, levels, step)?;
    let q = quant::quantize_blockwise(&matrix.inner, &scheme).map_err(to_py_err)?;
    let e = quant::error_matrix(&matrix.inner, &q.matrix).map_err(to_py_err)?;
    let stats = quant::error_stats(&e, q.mean_step());
    let out = PyDict::new(py);
    out.set_item("matrix", PyMatrix { inner: q.matrix }.into_pyobject(py)?)?;
    out.set_item("error", PyMatrix { inner: e }.into_pyobject(py)?)?;
    out.set_item("scales", q.scales)?;
    out.set_item("degenerate_blocks", q.degenerate_blocks)?;
    out.set_item("mean", stats.mean)?;
    out.set_item("variance", stats.variance)?;
    out.set_item("step", stats.step_used)?;
    Ok(out)
}

/// The 17-value signed E2M1 grid.
#[pyfunction]
fn e2m1_grid() -> Vec<f64> {
    quant::e2m1_grid().to_vec()
}

/// All singular values, descending.
#[pyfunction]
fn singular_values(matrix: &PyMatrix) -> PyResult<Vec<f64>> {
    spectral::singular_values(&matrix.inner).map_err(to_py_err)
}

#[pyfunction]
fn stable_rank(sigma: Vec<f64>) -> PyResult<f64> {
    spectral::stable_rank(&sigma).map_err(to_py_err)
}

#[pyfunction]
fn energy_concentration(sigma: Vec<f64>, k: usize) -> PyResult<f64> {
    spectral::energy_concentration(&sigma, k).map_err(to_py_err)
}

#[pyfunction]
fn weyl_gap(sigma: Vec<f64>, sigma_tilde: Vec<f64>) -> PyResult<f64> {
    spectral::weyl_gap(&sigma, &sigma_tilde).map_err(to_py_err)
}

/// OLS power-law fit of the spectrum head; returns (mu, decay, r_squared).
#[pyfunction]
fn fit_power_law(sigma: Vec<f64>, k_lo: usize, k_hi: usize) -> PyResult<(f64, f64, f64)> {
    spectral::fit_power_law(&sigma, k_lo, k_hi)
        .map(|f| (f.mu, f.decay, f.r_squared))
        .map_err(to_py_err)
}

/// Noise floor `nu^2(d)` of the power-law spiked model.
#[pyfunction]
fn noise_level(l_scale: f64, alpha: f64, r: usize, d: usize) -> PyResult<f64> {
    let model = SpikedModel::new(l_scale, alpha, r, d, 1.0).map_err(to_py_err)?;
    rmt::noise_level(&model).map_err(to_py_err)
}

#[pyfunction]
fn mp_bulk_edge(nu2: f64, c: f64) -> f64 {
    rmt::mp_bulk_edge(nu2, c)
}

#[pyfunction]
fn bbp_map(tau: f64, nu2: f64, c: f64) -> PyResult<f64> {
    rmt::bbp_map(tau, nu2, c).map_err(to_py_err)
}

/// Discrete Stieltjes transform at `z = re + i im`; returns `(re, im)`.
#[pyfunction]
fn stieltjes_discrete(eigs: Vec<f64>, re: f64, im: f64) -> PyResult<(f64, f64)> {
    rmt::stieltjes_discrete(&eigs, Complex64::new(re, im))
        .map(|m| (m.re, m.im))
        .map_err(to_py_err)
}

/// Matrix-Bernstein tail bound for round-to-nearest with the given step.
#[pyfunction]
fn bernstein_tail_bound(m: usize, n: usize, step: f64, t: f64) -> f64 {
    rmt::bernstein_tail_bound(&TailBoundParams::for_step(m, n, step), t)
}

#[pyfunction]
fn invert_tail_bound(m: usize, n: usize, step: f64, theta: f64) -> PyResult<f64> {
    rmt::invert_tail_bound(&TailBoundParams::for_step(m, n, step), theta).map_err(to_py_err)
}

/// Runs one verification protocol (or "all") from a config JSON string;
/// returns the list of summary-JSON strings.
#[pyfunction]
#[pyo3(signature = (protocol="all", config_json=None))]
fn run_verification(protocol: &str, config_json: Option<&str>) -> PyResult<Vec<String>> {
    let cfg: ExperimentConfig = match config_json {
        Some(text) => serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?,
        None => ExperimentConfig::default(),
    };
    let reports = if protocol == "all" {
        verify::run_full_suite(&cfg).map_err(to_py_err)?
    } else {
        let p = verify::Protocol::parse(protocol).map_err(to_py_err)?;
        vec![verify::run_protocol(p, &cfg).map_err(to_py_err)?]
    };
    Ok(reports.iter().map(|r| r.summary_json()).collect())
}

#[pymodule]
fn spqt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_function(wrap_pyfunction!(zipf_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(build_embedding_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_output_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(e2m1_grid, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(stable_rank, m)?)?;
    m.add_function(wrap_pyfunction!(energy_concentration, m)?)?;
    m.add_function(wrap_pyfunction!(weyl_gap, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(noise_level, m)?)?;
    m.add_function(wrap_pyfunction!(mp_bulk_edge, m)?)?;
    m.add_function(wrap_pyfunction!(bbp_map, m)?)?;
    m.add_function(wrap_pyfunction!(stieltjes_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(bernstein_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(invert_tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_verification, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
