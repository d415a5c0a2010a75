//! Python bindings for the hybrid beamforming design and SC-FDE link
//! simulation library.
//!
//! The module mirrors the Rust surface at the granularity a notebook needs:
//! channel sampling, the EVD-HBF solver, baseline schemes, analytic sum-MSE
//! evaluation, Monte Carlo BER points, and the invariant selftest.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sc_hbf::channel::{
    channel_from_text, channel_to_text, frequency_response, sample_channel, tap_matrices,
    ChannelModelConfig, ClusterRayChannel,
};
use sc_hbf::cli::{build_scheme_ends, SchemeId};
use sc_hbf::hbf;
use sc_hbf::link::{derive_seed, BerRunConfig, SchemeEnds};
use sc_hbf::numerics::CMat;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py_err(e: sc_hbf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Link dimensions and operating SNR.
#[pyclass(name = "SystemConfig")]
struct PySystemConfig {
    inner: hbf::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    #[new]
    #[pyo3(signature = (n_tx, n_rx, n_rf, n_streams, block_len, snr_db))]
    fn new(
        n_tx: usize,
        n_rx: usize,
        n_rf: usize,
        n_streams: usize,
        block_len: usize,
        snr_db: f64,
    ) -> PyResult<Self> {
        let inner = hbf::SystemConfig {
            n_tx,
            n_rx,
            n_rf,
            n_streams,
            block_len,
            noise_var: hbf::SystemConfig::noise_var_for_snr_db(snr_db),
        };
        inner.validate().map_err(to_py_err)?;
        Ok(PySystemConfig { inner })
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.n_rx
    }

    #[getter]
    fn n_rf(&self) -> usize {
        self.inner.n_rf
    }

    #[getter]
    fn n_streams(&self) -> usize {
        self.inner.n_streams
    }

    #[getter]
    fn block_len(&self) -> usize {
        self.inner.block_len
    }

    #[getter]
    fn noise_var(&self) -> f64 {
        self.inner.noise_var
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(n_tx={}, n_rx={}, n_rf={}, n_streams={}, block_len={}, snr_db={:.2})",
            self.inner.n_tx,
            self.inner.n_rx,
            self.inner.n_rf,
            self.inner.n_streams,
            self.inner.block_len,
            self.inner.snr_db()
        )
    }
}

/// Cluster-ray channel model parameters.
#[pyclass(name = "ChannelConfig")]
struct PyChannelConfig {
    inner: ChannelModelConfig,
}

#[pymethods]
impl PyChannelConfig {
    #[new]
    #[pyo3(signature = (n_clusters, n_rays, n_tx, n_rx, angle_spread_deg=10.0, cp_len=16))]
    fn new(
        n_clusters: usize,
        n_rays: usize,
        n_tx: usize,
        n_rx: usize,
        angle_spread_deg: f64,
        cp_len: usize,
    ) -> PyResult<Self> {
        let inner = ChannelModelConfig {
            n_clusters,
            n_rays,
            n_tx,
            n_rx,
            angle_spread: angle_spread_deg.to_radians(),
            cp_len,
        };
        inner.validate().map_err(to_py_err)?;
        Ok(PyChannelConfig { inner })
    }

    #[getter]
    fn cp_len(&self) -> usize {
        self.inner.cp_len
    }
}

/// One channel realization.
#[pyclass(name = "Channel")]
struct PyChannel {
    inner: ClusterRayChannel,
    n_tx: usize,
    n_rx: usize,
}

#[pymethods]
impl PyChannel {
    /// Per-ray complex gains, indexed [cluster][ray].
    #[getter]
    fn gains(&self) -> Vec<Vec<Complex64>> {
        self.inner.gains.clone()
    }

    /// Cluster delays in symbol periods.
    #[getter]
    fn delays(&self) -> Vec<usize> {
        self.inner.delays.clone()
    }

    /// Departure angles in radians, indexed [cluster][ray].
    #[getter]
    fn departure_angles(&self) -> Vec<Vec<f64>> {
        self.inner.departure_angles.clone()
    }

    /// Arrival angles in radians, indexed [cluster][ray].
    #[getter]
    fn arrival_angles(&self) -> Vec<Vec<f64>> {
        self.inner.arrival_angles.clone()
    }

    /// Serialize to the structured text format.
    fn to_text(&self) -> String {
        channel_to_text(&self.inner)
    }

    /// Per-tone frequency response as nested lists, one matrix per tone.
    fn frequency_response(&self, block_len: usize) -> PyResult<Vec<Vec<Vec<Complex64>>>> {
        let taps = tap_matrices(&self.inner, self.n_tx, self.n_rx);
        let chf = frequency_response(&taps, block_len).map_err(to_py_err)?;
        Ok(chf.tones.iter().map(matrix_to_rows).collect())
    }
}

/// Hybrid beamforming solution matrices.
#[pyclass(name = "Solution")]
struct PySolution {
    inner: hbf::HbfSolution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn v_rf(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.v_rf)
    }

    #[getter]
    fn v_d(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.v_d)
    }

    #[getter]
    fn v_u(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.v_u)
    }

    #[getter]
    fn w_rf(&self) -> Vec<Vec<Complex64>> {
        matrix_to_rows(&self.inner.w_rf)
    }

    /// Per-tone digital combiners.
    #[getter]
    fn w_d(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.inner.w_d.iter().map(matrix_to_rows).collect()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// Check unit-modulus, para-unitarity and power invariants.
    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py_err)
    }
}

/// Solver convergence record.
#[pyclass(name = "Diagnostics")]
struct PyDiagnostics {
    #[pyo3(get)]
    objective_trace: Vec<f64>,
    #[pyo3(get)]
    lower_bound: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    stop_reason: String,
    #[pyo3(get)]
    nonmonotonic_steps: usize,
}

/// Monte Carlo outcome of one operating point.
#[pyclass(name = "SimResult")]
struct PySimResult {
    #[pyo3(get)]
    bit_errors: u64,
    #[pyo3(get)]
    bits_sent: u64,
    #[pyo3(get)]
    ber: f64,
    #[pyo3(get)]
    mse: f64,
    #[pyo3(get)]
    blocks: u64,
    #[pyo3(get)]
    papr_samples_db: Vec<f64>,
}

/// Draw one seeded cluster-ray channel realization.
#[pyfunction]
#[pyo3(name = "sample_channel")]
fn sample_channel_py(cfg: &PyChannelConfig, seed: u64) -> PyResult<PyChannel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = sample_channel(&cfg.inner, &mut rng).map_err(to_py_err)?;
    Ok(PyChannel {
        inner,
        n_tx: cfg.inner.n_tx,
        n_rx: cfg.inner.n_rx,
    })
}

/// Parse a channel realization from the structured text format.
#[pyfunction]
#[pyo3(name = "channel_from_text")]
fn channel_from_text_py(text: &str, n_tx: usize, n_rx: usize) -> PyResult<PyChannel> {
    let inner = channel_from_text(text).map_err(to_py_err)?;
    Ok(PyChannel { inner, n_tx, n_rx })
}

fn chf_for(ch: &PyChannel, sys: &PySystemConfig) -> PyResult<(Vec<(usize, CMat)>, sc_hbf::channel::ChannelFrequencyResponse)> {
    let taps = tap_matrices(&ch.inner, sys.inner.n_tx, sys.inner.n_rx);
    let chf = frequency_response(&taps, sys.inner.block_len).map_err(to_py_err)?;
    Ok((taps, chf))
}

/// Run the EVD-HBF solver on one channel realization.
#[pyfunction]
#[pyo3(name = "solve_hbf", signature = (channel, sys, max_iters=50, rel_tol=1e-4, seed=1, restarts=5))]
fn solve_hbf_py(
    channel: &PyChannel,
    sys: &PySystemConfig,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
    restarts: usize,
) -> PyResult<(PySolution, PyDiagnostics)> {
    let (_, chf) = chf_for(channel, sys)?;
    let solver = hbf::SolverConfig {
        max_iters,
        rel_tol,
        seed,
        restarts,
    };
    let (sol, diag) = hbf::solve_hbf(&chf, &sys.inner, &solver).map_err(to_py_err)?;
    Ok((
        PySolution { inner: sol },
        PyDiagnostics {
            objective_trace: diag.objective_trace,
            lower_bound: diag.lower_bound,
            iterations: diag.iterations,
            stop_reason: match diag.stop_reason {
                hbf::StopReason::Tolerance => "tolerance".into(),
                hbf::StopReason::MaxIterations => "max-iterations".into(),
            },
            nonmonotonic_steps: diag.nonmonotonic_steps,
        },
    ))
}

/// Sum-MSE of a solved instance over its channel.
#[pyfunction]
#[pyo3(name = "sum_mse")]
fn sum_mse_py(solution: &PySolution, channel: &PyChannel, sys: &PySystemConfig) -> PyResult<f64> {
    let (_, chf) = chf_for(channel, sys)?;
    Ok(hbf::sum_mse(&solution.inner, &chf, sys.inner.noise_var))
}

fn ends_for(
    scheme: &str,
    channel: &PyChannel,
    sys: &PySystemConfig,
    seed: u64,
) -> PyResult<(Vec<(usize, CMat)>, SchemeEnds)> {
    let id = SchemeId::parse(scheme).map_err(to_py_err)?;
    let (taps, chf) = chf_for(channel, sys)?;
    let solver = hbf::SolverConfig {
        seed: derive_seed(seed, &[0]),
        ..hbf::SolverConfig::default()
    };
    let ends = build_scheme_ends(id, &channel.inner, &chf, &sys.inner, &solver).map_err(to_py_err)?;
    Ok((taps, ends))
}

/// Analytic sum-MSE of a scheme ("evd-hbf", "ifd", "fd-strongest",
/// "hbf-strongest") over one channel realization.
#[pyfunction]
#[pyo3(name = "scheme_mse", signature = (scheme, channel, sys, seed=1))]
fn scheme_mse_py(scheme: &str, channel: &PyChannel, sys: &PySystemConfig, seed: u64) -> PyResult<f64> {
    let (_, ends) = ends_for(scheme, channel, sys, seed)?;
    let (_, chf) = chf_for(channel, sys)?;
    Ok(ends.analytic_sum_mse(&chf, sys.inner.noise_var))
}

/// Monte Carlo BER of a scheme at one operating point.
#[pyfunction]
#[pyo3(name = "run_ber_point", signature = (scheme, channel, sys, cp_len, qam_order=4, max_blocks=200, target_errors=100, seed=1))]
#[allow(clippy::too_many_arguments)]
fn run_ber_point_py(
    scheme: &str,
    channel: &PyChannel,
    sys: &PySystemConfig,
    cp_len: usize,
    qam_order: usize,
    max_blocks: usize,
    target_errors: u64,
    seed: u64,
) -> PyResult<PySimResult> {
    let (taps, ends) = ends_for(scheme, channel, sys, seed)?;
    let run = BerRunConfig {
        max_blocks,
        target_errors,
        cp_len,
        qam_order,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let sim = sc_hbf::link::run_ber_point(
        &ends,
        &taps,
        sys.inner.n_streams,
        sys.inner.block_len,
        sys.inner.noise_var,
        &run,
        &mut rng,
    )
    .map_err(to_py_err)?;
    Ok(PySimResult {
        bit_errors: sim.bit_errors,
        bits_sent: sim.bits_sent,
        ber: sim.ber,
        mse: sim.mse,
        blocks: sim.blocks,
        papr_samples_db: sim.papr_samples_db,
    })
}

/// Run the invariant suites; returns (name, passed, checks, worst_margin).
#[pyfunction]
#[pyo3(name = "selftest", signature = (seed=1))]
fn selftest_py(seed: u64) -> Vec<(String, bool, usize, f64)> {
    sc_hbf::verify::run_all(seed)
        .into_iter()
        .map(|o| (o.name.to_string(), o.passed(), o.checks, o.worst_margin))
        .collect()
}

#[pymodule]
fn schbf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyChannelConfig>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyDiagnostics>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(sample_channel_py, m)?)?;
    m.add_function(wrap_pyfunction!(channel_from_text_py, m)?)?;
    m.add_function(wrap_pyfunction!(solve_hbf_py, m)?)?;
    m.add_function(wrap_pyfunction!(sum_mse_py, m)?)?;
    m.add_function(wrap_pyfunction!(scheme_mse_py, m)?)?;
    m.add_function(wrap_pyfunction!(run_ber_point_py, m)?)?;
    m.add_function(wrap_pyfunction!(selftest_py, m)?)?;
    Ok(())
}
