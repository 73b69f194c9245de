//! Python bindings: settings, network weights, the streaming pipeline and a
//! few offline helpers.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;

use vadfuse::audio::{read_wav as read_wav_file, write_wav as write_wav_file, SampleStream};
use vadfuse::config::{DetectorMode, Settings as CoreSettings};
use vadfuse::dnn::{forward, load_weights, save_weights, DnnWeights as CoreWeights};
use vadfuse::features::spliced_dim;
use vadfuse::harness::{simulate_corpus, write_corpus, NoiseKind, SimulateConfig};
use vadfuse::pipeline::{extract_features, Pipeline as CorePipeline, PipelineOutput};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Detector settings, round-tripped through the key = value file format.
#[pyclass(name = "Settings", from_py_object)]
#[derive(Clone)]
struct Settings {
    inner: CoreSettings,
}

#[pymethods]
impl Settings {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => CoreSettings::from_toml_str(t).map_err(value_err)?,
            None => CoreSettings::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreSettings::load(path).map_err(io_err)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    /// `"fused"`, `"gmm"` or `"dnn"`.
    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.mode {
            DetectorMode::Fused => "fused",
            DetectorMode::Gmm => "gmm",
            DetectorMode::Dnn => "dnn",
        }
    }

    #[setter]
    fn set_mode(&mut self, v: &str) -> PyResult<()> {
        self.inner.mode = v.parse().map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn t_tau(&self) -> f64 {
        self.inner.t_tau
    }

    #[setter]
    fn set_t_tau(&mut self, v: f64) {
        self.inner.t_tau = v;
    }

    #[getter]
    fn t_a(&self) -> f64 {
        self.inner.t_a
    }

    #[setter]
    fn set_t_a(&mut self, v: f64) {
        self.inner.t_a = v;
    }

    #[getter]
    fn dnn_threshold(&self) -> f64 {
        self.inner.dnn_threshold
    }

    #[setter]
    fn set_dnn_threshold(&mut self, v: f64) {
        self.inner.dnn_threshold = v;
    }

    fn __repr__(&self) -> String {
        format!("Settings(mode={:?}, t_tau={}, t_a={}, dnn_threshold={})", self.mode(), self.inner.t_tau, self.inner.t_a, self.inner.dnn_threshold)
    }
}

/// Weights of the two-layer speech/silence network.
#[pyclass(name = "DnnWeights", from_py_object)]
#[derive(Clone)]
struct DnnWeights {
    inner: CoreWeights,
}

#[pymethods]
impl DnnWeights {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_weights(path).map_err(io_err)? })
    }

    /// Untrained network for `splice_left`/`splice_right` context frames.
    #[staticmethod]
    #[pyo3(signature = (seed, splice_left = 5, splice_right = 5))]
    fn random(seed: u64, splice_left: usize, splice_right: usize) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self { inner: CoreWeights::random(spliced_dim(splice_left, splice_right), &mut rng) }
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_weights(&self.inner, path).map_err(io_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim
    }

    /// `(p_speech, p_silence)` for one spliced feature vector.
    fn forward(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = forward(&self.inner, &x).map_err(value_err)?;
        Ok((p.p_speech, p.p_silence))
    }
}

type Decision = (u64, f64, f64, u8);
type SegmentOut = (u64, u64, bool, Vec<f32>);

fn drain(out: &mut PipelineOutput) -> (Vec<Decision>, Vec<SegmentOut>) {
    let d = out.decisions.drain(..).map(|r| (r.frame, r.dnn, r.gmm_llr, r.flag)).collect();
    let s = out.segments.drain(..).map(|s| (s.begin_frame, s.end_frame, s.truncated, s.samples)).collect();
    (d, s)
}

/// Streaming detector and segmenter. `push` returns the decisions
/// `(frame, p_speech, gmm_llr, flag)` and segments `(begin, end, truncated, samples)`
/// that became final with this block.
#[pyclass(name = "Pipeline")]
struct Pipeline {
    inner: CorePipeline,
    out: PipelineOutput,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (settings = None, weights = None))]
    fn new(settings: Option<Settings>, weights: Option<DnnWeights>) -> PyResult<Self> {
        let s = settings.map(|s| s.inner).unwrap_or_default();
        let inner = CorePipeline::new(&s, weights.map(|w| w.inner)).map_err(value_err)?;
        Ok(Self { inner, out: PipelineOutput::default() })
    }

    fn push(&mut self, samples: Vec<f32>) -> PyResult<(Vec<Decision>, Vec<SegmentOut>)> {
        self.inner.push(&samples, &mut self.out).map_err(value_err)?;
        Ok(drain(&mut self.out))
    }

    fn finish(&mut self) -> PyResult<(Vec<Decision>, Vec<SegmentOut>)> {
        self.inner.finish(&mut self.out).map_err(value_err)?;
        Ok(drain(&mut self.out))
    }

    #[getter]
    fn latency_frames(&self) -> usize {
        self.inner.latency_frames()
    }

    /// Text dump of the GMM, one band per line, or `None` before warm-up ends.
    fn gmm_snapshot(&self) -> Option<String> {
        self.inner.gmm_state().map(|s| s.snapshot())
    }
}

/// Mono 16 kHz samples in `[-1, 1)`.
#[pyfunction]
fn read_wav(path: &str) -> PyResult<Vec<f32>> {
    Ok(read_wav_file(path).map_err(io_err)?.samples)
}

#[pyfunction]
fn write_wav(path: &str, samples: Vec<f32>) -> PyResult<()> {
    write_wav_file(path, &samples).map_err(io_err)
}

/// Per-frame subband log energies and spliced network inputs.
#[pyfunction]
#[pyo3(signature = (samples, settings = None))]
fn features(samples: Vec<f32>, settings: Option<Settings>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let s = settings.map(|s| s.inner).unwrap_or_default();
    let f = extract_features(&SampleStream::new(samples), &s).map_err(value_err)?;
    Ok((f.subbands.iter().map(|b| b.e.to_vec()).collect(), f.spliced.into_iter().map(|x| x.0).collect()))
}

/// Writes a synthetic labelled corpus; returns the recording names.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 0, utterances = 50, snrs = vec![5.0, 10.0, 15.0], noises = None))]
fn simulate(out_dir: &str, seed: u64, utterances: usize, snrs: Vec<f64>, noises: Option<Vec<String>>) -> PyResult<Vec<String>> {
    let noises = match noises {
        Some(n) => n.iter().map(|k| k.parse::<NoiseKind>()).collect::<Result<Vec<_>, _>>().map_err(PyValueError::new_err)?,
        None => NoiseKind::ALL.to_vec(),
    };
    let cfg = SimulateConfig { snrs, noises, seed, utterances };
    let items = simulate_corpus(&cfg, &CoreSettings::default()).map_err(value_err)?;
    write_corpus(std::path::Path::new(out_dir), &items).map_err(io_err)?;
    Ok(items.into_iter().map(|i| i.name).collect())
}

#[pymodule]
fn pyvadfuse(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Settings>()?;
    m.add_class::<DnnWeights>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
