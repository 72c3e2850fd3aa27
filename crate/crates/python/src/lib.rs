//! Python bindings for tabforge. Frames cross the boundary as lists of six
//! optional frets, low E first; pitch sets as lists of MIDI numbers.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use tabforge::decoder::DecodeMode;
use tabforge::midi::{self, NoteKind};
use tabforge::nn::{self, ModelWeights, ProbabilisticTablature};
use tabforge::report::render_frames;
use tabforge::{DecodeConfig, MidiPitchSet, PlayabilityConfig, Tuning};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

// Vec<u8> would surface in Python as bytes rather than a list of ints.
fn widen(v: &[u8]) -> Vec<u32> {
    v.iter().map(|&x| x as u32).collect()
}

fn decode_config(mode: &str, fret_window: u8) -> PyResult<DecodeConfig> {
    if !(1..=25).contains(&fret_window) {
        return Err(value_error(format!("fret_window {fret_window} outside 1..=25")));
    }
    Ok(DecodeConfig {
        mode: mode.parse::<DecodeMode>().map_err(value_error)?,
        playability: PlayabilityConfig::with_window(fret_window),
        ..DecodeConfig::default()
    })
}

#[pyclass(name = "FretboardFrame", eq, from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyFrame(tabforge::FretboardFrame);

#[pymethods]
impl PyFrame {
    #[new]
    #[pyo3(signature = (frets = None))]
    fn new(frets: Option<[Option<u8>; 6]>) -> PyResult<Self> {
        match frets {
            None => Ok(PyFrame(tabforge::FretboardFrame::empty())),
            Some(f) => tabforge::FretboardFrame::from_frets(f).map(PyFrame).map_err(value_error),
        }
    }

    /// Frame from the 150-entry string-major one-hot layout.
    #[staticmethod]
    fn from_bits(bits: Vec<u8>) -> PyResult<Self> {
        tabforge::FretboardFrame::unflatten(&bits).map(PyFrame).map_err(value_error)
    }

    #[getter]
    fn frets(&self) -> [Option<u8>; 6] {
        *self.0.frets()
    }

    fn bits(&self) -> Vec<u32> {
        widen(self.0.flatten().bits())
    }

    fn pitches(&self) -> Vec<u32> {
        widen(&tabforge::frame_to_midi(&self.0, &Tuning::standard()).to_vec())
    }

    #[pyo3(signature = (fret_window = 6))]
    fn is_playable(&self, fret_window: u8) -> bool {
        tabforge::is_playable(&self.0, &PlayabilityConfig::with_window(fret_window))
    }

    fn __len__(&self) -> usize {
        self.0.active_count()
    }

    fn __repr__(&self) -> String {
        format!("FretboardFrame({:?})", self.0.frets())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

/// Network weights (float32), either freshly initialized or loaded from disk.
#[pyclass(name = "Model")]
pub struct PyModel(ModelWeights<f32>);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (seed = 42))]
    fn new(seed: u64) -> Self {
        PyModel(ModelWeights::init(seed))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        nn::load_weights(path).map(PyModel).map_err(value_error)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        nn::save_weights(&self.0, path).map_err(value_error)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    /// 150 probabilities for a 728-entry input (pitch bits then four history frames).
    fn forward(&self, input: Vec<f32>) -> PyResult<Vec<f64>> {
        nn::forward(&self.0, &input)
            .map(|p| p.values().to_vec())
            .map_err(value_error)
    }

    /// Tablature for a sequence of pitch sets, feeding back decoded history.
    #[pyo3(signature = (frames, mode = "greedy", fret_window = 6))]
    fn transcribe(&self, frames: Vec<Vec<u8>>, mode: &str, fret_window: u8) -> PyResult<Vec<PyFrame>> {
        let cfg = decode_config(mode, fret_window)?;
        let sets: Vec<MidiPitchSet> = frames.into_iter().map(MidiPitchSet::from_iter).collect();
        let results = tabforge::transcribe_sequence(&sets, &self.0, &cfg).map_err(value_error)?;
        Ok(results.into_iter().map(|r| PyFrame(r.frame)).collect())
    }
}

/// Best playable frame for `pitches` under a 150-entry probability map.
#[pyfunction]
#[pyo3(signature = (pitches, probabilities, mode = "greedy", fret_window = 6))]
fn decode_frame(pitches: Vec<u8>, probabilities: Vec<f64>, mode: &str, fret_window: u8) -> PyResult<(PyFrame, f64)> {
    let cfg = decode_config(mode, fret_window)?;
    let p = ProbabilisticTablature::from_values(probabilities).map_err(value_error)?;
    let r = tabforge::decode_frame(&MidiPitchSet::from_iter(pitches), &p, &cfg);
    Ok((PyFrame(r.frame), r.score))
}

/// Note events of a standard MIDI file as (tick, pitch, is_on, track, channel).
#[pyfunction]
fn parse_smf(data: &[u8]) -> PyResult<Vec<(u64, u8, bool, u16, u8)>> {
    let events = midi::parse_smf(data).map_err(value_error)?;
    Ok(events
        .into_iter()
        .map(|e| (e.tick, e.pitch, e.kind == NoteKind::On, e.track, e.channel))
        .collect())
}

/// Onset-bucketed pitch sets from the note-ons of a standard MIDI file.
#[pyfunction]
#[pyo3(signature = (data, quantize = midi::DEFAULT_QUANTIZE))]
fn midi_to_frames(data: &[u8], quantize: u64) -> PyResult<Vec<Vec<u32>>> {
    let events = midi::parse_smf(data).map_err(value_error)?;
    Ok(midi::events_to_frames(&events, quantize)
        .frames
        .iter()
        .map(|s| widen(&s.to_vec()))
        .collect())
}

#[pyfunction]
fn synth_corpus(seed: u64, pieces: usize, frames: usize) -> PyResult<Vec<(String, Vec<PyFrame>)>> {
    if pieces == 0 || frames == 0 {
        return Err(value_error("pieces and frames must be at least 1"));
    }
    Ok(tabforge::dataset::synth_corpus(seed, pieces, frames)
        .into_iter()
        .map(|p| (p.id, p.frames.into_iter().map(PyFrame).collect()))
        .collect())
}

#[pyfunction]
fn render_tab(frames: Vec<PyFrame>) -> String {
    render_frames(&frames.into_iter().map(|f| f.0).collect::<Vec<_>>())
}

/// "match", "partial" or "no match".
#[pyfunction]
fn classify_match(pred: &PyFrame, truth: &PyFrame) -> &'static str {
    tabforge::classify_match(&pred.0, &truth.0).label()
}

#[pyfunction]
fn cosine_accuracy(p: Vec<f64>, b: Vec<u8>) -> PyResult<f64> {
    if p.len() != b.len() {
        return Err(value_error("vectors must have equal length"));
    }
    tabforge::cosine_accuracy(&p, &b).map_err(value_error)
}

/// Finite-difference gradient check; returns (layer, max relative error) pairs.
#[pyfunction]
#[pyo3(signature = (instances = 20, seed = 42))]
fn gradcheck(instances: usize, seed: u64) -> Vec<(String, f64)> {
    let report = nn::gradcheck::run_gradient_suite(
        instances,
        seed,
        nn::gradcheck::DEFAULT_EPSILON,
        nn::gradcheck::DEFAULT_TOLERANCE,
    );
    report
        .layers
        .iter()
        .map(|l| (l.layer.name().to_string(), l.max_relative_error))
        .collect()
}

#[pymodule]
pub fn tabforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(parse_smf, m)?)?;
    m.add_function(wrap_pyfunction!(midi_to_frames, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(render_tab, m)?)?;
    m.add_function(wrap_pyfunction!(classify_match, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
