//! Synthetic corpus, labelling, scoring and threshold calibration.

mod calibrate;
mod corpus;
mod eval;
mod experiment;
mod labels;
mod mix;
mod synth;

pub use calibrate::{calibrate_thresholds, grid_search, Calibration, CalibrationItem, ThresholdGrid};
pub use corpus::{read_corpus, read_item, simulate_corpus, simulate_corpus_with, write_corpus, Condition, CorpusItem, SimulateConfig};
pub use eval::{detected_segments, evaluate, frame_score, utterance_score, EvalReport, EvalRow, Evaluation, FrameScore, UtteranceScore};
pub use experiment::{prepare, run_experiment, train_network, ConditionResult, ExperimentConfig, ExperimentReport, Prepared};
pub use labels::{
    energy_labels, frame_energies, percentile, read_labels, read_segment_annotations, refine_segment_labels, sec_to_frame, soften_transitions,
    write_labels, write_segment_annotations, AnnotatedSegment,
};
pub use mix::{mean_power, mix_at_snr, mix_gain, speech_power, tile};
pub use synth::{synth_noise, synth_speech_stream, synth_utterance, NoiseKind, NoiseSpec};

use thiserror::Error;

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("clean signal has no power in its speech frames")]
    SilentClean,
    #[error("segment starting at {start}s overlaps the previous one ending at {prev_end}s")]
    OverlappingSegments { start: f64, prev_end: f64 },
    #[error("segment {start}s..{end}s ends before it starts")]
    InvalidSegment { start: f64, end: f64 },
    #[error("{decisions} decisions but {labels} labels")]
    LengthMismatch { decisions: usize, labels: usize },
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("line {line}: cannot parse {text:?}")]
    Parse { line: usize, text: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
