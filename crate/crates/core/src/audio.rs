//! PCM decoding and the fixed frame clock shared by both detectors.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

pub const SAMPLE_RATE_HZ: u32 = 16_000;
/// 25 ms analysis window at 16 kHz.
pub const FRAME_LEN: usize = 400;
/// 10 ms hop at 16 kHz.
pub const FRAME_HOP: usize = 160;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("not a RIFF/WAVE file: {0}")]
    NotWav(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("sample rate {0} Hz, expected 16000 Hz")]
    WrongRate(u32),
    #[error("stream has {0} samples, need at least one 400-sample window")]
    TooShort(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio, normalized to `[-1, 1)` at decode time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

impl SampleStream {
    pub fn new(samples: Vec<f32>) -> Self {
        Self { samples, sample_rate_hz: SAMPLE_RATE_HZ }
    }

    pub fn from_pcm16(pcm: &[i16]) -> Self {
        Self::new(pcm.iter().map(|&s| pcm16_to_f32(s)).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_sec(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples.iter().map(|&s| f32_to_pcm16(s)).collect()
    }
}

#[inline]
pub fn pcm16_to_f32(s: i16) -> f32 {
    s as f32 / 32768.0
}

#[inline]
pub fn f32_to_pcm16(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// One analysis window on the frame clock.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub index: usize,
    pub window: &'a [f32],
}

impl<'a> Frame<'a> {
    /// The non-overlapping leading hop of the window.
    pub fn hop(&self) -> &'a [f32] {
        &self.window[..FRAME_HOP.min(self.window.len())]
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<SampleStream, AudioError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_wav_from(std::io::BufReader::new(file))
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<SampleStream, AudioError> {
    let mut wav = hound::WavReader::new(reader).map_err(|e| match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        other => AudioError::NotWav(other.to_string()),
    })?;
    let spec = wav.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{:?} {}-bit, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(AudioError::WrongRate(spec.sample_rate));
    }
    let samples = wav
        .samples::<i16>()
        .map(|s| s.map(pcm16_to_f32))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AudioError::NotWav(e.to_string()))?;
    Ok(SampleStream::new(samples))
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[f32]) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| AudioError::Io(std::io::Error::other(e)))?;
    for &s in samples {
        w.write_sample(f32_to_pcm16(s)).map_err(|e| AudioError::Io(std::io::Error::other(e)))?;
    }
    w.finalize().map_err(|e| AudioError::Io(std::io::Error::other(e)))?;
    Ok(())
}

/// Headerless little-endian 16-bit mono PCM, as accepted on stdin with `--raw`.
pub fn read_raw_pcm<R: Read>(mut reader: R) -> Result<SampleStream, AudioError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let pcm: Vec<i16> = bytes.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
    Ok(SampleStream::from_pcm16(&pcm))
}

pub fn frame_count(len: usize) -> usize {
    if len < FRAME_LEN {
        0
    } else {
        (len - FRAME_LEN) / FRAME_HOP + 1
    }
}

/// Slices a stream into overlapping 400-sample windows at a 160-sample hop.
pub fn frame_stream(s: &SampleStream) -> Result<Vec<Frame<'_>>, AudioError> {
    if s.len() < FRAME_LEN {
        return Err(AudioError::TooShort(s.len()));
    }
    Ok((0..frame_count(s.len()))
        .map(|index| {
            let start = index * FRAME_HOP;
            Frame { index, window: &s.samples[start..start + FRAME_LEN] }
        })
        .collect())
}

/// Incremental framer for streaming input: samples go in, whole windows come out.
#[derive(Debug, Default)]
pub struct Framer {
    pending: Vec<f32>,
    next_index: usize,
}

impl Framer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends samples and calls `emit` for every window that is now complete.
    pub fn push(&mut self, samples: &[f32], mut emit: impl FnMut(Frame<'_>)) {
        self.pending.extend_from_slice(samples);
        let mut start = 0;
        while self.pending.len() - start >= FRAME_LEN {
            emit(Frame { index: self.next_index, window: &self.pending[start..start + FRAME_LEN] });
            self.next_index += 1;
            start += FRAME_HOP;
        }
        self.pending.drain(..start);
    }

    pub fn frames_emitted(&self) -> usize {
        self.next_index
    }
}
