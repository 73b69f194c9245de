//! Endpoint detection over the per-frame speech flags and extraction of the
//! detected segments from a bounded circular buffer.

mod buffer;

pub use buffer::{extract, resolve_segment, RingBuffer, SegmentSpan, Span, SpanCase};

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{FRAME_HOP, SAMPLE_RATE_HZ};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("traceback of {traceback} frames exceeds the {written} frames of the segment")]
    InvalidTraceback { traceback: usize, written: usize },
    #[error("span {start}+{len} lies outside a buffer of {capacity} frames")]
    SpanOutOfRange { start: usize, len: usize, capacity: usize },
    #[error("segment of {written} frames no longer fits a buffer of {capacity}")]
    Overwritten { written: usize, capacity: usize },
    #[error("open segment of {written} frames has not exhausted the buffer of {capacity}")]
    NotOverflowed { written: usize, capacity: usize },
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Frames in the onset window.
    pub begin_window: usize,
    /// Fraction of speech frames in the onset window that opens a segment.
    pub begin_ratio: f64,
    /// Frames to step back from the onset trigger.
    pub begin_traceback: usize,
    pub end_window: usize,
    /// Fraction of non-speech frames in the end window that closes a segment.
    pub end_ratio: f64,
    pub end_traceback: usize,
    /// Ring buffer capacity in frames.
    pub buffer_frames: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            begin_window: 30,
            begin_ratio: 0.7,
            begin_traceback: 35,
            end_window: 50,
            end_ratio: 0.9,
            end_traceback: 40,
            buffer_frames: 1000,
        }
    }
}

fn required(window: usize, ratio: f64) -> usize {
    (ratio * window as f64 - 1e-9).ceil().max(1.0) as usize
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        let bad = |m: String| Err(SegmentError::Config(m));
        if self.begin_window == 0 || self.end_window == 0 {
            return bad("windows must hold at least one frame".into());
        }
        for (name, r, n) in [("begin_ratio", self.begin_ratio, self.begin_window), ("end_ratio", self.end_ratio, self.end_window)] {
            if !(r > 0.0 && r <= 1.0) || r * (n as f64) < 1.0 - 1e-9 {
                return bad(format!("{name} = {r} must lie in (0, 1] and cover at least one frame"));
            }
        }
        if self.begin_traceback >= self.buffer_frames {
            return bad(format!(
                "begin traceback {} must be shorter than the buffer ({} frames)",
                self.begin_traceback, self.buffer_frames
            ));
        }
        Ok(())
    }

    /// Frames needed in the onset window.
    pub fn begin_count(&self) -> usize {
        required(self.begin_window, self.begin_ratio)
    }

    pub fn end_count(&self) -> usize {
        required(self.end_window, self.end_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Silence,
    InSpeech { begin: u64 },
}

/// Frame indices are half-open: a segment spans `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointEvent {
    Begin { at: u64, trigger: u64 },
    End { at: u64, trigger: u64 },
}

/// Sliding-window onset/offset detector. In silence the window counts speech
/// flags; in speech it counts non-speech flags. It is cleared on every switch.
#[derive(Debug, Clone)]
pub struct EndpointState {
    cfg: EndpointConfig,
    window: VecDeque<bool>,
    count: usize,
    mode: Mode,
    prev_end: u64,
    last_frame: Option<u64>,
}

impl EndpointState {
    pub fn new(cfg: EndpointConfig) -> Self {
        Self { cfg, window: VecDeque::with_capacity(cfg.begin_window.max(cfg.end_window)), count: 0, mode: Mode::Silence, prev_end: 0, last_frame: None }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn window_hits(&self) -> usize {
        self.window.iter().filter(|&&h| h).count()
    }

    fn reset_window(&mut self) {
        self.window.clear();
        self.count = 0;
    }

    pub fn push_flag(&mut self, flag: bool, frame: u64) -> Option<EndpointEvent> {
        if let Some(last) = self.last_frame {
            assert!(frame > last, "frame indices must increase ({frame} after {last})");
        }
        self.last_frame = Some(frame);
        let (hit, cap) = match self.mode {
            Mode::Silence => (flag, self.cfg.begin_window),
            Mode::InSpeech { .. } => (!flag, self.cfg.end_window),
        };
        self.window.push_back(hit);
        self.count += hit as usize;
        if self.window.len() > cap && self.window.pop_front() == Some(true) {
            self.count -= 1;
        }
        match self.mode {
            Mode::Silence if self.count >= self.cfg.begin_count() => {
                let at = frame.saturating_sub(self.cfg.begin_traceback as u64).max(self.prev_end);
                self.mode = Mode::InSpeech { begin: at };
                self.reset_window();
                Some(EndpointEvent::Begin { at, trigger: frame })
            }
            Mode::InSpeech { begin } if self.count >= self.cfg.end_count() => {
                let at = (frame + 1).saturating_sub(self.cfg.end_traceback as u64).max(begin + 1);
                self.mode = Mode::Silence;
                self.prev_end = at;
                self.reset_window();
                Some(EndpointEvent::End { at, trigger: frame })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub begin_frame: u64,
    pub end_frame: u64,
    /// Set when the buffer ran out before the end was found; the speech
    /// continues in the next segment.
    pub truncated: bool,
    /// Layout the segment had in the ring buffer when it was cut.
    pub case: SpanCase,
    pub samples: Vec<f32>,
}

/// Streaming segmenter: one flag and one block of samples per frame.
#[derive(Debug, Clone)]
pub struct Segmenter {
    ep: EndpointState,
    rb: RingBuffer,
    open: Option<OpenSegment>,
    next_frame: u64,
}

#[derive(Debug, Clone, Copy)]
struct OpenSegment {
    begin: u64,
    continued: bool,
}

impl Segmenter {
    pub fn new(cfg: EndpointConfig) -> Result<Self, SegmentError> {
        Self::with_frame_len(cfg, FRAME_HOP)
    }

    pub fn with_frame_len(cfg: EndpointConfig, frame_len: usize) -> Result<Self, SegmentError> {
        cfg.validate()?;
        Ok(Self { ep: EndpointState::new(cfg), rb: RingBuffer::new(cfg.buffer_frames, frame_len), open: None, next_frame: 0 })
    }

    pub fn endpoint_state(&self) -> &EndpointState {
        &self.ep
    }

    fn cut(&self, open: OpenSegment, end: u64, traceback: Option<usize>) -> Result<Segment, SegmentError> {
        let written = (self.next_frame - open.begin) as usize;
        let span = resolve_segment(self.rb.capacity(), self.rb.slot_of(open.begin), written, traceback)?;
        Ok(Segment {
            begin_frame: open.begin,
            end_frame: end,
            truncated: span.truncated || open.continued,
            case: span.case,
            samples: extract(&self.rb, &span)?,
        })
    }

    pub fn push(&mut self, flag: bool, samples: &[f32]) -> Result<Option<Segment>, SegmentError> {
        let frame = self.next_frame;
        self.rb.write_frame(samples);
        self.next_frame += 1;
        let mut out = None;
        match self.ep.push_flag(flag, frame) {
            Some(EndpointEvent::Begin { at, .. }) => self.open = Some(OpenSegment { begin: at, continued: false }),
            Some(EndpointEvent::End { at, .. }) => {
                let open = self.open.take().expect("end without an open segment");
                if at > open.begin {
                    out = Some(self.cut(open, at, Some((self.next_frame - at) as usize))?);
                }
            }
            None => {}
        }
        if let Some(open) = self.open {
            let cap = self.rb.capacity() as u64;
            if self.next_frame - open.begin >= cap {
                out = Some(self.cut(open, open.begin + cap, None)?);
                self.open = Some(OpenSegment { begin: open.begin + cap, continued: true });
            }
        }
        Ok(out)
    }

    /// Closes a segment left open at the end of the stream.
    pub fn finish(&mut self) -> Result<Option<Segment>, SegmentError> {
        match self.open.take() {
            Some(open) if self.next_frame > open.begin => Ok(Some(self.cut(open, self.next_frame, Some(0))?)),
            _ => Ok(None),
        }
    }
}

pub fn frames_to_sec(frame: u64) -> f64 {
    frame as f64 * FRAME_HOP as f64 / SAMPLE_RATE_HZ as f64
}

/// `begin_frame end_frame begin_sec end_sec truncated`, tab separated, with a header line.
pub fn write_segment_report<W: Write>(w: &mut W, segments: &[Segment]) -> io::Result<()> {
    writeln!(w, "begin_frame\tend_frame\tbegin_sec\tend_sec\ttruncated")?;
    for s in segments {
        writeln!(
            w,
            "{}\t{}\t{:.2}\t{:.2}\t{}",
            s.begin_frame,
            s.end_frame,
            frames_to_sec(s.begin_frame),
            frames_to_sec(s.end_frame),
            s.truncated as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, rho: f64, m: usize) -> EndpointConfig {
        EndpointConfig { begin_window: n, begin_ratio: rho, begin_traceback: m, ..EndpointConfig::default() }
    }

    #[test]
    fn sparse_flags_never_open() {
        let mut st = EndpointState::new(cfg(10, 0.5, 3));
        for t in 0..500u64 {
            let flag = matches!(t % 10, 0 | 3 | 5 | 8);
            assert_eq!(st.push_flag(flag, t), None);
        }
    }

    #[test]
    fn begin_traceback() {
        let mut st = EndpointState::new(cfg(10, 0.5, 20));
        for t in 0..95u64 {
            assert_eq!(st.push_flag(false, t), None);
        }
        for t in 95..99u64 {
            assert_eq!(st.push_flag(true, t), None);
        }
        assert_eq!(st.push_flag(true, 99), Some(EndpointEvent::Begin { at: 79, trigger: 99 }));
        assert_eq!(st.mode(), Mode::InSpeech { begin: 79 });
        assert_eq!(st.window_len(), 0);
    }

    #[test]
    fn begin_clamps_at_stream_start() {
        let mut st = EndpointState::new(cfg(1, 1.0, 20));
        assert_eq!(st.push_flag(false, 4), None);
        assert_eq!(st.push_flag(true, 5), Some(EndpointEvent::Begin { at: 0, trigger: 5 }));
    }

    #[test]
    fn begin_never_precedes_previous_end() {
        let c = EndpointConfig { begin_window: 2, begin_ratio: 1.0, begin_traceback: 50, end_window: 2, end_ratio: 1.0, end_traceback: 1, buffer_frames: 100 };
        let mut st = EndpointState::new(c);
        let flags = [1, 1, 1, 0, 0, 1, 1];
        let evs: Vec<_> = flags.iter().enumerate().filter_map(|(t, &f)| st.push_flag(f == 1, t as u64)).collect();
        assert_eq!(
            evs,
            vec![
                EndpointEvent::Begin { at: 0, trigger: 1 },
                EndpointEvent::End { at: 4, trigger: 4 },
                EndpointEvent::Begin { at: 4, trigger: 6 },
            ]
        );
    }

    #[test]
    fn ceil_threshold() {
        assert_eq!(cfg(30, 0.7, 35).begin_count(), 21);
        assert_eq!(cfg(10, 1.0, 3).begin_count(), 10);
        assert_eq!(EndpointConfig::default().end_count(), 45);
    }

    #[test]
    fn config_checks() {
        assert!(EndpointConfig::default().validate().is_ok());
        assert!(cfg(10, 0.05, 3).validate().is_err());
        assert!(cfg(10, 0.5, 1000).validate().is_err());
        assert!(cfg(0, 0.5, 3).validate().is_err());
    }

    #[test]
    fn segment_with_hangover() {
        let c = EndpointConfig { begin_window: 4, begin_ratio: 0.75, begin_traceback: 3, end_window: 5, end_ratio: 0.8, end_traceback: 4, buffer_frames: 64 };
        let mut seg = Segmenter::with_frame_len(c, 1).unwrap();
        let flags: Vec<bool> = (0..60).map(|t| (20..35).contains(&t)).collect();
        let mut out = Vec::new();
        for (t, &f) in flags.iter().enumerate() {
            out.extend(seg.push(f, &[t as f32]).unwrap());
        }
        assert_eq!(out.len(), 1);
        let s = &out[0];
        // onset fires at 22 (three of four), steps back three frames
        assert_eq!(s.begin_frame, 19);
        // offset fires at 38 (four of five), keeps frames up to 38 - 4
        assert_eq!(s.end_frame, 35);
        assert_eq!(s.samples, (19..35).map(|t| t as f32).collect::<Vec<_>>());
        assert!(!s.truncated);
    }

    #[test]
    fn long_speech_is_flushed_in_buffer_sized_chunks() {
        let c = EndpointConfig { begin_window: 2, begin_ratio: 1.0, begin_traceback: 1, end_window: 3, end_ratio: 1.0, end_traceback: 2, buffer_frames: 10 };
        let mut seg = Segmenter::with_frame_len(c, 1).unwrap();
        let mut out = Vec::new();
        for t in 0..40u64 {
            out.extend(seg.push((5..30).contains(&t), &[t as f32]).unwrap());
        }
        let bounds: Vec<_> = out.iter().map(|s| (s.begin_frame, s.end_frame, s.truncated)).collect();
        assert_eq!(bounds, vec![(5, 15, true), (15, 25, true), (25, 31, true)]);
        for s in &out {
            assert_eq!(s.samples, (s.begin_frame..s.end_frame).map(|t| t as f32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn open_segment_flushed_at_finish() {
        let mut seg = Segmenter::with_frame_len(EndpointConfig { begin_window: 1, begin_ratio: 1.0, begin_traceback: 0, ..EndpointConfig::default() }, 1).unwrap();
        for t in 0..5 {
            assert!(seg.push(t >= 2, &[t as f32]).unwrap().is_none());
        }
        let s = seg.finish().unwrap().unwrap();
        assert_eq!((s.begin_frame, s.end_frame), (2, 5));
        assert!(seg.finish().unwrap().is_none());
    }

    #[test]
    fn report_format() {
        let mut buf = Vec::new();
        let s = Segment { begin_frame: 150, end_frame: 420, truncated: false, case: SpanCase::Linear, samples: vec![] };
        write_segment_report(&mut buf, &[s]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "begin_frame\tend_frame\tbegin_sec\tend_sec\ttruncated\n150\t420\t1.50\t4.20\t0\n");
    }
}
