use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::audio::{frame_count, SampleStream, FRAME_HOP, FRAME_LEN, SAMPLE_RATE_HZ};
use crate::dnn::SoftLabel;

/// Energy of every analysis frame (sum of squares over the window).
pub fn frame_energies(s: &SampleStream) -> Vec<f64> {
    (0..frame_count(s.len()))
        .map(|i| s.samples[i * FRAME_HOP..i * FRAME_HOP + FRAME_LEN].iter().map(|&v| (v as f64) * (v as f64)).sum())
        .collect()
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Marks `boundary` frames on each side of every speech/non-speech change as
/// uncertain. The first frame of the new run is at offset 0.
pub fn soften_transitions(hard: &[bool], boundary: usize) -> Vec<SoftLabel> {
    let mut out: Vec<SoftLabel> = hard.iter().map(|&h| if h { SoftLabel::Speech } else { SoftLabel::Silence }).collect();
    for i in 1..hard.len() {
        if hard[i] != hard[i - 1] {
            let lo = i.saturating_sub(boundary);
            let hi = (i + boundary).min(hard.len());
            out[lo..hi].fill(SoftLabel::Uncertain);
        }
    }
    out
}

/// Speech where the clean frame energy exceeds `threshold_ratio` times the
/// 95th-percentile frame energy.
pub fn energy_labels(clean: &SampleStream, threshold_ratio: f64, boundary: usize) -> Vec<SoftLabel> {
    assert!(threshold_ratio > 0.0 && threshold_ratio < 1.0, "threshold ratio must lie in (0, 1)");
    let e = frame_energies(clean);
    let thr = threshold_ratio * percentile(&e, 95.0);
    let hard: Vec<bool> = e.iter().map(|&x| x > thr).collect();
    soften_transitions(&hard, boundary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSegment {
    pub start_sec: f64,
    pub end_sec: f64,
    pub class: String,
}

impl AnnotatedSegment {
    pub fn speech(start_sec: f64, end_sec: f64) -> Self {
        Self { start_sec, end_sec, class: "speech".into() }
    }

    pub fn is_speech(&self) -> bool {
        self.class.eq_ignore_ascii_case("speech")
    }
}

pub fn sec_to_frame(sec: f64) -> usize {
    (sec * SAMPLE_RATE_HZ as f64 / FRAME_HOP as f64).round().max(0.0) as usize
}

/// Frame labels from segment annotations. Edges that coincide with the start
/// or end of the stream are not transitions.
pub fn refine_segment_labels(segments: &[AnnotatedSegment], total_frames: usize, boundary: usize) -> Result<Vec<SoftLabel>, HarnessError> {
    let mut prev_end = f64::NEG_INFINITY;
    for s in segments {
        if !(s.end_sec >= s.start_sec) {
            return Err(HarnessError::InvalidSegment { start: s.start_sec, end: s.end_sec });
        }
        if s.start_sec < prev_end {
            return Err(HarnessError::OverlappingSegments { start: s.start_sec, prev_end });
        }
        prev_end = s.end_sec;
    }
    let mut hard = vec![false; total_frames];
    for s in segments.iter().filter(|s| s.is_speech()) {
        let a = sec_to_frame(s.start_sec).min(total_frames);
        let b = sec_to_frame(s.end_sec).min(total_frames);
        hard[a..b].fill(true);
    }
    Ok(soften_transitions(&hard, boundary))
}

fn label_str(l: SoftLabel) -> &'static str {
    match l {
        SoftLabel::Silence => "0",
        SoftLabel::Uncertain => "0.5",
        SoftLabel::Speech => "1",
    }
}

pub fn write_labels<W: Write>(w: &mut W, labels: &[SoftLabel]) -> io::Result<()> {
    writeln!(w, "frame\tlabel")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i}\t{}", label_str(*l))?;
    }
    Ok(())
}

fn data_lines<R: BufRead>(r: R, header: &str) -> impl Iterator<Item = (usize, io::Result<String>)> {
    let header = header.to_owned();
    r.lines().enumerate().filter(move |(_, l)| match l {
        Ok(s) => !s.trim().is_empty() && !s.starts_with('#') && !s.starts_with(&header),
        Err(_) => true,
    })
}

/// Reads `frame<TAB>label`; frames must run 0, 1, 2, ...
pub fn read_labels<R: BufRead>(r: R) -> Result<Vec<SoftLabel>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in data_lines(r, "frame") {
        let line = line?;
        let bad = || HarnessError::Parse { line: n + 1, text: line.clone() };
        let (f, l) = line.split_once('\t').ok_or_else(bad)?;
        let f: usize = f.trim().parse().map_err(|_| bad())?;
        let v: f64 = l.trim().parse().map_err(|_| bad())?;
        if f != out.len() {
            return Err(bad());
        }
        out.push(SoftLabel::from_value(v).ok_or_else(bad)?);
    }
    Ok(out)
}

pub fn write_segment_annotations<W: Write>(w: &mut W, segments: &[AnnotatedSegment]) -> io::Result<()> {
    writeln!(w, "start_sec\tend_sec\tclass")?;
    for s in segments {
        writeln!(w, "{:.4}\t{:.4}\t{}", s.start_sec, s.end_sec, s.class)?;
    }
    Ok(())
}

pub fn read_segment_annotations<R: BufRead>(r: R) -> Result<Vec<AnnotatedSegment>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in data_lines(r, "start_sec") {
        let line = line?;
        let bad = || HarnessError::Parse { line: n + 1, text: line.clone() };
        let mut it = line.split('\t');
        let (a, b, c) = (it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?);
        out.push(AnnotatedSegment {
            start_sec: a.trim().parse().map_err(|_| bad())?,
            end_sec: b.trim().parse().map_err(|_| bad())?,
            class: c.trim().to_owned(),
        });
    }
    Ok(out)
}
