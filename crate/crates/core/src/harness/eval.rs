use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dnn::SoftLabel;
use crate::segmenter::{EndpointConfig, EndpointEvent, EndpointState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameScore {
    pub correct: usize,
    /// Frames with a hard label.
    pub scored: usize,
    /// Frames labelled uncertain and left out.
    pub uncertain: usize,
}

impl FrameScore {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.scored)
    }

    pub fn add(&mut self, o: &FrameScore) {
        self.correct += o.correct;
        self.scored += o.scored;
        self.uncertain += o.uncertain;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub hit: usize,
    pub total: usize,
}

impl UtteranceScore {
    pub fn accuracy(&self) -> f64 {
        ratio(self.hit, self.total)
    }

    pub fn add(&mut self, o: &UtteranceScore) {
        self.hit += o.hit;
        self.total += o.total;
    }
}

/// `1.0` for an empty denominator: nothing to get wrong.
fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

pub fn frame_score(decisions: &[bool], truth: &[SoftLabel]) -> Result<FrameScore, HarnessError> {
    if decisions.len() != truth.len() {
        return Err(HarnessError::LengthMismatch { decisions: decisions.len(), labels: truth.len() });
    }
    let mut s = FrameScore::default();
    for (&d, &t) in decisions.iter().zip(truth) {
        match t {
            SoftLabel::Uncertain => s.uncertain += 1,
            SoftLabel::Speech | SoftLabel::Silence => {
                s.scored += 1;
                s.correct += (d == (t == SoftLabel::Speech)) as usize;
            }
        }
    }
    Ok(s)
}

/// A true utterance counts as found when some detected segment has both its
/// begin and its end within `tolerance` frames of the truth.
pub fn utterance_score(detected: &[(u64, u64)], truth: &[(u64, u64)], tolerance: u64) -> UtteranceScore {
    let hit = truth
        .iter()
        .filter(|&&(tb, te)| detected.iter().any(|&(b, e)| b.abs_diff(tb) <= tolerance && e.abs_diff(te) <= tolerance))
        .count();
    UtteranceScore { hit, total: truth.len() }
}

/// Segment boundaries the endpoint detector finds in a flag stream; an open
/// segment is closed at the last frame.
pub fn detected_segments(flags: &[bool], cfg: &EndpointConfig) -> Vec<(u64, u64)> {
    let mut st = EndpointState::new(*cfg);
    let mut out = Vec::new();
    let mut open = None;
    for (t, &f) in flags.iter().enumerate() {
        match st.push_flag(f, t as u64) {
            Some(EndpointEvent::Begin { at, .. }) => open = Some(at),
            Some(EndpointEvent::End { at, .. }) => out.push((open.take().expect("begin before end"), at)),
            None => {}
        }
    }
    if let Some(b) = open {
        out.push((b, flags.len() as u64));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub frames: FrameScore,
    pub utterances: UtteranceScore,
}

impl Evaluation {
    pub fn add(&mut self, o: &Evaluation) {
        self.frames.add(&o.frames);
        self.utterances.add(&o.utterances);
    }
}

pub fn evaluate(
    decisions: &[bool],
    truth: &[SoftLabel],
    true_utterances: &[(u64, u64)],
    endpoint: &EndpointConfig,
    tolerance: u64,
) -> Result<Evaluation, HarnessError> {
    let frames = frame_score(decisions, truth)?;
    let utterances = utterance_score(&detected_segments(decisions, endpoint), true_utterances, tolerance);
    Ok(Evaluation { frames, utterances })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub snr_db: Option<f64>,
    pub noise: String,
    pub algorithm: String,
    pub eval: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance_frames: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn get(&self, noise: &str, snr_db: f64, algorithm: &str) -> Option<&Evaluation> {
        self.rows.iter().find(|r| r.noise == noise && r.snr_db == Some(snr_db) && r.algorithm == algorithm).map(|r| &r.eval)
    }

    pub fn write_tsv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# frame accuracy excludes frames labelled 0.5")?;
        writeln!(w, "# utterance accuracy: begin and end both within +-{} frames of the truth", self.tolerance_frames)?;
        writeln!(
            w,
            "snr_db\tnoise\talgorithm\tframe_accuracy\tutterance_accuracy\tframes_correct\tframes_scored\tframes_uncertain\tutterances_hit\tutterances_total"
        )?;
        for r in &self.rows {
            let snr = r.snr_db.map_or_else(|| "-".to_owned(), |s| format!("{s}"));
            let e = &r.eval;
            writeln!(
                w,
                "{snr}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}\t{}",
                r.noise,
                r.algorithm,
                e.frames.accuracy(),
                e.utterances.accuracy(),
                e.frames.correct,
                e.frames.scored,
                e.frames.uncertain,
                e.utterances.hit,
                e.utterances.total
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(bits: &[u8]) -> Vec<SoftLabel> {
        bits.iter().map(|&b| SoftLabel::from_value(b as f64 / 2.0).unwrap()).collect()
    }

    #[test]
    fn perfect_decisions() {
        let truth = labels(&[0, 0, 1, 2, 2, 2, 1, 0]);
        let d: Vec<bool> = truth.iter().map(|&l| l == SoftLabel::Speech).collect();
        let s = frame_score(&d, &truth).unwrap();
        assert_eq!(s, FrameScore { correct: 6, scored: 6, uncertain: 2 });
        assert_eq!(s.accuracy(), 1.0);
        assert_eq!(utterance_score(&[(3, 6)], &[(3, 6)], 20).accuracy(), 1.0);
    }

    #[test]
    fn all_silent_decisions() {
        let truth = labels(&[0, 0, 0, 1, 2, 2, 2, 2, 1, 0]);
        let s = frame_score(&[false; 10], &truth).unwrap();
        assert_eq!(s.accuracy(), 4.0 / 8.0);
    }

    #[test]
    fn tolerance_boundary() {
        assert_eq!(utterance_score(&[(120, 300)], &[(100, 300)], 20).hit, 1);
        assert_eq!(utterance_score(&[(121, 300)], &[(100, 300)], 20).hit, 0);
        assert_eq!(utterance_score(&[(100, 279)], &[(100, 300)], 20).hit, 0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(frame_score(&[true], &[]), Err(HarnessError::LengthMismatch { .. })));
    }

    #[test]
    fn segments_from_flags() {
        let cfg = EndpointConfig { begin_window: 2, begin_ratio: 1.0, begin_traceback: 1, end_window: 2, end_ratio: 1.0, end_traceback: 1, buffer_frames: 50 };
        let flags: Vec<bool> = (0..30).map(|t| (5..12).contains(&t) || t >= 25).collect();
        assert_eq!(detected_segments(&flags, &cfg), vec![(5, 13), (25, 30)]);
    }

    #[test]
    fn report_layout() {
        let r = EvalReport {
            tolerance_frames: 20,
            rows: vec![EvalRow {
                snr_db: Some(5.0),
                noise: "wind".into(),
                algorithm: "fused".into(),
                eval: Evaluation { frames: FrameScore { correct: 3, scored: 4, uncertain: 1 }, utterances: UtteranceScore { hit: 1, total: 2 } },
            }],
        };
        let mut buf = Vec::new();
        r.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("+-20 frames"));
        assert!(text.ends_with("5\twind\tfused\t0.7500\t0.5000\t3\t4\t1\t1\t2\n"));
    }
}
