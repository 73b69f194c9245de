//! Front end: log-mel filterbank statics with deltas, mean normalization and
//! context splicing for the DNN, plus six subband log-energies for the GMM.

mod dump;
mod fbank;
mod spectrum;
mod stream;

pub use dump::{read_feature_dump, write_feature_dump, DumpError};
pub use fbank::{mel_centers_hz, FeatureExtractor, SUBBAND_EDGES_HZ};
pub use spectrum::{hz_to_mel, mel_to_hz, PowerSpectrum, FFT_LEN, PRE_EMPHASIS};
pub use stream::StreamingFrontEnd;

use serde::{Deserialize, Serialize};

use crate::audio::Frame;

pub const NUM_MELS: usize = 29;
pub const FEATURE_DIM: usize = NUM_MELS * 3;
pub const NUM_SUBBANDS: usize = 6;
pub const ENERGY_FLOOR: f64 = 1e-10;
pub const DELTA_WINDOW: usize = 2;

/// 29 log mel filterbank energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbankVector(pub [f64; NUM_MELS]);

/// Statics followed by first and second regression deltas (87 values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame(pub [f64; FEATURE_DIM]);

impl FeatureFrame {
    pub fn new(statics: &[f64; NUM_MELS], delta1: &[f64; NUM_MELS], delta2: &[f64; NUM_MELS]) -> Self {
        let mut v = [0.0; FEATURE_DIM];
        v[..NUM_MELS].copy_from_slice(statics);
        v[NUM_MELS..2 * NUM_MELS].copy_from_slice(delta1);
        v[2 * NUM_MELS..].copy_from_slice(delta2);
        Self(v)
    }

    pub fn statics(&self) -> &[f64] {
        &self.0[..NUM_MELS]
    }

    pub fn delta1(&self) -> &[f64] {
        &self.0[NUM_MELS..2 * NUM_MELS]
    }

    pub fn delta2(&self) -> &[f64] {
        &self.0[2 * NUM_MELS..]
    }
}

/// `(left + 1 + right)` feature frames, oldest first, centered on the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicedFeature(pub Vec<f64>);

impl SplicedFeature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub fn spliced_dim(left: usize, right: usize) -> usize {
    FEATURE_DIM * (left + 1 + right)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubbandFeature {
    pub e: [f64; NUM_SUBBANDS],
}

/// Log filterbank of one frame with the default extractor.
pub fn fbank(frame: &Frame<'_>) -> FbankVector {
    DEFAULT_EXTRACTOR.with(|ex| ex.fbank(frame))
}

/// Subband log-energies of one frame with the default band layout.
pub fn subbands(frame: &Frame<'_>) -> SubbandFeature {
    DEFAULT_EXTRACTOR.with(|ex| ex.subbands(frame))
}

thread_local! {
    static DEFAULT_EXTRACTOR: FeatureExtractor = FeatureExtractor::new();
}

/// Normalized regression over `±DELTA_WINDOW` neighbors, replicating edge frames.
pub fn regression<const D: usize>(seq: &[[f64; D]]) -> Vec<[f64; D]> {
    let last = seq.len().saturating_sub(1);
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    (0..seq.len())
        .map(|t| {
            let mut d = [0.0; D];
            for n in 1..=DELTA_WINDOW {
                let next = &seq[(t + n).min(last)];
                let prev = &seq[t.saturating_sub(n)];
                for i in 0..D {
                    d[i] += n as f64 * (next[i] - prev[i]);
                }
            }
            d.iter_mut().for_each(|x| *x /= norm);
            d
        })
        .collect()
}

pub fn deltas(seq: &[FbankVector]) -> Vec<FeatureFrame> {
    let statics: Vec<[f64; NUM_MELS]> = seq.iter().map(|f| f.0).collect();
    let d1 = regression(&statics);
    let d2 = regression(&d1);
    statics.iter().zip(&d1).zip(&d2).map(|((s, a), b)| FeatureFrame::new(s, a, b)).collect()
}

/// Causal running-mean normalization: cumulative mean during warm-up, then
/// exponential decay. One instance per stream.
#[derive(Debug, Clone)]
pub struct CmnState {
    pub running_mean: [f64; FEATURE_DIM],
    pub decay: f64,
    pub warmup_frames: usize,
    pub count: usize,
}

impl Default for CmnState {
    fn default() -> Self {
        Self::new(0.995, 20)
    }
}

impl CmnState {
    pub fn new(decay: f64, warmup_frames: usize) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "CMN decay must lie in (0, 1)");
        Self { running_mean: [0.0; FEATURE_DIM], decay, warmup_frames, count: 0 }
    }

    pub fn apply(&mut self, f: &FeatureFrame) -> FeatureFrame {
        let mut out = [0.0; FEATURE_DIM];
        if self.count < self.warmup_frames {
            self.count += 1;
            let n = self.count as f64;
            for i in 0..FEATURE_DIM {
                self.running_mean[i] += (f.0[i] - self.running_mean[i]) / n;
                out[i] = f.0[i] - self.running_mean[i];
            }
        } else {
            self.count += 1;
            for i in 0..FEATURE_DIM {
                out[i] = f.0[i] - self.running_mean[i];
                self.running_mean[i] = self.decay * self.running_mean[i] + (1.0 - self.decay) * f.0[i];
            }
        }
        FeatureFrame(out)
    }
}

/// Per-utterance mean subtraction.
pub fn batch_cmn(seq: &[FeatureFrame]) -> Vec<FeatureFrame> {
    if seq.is_empty() {
        return Vec::new();
    }
    let mut mean = [0.0; FEATURE_DIM];
    for f in seq {
        for i in 0..FEATURE_DIM {
            mean[i] += f.0[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= seq.len() as f64);
    seq.iter().map(|f| FeatureFrame(std::array::from_fn(|i| f.0[i] - mean[i]))).collect()
}

pub fn streaming_cmn(seq: &[FeatureFrame], state: &mut CmnState) -> Vec<FeatureFrame> {
    seq.iter().map(|f| state.apply(f)).collect()
}

pub fn splice_at(seq: &[FeatureFrame], t: usize, left: usize, right: usize) -> SplicedFeature {
    let last = seq.len() - 1;
    let mut v = Vec::with_capacity(spliced_dim(left, right));
    for j in 0..left + 1 + right {
        let src = (t + j).saturating_sub(left).min(last);
        v.extend_from_slice(&seq[src].0);
    }
    SplicedFeature(v)
}

pub fn splice(seq: &[FeatureFrame], left: usize, right: usize) -> Vec<SplicedFeature> {
    (0..seq.len()).map(|t| splice_at(seq, t, left, right)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize, slope: f64) -> Vec<FbankVector> {
        (0..n).map(|t| FbankVector(std::array::from_fn(|i| slope * t as f64 + i as f64))).collect()
    }

    #[test]
    fn constant_sequence_has_zero_deltas() {
        let seq = vec![FbankVector([1.5; NUM_MELS]); 12];
        for f in deltas(&seq) {
            assert!(f.delta1().iter().chain(f.delta2()).all(|&d| d == 0.0));
        }
    }

    #[test]
    fn ramp_deltas_equal_slope_in_interior() {
        let out = deltas(&ramp(20, 0.75));
        // delta2 needs two more frames of interior than delta1
        for f in &out[2..18] {
            assert!(f.delta1().iter().all(|&d| (d - 0.75).abs() < 1e-12));
        }
        for f in &out[4..16] {
            assert!(f.delta2().iter().all(|&d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn single_frame_deltas_vanish() {
        let out = deltas(&[FbankVector([3.0; NUM_MELS])]);
        assert_eq!(out.len(), 1);
        assert!(out[0].delta1().iter().chain(out[0].delta2()).all(|&d| d == 0.0));
    }

    #[test]
    fn batch_cmn_zero_mean() {
        let seq = deltas(&ramp(37, 0.3));
        let out = batch_cmn(&seq);
        for i in 0..FEATURE_DIM {
            let m: f64 = out.iter().map(|f| f.0[i]).sum::<f64>() / out.len() as f64;
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn streaming_cmn_first_frame_is_zero_and_constant_converges() {
        let mut st = CmnState::default();
        let f = FeatureFrame([2.5; FEATURE_DIM]);
        assert!(st.apply(&f).0.iter().all(|&x| x == 0.0));
        let mut last = FeatureFrame([1.0; FEATURE_DIM]);
        for _ in 0..2000 {
            last = st.apply(&f);
        }
        let norm = last.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3);
    }

    #[test]
    fn streaming_cmn_tracks_a_level_change() {
        // closed form: after warm-up at level a, a step to b decays as decay^k
        let mut st = CmnState::new(0.995, 20);
        for _ in 0..20 {
            st.apply(&FeatureFrame([1.0; FEATURE_DIM]));
        }
        let mut out = FeatureFrame([0.0; FEATURE_DIM]);
        for _ in 0..500 {
            out = st.apply(&FeatureFrame([3.0; FEATURE_DIM]));
        }
        let expected = 2.0 * 0.995f64.powi(499);
        assert!((out.0[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn splice_dims_and_edges() {
        let seq = deltas(&ramp(8, 1.0));
        let sp = splice(&seq, 5, 5);
        assert_eq!(sp[0].dim(), 957);
        for blk in 0..5 {
            assert_eq!(&sp[0].0[blk * FEATURE_DIM..(blk + 1) * FEATURE_DIM], &seq[0].0[..]);
        }
        let id = splice(&seq, 0, 0);
        for (s, f) in id.iter().zip(&seq) {
            assert_eq!(&s.0[..], &f.0[..]);
        }
    }

    proptest! {
        #[test]
        fn deltas_are_linear(a in prop::collection::vec(-5.0f64..5.0, 29 * 6), b in prop::collection::vec(-5.0f64..5.0, 29 * 6)) {
            let to_seq = |v: &[f64]| v.chunks(29).map(|c| FbankVector(c.try_into().unwrap())).collect::<Vec<_>>();
            let sa = to_seq(&a);
            let sb = to_seq(&b);
            let sum: Vec<FbankVector> = sa.iter().zip(&sb).map(|(x, y)| FbankVector(std::array::from_fn(|i| x.0[i] + y.0[i]))).collect();
            let (da, db, ds) = (deltas(&sa), deltas(&sb), deltas(&sum));
            for t in 0..ds.len() {
                for i in 0..FEATURE_DIM {
                    prop_assert!((ds[t].0[i] - da[t].0[i] - db[t].0[i]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn splice_dimension(left in 0usize..8, right in 0usize..8, n in 1usize..15) {
            let seq = deltas(&ramp(n, 0.1));
            for s in splice(&seq, left, right) {
                prop_assert_eq!(s.dim(), 87 * (left + 1 + right));
            }
        }
    }
}
