use std::collections::VecDeque;

use super::{
    spliced_dim, CmnState, FbankVector, FeatureFrame, SplicedFeature, DELTA_WINDOW, FEATURE_DIM, NUM_MELS,
};

/// One regression stage with bounded lookahead: emits `(value, delta)` for
/// index `t` once `t + DELTA_WINDOW` has arrived or the input is finished.
#[derive(Debug, Default)]
struct RegressionStage {
    buf: VecDeque<[f64; NUM_MELS]>,
    base: usize,
    pushed: usize,
    emitted: usize,
}

impl RegressionStage {
    fn push(&mut self, v: [f64; NUM_MELS]) {
        self.buf.push_back(v);
        self.pushed += 1;
    }

    fn pop(&mut self, finished: bool) -> Option<([f64; NUM_MELS], [f64; NUM_MELS])> {
        let t = self.emitted;
        if t >= self.pushed || (!finished && t + DELTA_WINDOW >= self.pushed) {
            return None;
        }
        let last = self.pushed - 1;
        let at = |j: usize| &self.buf[j.min(last) - self.base];
        let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
        let mut d = [0.0; NUM_MELS];
        for n in 1..=DELTA_WINDOW {
            let (next, prev) = (at(t + n), at(t.saturating_sub(n)));
            for i in 0..NUM_MELS {
                d[i] += n as f64 * (next[i] - prev[i]);
            }
        }
        d.iter_mut().for_each(|x| *x /= norm);
        let value = *at(t);
        self.emitted += 1;
        while self.base + DELTA_WINDOW < self.emitted {
            self.buf.pop_front();
            self.base += 1;
        }
        Some((value, d))
    }

    fn drained(&self) -> bool {
        self.emitted == self.pushed
    }
}

/// Causal front end matching the batch path `deltas -> streaming CMN -> splice`
/// exactly, with a fixed lookahead of `2 * DELTA_WINDOW + right` frames.
#[derive(Debug)]
pub struct StreamingFrontEnd {
    left: usize,
    right: usize,
    statics: RegressionStage,
    d1: RegressionStage,
    pending_statics: VecDeque<[f64; NUM_MELS]>,
    cmn: CmnState,
    normalized: VecDeque<FeatureFrame>,
    norm_base: usize,
    norm_count: usize,
    spliced: usize,
    finished: bool,
}

impl StreamingFrontEnd {
    pub fn new(left: usize, right: usize, cmn: CmnState) -> Self {
        Self {
            left,
            right,
            statics: RegressionStage::default(),
            d1: RegressionStage::default(),
            pending_statics: VecDeque::new(),
            cmn,
            normalized: VecDeque::new(),
            norm_base: 0,
            norm_count: 0,
            spliced: 0,
            finished: false,
        }
    }

    pub fn dim(&self) -> usize {
        spliced_dim(self.left, self.right)
    }

    /// Frames consumed before the first output is available.
    pub fn latency(&self) -> usize {
        2 * DELTA_WINDOW + self.right
    }

    pub fn push(&mut self, f: FbankVector, out: &mut Vec<SplicedFeature>) {
        self.statics.push(f.0);
        self.advance(out);
    }

    /// Flushes the tail using edge replication.
    pub fn finish(&mut self, out: &mut Vec<SplicedFeature>) {
        self.finished = true;
        self.advance(out);
    }

    fn advance(&mut self, out: &mut Vec<SplicedFeature>) {
        while let Some((s, d)) = self.statics.pop(self.finished) {
            self.pending_statics.push_back(s);
            self.d1.push(d);
        }
        let d1_done = self.finished && self.statics.drained();
        while let Some((a, b)) = self.d1.pop(d1_done) {
            let s = self.pending_statics.pop_front().expect("statics aligned with deltas");
            let frame = self.cmn.apply(&FeatureFrame::new(&s, &a, &b));
            self.normalized.push_back(frame);
            self.norm_count += 1;
        }
        let all_normalized = d1_done && self.d1.drained();
        while self.spliced < self.norm_count && (all_normalized || self.spliced + self.right < self.norm_count) {
            let t = self.spliced;
            let last = self.norm_count - 1;
            let mut v = Vec::with_capacity(self.dim());
            for j in 0..self.left + 1 + self.right {
                let src = (t + j).saturating_sub(self.left).min(last);
                v.extend_from_slice(&self.normalized[src - self.norm_base].0);
            }
            debug_assert_eq!(v.len(), FEATURE_DIM * (self.left + 1 + self.right));
            out.push(SplicedFeature(v));
            self.spliced += 1;
            while self.norm_base + self.left < self.spliced {
                self.normalized.pop_front();
                self.norm_base += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{deltas, splice, streaming_cmn};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_batch_path(n in 1usize..40, left in 0usize..6, right in 0usize..6, seed in 0u64..1000) {
            let seq: Vec<FbankVector> = (0..n)
                .map(|t| FbankVector(std::array::from_fn(|i| (((t * 31 + i * 7) as u64 ^ seed) % 97) as f64 / 10.0)))
                .collect();
            let batch = splice(&streaming_cmn(&deltas(&seq), &mut CmnState::default()), left, right);
            let mut fe = StreamingFrontEnd::new(left, right, CmnState::default());
            let mut out = Vec::new();
            for (t, f) in seq.iter().enumerate() {
                fe.push(*f, &mut out);
                prop_assert!(out.len() + fe.latency() >= t + 1);
            }
            fe.finish(&mut out);
            prop_assert_eq!(out, batch);
        }
    }
}
