use crate::audio::{Frame, FRAME_LEN, SAMPLE_RATE_HZ};

use super::spectrum::{bin_frequency, hz_to_mel, mel_to_hz, PowerSpectrum, NUM_BINS};
use super::{FbankVector, SubbandFeature, ENERGY_FLOOR, NUM_MELS, NUM_SUBBANDS};

/// WebRTC-style band layout, in Hz.
pub const SUBBAND_EDGES_HZ: [f64; NUM_SUBBANDS + 1] = [80.0, 250.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0];

/// Per-frame spectral front end producing both the DNN statics and the GMM subband energies.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    spectrum: PowerSpectrum,
    /// Sparse triangular filters: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
    band_bins: [(usize, usize); NUM_SUBBANDS],
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureExtractor {
    pub fn new() -> Self {
        Self::with_subband_edges(SUBBAND_EDGES_HZ)
    }

    pub fn with_subband_edges(edges: [f64; NUM_SUBBANDS + 1]) -> Self {
        assert!(edges.windows(2).all(|w| w[0] < w[1]), "subband edges must increase");
        assert!(edges[0] >= 0.0 && edges[NUM_SUBBANDS] <= SAMPLE_RATE_HZ as f64 / 2.0);
        let mut band_bins = [(0, 0); NUM_SUBBANDS];
        for (b, bins) in band_bins.iter_mut().enumerate() {
            let lo = (0..NUM_BINS).find(|&k| bin_frequency(k) >= edges[b]).unwrap_or(NUM_BINS);
            let hi = (0..NUM_BINS).find(|&k| bin_frequency(k) >= edges[b + 1]).unwrap_or(NUM_BINS);
            *bins = (lo, hi);
        }
        Self { spectrum: PowerSpectrum::new(FRAME_LEN), filters: mel_filters(), band_bins }
    }

    pub fn fbank(&self, frame: &Frame<'_>) -> FbankVector {
        let power = self.spectrum.compute(frame.window, true);
        let mut values = [0.0; NUM_MELS];
        for (v, (start, weights)) in values.iter_mut().zip(&self.filters) {
            let e: f64 = weights.iter().zip(&power[*start..]).map(|(w, p)| w * p).sum();
            *v = e.max(ENERGY_FLOOR).ln();
        }
        FbankVector(values)
    }

    pub fn subbands(&self, frame: &Frame<'_>) -> SubbandFeature {
        let power = self.spectrum.compute(frame.window, false);
        let mut e = [0.0; NUM_SUBBANDS];
        for (v, &(lo, hi)) in e.iter_mut().zip(&self.band_bins) {
            *v = power[lo..hi].iter().sum::<f64>().max(ENERGY_FLOOR).ln();
        }
        SubbandFeature { e }
    }
}

/// Center frequencies (Hz) of the 29 mel filters spanning 0..8000 Hz.
pub fn mel_centers_hz() -> [f64; NUM_MELS] {
    let pts = mel_points();
    std::array::from_fn(|j| mel_to_hz(pts[j + 1]))
}

fn mel_points() -> Vec<f64> {
    let lo = hz_to_mel(0.0);
    let hi = hz_to_mel(SAMPLE_RATE_HZ as f64 / 2.0);
    (0..NUM_MELS + 2).map(|i| lo + (hi - lo) * i as f64 / (NUM_MELS + 1) as f64).collect()
}

fn mel_filters() -> Vec<(usize, Vec<f64>)> {
    let pts = mel_points();
    (0..NUM_MELS)
        .map(|j| {
            let (left, center, right) = (pts[j], pts[j + 1], pts[j + 2]);
            let weights: Vec<(usize, f64)> = (0..NUM_BINS)
                .filter_map(|k| {
                    let m = hz_to_mel(bin_frequency(k));
                    let w = if m > left && m <= center {
                        (m - left) / (center - left)
                    } else if m > center && m < right {
                        (right - m) / (right - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            let start = weights.first().map_or(0, |&(k, _)| k);
            (start, weights.into_iter().map(|(_, w)| w).collect())
        })
        .collect()
}
