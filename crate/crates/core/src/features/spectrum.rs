use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::SAMPLE_RATE_HZ;

pub const FFT_LEN: usize = 512;
pub const NUM_BINS: usize = FFT_LEN / 2 + 1;
pub const PRE_EMPHASIS: f64 = 0.97;

/// Hamming-windowed 512-point power spectrum of a single analysis window.
#[derive(Clone)]
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl std::fmt::Debug for PowerSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PowerSpectrum").field("window_len", &self.window.len()).finish()
    }
}

impl PowerSpectrum {
    pub fn new(window_len: usize) -> Self {
        assert!(window_len <= FFT_LEN, "window longer than FFT");
        let fft = FftPlanner::new().plan_fft_forward(FFT_LEN);
        let denom = (window_len.max(2) - 1) as f64;
        let window = (0..window_len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos()).collect();
        Self { fft, window }
    }

    /// `|X_k|^2` for `k = 0..=256`. With `pre_emphasis` the window is first filtered by `1 - 0.97 z^-1`.
    pub fn compute(&self, samples: &[f32], pre_emphasis: bool) -> [f64; NUM_BINS] {
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        let n = samples.len().min(self.window.len());
        for i in 0..n {
            let x = samples[i] as f64;
            let y = if pre_emphasis && i > 0 { x - PRE_EMPHASIS * samples[i - 1] as f64 } else { x };
            buf[i].re = y * self.window[i];
        }
        self.fft.process(&mut buf);
        let mut out = [0.0; NUM_BINS];
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.norm_sqr();
        }
        out
    }
}

pub fn bin_frequency(k: usize) -> f64 {
    k as f64 * SAMPLE_RATE_HZ as f64 / FFT_LEN as f64
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}
