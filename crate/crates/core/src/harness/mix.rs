use super::HarnessError;
use crate::audio::{SampleStream, FRAME_HOP, FRAME_LEN};
use crate::dnn::SoftLabel;

/// Largest representable sample below 1.0 at 16-bit resolution.
const CLIP_HI: f32 = 1.0 - 1.0 / 32768.0;

/// Mean power over the windows of speech-labelled frames.
pub fn speech_power(clean: &SampleStream, labels: &[SoftLabel]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, l) in labels.iter().enumerate() {
        let start = i * FRAME_HOP;
        if *l != SoftLabel::Speech || start + FRAME_LEN > clean.len() {
            continue;
        }
        sum += clean.samples[start..start + FRAME_LEN].iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
        n += FRAME_LEN;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Noise repeated or cut to `len` samples.
pub fn tile(noise: &SampleStream, len: usize) -> Vec<f32> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    noise.samples.iter().copied().cycle().take(len).collect()
}

pub fn mean_power(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64
}

/// Noise gain that puts the mixture at `snr_db`.
pub fn mix_gain(p_speech: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_speech / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// `clean + g * noise`, with `g` chosen from the speech-frame power of the
/// clean signal, clipped to the 16-bit range.
pub fn mix_at_snr(clean: &SampleStream, labels: &[SoftLabel], noise: &SampleStream, snr_db: f64) -> Result<SampleStream, HarnessError> {
    let p_speech = speech_power(clean, labels);
    if !(p_speech > 0.0) {
        return Err(HarnessError::SilentClean);
    }
    let n = tile(noise, clean.len());
    let p_noise = mean_power(&n);
    if !(p_noise > 0.0) {
        return Ok(clean.clone());
    }
    let g = mix_gain(p_speech, p_noise, snr_db);
    let samples = clean.samples.iter().zip(&n).map(|(&c, &v)| (c as f64 + g * v as f64).clamp(-1.0, CLIP_HI as f64) as f32).collect();
    Ok(SampleStream::new(samples))
}
