use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{SampleStream, SAMPLE_RATE_HZ};

const FS: f64 = SAMPLE_RATE_HZ as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Wind,
    Water,
    Babble,
    Television,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::Wind, NoiseKind::Water, NoiseKind::Babble, NoiseKind::Television];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Wind => "wind",
            NoiseKind::Water => "water",
            NoiseKind::Babble => "babble",
            NoiseKind::Television => "television",
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wind" => Ok(NoiseKind::Wind),
            "water" => Ok(NoiseKind::Water),
            "babble" => Ok(NoiseKind::Babble),
            "television" | "tv" => Ok(NoiseKind::Television),
            other => Err(format!("unknown noise kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

/// RBJ biquad, direct form I.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff_hz: f64, q: f64) -> Self {
        let w = 2.0 * PI * cutoff_hz / FS;
        let alpha = w.sin() / (2.0 * q);
        let cos = w.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - cos) / 2.0 / a0, (1.0 - cos) / a0, (1.0 - cos) / 2.0 / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn bandpass(center_hz: f64, q: f64) -> Self {
        let w = 2.0 * PI * center_hz / FS;
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b: [alpha / a0, 0.0, -alpha / a0], a: [-2.0 * w.cos() / a0, (1.0 - alpha) / a0], x: [0.0; 2], y: [0.0; 2] }
    }

    fn run(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1] - self.a[0] * self.y[0] - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

/// Smoothed random process in roughly [0, 1], new target every `period` samples.
struct Wander {
    period: usize,
    left: usize,
    current: f64,
    target: f64,
    step: f64,
}

impl Wander {
    fn new(period: usize) -> Self {
        Self { period: period.max(1), left: 0, current: 0.5, target: 0.5, step: 0.0 }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.left == 0 {
            self.target = rng.random_range(0.0..1.0);
            self.left = self.period;
            self.step = (self.target - self.current) / self.period as f64;
        }
        self.left -= 1;
        self.current += self.step;
        self.current
    }
}

fn normalize_rms(mut x: Vec<f64>, rms: f64) -> Vec<f32> {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if p > 0.0 {
        let g = rms / p.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    x.into_iter().map(|v| v as f32).collect()
}

fn wind(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut f1 = Biquad::lowpass(150.0, 0.707);
    let mut f2 = Biquad::lowpass(150.0, 0.707);
    let mut gust = Wander::new(rng.random_range(4_000..12_000));
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            let g = 0.3 + gust.next(rng);
            f2.run(f1.run(w)) * g
        })
        .collect()
}

fn water(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut flutter = Wander::new(40);
    (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            let m = flutter.next(rng);
            w * (0.5 + m)
        })
        .collect()
}

fn babble_into(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    struct Talker {
        freq: f64,
        phase: f64,
        env: Wander,
        bp: Biquad,
    }
    let mut talkers: Vec<Talker> = (0..6)
        .map(|_| {
            let freq = rng.random_range(300.0..3000.0);
            Talker { freq, phase: rng.random_range(0.0..2.0 * PI), env: Wander::new(rng.random_range(600..2_400)), bp: Biquad::bandpass(freq, 2.0) }
        })
        .collect();
    for v in out.iter_mut() {
        let mut s = 0.0;
        for t in &mut talkers {
            t.freq = (t.freq * (1.0 + 2e-4 * rng.random_range(-1.0..1.0))).clamp(300.0, 3000.0);
            t.phase = (t.phase + 2.0 * PI * t.freq / FS) % (2.0 * PI);
            let e = t.env.next(rng);
            let hiss: f64 = StandardNormal.sample(rng);
            let e = 0.35 + 0.65 * e;
            s += e * e * (t.phase.sin() + 0.3 * t.bp.run(hiss));
        }
        *v += s;
    }
}

/// Legato chords over a bass note: each chord fades in while the previous one
/// fades out, so the level stays roughly constant.
fn music_into(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let overlap = 1_600usize;
    let mut start = 0usize;
    while start < out.len() {
        let note = rng.random_range(8_000..24_000);
        let root = 130.0 * 2f64.powf(rng.random_range(0..12) as f64 / 12.0);
        let partials = [0.5, 1.0, 1.26, 1.5, 2.0];
        let end = (start + note + overlap).min(out.len());
        for (k, v) in out[start..end].iter_mut().enumerate() {
            let t = k as f64 / FS;
            let rise = (k as f64 / overlap as f64).min(1.0);
            let fall = ((start + note + overlap - (start + k)) as f64 / overlap as f64).min(1.0);
            let env = (0.5 - 0.5 * (PI * rise).cos()) * (0.5 - 0.5 * (PI * fall).cos());
            let mut s = 0.0;
            for c in partials {
                for h in 1..=10 {
                    s += (2.0 * PI * root * c * h as f64 * t).sin() / h as f64;
                }
            }
            *v += env * s / 8.0;
        }
        start += note;
    }
}

fn television(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let fade = 16_000;
    let mut music = vec![0.0; n];
    let mut babble = vec![0.0; n];
    music_into(rng, &mut music);
    babble_into(rng, &mut babble);
    let p = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt().max(1e-12);
    let (pm, pb) = (p(&music), p(&babble));
    // Share of the music bed; dialogue fills the rest.
    let mut weight = vec![0.0; n];
    let mut pos = 0;
    let mut on = rng.random_bool(0.5);
    while pos < n {
        let len = rng.random_range(80_000..192_000).min(n - pos);
        weight[pos..pos + len].iter_mut().for_each(|w| *w = if on { 0.7 } else { 0.3 });
        pos += len;
        on = !on;
    }
    let mut smooth = weight.first().copied().unwrap_or(0.5);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        smooth += (weight[i] - smooth) / fade as f64;
        out.push(smooth * music[i] / pm + (1.0 - smooth) * babble[i] / pb);
    }
    out
}

/// Deterministic noise for a given spec, scaled to an RMS of 0.1.
pub fn synth_noise(spec: NoiseSpec, len: usize) -> SampleStream {
    if len == 0 {
        return SampleStream::new(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (spec.kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let raw = match spec.kind {
        NoiseKind::Wind => wind(&mut rng, len),
        NoiseKind::Water => water(&mut rng, len),
        NoiseKind::Babble => {
            let mut v = vec![0.0; len];
            babble_into(&mut rng, &mut v);
            v
        }
        NoiseKind::Television => television(&mut rng, len),
    };
    SampleStream::new(normalize_rms(raw, 0.1))
}

/// One synthetic utterance: voiced syllables built from a harmonic source
/// shaped by three formant resonances, some preceded by a fricative burst,
/// separated by short pauses.
pub fn synth_utterance(rng: &mut ChaCha8Rng, duration_sec: f64) -> Vec<f32> {
    let n = (duration_sec * FS) as usize;
    let mut out = vec![0.0f64; n];
    let base_f0 = rng.random_range(90.0..240.0);
    let mut pos = 0usize;
    while pos < n {
        if rng.random_bool(0.3) {
            let len = rng.random_range(700..1_400).min(n - pos);
            let mut bp = Biquad::bandpass(rng.random_range(3_500.0..5_500.0), 1.5);
            for (k, v) in out[pos..pos + len].iter_mut().enumerate() {
                let env = (PI * k as f64 / len as f64).sin();
                let w: f64 = StandardNormal.sample(rng);
                *v += 0.5 * env * bp.run(w);
            }
            pos += len;
        }
        if pos >= n {
            break;
        }
        let len = rng.random_range(1_900..4_800).min(n - pos);
        let formants = [rng.random_range(300.0..850.0), rng.random_range(900.0..2_300.0), rng.random_range(2_400.0..3_200.0)];
        let bw = [90.0, 120.0, 180.0];
        let f0_start = base_f0 * rng.random_range(0.9..1.15);
        let f0_end = base_f0 * rng.random_range(0.8..1.05);
        let amp = rng.random_range(0.5..1.0);
        let mut phase = 0.0f64;
        for k in 0..len {
            let frac = k as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase = (phase + 2.0 * PI * f0 / FS) % (2.0 * PI);
            let env = (PI * frac).sin().powf(0.6);
            let mut s = 0.0;
            let mut h = 1;
            while h as f64 * f0 < 7_000.0 {
                let f = h as f64 * f0;
                let gain: f64 = formants.iter().zip(bw).map(|(&fc, b)| 1.0 / (1.0 + ((f - fc) / b).powi(2))).sum::<f64>() / (1.0 + f / 2_000.0);
                s += gain * (h as f64 * phase).sin();
                h += 1;
            }
            out[pos + k] += amp * env * s;
        }
        pos += len;
        pos += rng.random_range(300..1_600);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g = if peak > 0.0 { 0.3 / peak } else { 0.0 };
    out.into_iter().map(|v| (v * g) as f32).collect()
}

/// A continuous stream of `count` utterances separated by silence. Returns the
/// samples and the utterance boundaries in seconds.
pub fn synth_speech_stream(seed: u64, count: usize) -> (SampleStream, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f32> = Vec::new();
    let mut bounds = Vec::with_capacity(count);
    let gap = |rng: &mut ChaCha8Rng| vec![0.0f32; (rng.random_range(0.8..2.0) * FS) as usize];
    samples.extend(gap(&mut rng));
    for _ in 0..count {
        let start = samples.len() as f64 / FS;
        let dur = rng.random_range(0.8..2.5);
        samples.extend(synth_utterance(&mut rng, dur));
        bounds.push((start, samples.len() as f64 / FS));
        samples.extend(gap(&mut rng));
    }
    (SampleStream::new(samples), bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn power_below(x: &[f32], hz: f64) -> f64 {
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (mut lo, mut all) = (0.0, 0.0);
        for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
            let p = c.norm_sqr();
            all += p;
            if (k as f64) * FS / n as f64 <= hz {
                lo += p;
            }
        }
        lo / all
    }

    #[test]
    fn deterministic() {
        for kind in NoiseKind::ALL {
            let s = NoiseSpec { kind, seed: 9 };
            assert_eq!(synth_noise(s, 5_000), synth_noise(s, 5_000));
            assert_ne!(synth_noise(s, 5_000), synth_noise(NoiseSpec { kind, seed: 10 }, 5_000));
        }
        assert!(synth_noise(NoiseSpec { kind: NoiseKind::Wind, seed: 1 }, 0).is_empty());
    }

    #[test]
    fn wind_is_low_frequency() {
        let x = synth_noise(NoiseSpec { kind: NoiseKind::Wind, seed: 4 }, 160_000);
        let frac = power_below(&x.samples, 300.0);
        assert!(frac >= 0.8, "only {frac} of the power below 300 Hz");
    }

    #[test]
    fn water_is_broadband() {
        let x = synth_noise(NoiseSpec { kind: NoiseKind::Water, seed: 4 }, 64_000);
        let frac = power_below(&x.samples, 4_000.0);
        assert!((0.4..0.6).contains(&frac), "{frac}");
    }

    #[test]
    fn speech_stream_layout() {
        let (s, bounds) = synth_speech_stream(3, 5);
        assert_eq!(bounds.len(), 5);
        for w in bounds.windows(2) {
            assert!(w[0].1 < w[1].0);
        }
        let peak = s.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(peak > 0.2 && peak <= 0.3 + 1e-6);
        assert!(bounds.last().unwrap().1 < s.duration_sec());
    }
}
