//! Linear-buffer reference for the streaming segmenter, shared by test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use vadfuse::segmenter::{EndpointConfig, Segmenter};

#[derive(Debug, PartialEq)]
pub struct Seg {
    pub begin: u64,
    pub end: u64,
    pub truncated: bool,
    pub samples: Vec<f32>,
}

/// Unbounded history, every window recounted from scratch, segments cut from
/// the full linear record with the same buffer-sized chunking.
pub fn oracle(cfg: &EndpointConfig, flags: &[bool], audio: &[Vec<f32>]) -> Vec<Seg> {
    let need_on = (cfg.begin_ratio * cfg.begin_window as f64 - 1e-9).ceil().max(1.0) as usize;
    let need_off = (cfg.end_ratio * cfg.end_window as f64 - 1e-9).ceil().max(1.0) as usize;
    let cap = cfg.buffer_frames as u64;
    let cut = |b: u64, e: u64, truncated: bool| Seg { begin: b, end: e, truncated, samples: audio[b as usize..e as usize].concat() };

    let mut out = Vec::new();
    let mut since_reset: Vec<bool> = Vec::new();
    let mut in_speech = false;
    let mut begin = 0u64;
    let mut chunk = 0u64;
    let mut continued = false;
    let mut prev_end = 0u64;
    for (t, &f) in flags.iter().enumerate() {
        let t = t as u64;
        since_reset.push(if in_speech { !f } else { f });
        let w = if in_speech { cfg.end_window } else { cfg.begin_window };
        let count = since_reset.iter().rev().take(w).filter(|&&h| h).count();
        if !in_speech && count >= need_on {
            begin = t.saturating_sub(cfg.begin_traceback as u64).max(prev_end);
            chunk = begin;
            continued = false;
            in_speech = true;
            since_reset.clear();
        } else if in_speech && count >= need_off {
            let end = (t + 1).saturating_sub(cfg.end_traceback as u64).max(begin + 1);
            if end > chunk {
                out.push(cut(chunk, end, continued));
            }
            prev_end = end;
            in_speech = false;
            since_reset.clear();
        }
        if in_speech && t + 1 - chunk >= cap {
            out.push(cut(chunk, chunk + cap, true));
            chunk += cap;
            continued = true;
        }
    }
    if in_speech && (flags.len() as u64) > chunk {
        out.push(cut(chunk, flags.len() as u64, continued));
    }
    out
}

pub fn episode(seed: u64) -> (EndpointConfig, Vec<bool>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let buffer_frames = rng.random_range(8..=256);
    let begin_window = rng.random_range(1..=40);
    let end_window = rng.random_range(1..=40);
    let ratio = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
        let lo = 1.0 / n as f64;
        rng.random_range(lo..=1.0)
    };
    let cfg = EndpointConfig {
        begin_window,
        begin_ratio: ratio(&mut rng, begin_window),
        begin_traceback: rng.random_range(0..buffer_frames),
        end_window,
        end_ratio: ratio(&mut rng, end_window),
        end_traceback: rng.random_range(0..60),
        buffer_frames,
    };
    // bursty flags: runs of speech and silence with some flips inside
    let len = rng.random_range(0..1500);
    let mut flags = Vec::with_capacity(len);
    let mut state = rng.random_bool(0.5);
    while flags.len() < len {
        let run = rng.random_range(1..(3 * buffer_frames).min(400));
        let flip = rng.random_range(0.0..0.3);
        for _ in 0..run {
            flags.push(if rng.random_bool(flip) { !state } else { state });
        }
        state = !state;
    }
    flags.truncate(len);
    (cfg, flags)
}

/// Runs the real segmenter over one episode with two samples per frame.
pub fn run_segmenter(cfg: &EndpointConfig, flags: &[bool], audio: &[Vec<f32>]) -> Vec<Seg> {
    let mut seg = Segmenter::with_frame_len(*cfg, 2).unwrap();
    let mut got = Vec::new();
    for (f, a) in flags.iter().zip(audio) {
        got.extend(seg.push(*f, a).unwrap());
    }
    got.extend(seg.finish().unwrap());
    got.into_iter().map(|s| Seg { begin: s.begin_frame, end: s.end_frame, truncated: s.truncated, samples: s.samples }).collect()
}

/// Distinct, sign-alternating samples so any misplaced frame shows up.
pub fn tagged_audio(frames: usize) -> Vec<Vec<f32>> {
    (0..frames).map(|t| vec![t as f32, -(t as f32) - 0.5]).collect()
}
