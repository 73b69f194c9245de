use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    energy_labels, mix_at_snr, read_labels, read_segment_annotations, refine_segment_labels, synth_noise, synth_speech_stream, write_labels,
    tile, write_segment_annotations, AnnotatedSegment, HarnessError, NoiseKind, NoiseSpec,
};
use crate::audio::{frame_count, read_wav, write_wav, SampleStream};
use crate::config::Settings;
use crate::dnn::SoftLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub noise: NoiseKind,
    pub snr_db: f64,
}

impl Condition {
    pub fn name(&self) -> String {
        format!("{}_{}db", self.noise, self.snr_db)
    }

    pub fn parse(name: &str) -> Option<Self> {
        let (noise, snr) = name.rsplit_once('_')?;
        let snr = snr.strip_suffix("db")?.parse().ok()?;
        Some(Self { noise: noise.parse().ok()?, snr_db: snr })
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub name: String,
    pub condition: Option<Condition>,
    pub audio: SampleStream,
    pub labels: Vec<SoftLabel>,
    pub utterances: Vec<AnnotatedSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub snrs: Vec<f64>,
    pub noises: Vec<NoiseKind>,
    pub seed: u64,
    pub utterances: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { snrs: vec![5.0, 10.0, 15.0], noises: NoiseKind::ALL.to_vec(), seed: 0, utterances: 50 }
    }
}

/// One clean stream of synthetic utterances mixed with every requested noise
/// at every requested SNR. Frame labels come from the clean signal.
pub fn simulate_corpus(cfg: &SimulateConfig, settings: &Settings) -> Result<Vec<CorpusItem>, HarnessError> {
    simulate_corpus_with(cfg, settings, &[])
}

/// Like [`simulate_corpus`], but a noise kind listed in `recorded` is taken
/// from that recording (tiled to length) instead of the generator.
pub fn simulate_corpus_with(
    cfg: &SimulateConfig,
    settings: &Settings,
    recorded: &[(NoiseKind, SampleStream)],
) -> Result<Vec<CorpusItem>, HarnessError> {
    let (clean, bounds) = synth_speech_stream(cfg.seed, cfg.utterances);
    let labels = energy_labels(&clean, settings.label_threshold_ratio, settings.label_boundary);
    let utterances: Vec<AnnotatedSegment> = bounds.iter().map(|&(a, b)| AnnotatedSegment::speech(a, b)).collect();
    let mut out = Vec::new();
    for &noise in &cfg.noises {
        let n = match recorded.iter().find(|(k, _)| *k == noise) {
            Some((_, rec)) => SampleStream::new(tile(rec, clean.len())),
            None => synth_noise(NoiseSpec { kind: noise, seed: cfg.seed.wrapping_mul(31).wrapping_add(noise as u64 + 1) }, clean.len()),
        };
        for &snr_db in &cfg.snrs {
            let condition = Condition { noise, snr_db };
            out.push(CorpusItem {
                name: condition.name(),
                condition: Some(condition),
                audio: mix_at_snr(&clean, &labels, &n, snr_db)?,
                labels: labels.clone(),
                utterances: utterances.clone(),
            });
        }
    }
    Ok(out)
}

/// `<name>.wav`, `<name>.labels.tsv` and `<name>.segments.tsv` per item.
pub fn write_corpus(dir: &Path, items: &[CorpusItem]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    for it in items {
        write_wav(dir.join(format!("{}.wav", it.name)), &it.audio.samples)?;
        let mut w = BufWriter::new(File::create(dir.join(format!("{}.labels.tsv", it.name)))?);
        write_labels(&mut w, &it.labels)?;
        let mut w = BufWriter::new(File::create(dir.join(format!("{}.segments.tsv", it.name)))?);
        write_segment_annotations(&mut w, &it.utterances)?;
    }
    Ok(())
}

/// Every `*.wav` in `dir`, sorted by name.
pub fn read_corpus(dir: &Path, settings: &Settings) -> Result<Vec<CorpusItem>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_item(p, settings)).collect()
}

/// One WAV file with its annotations. Frame labels are read from
/// `<stem>.labels.tsv` when present, otherwise derived from
/// `<stem>.segments.tsv`; with neither, every frame is silence.
pub fn read_item(wav: &Path, settings: &Settings) -> Result<CorpusItem, HarnessError> {
    let name = wav.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
    let sibling = |suffix: &str| wav.with_file_name(format!("{name}.{suffix}"));
    let audio = read_wav(wav)?;
    let frames = frame_count(audio.len());
    let seg_path = sibling("segments.tsv");
    let utterances = if seg_path.exists() {
        read_segment_annotations(BufReader::new(File::open(&seg_path)?))?.into_iter().filter(|s| s.is_speech()).collect()
    } else {
        Vec::new()
    };
    let label_path = sibling("labels.tsv");
    let labels = if label_path.exists() {
        read_labels(BufReader::new(File::open(&label_path)?))?
    } else {
        refine_segment_labels(&utterances, frames, settings.label_boundary)?
    };
    if labels.len() != frames {
        return Err(HarnessError::LengthMismatch { decisions: frames, labels: labels.len() });
    }
    Ok(CorpusItem { condition: Condition::parse(&name), name, audio, labels, utterances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_names() {
        let c = Condition { noise: NoiseKind::Television, snr_db: 15.0 };
        assert_eq!(c.name(), "television_15db");
        assert_eq!(Condition::parse("television_15db"), Some(c));
        assert_eq!(Condition::parse("clean"), None);
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimulateConfig { snrs: vec![10.0], noises: vec![NoiseKind::Wind, NoiseKind::Water], seed: 1, utterances: 2 };
        let settings = Settings::default();
        let items = simulate_corpus(&cfg, &settings).unwrap();
        write_corpus(dir.path(), &items).unwrap();
        let back = read_corpus(dir.path(), &settings).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].name, "water_10db");
        assert_eq!(back[1].labels, items[0].labels);
        assert_eq!(back[1].utterances.len(), 2);
        assert_eq!(back[1].audio.to_pcm16(), items[0].audio.to_pcm16());
    }
}
