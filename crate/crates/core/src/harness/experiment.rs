use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{
    calibrate_thresholds, evaluate, simulate_corpus, Calibration, CalibrationItem, Condition, CorpusItem, EvalReport, EvalRow, Evaluation,
    HarnessError, NoiseKind, SimulateConfig, ThresholdGrid, sec_to_frame,
};
use crate::config::{DetectorMode, Settings};
use crate::dnn::{train, DnnError, DnnPosterior, DnnWeights, SoftLabel};
use crate::pipeline::{detect, extract_features, posteriors, FrameFeatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub test_utterances: usize,
    pub dev_utterances: usize,
    pub train_utterances: usize,
    pub snrs: Vec<f64>,
    pub test_noises: Vec<NoiseKind>,
    /// Noises the network is trained on.
    pub train_noises: Vec<NoiseKind>,
    pub grid: ThresholdGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            test_utterances: 50,
            dev_utterances: 16,
            train_utterances: 40,
            snrs: vec![5.0, 10.0, 15.0],
            test_noises: NoiseKind::ALL.to_vec(),
            train_noises: vec![NoiseKind::Wind, NoiseKind::Babble, NoiseKind::Television],
            grid: ThresholdGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub fused: Evaluation,
    pub gmm: Evaluation,
    pub dnn: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub calibration: Calibration,
    pub train_losses: Vec<f64>,
    pub results: Vec<ConditionResult>,
    pub tolerance_frames: u64,
}

impl ExperimentReport {
    pub fn eval_report(&self) -> EvalReport {
        let mut rows = Vec::new();
        for r in &self.results {
            for (alg, e) in [("fused", &r.fused), ("gmm", &r.gmm), ("dnn", &r.dnn)] {
                rows.push(EvalRow { snr_db: Some(r.condition.snr_db), noise: r.condition.noise.to_string(), algorithm: alg.into(), eval: *e });
            }
        }
        EvalReport { tolerance_frames: self.tolerance_frames, rows }
    }

    pub fn find(&self, noise: NoiseKind, snr_db: f64) -> Option<&ConditionResult> {
        self.results.iter().find(|r| r.condition.noise == noise && r.condition.snr_db == snr_db)
    }
}

/// Features, labels and (optionally) posteriors of one stream.
pub struct Prepared {
    pub item: CorpusItem,
    pub features: FrameFeatures,
    pub posteriors: Vec<DnnPosterior>,
}

impl Prepared {
    pub fn utterance_frames(&self) -> Vec<(u64, u64)> {
        self.item.utterances.iter().map(|u| (sec_to_frame(u.start_sec) as u64, sec_to_frame(u.end_sec) as u64)).collect()
    }
}

fn parallel_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| f(it))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

pub fn prepare(items: Vec<CorpusItem>, settings: &Settings) -> Result<Vec<Prepared>, HarnessError> {
    let feats = parallel_map(&items, |it| extract_features(&it.audio, settings));
    items
        .into_iter()
        .zip(feats)
        .map(|(item, f)| {
            let features = f?;
            if features.len() != item.labels.len() {
                return Err(HarnessError::LengthMismatch { decisions: features.len(), labels: item.labels.len() });
            }
            Ok(Prepared { item, features, posteriors: Vec::new() })
        })
        .collect()
}

/// Trains a fresh network on every frame of the given streams.
pub fn train_network(data: &[Prepared], settings: &Settings, seed: u64) -> Result<(DnnWeights, Vec<f64>), DnnError> {
    let pairs: Vec<(&[f64], SoftLabel)> =
        data.iter().flat_map(|p| p.features.spliced.iter().map(|x| x.0.as_slice()).zip(p.item.labels.iter().copied())).collect();
    let dim = pairs.first().map_or(0, |p| p.0.len());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut w = DnnWeights::random(dim, &mut rng).with_activation(settings.activation);
    let losses = train(&mut w, &pairs, &settings.train_config(seed))?;
    Ok((w, losses))
}

fn attach_posteriors(data: &mut [Prepared], w: &DnnWeights) -> Result<(), DnnError> {
    let all = parallel_map(data, |p| posteriors(w, &p.features.spliced));
    for (p, post) in data.iter_mut().zip(all) {
        p.posteriors = post?;
    }
    Ok(())
}

fn score(p: &Prepared, mode: DetectorMode, settings: &Settings) -> Result<Evaluation, HarnessError> {
    let flags: Vec<bool> = detect(mode, &p.features.subbands, &p.posteriors, settings).iter().map(|r| r.flag == 1).collect();
    evaluate(&flags, &p.item.labels, &p.utterance_frames(), &settings.endpoint(), settings.utterance_tolerance as u64)
}

/// Train on the training noises, calibrate on a development set, then score
/// the fused, GMM-only and DNN-only detectors on every test condition. Dev
/// posteriors are only offered to calibration for the training noises, so the
/// network side never sees the held-out noises.
pub fn run_experiment(cfg: &ExperimentConfig, settings: &Settings) -> Result<ExperimentReport, HarnessError> {
    let sim = |seed: u64, utterances: usize, noises: &[NoiseKind]| {
        simulate_corpus(&SimulateConfig { snrs: cfg.snrs.clone(), noises: noises.to_vec(), seed, utterances }, settings)
    };
    let train_set = prepare(sim(cfg.seed.wrapping_add(1), cfg.train_utterances, &cfg.train_noises)?, settings)?;
    let (weights, train_losses) = train_network(&train_set, settings, cfg.seed).map_err(dnn_err)?;
    drop(train_set);

    let mut dev = prepare(sim(cfg.seed.wrapping_add(2), cfg.dev_utterances, &cfg.test_noises)?, settings)?;
    attach_posteriors(&mut dev, &weights).map_err(dnn_err)?;
    let items: Vec<CalibrationItem<'_>> = dev
        .iter()
        .map(|p| CalibrationItem {
            subbands: &p.features.subbands,
            posteriors: if p.item.condition.is_some_and(|c| cfg.train_noises.contains(&c.noise)) { &p.posteriors } else { &[] },
            labels: &p.item.labels,
        })
        .collect();
    let calibration = calibrate_thresholds(&items, &cfg.grid, settings)?;
    drop(dev);

    let tuned = |mode| calibration.apply(mode, settings);
    let (fused, gmm, dnn) = (tuned(DetectorMode::Fused), tuned(DetectorMode::Gmm), tuned(DetectorMode::Dnn));
    let mut test = prepare(sim(cfg.seed.wrapping_add(3), cfg.test_utterances, &cfg.test_noises)?, settings)?;
    attach_posteriors(&mut test, &weights).map_err(dnn_err)?;
    let scored = parallel_map(&test, |p| -> Result<ConditionResult, HarnessError> {
        Ok(ConditionResult {
            condition: p.item.condition.expect("simulated items carry their condition"),
            fused: score(p, DetectorMode::Fused, &fused)?,
            gmm: score(p, DetectorMode::Gmm, &gmm)?,
            dnn: score(p, DetectorMode::Dnn, &dnn)?,
        })
    });
    let results = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport { calibration, train_losses, results, tolerance_frames: settings.utterance_tolerance as u64 })
}

fn dnn_err(e: DnnError) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}
