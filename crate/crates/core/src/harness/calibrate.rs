use serde::{Deserialize, Serialize};

use super::{frame_score, FrameScore, HarnessError};
use crate::config::{DetectorMode, Settings};
use crate::dnn::{DnnPosterior, SoftLabel};
use crate::features::SubbandFeature;
use crate::pipeline::detect;

/// One labelled stream with its precomputed detector inputs.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationItem<'a> {
    pub subbands: &'a [SubbandFeature],
    /// May be empty when no network is available.
    pub posteriors: &'a [DnnPosterior],
    pub labels: &'a [SoftLabel],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub t_tau: Vec<f64>,
    pub t_a: Vec<f64>,
    pub dnn: Vec<f64>,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            t_tau: (2..=16).map(|i| i as f64 * 0.5).collect(),
            t_a: (1..=12).map(|i| i as f64 * 0.5).collect(),
            dnn: (1..=19).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_tau: f64,
    pub t_a: f64,
    pub dnn_threshold: f64,
    /// GMM thresholds for the fused detector; the standalone pair when no
    /// posteriors were available.
    pub fused_t_tau: f64,
    pub fused_t_a: f64,
    pub gmm_accuracy: f64,
    pub dnn_accuracy: Option<f64>,
    pub fused_accuracy: Option<f64>,
}

impl Calibration {
    /// `settings` with the thresholds the given detector was tuned for.
    pub fn apply(&self, mode: DetectorMode, settings: &Settings) -> Settings {
        let (t_tau, t_a) = match mode {
            DetectorMode::Fused => (self.fused_t_tau, self.fused_t_a),
            DetectorMode::Gmm | DetectorMode::Dnn => (self.t_tau, self.t_a),
        };
        Settings { t_tau, t_a, dnn_threshold: self.dnn_threshold, ..settings.clone() }
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Exhaustive search over the product grid. Points are visited in ascending
/// order of the first coordinate, then the second, and only a strictly better
/// score replaces the incumbent, so ties resolve toward smaller values.
pub fn grid_search<F>(first: &[f64], second: &[f64], objective: F) -> Result<((f64, f64), f64), HarnessError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let points: Vec<(f64, f64)> = sorted(first).into_iter().flat_map(|a| sorted(second).into_iter().map(move |b| (a, b))).collect();
    if points.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(points.len());
    let chunk = points.len().div_ceil(workers);
    let scores: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = points.chunks(chunk).map(|c| s.spawn(|| c.iter().map(|&(a, b)| objective(a, b)).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("grid worker panicked")).collect()
    });
    let mut best = 0;
    for i in 1..points.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok((points[best], scores[best]))
}

fn pooled(items: &[CalibrationItem<'_>], mode: DetectorMode, settings: &Settings) -> f64 {
    let mut total = FrameScore::default();
    for it in items {
        let flags: Vec<bool> = detect(mode, it.subbands, it.posteriors, settings).iter().map(|r| r.flag == 1).collect();
        total.add(&frame_score(&flags, it.labels).expect("labels cover every frame"));
    }
    total.accuracy()
}

/// Each detector is tuned for its own frame accuracy: the GMM pair for the
/// standalone GMM, the DNN threshold for the standalone DNN, and then a
/// second GMM pair for the fused detector at that DNN threshold. The last two
/// only use items that carry posteriors.
pub fn calibrate_thresholds(items: &[CalibrationItem<'_>], grid: &ThresholdGrid, settings: &Settings) -> Result<Calibration, HarnessError> {
    for it in items {
        if it.subbands.len() != it.labels.len() {
            return Err(HarnessError::LengthMismatch { decisions: it.subbands.len(), labels: it.labels.len() });
        }
    }
    let ((t_tau, t_a), gmm_accuracy) = grid_search(&grid.t_tau, &grid.t_a, |a, b| {
        pooled(items, DetectorMode::Gmm, &Settings { t_tau: a, t_a: b, ..settings.clone() })
    })?;
    let with_dnn: Vec<CalibrationItem<'_>> = items.iter().copied().filter(|i| !i.posteriors.is_empty()).collect();
    if with_dnn.is_empty() {
        return Ok(Calibration {
            t_tau,
            t_a,
            dnn_threshold: settings.dnn_threshold,
            fused_t_tau: t_tau,
            fused_t_a: t_a,
            gmm_accuracy,
            dnn_accuracy: None,
            fused_accuracy: None,
        });
    }
    let ((dnn_threshold, _), dnn_accuracy) = grid_search(&grid.dnn, &[0.0], |thr, _| {
        pooled(&with_dnn, DetectorMode::Dnn, &Settings { dnn_threshold: thr, ..settings.clone() })
    })?;
    let ((fused_t_tau, fused_t_a), fused_accuracy) = grid_search(&grid.t_tau, &grid.t_a, |a, b| {
        pooled(&with_dnn, DetectorMode::Fused, &Settings { t_tau: a, t_a: b, dnn_threshold, ..settings.clone() })
    })?;
    Ok(Calibration {
        t_tau,
        t_a,
        dnn_threshold,
        fused_t_tau,
        fused_t_a,
        gmm_accuracy,
        dnn_accuracy: Some(dnn_accuracy),
        fused_accuracy: Some(fused_accuracy),
    })
}
