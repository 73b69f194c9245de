//! Decision fusion of the DNN and GMM detectors and the posterior feedback
//! that steers the GMM's adaptation.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnn::{dnn_flag, DnnPosterior};
use crate::features::SubbandFeature;
use crate::gmm::{adapt, gmm_decide, Bootstrapper, ClassLikelihoods, GmmConfig, GmmState};

#[derive(Debug, Error, PartialEq)]
pub enum FusionConfigError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Weight of the DNN silence posterior in the noise likelihood.
    pub alpha: f64,
    /// Weight of the DNN speech posterior in the speech likelihood.
    pub beta: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.8 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionConfigError> {
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FusionConfigError::OutOfRange { name, value });
            }
        }
        Ok(())
    }
}

pub fn fuse_flags(dnn: bool, gmm: bool) -> bool {
    dnn || gmm
}

/// Blends the previous frame's DNN posterior into the previous frame's GMM
/// class likelihoods (taken onto the simplex first) and renormalizes.
pub fn smooth_likelihoods(prev_dnn: &DnnPosterior, prev_gmm: &ClassLikelihoods, cfg: &FusionConfig) -> ClassLikelihoods {
    let g = prev_gmm.normalized();
    ClassLikelihoods {
        p_h0: cfg.alpha * prev_dnn.p_silence + (1.0 - cfg.alpha) * g.p_h0,
        p_h1: cfg.beta * prev_dnn.p_speech + (1.0 - cfg.beta) * g.p_h1,
    }
    .normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FusedDecision {
    pub flag: bool,
    pub p_h0_smoothed: f64,
    pub p_h1_smoothed: f64,
    pub frame_index: u64,
    pub dnn_flag: bool,
    pub gmm_flag: bool,
    pub dnn_p_speech: f64,
    pub gmm_llr: f64,
}

/// Per-stream fused detector. Owns the GMM state, including its warm-up.
#[derive(Debug, Clone)]
pub struct FusionEngine {
    gmm_cfg: GmmConfig,
    fusion: FusionConfig,
    dnn_threshold: f64,
    boot: Bootstrapper,
    state: Option<GmmState>,
    prev_dnn: DnnPosterior,
    prev_gmm: ClassLikelihoods,
    frame: u64,
}

impl FusionEngine {
    pub fn new(gmm_cfg: GmmConfig, fusion: FusionConfig, dnn_threshold: f64) -> Self {
        let boot = Bootstrapper::new(gmm_cfg.bootstrap_frames);
        Self {
            gmm_cfg,
            fusion,
            dnn_threshold,
            boot,
            state: None,
            prev_dnn: DnnPosterior::UNINFORMATIVE,
            prev_gmm: ClassLikelihoods::EVEN,
            frame: 0,
        }
    }

    pub fn state(&self) -> Option<&GmmState> {
        self.state.as_ref()
    }

    pub fn frames_seen(&self) -> u64 {
        self.frame
    }

    pub fn step(&mut self, feats: &SubbandFeature, dnn: &DnnPosterior) -> FusedDecision {
        let d_flag = dnn_flag(dnn, self.dnn_threshold);
        let frame_index = self.frame;
        self.frame += 1;
        let Some(state) = self.state.as_mut() else {
            self.state = self.boot.feed(feats, &self.gmm_cfg);
            self.prev_dnn = *dnn;
            return FusedDecision {
                flag: d_flag,
                p_h0_smoothed: 0.5,
                p_h1_smoothed: 0.5,
                frame_index,
                dnn_flag: d_flag,
                gmm_flag: false,
                dnn_p_speech: dnn.p_speech,
                gmm_llr: 0.0,
            };
        };
        let decision = gmm_decide(feats, state);
        let flag = fuse_flags(d_flag, decision.flag);
        let smoothed = smooth_likelihoods(&self.prev_dnn, &self.prev_gmm, &self.fusion);
        adapt(state, feats, flag, &smoothed);
        self.prev_dnn = *dnn;
        self.prev_gmm = decision.lik.normalized();
        FusedDecision {
            flag,
            p_h0_smoothed: smoothed.p_h0,
            p_h1_smoothed: smoothed.p_h1,
            frame_index,
            dnn_flag: d_flag,
            gmm_flag: decision.flag,
            dnn_p_speech: dnn.p_speech,
            gmm_llr: decision.total_llr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub frame: u64,
    pub dnn: f64,
    pub gmm_llr: f64,
    pub flag: u8,
}

impl From<&FusedDecision> for DecisionRecord {
    fn from(d: &FusedDecision) -> Self {
        Self { frame: d.frame_index, dnn: d.dnn_p_speech, gmm_llr: d.gmm_llr, flag: d.flag as u8 }
    }
}

/// One JSON object per line.
pub fn write_decision_log<W: Write>(w: &mut W, rec: &DecisionRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *w, rec)?;
    w.write_all(b"\n")
}
