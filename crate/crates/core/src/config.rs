//! Flat `key = value` configuration covering every tunable of the pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dnn::Activation;
use crate::features::{CmnState, NUM_SUBBANDS};
use crate::fusion::FusionConfig;
use crate::gmm::{FloorTarget, GmmCoefficients, GmmConfig, LlrForm, DEFAULT_MIN_STD, VAR_FLOOR};
use crate::segmenter::EndpointConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    #[default]
    Fused,
    Gmm,
    Dnn,
}

impl std::str::FromStr for DetectorMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fused" => Ok(Self::Fused),
            "gmm" => Ok(Self::Gmm),
            "dnn" => Ok(Self::Dnn),
            other => Err(ConfigError::Invalid(format!("unknown detector mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub mode: DetectorMode,

    pub splice_left: usize,
    pub splice_right: usize,
    pub cmn_decay: f64,
    pub cmn_warmup_frames: usize,

    pub dnn_threshold: f64,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,

    pub t_tau: f64,
    pub t_a: f64,
    pub noise_mean_rate: f64,
    pub speech_mean_rate: f64,
    pub noise_std_rate: f64,
    pub speech_std_rate: f64,
    pub min_pull: f64,
    pub var_floor: f64,
    pub min_std: f64,
    pub min_separation: f64,
    pub llr_form: LlrForm,
    pub band_weights: [f64; NUM_SUBBANDS],
    pub bootstrap_frames: usize,
    pub speech_offset: f64,
    pub component_offset: f64,
    pub init_var: f64,
    pub min_rise: f64,
    pub min_fall: f64,
    pub floor_target: FloorTarget,

    pub alpha: f64,
    pub beta: f64,

    pub begin_window: usize,
    pub begin_ratio: f64,
    pub begin_traceback: usize,
    pub end_window: usize,
    pub end_ratio: f64,
    pub end_traceback: usize,
    pub buffer_frames: usize,

    pub label_threshold_ratio: f64,
    pub label_boundary: usize,
    pub utterance_tolerance: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let g = GmmConfig::default();
        let f = FusionConfig::default();
        let e = EndpointConfig::default();
        let cmn = CmnState::default();
        Self {
            mode: DetectorMode::Fused,
            splice_left: 5,
            splice_right: 5,
            cmn_decay: cmn.decay,
            cmn_warmup_frames: cmn.warmup_frames,
            dnn_threshold: 0.5,
            activation: Activation::Relu,
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 10,
            t_tau: g.t_tau,
            t_a: g.t_a,
            noise_mean_rate: g.coeffs.noise_mean_rate,
            speech_mean_rate: g.coeffs.speech_mean_rate,
            noise_std_rate: g.coeffs.noise_std_rate,
            speech_std_rate: g.coeffs.speech_std_rate,
            min_pull: g.coeffs.min_pull,
            var_floor: VAR_FLOOR,
            min_std: DEFAULT_MIN_STD,
            min_separation: g.min_separation,
            llr_form: g.llr_form,
            band_weights: g.band_weights,
            bootstrap_frames: g.bootstrap_frames,
            speech_offset: g.speech_offset,
            component_offset: g.component_offset,
            init_var: g.init_var,
            min_rise: g.min_rise,
            min_fall: g.min_fall,
            floor_target: g.floor_target,
            alpha: f.alpha,
            beta: f.beta,
            begin_window: e.begin_window,
            begin_ratio: e.begin_ratio,
            begin_traceback: e.begin_traceback,
            end_window: e.end_window,
            end_ratio: e.end_ratio,
            end_traceback: e.end_traceback,
            buffer_frames: e.buffer_frames,
            label_threshold_ratio: 0.01,
            label_boundary: 3,
            utterance_tolerance: 20,
        }
    }
}

impl Settings {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let settings: Settings = toml::from_str(s)?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gmm().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.fusion().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.endpoint().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.cmn_decay > 0.0 && self.cmn_decay < 1.0) {
            return Err(ConfigError::Invalid(format!("cmn_decay = {} must lie in (0, 1)", self.cmn_decay)));
        }
        if !(self.dnn_threshold > 0.0 && self.dnn_threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!("dnn_threshold = {} must lie in (0, 1]", self.dnn_threshold)));
        }
        if !(self.label_threshold_ratio > 0.0 && self.label_threshold_ratio < 1.0) {
            return Err(ConfigError::Invalid(format!("label_threshold_ratio = {} must lie in (0, 1)", self.label_threshold_ratio)));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(ConfigError::Invalid("learning_rate and batch_size must be positive".into()));
        }
        if self.bootstrap_frames == 0 {
            return Err(ConfigError::Invalid("bootstrap_frames must be positive".into()));
        }
        Ok(())
    }

    pub fn gmm(&self) -> GmmConfig {
        GmmConfig {
            t_tau: self.t_tau,
            t_a: self.t_a,
            coeffs: GmmCoefficients {
                noise_mean_rate: self.noise_mean_rate,
                speech_mean_rate: self.speech_mean_rate,
                noise_std_rate: self.noise_std_rate,
                speech_std_rate: self.speech_std_rate,
                min_pull: self.min_pull,
            },
            band_weights: self.band_weights,
            var_floor: self.var_floor,
            min_std: self.min_std,
            min_separation: self.min_separation,
            llr_form: self.llr_form,
            bootstrap_frames: self.bootstrap_frames,
            speech_offset: self.speech_offset,
            component_offset: self.component_offset,
            init_var: self.init_var,
            min_rise: self.min_rise,
            min_fall: self.min_fall,
            floor_target: self.floor_target,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig { alpha: self.alpha, beta: self.beta }
    }

    pub fn endpoint(&self) -> EndpointConfig {
        EndpointConfig {
            begin_window: self.begin_window,
            begin_ratio: self.begin_ratio,
            begin_traceback: self.begin_traceback,
            end_window: self.end_window,
            end_ratio: self.end_ratio,
            end_traceback: self.end_traceback,
            buffer_frames: self.buffer_frames,
        }
    }

    pub fn cmn(&self) -> CmnState {
        CmnState::new(self.cmn_decay, self.cmn_warmup_frames)
    }

    pub fn train_config(&self, seed: u64) -> crate::dnn::TrainConfig {
        crate::dnn::TrainConfig { lr: self.learning_rate, batch_size: self.batch_size, epochs: self.epochs, seed }
    }
}
