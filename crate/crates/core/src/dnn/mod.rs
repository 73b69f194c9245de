//! Lite two-layer dense classifier: one hidden layer of 32 units and a
//! two-way softmax (speech, silence).

mod io;
mod train;

pub use io::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use train::{loss_and_gradient, train, train_step, Gradients, TrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HIDDEN: usize = 32;
pub const OUTPUTS: usize = 2;

#[derive(Debug, Error)]
pub enum DnnError {
    #[error("input has {found} dims, network expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("empty training batch")]
    EmptyBatch,
    #[error("bad magic bytes in weight file")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u8),
    #[error("weight file header does not match: {0}")]
    DimHeaderMismatch(String),
    #[error("weight file truncated: need {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },
    #[error("weight file contains non-finite values")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
        }
    }
}

/// Network parameters, row-major, stored at file precision.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnWeights {
    pub input_dim: usize,
    /// `HIDDEN x input_dim`
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    /// `OUTPUTS x HIDDEN`; row 0 is speech, row 1 silence.
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
    pub activation: Activation,
}

impl DnnWeights {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            input_dim,
            w1: vec![0.0; HIDDEN * input_dim],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; OUTPUTS * HIDDEN],
            b2: vec![0.0; OUTPUTS],
            activation: Activation::Relu,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(input_dim);
        let a1 = (6.0 / (input_dim + HIDDEN) as f64).sqrt() as f32;
        let a2 = (6.0 / (HIDDEN + OUTPUTS) as f64).sqrt() as f32;
        w.w1.iter_mut().for_each(|v| *v = rng.random_range(-a1..a1));
        w.w2.iter_mut().for_each(|v| *v = rng.random_range(-a2..a2));
        w
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DnnPosterior {
    pub p_speech: f64,
    pub p_silence: f64,
}

impl DnnPosterior {
    pub const UNINFORMATIVE: DnnPosterior = DnnPosterior { p_speech: 0.5, p_silence: 0.5 };
}

/// Training target: hard silence, hard speech, or the uncertain transition label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SoftLabel {
    Silence,
    Uncertain,
    Speech,
}

impl SoftLabel {
    pub fn target_speech(self) -> f64 {
        match self {
            SoftLabel::Silence => 0.0,
            SoftLabel::Uncertain => 0.5,
            SoftLabel::Speech => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        match v {
            x if x == 0.0 => Some(SoftLabel::Silence),
            x if x == 0.5 => Some(SoftLabel::Uncertain),
            x if x == 1.0 => Some(SoftLabel::Speech),
            _ => None,
        }
    }

    pub fn is_hard(self) -> bool {
        self != SoftLabel::Uncertain
    }
}

pub(crate) struct ForwardTrace {
    pub z1: [f64; HIDDEN],
    pub h: [f64; HIDDEN],
    pub logits: [f64; OUTPUTS],
}

pub(crate) fn forward_trace(w: &DnnWeights, x: &[f64]) -> ForwardTrace {
    let mut z1 = [0.0; HIDDEN];
    let mut h = [0.0; HIDDEN];
    for j in 0..HIDDEN {
        let row = &w.w1[j * w.input_dim..(j + 1) * w.input_dim];
        let dot: f64 = row.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
        z1[j] = dot + w.b1[j] as f64;
        h[j] = w.activation.apply(z1[j]);
    }
    let mut logits = [0.0; OUTPUTS];
    for (k, l) in logits.iter_mut().enumerate() {
        let row = &w.w2[k * HIDDEN..(k + 1) * HIDDEN];
        *l = row.iter().zip(&h).map(|(&a, &b)| a as f64 * b).sum::<f64>() + w.b2[k] as f64;
    }
    ForwardTrace { z1, h, logits }
}

/// Two-class softmax with max subtraction.
pub fn softmax2(logits: [f64; OUTPUTS]) -> DnnPosterior {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let p_speech = e0 / (e0 + e1);
    DnnPosterior { p_speech, p_silence: 1.0 - p_speech }
}

pub fn forward(w: &DnnWeights, x: &[f64]) -> Result<DnnPosterior, DnnError> {
    if x.len() != w.input_dim {
        return Err(DnnError::DimMismatch { expected: w.input_dim, found: x.len() });
    }
    Ok(softmax2(forward_trace(w, x).logits))
}

/// Strictly greater than `threshold`.
pub fn dnn_flag(p: &DnnPosterior, threshold: f64) -> bool {
    p.p_speech > threshold
}
