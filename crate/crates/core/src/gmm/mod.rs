//! Adaptive subband GMM detector in the WebRTC style: per band a two-component
//! speech mixture and a two-component noise mixture over log-energy, a
//! log-likelihood-ratio decision, and online parameter adaptation gated by the
//! final speech flag.

mod detector;
mod update;

pub use detector::{Bootstrapper, GmmFrame, GmmVad};
pub use update::{adapt, enforce_separation, responsibility, update_min, update_noise, update_speech};

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{SubbandFeature, NUM_SUBBANDS};

pub const VAR_FLOOR: f64 = 1e-4;
pub const DEFAULT_MIN_STD: f64 = 1.0;
pub const DEFAULT_MIN_SEPARATION: f64 = 2.0;
/// Floor on mixture likelihoods before the ratio.
pub const MIXTURE_FLOOR: f64 = 1e-300;
/// Exponent clamp when turning class log-likelihoods back into linear values.
const LOG_CLAMP: f64 = -700.0;

#[derive(Debug, Error, PartialEq)]
pub enum GmmConfigError {
    #[error("band weights must be non-negative and sum to 1 (sum = {0})")]
    BandWeights(f64),
    #[error("thresholds must be finite")]
    Thresholds,
    #[error("{0} must be non-negative and finite")]
    Coefficient(&'static str),
    #[error("variance floor must be positive and the std clamp non-negative")]
    VarFloor,
    #[error("minimum speech/noise separation must be non-negative and finite")]
    Separation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    pub mean: f64,
    pub var: f64,
}

impl GaussComponent {
    pub fn new(mean: f64, var: f64) -> Self {
        Self { mean, var }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// One band: speech pair, noise pair, noise-floor tracker and band weight.
/// Mixture weights within a class are fixed at 0.5/0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubbandModel {
    pub speech: [GaussComponent; 2],
    pub noise: [GaussComponent; 2],
    pub x_min: f64,
    pub k: f64,
}

impl SubbandModel {
    /// Mean of the two noise-component means.
    pub fn noise_mean(&self) -> f64 {
        0.5 * (self.noise[0].mean + self.noise[1].mean)
    }

    pub fn speech_mean(&self) -> f64 {
        0.5 * (self.speech[0].mean + self.speech[1].mean)
    }

    pub fn swapped(&self) -> Self {
        Self { speech: self.noise, noise: self.speech, ..*self }
    }
}

/// Adaptation step sizes. Defaults are the WebRTC values; the speech variance
/// step is not given there and mirrors the noise one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmCoefficients {
    pub noise_mean_rate: f64,
    pub speech_mean_rate: f64,
    pub noise_std_rate: f64,
    pub speech_std_rate: f64,
    pub min_pull: f64,
}

impl Default for GmmCoefficients {
    fn default() -> Self {
        Self { noise_mean_rate: 0.02, speech_mean_rate: 0.2, noise_std_rate: 0.1, speech_std_rate: 0.1, min_pull: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlrForm {
    /// `ln(p_speech / p_noise)` with proper Gaussian densities.
    #[default]
    Exact,
    /// Ratio of unnormalized kernels `exp(-(x-u)^2 / var)`, no log.
    Approximate,
}

/// What the noise-floor tracker blends toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorTarget {
    /// The current noise-model mean. The floor then only mirrors the noise
    /// model and cannot pull it back after it drifts.
    NoiseMean,
    /// The observed band feature.
    #[default]
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub t_tau: f64,
    pub t_a: f64,
    pub coeffs: GmmCoefficients,
    pub band_weights: [f64; NUM_SUBBANDS],
    pub var_floor: f64,
    /// Lower clamp on each component's standard deviation after an update.
    pub min_std: f64,
    /// Smallest allowed gap between a band's speech and noise means.
    pub min_separation: f64,
    pub llr_form: LlrForm,
    pub bootstrap_frames: usize,
    pub speech_offset: f64,
    pub component_offset: f64,
    pub init_var: f64,
    /// Tracker keep-factor when the feature is above the floor (slow rise).
    pub min_rise: f64,
    /// Tracker keep-factor when the feature is below the floor (fast fall).
    pub min_fall: f64,
    pub floor_target: FloorTarget,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            t_tau: 3.0,
            t_a: 1.5,
            coeffs: GmmCoefficients::default(),
            band_weights: [1.0 / NUM_SUBBANDS as f64; NUM_SUBBANDS],
            var_floor: VAR_FLOOR,
            min_std: DEFAULT_MIN_STD,
            min_separation: DEFAULT_MIN_SEPARATION,
            llr_form: LlrForm::Exact,
            bootstrap_frames: 20,
            speech_offset: 4.0,
            component_offset: 0.1,
            init_var: 1.0,
            min_rise: 0.99,
            min_fall: 0.20,
            floor_target: FloorTarget::Feature,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<(), GmmConfigError> {
        let sum: f64 = self.band_weights.iter().sum();
        if self.band_weights.iter().any(|&k| !(k >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(GmmConfigError::BandWeights(sum));
        }
        if !self.t_tau.is_finite() || !self.t_a.is_finite() {
            return Err(GmmConfigError::Thresholds);
        }
        let c = &self.coeffs;
        for (name, v) in [
            ("noise_mean_rate", c.noise_mean_rate),
            ("speech_mean_rate", c.speech_mean_rate),
            ("noise_std_rate", c.noise_std_rate),
            ("speech_std_rate", c.speech_std_rate),
            ("min_pull", c.min_pull),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GmmConfigError::Coefficient(name));
            }
        }
        if !(self.var_floor > 0.0) || !(self.min_std >= 0.0) || !self.min_std.is_finite() {
            return Err(GmmConfigError::VarFloor);
        }
        if !(self.min_separation >= 0.0) || !self.min_separation.is_finite() {
            return Err(GmmConfigError::Separation);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmState {
    pub bands: [SubbandModel; NUM_SUBBANDS],
    pub t_tau: f64,
    pub t_a: f64,
    pub coeffs: GmmCoefficients,
    pub var_floor: f64,
    pub min_std: f64,
    pub min_separation: f64,
    pub llr_form: LlrForm,
    pub min_rise: f64,
    pub min_fall: f64,
    pub floor_target: FloorTarget,
}

impl GmmState {
    /// Warm start from frames assumed to be non-speech: noise means at the
    /// per-band average (components offset by `±component_offset`), speech
    /// means `speech_offset` above, unit variances, floor tracker at the noise mean.
    pub fn bootstrap(frames: &[SubbandFeature], cfg: &GmmConfig) -> Self {
        let n = frames.len().max(1) as f64;
        let bands = std::array::from_fn(|b| {
            let mean = frames.iter().map(|f| f.e[b]).sum::<f64>() / n;
            let off = cfg.component_offset;
            let g = |m: f64| GaussComponent::new(m, cfg.init_var.max(cfg.var_floor));
            SubbandModel {
                noise: [g(mean - off), g(mean + off)],
                speech: [g(mean + cfg.speech_offset - off), g(mean + cfg.speech_offset + off)],
                x_min: mean,
                k: cfg.band_weights[b],
            }
        });
        Self::from_bands(bands, cfg)
    }

    pub fn from_bands(bands: [SubbandModel; NUM_SUBBANDS], cfg: &GmmConfig) -> Self {
        Self {
            bands,
            t_tau: cfg.t_tau,
            t_a: cfg.t_a,
            coeffs: cfg.coeffs,
            var_floor: cfg.var_floor,
            min_std: cfg.min_std,
            min_separation: cfg.min_separation,
            llr_form: cfg.llr_form,
            min_rise: cfg.min_rise,
            min_fall: cfg.min_fall,
            floor_target: cfg.floor_target,
        }
    }

    /// One band per line: `band_i k u_sx var_sx u_sy var_sy u_nx var_nx u_ny var_ny xmin`.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (i, b) in self.bands.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i} {} {} {} {} {} {} {} {} {} {}",
                b.k,
                b.speech[0].mean,
                b.speech[0].var,
                b.speech[1].mean,
                b.speech[1].var,
                b.noise[0].mean,
                b.noise[0].var,
                b.noise[1].mean,
                b.noise[1].var,
                b.x_min
            );
        }
        s
    }
}

/// Class likelihoods of a frame, reported up to a common positive scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassLikelihoods {
    /// Noise hypothesis H0.
    pub p_h0: f64,
    /// Speech hypothesis H1.
    pub p_h1: f64,
}

impl ClassLikelihoods {
    pub const EVEN: ClassLikelihoods = ClassLikelihoods { p_h0: 0.5, p_h1: 0.5 };

    /// Exponentiates log-likelihoods relative to their maximum; the ratio is
    /// preserved until the gap exceeds the clamp.
    pub fn from_log(log_h0: f64, log_h1: f64) -> Self {
        let m = log_h0.max(log_h1);
        if !m.is_finite() {
            return Self::EVEN;
        }
        Self { p_h0: (log_h0 - m).max(LOG_CLAMP).exp(), p_h1: (log_h1 - m).max(LOG_CLAMP).exp() }
    }

    /// Scales onto the simplex. Idempotent: the second coordinate is the
    /// complement of the first, so a normalized pair sums to exactly 1.
    pub fn normalized(&self) -> Self {
        let s = self.p_h0 + self.p_h1;
        if !(s > 0.0) || !s.is_finite() {
            return Self::EVEN;
        }
        let p_h0 = self.p_h0 / s;
        Self { p_h0, p_h1: 1.0 - p_h0 }
    }
}

pub fn gauss_pdf(x: f64, g: &GaussComponent) -> f64 {
    let d = x - g.mean;
    (-(d * d) / (2.0 * g.var)).exp() / (2.0 * PI * g.var).sqrt()
}

pub fn log_gauss_pdf(x: f64, g: &GaussComponent) -> f64 {
    let d = x - g.mean;
    -(d * d) / (2.0 * g.var) - 0.5 * (2.0 * PI * g.var).ln()
}

fn mixture(x: f64, pair: &[GaussComponent; 2]) -> f64 {
    0.5 * gauss_pdf(x, &pair[0]) + 0.5 * gauss_pdf(x, &pair[1])
}

fn log_mixture(x: f64, pair: &[GaussComponent; 2]) -> f64 {
    let (a, b) = (log_gauss_pdf(x, &pair[0]), log_gauss_pdf(x, &pair[1]));
    let m = a.max(b);
    m + (0.5 * (a - m).exp() + 0.5 * (b - m).exp()).ln()
}

/// Exact per-band log-likelihood ratio, mixtures floored at [`MIXTURE_FLOOR`].
pub fn subband_llr(f: f64, m: &SubbandModel) -> f64 {
    mixture(f, &m.speech).max(MIXTURE_FLOOR).ln() - mixture(f, &m.noise).max(MIXTURE_FLOOR).ln()
}

/// Kernel-ratio approximation: unnormalized, no ½ in the exponent, no log.
pub fn subband_llr_approx(f: f64, m: &SubbandModel) -> f64 {
    let kernel = |g: &GaussComponent| (-(f - g.mean).powi(2) / g.var).exp();
    let num = kernel(&m.speech[0]) + kernel(&m.speech[1]);
    let den = kernel(&m.noise[0]) + kernel(&m.noise[1]);
    num.max(MIXTURE_FLOOR) / den.max(MIXTURE_FLOOR)
}

pub fn band_llrs(feats: &SubbandFeature, s: &GmmState) -> [f64; NUM_SUBBANDS] {
    std::array::from_fn(|i| match s.llr_form {
        LlrForm::Exact => subband_llr(feats.e[i], &s.bands[i]),
        LlrForm::Approximate => subband_llr_approx(feats.e[i], &s.bands[i]),
    })
}

pub fn weighted_llr(llrs: &[f64; NUM_SUBBANDS], s: &GmmState) -> f64 {
    llrs.iter().zip(&s.bands).map(|(l, b)| b.k * l).sum()
}

pub fn total_llr(feats: &SubbandFeature, s: &GmmState) -> f64 {
    weighted_llr(&band_llrs(feats, s), s)
}

/// Product over bands of each class mixture, computed in log space.
pub fn class_likelihoods(feats: &SubbandFeature, s: &GmmState) -> ClassLikelihoods {
    let (mut l0, mut l1) = (0.0, 0.0);
    for (f, b) in feats.e.iter().zip(&s.bands) {
        l0 += log_mixture(*f, &b.noise);
        l1 += log_mixture(*f, &b.speech);
    }
    ClassLikelihoods::from_log(l0, l1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmDecision {
    pub flag: bool,
    pub band_llrs: [f64; NUM_SUBBANDS],
    pub total_llr: f64,
    pub lik: ClassLikelihoods,
}

/// Speech if any band clears `t_tau`, otherwise if the weighted total clears `t_a`.
pub fn decide_from_llrs(llrs: &[f64; NUM_SUBBANDS], total: f64, s: &GmmState) -> bool {
    llrs.iter().any(|&l| l > s.t_tau) || total > s.t_a
}

pub fn gmm_decide(feats: &SubbandFeature, s: &GmmState) -> GmmDecision {
    let band_llrs = band_llrs(feats, s);
    let total = weighted_llr(&band_llrs, s);
    GmmDecision { flag: decide_from_llrs(&band_llrs, total, s), band_llrs, total_llr: total, lik: class_likelihoods(feats, s) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn band(speech_mean: f64, noise_mean: f64, var: f64) -> SubbandModel {
        SubbandModel {
            speech: [GaussComponent::new(speech_mean, var); 2],
            noise: [GaussComponent::new(noise_mean, var); 2],
            x_min: noise_mean,
            k: 1.0 / 6.0,
        }
    }

    fn state_with(bands: [SubbandModel; 6], t_tau: f64, t_a: f64) -> GmmState {
        GmmState::from_bands(bands, &GmmConfig { t_tau, t_a, ..GmmConfig::default() })
    }

    #[test]
    fn pdf_values() {
        let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
        assert!((gauss_pdf(3.0, &GaussComponent::new(3.0, 1.0)) - 0.39894).abs() < 1e-5);
        assert!((gauss_pdf(1.0, &GaussComponent::new(0.0, 1.0)) - (-0.5f64).exp() * inv_sqrt_2pi).abs() < 1e-15);
        assert!((gauss_pdf(1.0, &GaussComponent::new(0.0, 1.0)) - 0.24197).abs() < 1e-5);
        assert!((gauss_pdf(-2.0, &GaussComponent::new(-2.0, 4.0)) - 0.19947).abs() < 1e-5);
    }

    #[test]
    fn llr_cases() {
        assert_eq!(subband_llr(1.0, &band(2.0, 2.0, 0.5)), 0.0);
        // speech centred on f, noise ten sigma away
        assert!(subband_llr(5.0, &band(5.0, 15.0, 1.0)) > 20.0);
        assert!(subband_llr(5.0, &band(5.0, -5.0, 1.0)) > 20.0);
    }

    #[test]
    fn total_is_weighted_sum() {
        let mut bands = [band(0.0, 0.0, 1.0); 6];
        let s = state_with(bands, 3.0, 1.5);
        assert_eq!(total_llr(&SubbandFeature { e: [0.3; 6] }, &s), 0.0);
        let llrs = [6.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!((weighted_llr(&llrs, &s) - 1.0).abs() < 1e-12);
        bands.iter_mut().for_each(|b| b.k *= 2.0);
        let doubled = state_with(bands, 3.0, 1.5);
        let llrs = [0.4, -1.0, 2.0, 0.0, 3.5, 1.0];
        assert!((weighted_llr(&llrs, &doubled) - 2.0 * weighted_llr(&llrs, &s)).abs() < 1e-12);
    }

    #[test]
    fn decision_branches() {
        let s = state_with([band(0.0, 0.0, 1.0); 6], 2.0, 1.0);
        // one band above t_tau, total below t_a
        let llrs = [3.0, -1.0, -1.0, -1.0, -1.0, -1.0];
        let total = weighted_llr(&llrs, &s);
        assert!(total < s.t_a);
        assert!(decide_from_llrs(&llrs, total, &s));
        // all bands below t_tau, total just above t_a
        assert!(decide_from_llrs(&[1.1; 6], 1.1, &s));
        let s1 = state_with([band(0.0, 0.0, 1.0); 6], 1.0, 1.0);
        assert!(!decide_from_llrs(&[0.0; 6], 0.0, &s1));
        assert!(!gmm_decide(&SubbandFeature { e: [0.0; 6] }, &s1).flag);
    }

    #[test]
    fn normalization_is_idempotent() {
        for (a, b) in [(0.3, 0.7), (1e-300, 1.0), (0.1, 0.2), (3.0, 7.0), (1.0 / 3.0, 1e-5)] {
            let n = ClassLikelihoods { p_h0: a, p_h1: b }.normalized();
            assert_eq!(n.p_h0 + n.p_h1, 1.0);
            assert_eq!(n.normalized(), n);
        }
        assert_eq!(ClassLikelihoods { p_h0: 0.0, p_h1: 0.0 }.normalized(), ClassLikelihoods::EVEN);
    }

    #[test]
    fn config_validation() {
        assert!(GmmConfig::default().validate().is_ok());
        let mut c = GmmConfig::default();
        c.band_weights[0] = 0.5;
        assert!(matches!(c.validate(), Err(GmmConfigError::BandWeights(_))));
    }

    #[test]
    fn snapshot_has_one_line_per_band() {
        let s = GmmState::bootstrap(&[SubbandFeature { e: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0] }], &GmmConfig::default());
        let text = s.snapshot();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[2].split(' ').count(), 11);
        assert!(lines[0].starts_with("0 0.16666"));
    }

    proptest! {
        #[test]
        fn llr_antisymmetric(f in -30.0f64..10.0, ms in -20.0f64..5.0, mn in -20.0f64..5.0, vs in 1e-4f64..10.0, vn in 1e-4f64..10.0, off in 0.0f64..2.0) {
            let m = SubbandModel {
                speech: [GaussComponent::new(ms - off, vs), GaussComponent::new(ms + off, vs * 1.5)],
                noise: [GaussComponent::new(mn - off, vn), GaussComponent::new(mn + off, vn * 0.5)],
                x_min: mn,
                k: 1.0,
            };
            prop_assert!((subband_llr(f, &m) + subband_llr(f, &m.swapped())).abs() < 1e-9);
            prop_assert!(subband_llr(f, &m).is_finite());
        }

        #[test]
        fn class_likelihoods_finite(e in prop::array::uniform6(-40.0f64..20.0)) {
            let s = GmmState::bootstrap(&[SubbandFeature { e: [-5.0; 6] }], &GmmConfig::default());
            let lik = class_likelihoods(&SubbandFeature { e }, &s);
            prop_assert!(lik.p_h0.is_finite() && lik.p_h1.is_finite());
            prop_assert!(lik.p_h0 >= 0.0 && lik.p_h1 >= 0.0);
            prop_assert!(lik.p_h0.max(lik.p_h1) == 1.0);
        }
    }
}
