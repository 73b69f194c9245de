use super::{ClassLikelihoods, FloorTarget, GaussComponent, GmmState, SubbandModel};
use crate::features::SubbandFeature;

/// `(r_noise, r_speech)`; even split when both likelihoods vanish.
pub fn responsibility(lik: &ClassLikelihoods) -> (f64, f64) {
    let s = lik.p_h0 + lik.p_h1;
    if s > 0.0 {
        (lik.p_h0 / s, lik.p_h1 / s)
    } else {
        (0.5, 0.5)
    }
}

/// Gradient-style step on one component. `mean_step` and `std_step` already
/// include the gate, the rate and the responsibility. Returns the mean change.
fn step_component(g: &mut GaussComponent, f: f64, mean_step: f64, std_step: f64, min_std: f64, var_floor: f64) -> f64 {
    let sigma = g.var.sqrt();
    let d = f - g.mean;
    let grad_mean = d / g.var;
    let grad_std = (d * d / g.var - 1.0) / sigma;
    let delta = mean_step * grad_mean;
    g.mean += delta;
    let sigma = (sigma + std_step * grad_std).max(min_std).max(var_floor.sqrt());
    g.var = (sigma * sigma).max(var_floor);
    delta
}

/// Noise-floor tracker: rises slowly toward `target` when the feature is
/// above it, falls quickly when below, holds on equality.
pub fn update_min(m: &mut SubbandModel, f: f64, target: f64, rise_keep: f64, fall_keep: f64) {
    if f > m.x_min {
        m.x_min = rise_keep * m.x_min + (1.0 - rise_keep) * target;
    } else if f < m.x_min {
        m.x_min = fall_keep * m.x_min + (1.0 - fall_keep) * target;
    }
}

/// Noise adaptation, gated by `1 - flag`, plus the unconditional pull of the
/// means toward the tracked floor.
pub fn update_noise(s: &mut GmmState, feats: &SubbandFeature, fused_flag: bool, lik: &ClassLikelihoods) {
    let (r, _) = responsibility(lik);
    let gate = if fused_flag { 0.0 } else { 1.0 };
    let c = s.coeffs;
    for (band, &f) in s.bands.iter_mut().zip(&feats.e) {
        let x_min = band.x_min;
        for g in band.noise.iter_mut() {
            let pull = c.min_pull * (x_min - g.mean);
            step_component(g, f, gate * c.noise_mean_rate * r, gate * c.noise_std_rate * r, s.min_std, s.var_floor);
            g.mean += pull;
        }
    }
}

/// Speech adaptation, gated by the flag itself; no floor pull.
pub fn update_speech(s: &mut GmmState, feats: &SubbandFeature, fused_flag: bool, lik: &ClassLikelihoods) {
    let (_, r) = responsibility(lik);
    let gate = if fused_flag { 1.0 } else { 0.0 };
    let c = s.coeffs;
    for (band, &f) in s.bands.iter_mut().zip(&feats.e) {
        for g in band.speech.iter_mut() {
            step_component(g, f, gate * c.speech_mean_rate * r, gate * c.speech_std_rate * r, s.min_std, s.var_floor);
        }
    }
}

/// Lifts the speech components of any band whose speech mean has drifted to
/// within `min_separation` of its noise mean.
pub fn enforce_separation(s: &mut GmmState) {
    let gap = s.min_separation;
    for band in s.bands.iter_mut() {
        let short = gap - (band.speech_mean() - band.noise_mean());
        if short > 0.0 {
            band.speech.iter_mut().for_each(|g| g.mean += short);
        }
    }
}

/// Floor tracking, then noise, then speech, then the separation guard, for one frame.
pub fn adapt(s: &mut GmmState, feats: &SubbandFeature, fused_flag: bool, lik: &ClassLikelihoods) {
    let (rise, fall) = (s.min_rise, s.min_fall);
    for (band, &f) in s.bands.iter_mut().zip(&feats.e) {
        let target = match s.floor_target {
            FloorTarget::NoiseMean => band.noise_mean(),
            FloorTarget::Feature => f,
        };
        update_min(band, f, target, rise, fall);
    }
    update_noise(s, feats, fused_flag, lik);
    update_speech(s, feats, fused_flag, lik);
    enforce_separation(s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{GmmConfig, VAR_FLOOR};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn state(noise_mean: f64, speech_mean: f64) -> GmmState {
        let band = SubbandModel {
            speech: [GaussComponent::new(speech_mean, 1.0); 2],
            noise: [GaussComponent::new(noise_mean, 1.0); 2],
            x_min: noise_mean,
            k: 1.0 / 6.0,
        };
        GmmState::from_bands([band; 6], &GmmConfig::default())
    }

    #[test]
    fn min_tracker() {
        let mut m = state(0.0, 4.0).bands[0];
        m.x_min = 10.0;
        update_min(&mut m, 15.0, 20.0, 0.99, 0.20);
        assert!((m.x_min - 10.1).abs() < 1e-12);
        m.x_min = 10.0;
        update_min(&mut m, 1.0, 2.0, 0.99, 0.20);
        assert!((m.x_min - 3.6).abs() < 1e-12);
        m.x_min = 10.0;
        update_min(&mut m, 10.0, 2.0, 0.99, 0.20);
        assert_eq!(m.x_min, 10.0);
    }

    #[test]
    fn speech_flag_freezes_noise_when_floor_matches() {
        let mut s = state(2.0, 6.0);
        let before = s.clone();
        update_noise(&mut s, &SubbandFeature { e: [5.0; 6] }, true, &ClassLikelihoods::EVEN);
        assert_eq!(s, before);
    }

    #[test]
    fn noise_mean_follows_louder_input() {
        let mut s = state(2.0, 6.0);
        update_noise(&mut s, &SubbandFeature { e: [3.0; 6] }, false, &ClassLikelihoods { p_h0: 0.7, p_h1: 0.3 });
        assert!(s.bands.iter().all(|b| b.noise[0].mean > 2.0));
    }

    #[test]
    fn noise_std_shrinks_at_the_mean() {
        let mut s = state(2.0, 6.0);
        s.min_std = 0.0;
        update_noise(&mut s, &SubbandFeature { e: [2.0; 6] }, false, &ClassLikelihoods { p_h0: 1.0, p_h1: 0.0 });
        // grad_std = -1/sigma = -1 at unit variance; one step of 0.1
        for b in &s.bands {
            assert_eq!(b.noise[0].mean, 2.0);
            assert!((b.noise[0].var.sqrt() - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn speech_gate_and_responsibility() {
        let mut s = state(0.0, 4.0);
        let before = s.clone();
        update_speech(&mut s, &SubbandFeature { e: [6.0; 6] }, false, &ClassLikelihoods::EVEN);
        assert_eq!(s, before);
        update_speech(&mut s, &SubbandFeature { e: [6.0; 6] }, true, &ClassLikelihoods { p_h0: 1.0, p_h1: 0.0 });
        assert_eq!(s, before);
        update_speech(&mut s, &SubbandFeature { e: [6.0; 6] }, true, &ClassLikelihoods::EVEN);
        assert!(s.bands.iter().all(|b| b.speech[1].mean > 4.0));
    }

    fn fit_stationary(target: FloorTarget) -> GmmState {
        let cfg = GmmConfig { floor_target: target, ..GmmConfig::default() };
        let mut s = GmmState::bootstrap(&[SubbandFeature { e: [-1.5; 6] }], &cfg);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let dist = Normal::new(-3.0, 1.0).unwrap();
        let mut lik = ClassLikelihoods::EVEN;
        for _ in 0..10_000 {
            let feats = SubbandFeature { e: std::array::from_fn(|_| dist.sample(&mut rng)) };
            adapt(&mut s, &feats, false, &lik);
            lik = crate::gmm::class_likelihoods(&feats, &s).normalized();
        }
        s
    }

    #[test]
    fn stationary_noise_fit() {
        for b in &fit_stationary(FloorTarget::NoiseMean).bands {
            for g in &b.noise {
                assert!((g.mean + 3.0).abs() < 0.5, "noise mean {} far from -3", g.mean);
            }
        }
    }

    #[test]
    fn feature_floor_pulls_noise_low() {
        for b in &fit_stationary(FloorTarget::Feature).bands {
            assert!(b.x_min < -3.0);
            for g in &b.noise {
                assert!(g.mean < -3.0 && g.mean > -5.5, "noise mean {}", g.mean);
            }
        }
    }

    #[test]
    fn alternating_levels_separate_the_classes() {
        let mut s = GmmState::bootstrap(&[SubbandFeature { e: [-8.0; 6] }], &GmmConfig::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let quiet = Normal::new(-8.0, 0.5).unwrap();
        let loud = Normal::new(0.0, 1.0).unwrap();
        let mut lik = ClassLikelihoods::EVEN;
        for t in 0..5_000 {
            let speech = (t / 25) % 2 == 1;
            let d = if speech { &loud } else { &quiet };
            let feats = SubbandFeature { e: std::array::from_fn(|_| d.sample(&mut rng)) };
            adapt(&mut s, &feats, speech, &lik);
            lik = crate::gmm::class_likelihoods(&feats, &s).normalized();
        }
        for b in &s.bands {
            let speech_lo = b.speech[0].mean.min(b.speech[1].mean);
            let noise_hi = b.noise[0].mean.max(b.noise[1].mean);
            assert!(speech_lo > noise_hi, "{b:?}");
        }
    }

    proptest! {
        #[test]
        fn variance_floor_holds(
            frames in prop::collection::vec((prop::array::uniform6(-50.0f64..50.0), any::<bool>(), 0.0f64..1.0), 1..200),
        ) {
            let mut s = state(0.0, 4.0);
            for (e, flag, p) in frames {
                let before = s.clone();
                let feats = SubbandFeature { e };
                let lik = ClassLikelihoods { p_h0: p, p_h1: 1.0 - p };
                adapt(&mut s, &feats, flag, &lik);
                for (i, (b, old)) in s.bands.iter().zip(&before.bands).enumerate() {
                    for g in b.noise.iter().chain(&b.speech) {
                        prop_assert!(g.var >= VAR_FLOOR && g.var.is_finite() && g.mean.is_finite());
                    }
                    // bounded step on the noise means
                    for j in 0..2 {
                        let o = old.noise[j];
                        let f = e[i];
                        let bound = s.coeffs.noise_mean_rate * ((f - o.mean) / o.var).abs()
                            + s.coeffs.min_pull * (b.x_min - o.mean).abs();
                        prop_assert!((b.noise[j].mean - o.mean).abs() <= bound * (1.0 + 1e-12) + 1e-12);
                    }
                }
            }
        }
    }
}
