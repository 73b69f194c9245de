use super::{adapt, gmm_decide, ClassLikelihoods, GmmConfig, GmmState};
use crate::features::SubbandFeature;

/// Collects the warm-up frames and yields the initial state once enough have arrived.
#[derive(Debug, Clone)]
pub struct Bootstrapper {
    frames: Vec<SubbandFeature>,
    needed: usize,
}

impl Bootstrapper {
    pub fn new(needed: usize) -> Self {
        Self { frames: Vec::with_capacity(needed), needed }
    }

    pub fn feed(&mut self, f: &SubbandFeature, cfg: &GmmConfig) -> Option<GmmState> {
        self.frames.push(*f);
        (self.frames.len() >= self.needed).then(|| GmmState::bootstrap(&self.frames, cfg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmFrame {
    pub flag: bool,
    pub total_llr: f64,
}

/// Standalone GMM detector. Adaptation is gated by its own decision and the
/// responsibilities come from the previous frame's normalized class
/// likelihoods, the same one-frame feedback the fused detector uses.
#[derive(Debug, Clone)]
pub struct GmmVad {
    cfg: GmmConfig,
    boot: Bootstrapper,
    state: Option<GmmState>,
    prev_lik: ClassLikelihoods,
}

impl GmmVad {
    pub fn new(cfg: GmmConfig) -> Self {
        let boot = Bootstrapper::new(cfg.bootstrap_frames);
        Self { cfg, boot, state: None, prev_lik: ClassLikelihoods::EVEN }
    }

    pub fn state(&self) -> Option<&GmmState> {
        self.state.as_ref()
    }

    pub fn process(&mut self, feats: &SubbandFeature) -> GmmFrame {
        let Some(state) = self.state.as_mut() else {
            self.state = self.boot.feed(feats, &self.cfg);
            return GmmFrame { flag: false, total_llr: 0.0 };
        };
        let decision = gmm_decide(feats, state);
        adapt(state, feats, decision.flag, &self.prev_lik);
        self.prev_lik = decision.lik.normalized();
        GmmFrame { flag: decision.flag, total_llr: decision.total_llr }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silent_during_bootstrap() {
        let mut vad = GmmVad::new(GmmConfig::default());
        for _ in 0..20 {
            let out = vad.process(&SubbandFeature { e: [30.0; 6] });
            assert!(!out.flag);
        }
        assert!(vad.state().is_some());
        // the bootstrap frames are taken as noise; matching input stays quiet
        assert!(!vad.process(&SubbandFeature { e: [30.0; 6] }).flag);
        assert!(vad.process(&SubbandFeature { e: [36.0; 6] }).flag);
    }
}
