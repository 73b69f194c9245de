use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{forward_trace, DnnError, DnnWeights, SoftLabel, HIDDEN, OUTPUTS};

/// Gradients of the mean soft-target cross-entropy, same layout as [`DnnWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(input_dim: usize) -> Self {
        Self { w1: vec![0.0; HIDDEN * input_dim], b1: vec![0.0; HIDDEN], w2: vec![0.0; OUTPUTS * HIDDEN], b2: vec![0.0; OUTPUTS] }
    }

    /// Flattened in file order: W1, b1, W2, b2.
    pub fn flat(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied().collect()
    }
}

/// Mean of `-[t log p_speech + (1 - t) log p_silence]` over the batch and its gradient.
pub fn loss_and_gradient(w: &DnnWeights, batch: &[(&[f64], SoftLabel)]) -> Result<(f64, Gradients), DnnError> {
    if batch.is_empty() {
        return Err(DnnError::EmptyBatch);
    }
    let dim = w.input_dim;
    let mut g = Gradients::zeros(dim);
    let mut loss = 0.0;
    for (x, label) in batch {
        if x.len() != dim {
            return Err(DnnError::DimMismatch { expected: dim, found: x.len() });
        }
        let t = label.target_speech();
        let tr = forward_trace(w, x);
        let m = tr.logits[0].max(tr.logits[1]);
        let lse = m + ((tr.logits[0] - m).exp() + (tr.logits[1] - m).exp()).ln();
        let (log_ps, log_pn) = (tr.logits[0] - lse, tr.logits[1] - lse);
        loss -= t * log_ps + (1.0 - t) * log_pn;

        let dlogits = [log_ps.exp() - t, log_pn.exp() - (1.0 - t)];
        let mut dz1 = [0.0; HIDDEN];
        for k in 0..OUTPUTS {
            g.b2[k] += dlogits[k];
            for j in 0..HIDDEN {
                g.w2[k * HIDDEN + j] += dlogits[k] * tr.h[j];
                dz1[j] += dlogits[k] * w.w2[k * HIDDEN + j] as f64;
            }
        }
        for j in 0..HIDDEN {
            let d = dz1[j] * w.activation.derivative(tr.z1[j], tr.h[j]);
            if d == 0.0 {
                continue;
            }
            g.b1[j] += d;
            for (gw, &xi) in g.w1[j * dim..(j + 1) * dim].iter_mut().zip(x.iter()) {
                *gw += d * xi;
            }
        }
    }
    let n = batch.len() as f64;
    loss /= n;
    if !loss.is_finite() {
        return Err(DnnError::NonFiniteLoss);
    }
    for v in g.w1.iter_mut().chain(g.b1.iter_mut()).chain(g.w2.iter_mut()).chain(g.b2.iter_mut()) {
        *v /= n;
    }
    Ok((loss, g))
}

/// One plain gradient-descent step; returns the loss before the update.
pub fn train_step(w: &mut DnnWeights, batch: &[(&[f64], SoftLabel)], lr: f64) -> Result<f64, DnnError> {
    assert!(lr > 0.0, "learning rate must be positive");
    let (loss, g) = loss_and_gradient(w, batch)?;
    let step = |p: &mut [f32], d: &[f64]| {
        for (p, d) in p.iter_mut().zip(d) {
            *p = (*p as f64 - lr * d) as f32;
        }
    };
    step(&mut w.w1, &g.w1);
    step(&mut w.b1, &g.b1);
    step(&mut w.w2, &g.w2);
    step(&mut w.b2, &g.b2);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, batch_size: 64, epochs: 10, seed: 0 }
    }
}

/// Shuffled minibatch SGD. Returns the mean pre-update loss of each epoch.
pub fn train(w: &mut DnnWeights, data: &[(&[f64], SoftLabel)], cfg: &TrainConfig) -> Result<Vec<f64>, DnnError> {
    if data.is_empty() {
        return Err(DnnError::EmptyBatch);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            total += train_step(w, &batch, cfg.lr)? * chunk.len() as f64;
        }
        history.push(total / data.len() as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnn::{forward, Activation, DnnPosterior};
    use rand::{Rng, SeedableRng};

    fn loss_only(w: &DnnWeights, batch: &[(&[f64], SoftLabel)]) -> f64 {
        let mut total = 0.0;
        for (x, l) in batch {
            let p: DnnPosterior = forward(w, x).unwrap();
            let t = l.target_speech();
            total -= t * p.p_speech.ln() + (1.0 - t) * p.p_silence.ln();
        }
        total / batch.len() as f64
    }

    fn hidden_pattern(w: &DnnWeights, batch: &[(&[f64], SoftLabel)]) -> Vec<bool> {
        batch.iter().flat_map(|(x, _)| forward_trace(w, x).z1.map(|z| z > 0.0)).collect()
    }

    fn param_mut(w: &mut DnnWeights, mut i: usize) -> &mut f32 {
        for v in [&mut w.w1, &mut w.b1, &mut w.w2, &mut w.b2] {
            if i < v.len() {
                return &mut v[i];
            }
            i -= v.len();
        }
        unreachable!()
    }

    #[test]
    fn symmetric_target_at_symmetric_output_has_no_logit_gradient() {
        let w = DnnWeights::zeros(6);
        let xs = [[0.3; 6], [-1.0; 6], [2.0; 6]];
        let batch: Vec<(&[f64], SoftLabel)> = xs.iter().map(|x| (&x[..], SoftLabel::Uncertain)).collect();
        let (_, g) = loss_and_gradient(&w, &batch).unwrap();
        assert!((g.b2[0] - g.b2[1]).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, act) in [(1u64, Activation::Relu), (2, Activation::Sigmoid), (3, Activation::Relu)] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dim = rng.random_range(2..20);
            let mut w = DnnWeights::random(dim, &mut rng).with_activation(act);
            w.b1.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let labels = [SoftLabel::Speech, SoftLabel::Silence, SoftLabel::Uncertain, SoftLabel::Speech, SoftLabel::Silence];
            let batch: Vec<(&[f64], SoftLabel)> = xs.iter().map(|x| x.as_slice()).zip(labels).collect();
            let (_, g) = loss_and_gradient(&w, &batch).unwrap();
            let flat = g.flat();
            let base_pattern = hidden_pattern(&w, &batch);
            let mut checked = 0;
            while checked < 50 {
                let i = rng.random_range(0..w.param_count());
                let orig = *param_mut(&mut w, i);
                let h = 1e-3f32.max(orig.abs() * 1e-3);
                *param_mut(&mut w, i) = orig + h;
                let (lp, pp) = (loss_only(&w, &batch), hidden_pattern(&w, &batch));
                let plus = *param_mut(&mut w, i) as f64;
                *param_mut(&mut w, i) = orig - h;
                let (lm, pm) = (loss_only(&w, &batch), hidden_pattern(&w, &batch));
                let minus = *param_mut(&mut w, i) as f64;
                *param_mut(&mut w, i) = orig;
                if act == Activation::Relu && (pp != base_pattern || pm != base_pattern) {
                    continue;
                }
                let fd = (lp - lm) / (plus - minus);
                let rel = (fd - flat[i]).abs() / fd.abs().max(flat[i].abs()).max(1e-8);
                assert!(rel < 1e-4, "seed {seed} coord {i}: analytic {} fd {fd} rel {rel}", flat[i]);
                checked += 1;
            }
        }
    }

    #[test]
    fn separable_toy_problem() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let normal = [1.0, -2.0, 0.5, 1.5];
        let mut xs = Vec::new();
        while xs.len() < 64 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s: f64 = x.iter().zip(normal).map(|(a, b)| a * b).sum();
            if s.abs() > 0.3 {
                xs.push((x, if s > 0.0 { SoftLabel::Speech } else { SoftLabel::Silence }));
            }
        }
        let batch: Vec<(&[f64], SoftLabel)> = xs.iter().map(|(x, l)| (x.as_slice(), *l)).collect();
        let mut w = DnnWeights::random(4, &mut rng);
        let losses: Vec<f64> = (0..200).map(|_| train_step(&mut w, &batch, 0.5).unwrap()).collect();
        for k in 10..losses.len() - 1 {
            assert!(losses[k + 1] < losses[k], "loss rose at step {k}: {} -> {}", losses[k], losses[k + 1]);
        }
        let correct = batch
            .iter()
            .filter(|(x, l)| (forward(&w, x).unwrap().p_speech > 0.5) == (*l == SoftLabel::Speech))
            .count();
        assert_eq!(correct, batch.len());
    }

    #[test]
    fn empty_batch_is_an_error() {
        let mut w = DnnWeights::zeros(3);
        assert!(matches!(train_step(&mut w, &[], 0.1), Err(DnnError::EmptyBatch)));
    }
}
