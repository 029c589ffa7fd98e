use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use crate::autodiff::{Scalar, Tape};
use crate::error::{Error, Result};
use crate::estimation::{adam_step, AdamState, FitConfig};

/// Windows per Adam step.
pub const BATCH_SIZE: usize = 32;
/// Adam steps between validation rollouts.
pub const VAL_EVERY: usize = 100;

/// Autoregressive fully connected one-step predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcBaseline {
    pub k: usize,
    pub d: usize,
    /// rollout length
    pub q: usize,
    pub hidden: Vec<usize>,
    /// per layer, row-major `out × (in + 1)` with the bias last
    pub weights: Vec<f64>,
    /// per-feature standardization applied to inputs and undone on outputs
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FcBaseline {
    /// Xavier-uniform weights, zero biases, identity standardization.
    pub fn new(k: usize, d: usize, q: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fc = FcBaseline {
            k,
            d,
            q,
            hidden: hidden.to_vec(),
            weights: Vec::new(),
            center: vec![0.0; d],
            scale: vec![1.0; d],
        };
        for (fan_in, fan_out) in fc.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_out {
                fc.weights.extend((0..fan_in).map(|_| rng.gen_range(-bound..bound)));
                fc.weights.push(0.0);
            }
        }
        fc
    }

    /// Linear map that repeats the last input step.
    pub fn identity_linear(k: usize, d: usize, q: usize) -> Self {
        let mut fc = FcBaseline {
            k,
            d,
            q,
            hidden: Vec::new(),
            weights: vec![0.0; d * (k * d + 1)],
            center: vec![0.0; d],
            scale: vec![1.0; d],
        };
        for j in 0..d {
            fc.weights[j * (k * d + 1) + (k - 1) * d + j] = 1.0;
        }
        fc
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.k * self.d];
        sizes.extend(&self.hidden);
        sizes.push(self.d);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_weights(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    /// Sets the standardization from the mean and spread of `samples`.
    pub fn standardize_on(mut self, samples: &[Sample]) -> Self {
        let rows: Vec<&Vec<f64>> = samples.iter().flat_map(|s| s.input.iter().chain(&s.target)).collect();
        if rows.is_empty() {
            return self;
        }
        let n = rows.len() as f64;
        for j in 0..self.d {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            self.center[j] = mean;
            self.scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        self
    }

    fn standardized(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter()
            .flat_map(|r| r.iter().enumerate().map(|(j, &v)| (v - self.center[j]) / self.scale[j]))
            .collect()
    }

    /// One step in standardized units from a flattened standardized window.
    pub fn forward<S: Scalar>(&self, w: &[S], window: &[f64]) -> Vec<S> {
        let layers = self.layer_dims();
        let mut offset = 0;
        let mut act: Vec<S> = Vec::new();
        for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let last = l + 1 == layers.len();
            act = (0..fan_out)
                .map(|o| {
                    let row = &w[offset + o * (fan_in + 1)..offset + (o + 1) * (fan_in + 1)];
                    let z = if l == 0 {
                        S::linear(&row[..fan_in], window)
                    } else {
                        S::dot(&row[..fan_in], &act)
                    } + row[fan_in];
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            offset += fan_out * (fan_in + 1);
        }
        act
    }

    /// `q` autoregressive steps after a `k × d` input window.
    pub fn predict(&self, input: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut window = self.standardized(input);
        let mut out = Vec::with_capacity(self.q);
        for _ in 0..self.q {
            let z = self.forward(&self.weights, &window);
            window.drain(..self.d);
            window.extend(&z);
            out.push(z.iter().enumerate().map(|(j, v)| v * self.scale[j] + self.center[j]).collect());
        }
        out
    }
}

/// See [`FcBaseline::predict`].
pub fn predict_fc(baseline: &FcBaseline, input: &[Vec<f64>]) -> Vec<Vec<f64>> {
    baseline.predict(input)
}

/// Root mean squared error over all steps and features.
pub fn rmse(pred: &[Vec<Vec<f64>>], truth: &[&[Vec<f64>]]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().flatten().zip(t.iter().flatten()) {
            sum += (a - b).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn rollout_rmse(fc: &FcBaseline, samples: &[Sample]) -> f64 {
    let preds: Vec<_> = samples.iter().map(|s| fc.predict(&s.input)).collect();
    let truth: Vec<&[Vec<f64>]> = samples.iter().map(|s| s.target.as_slice()).collect();
    rmse(&preds, &truth)
}

/// Trains one-step prediction on random windows of the training series with
/// Adam and keeps the weights with the lowest validation rollout RMSE.
/// `config.max_iters` counts Adam steps; training stops once validation has
/// not improved for `config.patience` steps.
pub fn train_fc(baseline: &FcBaseline, train: &[Sample], val: &[Sample], config: &FitConfig) -> Result<FcBaseline> {
    config.validate()?;
    let (k, d) = (baseline.k, baseline.d);
    if baseline.n_weights() != baseline.weights.len() {
        return Err(Error::shape(baseline.n_weights(), baseline.weights.len()));
    }
    let bad_shape = |s: &Sample| s.input.len() != k || s.input.iter().chain(&s.target).any(|r| r.len() != d);
    if let Some(s) = train.iter().chain(val).find(|s| bad_shape(s)) {
        return Err(Error::shape(format!("{k} × {d} input"), format!("sample {}", s.id)));
    }
    if config.max_iters == 0 || train.is_empty() {
        return Ok(baseline.clone());
    }
    let series: Vec<Vec<f64>> = train
        .iter()
        .map(|s| {
            let rows: Vec<Vec<f64>> = s.input.iter().chain(&s.target).cloned().collect();
            baseline.standardized(&rows)
        })
        .collect();
    let windows: Vec<(usize, usize)> = series
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (k..s.len() / d).map(move |t| (i, t)))
        .collect();
    if windows.is_empty() {
        return Ok(baseline.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = baseline.clone();
    let mut best = baseline.clone();
    let mut best_val = rollout_rmse(baseline, val);
    let mut best_iter = 0;
    let mut adam = AdamState::new(current.weights.len());
    let mut tape = Tape::new();
    for iter in 1..=config.max_iters {
        tape.reset();
        let w = tape.vars(&current.weights);
        let mut terms = Vec::with_capacity(BATCH_SIZE * d);
        for _ in 0..BATCH_SIZE {
            let (i, t) = windows[rng.gen_range(0..windows.len())];
            let s = &series[i];
            let pred = current.forward(&w, &s[(t - k) * d..t * d]);
            for (j, p) in pred.into_iter().enumerate() {
                let e = p - s[t * d + j];
                terms.push(e * e);
            }
        }
        let loss = Scalar::sum(&terms) / terms.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("FC training loss at step {iter}")));
        }
        let grads = tape.backward(loss)?.wrt_all(&w);
        drop(w);
        adam_step(&mut current.weights, &grads, &mut adam, config.lr)?;
        if iter % VAL_EVERY == 0 || iter == config.max_iters {
            let v = rollout_rmse(&current, val);
            debug!("fc step {iter}: train {:.3e} val {:.4}", loss_value(&terms), v);
            if v < best_val || !best_val.is_finite() {
                best_val = v;
                best = current.clone();
                best_iter = iter;
            }
            if iter - best_iter >= config.patience {
                break;
            }
        }
    }
    Ok(best)
}

fn loss_value<S: Scalar>(terms: &[S]) -> f64 {
    terms.iter().map(|t| t.value()).sum::<f64>() / terms.len().max(1) as f64
}
