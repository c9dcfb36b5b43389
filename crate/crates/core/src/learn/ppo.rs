//! Clipped-surrogate PPO with generalized advantage estimation.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::{ActorCritic, Observation};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::LearnError;
use crate::domain::NUM_ACTIONS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_range: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before they enter the update.
    pub reward_scale: f64,
    /// Episodes collected (concurrently) per update.
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_range: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch_size: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 1e-5,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: String| Err(LearnError::Config(msg));
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad(format!("clip_range must lie in (0, 1), got {}", self.clip_range));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.workers == 0 {
            return bad("epochs, minibatch_size and workers must be positive".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// One decision as seen at collection time.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    /// Already multiplied by the reward scale.
    pub reward: f64,
    /// Last decision of its episode.
    pub done: bool,
}

/// Advantages and discounted returns over a sequence of transitions; the value
/// after a `done` transition is taken as zero.
pub fn compute_gae(transitions: &[Transition], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = transitions.len();
    let mut adv = vec![0.0; n];
    let mut next_value = 0.0;
    let mut running = 0.0;
    for i in (0..n).rev() {
        let t = &transitions[i];
        let live = if t.done { 0.0 } else { 1.0 };
        let delta = t.reward + gamma * next_value * live - t.value;
        running = delta + gamma * lambda * live * running;
        adv[i] = running;
        next_value = t.value;
    }
    let returns = adv.iter().zip(transitions).map(|(a, t)| a + t.value).collect();
    (adv, returns)
}

/// Scalar loss of one minibatch and its parts.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub loss: Var,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Records the PPO loss for `batch` on `tape`:
/// `-mean(min(r·A, clip(r)·A)) + c_v·mean((V - R)²) - c_e·H`.
/// `advantages` are used as given.
pub fn ppo_loss(
    tape: &mut Tape,
    net: &ActorCritic,
    vars: &[Var],
    batch: &[&Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
) -> Result<LossTerms, LearnError> {
    let n = batch.len();
    let obs: Vec<&Observation> = batch.iter().map(|t| &t.obs).collect();
    let heads = net.forward(tape, vars, &obs)?;
    let column = |v: Vec<f64>| Tensor::from_vec(n, 1, v);

    let logp = tape.pick_cols(heads.log_probs, batch.iter().map(|t| t.action).collect())?;
    let old = tape.leaf(column(batch.iter().map(|t| t.log_prob).collect())?);
    let diff = tape.sub(logp, old)?;
    let ratio = tape.exp(diff);
    let adv = tape.leaf(column(advantages.to_vec())?);
    let surr1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
    let surr2 = tape.mul(clipped, adv)?;
    let surr = tape.minimum(surr1, surr2)?;
    let surr_mean = tape.mean(surr);
    let policy_loss = tape.scale(surr_mean, -1.0);

    let target = tape.leaf(column(returns.to_vec())?);
    let err = tape.sub(heads.values, target)?;
    let sq = tape.square(err);
    let value_loss = tape.mean(sq);

    let mask: Vec<bool> = batch.iter().flat_map(|t| t.obs.mask.as_slice().iter().copied()).collect();
    let probs = tape.exp(heads.log_probs);
    let finite_logp = tape.masked_fill(heads.log_probs, Arc::new(mask))?;
    let plogp = tape.mul(probs, finite_logp)?;
    let plogp_mean = tape.mean(plogp);
    let entropy = tape.scale(plogp_mean, -(NUM_ACTIONS as f64));

    let v_term = tape.scale(value_loss, cfg.value_coef);
    let e_term = tape.scale(entropy, -cfg.entropy_coef);
    let partial = tape.add(policy_loss, v_term)?;
    let loss = tape.add(partial, e_term)?;

    let clip_fraction = tape
        .value(ratio)
        .data()
        .iter()
        .filter(|r| (*r - 1.0).abs() > cfg.clip_range)
        .count() as f64
        / n as f64;
    Ok(LossTerms {
        loss,
        policy_loss: tape.value(policy_loss).item(),
        value_loss: tape.value(value_loss).item(),
        entropy: tape.value(entropy).item(),
        clip_fraction,
    })
}

/// Mean loss statistics over the minibatches of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

fn normalize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / (std + 1e-8));
}

/// Runs `cfg.epochs` passes of shuffled minibatch updates over `buffer`.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut ActorCritic,
    adam: &mut Adam,
    buffer: &[Transition],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, LearnError> {
    if buffer.is_empty() {
        return Err(LearnError::EmptyBuffer);
    }
    let (advantages, returns) = compute_gae(buffer, cfg.gamma, cfg.gae_lambda);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (k, chunk) in order.chunks(cfg.minibatch_size).enumerate() {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| &buffer[i]).collect();
            let mut adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
            if adv.len() > 1 {
                normalize(&mut adv);
            }
            let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();

            let mut tape = Tape::new();
            let vars = net.store.bind(&mut tape);
            let terms = ppo_loss(&mut tape, net, &vars, &batch, &adv, &ret, cfg)?;
            let loss = tape.value(terms.loss).item();
            if !loss.is_finite() {
                return Err(LearnError::NonFiniteLoss {
                    epoch,
                    minibatch: k,
                    loss,
                });
            }
            let mut grads = tape.backward(terms.loss);
            let mut g: Vec<Tensor> = vars
                .iter()
                .zip(&net.store.params)
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.rows(), p.value.cols())))
                .collect();
            let norm = g.iter().map(Tensor::sum_squares).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(LearnError::NonFiniteLoss {
                    epoch,
                    minibatch: k,
                    loss: norm,
                });
            }
            let coef = cfg.max_grad_norm / (norm + 1e-6);
            if coef < 1.0 {
                for t in &mut g {
                    t.data_mut().iter_mut().for_each(|x| *x *= coef);
                }
            }
            adam.update(&mut net.store, &g);

            stats.policy_loss += terms.policy_loss;
            stats.value_loss += terms.value_loss;
            stats.entropy += terms.entropy;
            stats.clip_fraction += terms.clip_fraction;
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches as f64;
    stats.policy_loss /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_fraction /= m;
    Ok(stats)
}
