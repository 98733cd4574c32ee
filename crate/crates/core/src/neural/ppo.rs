//! Clipped-surrogate PPO with truncated backpropagation through time.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::net::{log_softmax, softmax, PolicyParams, StepCache};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOConfig {
    pub lr: f64,
    pub discount: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub minibatches: usize,
    pub epochs: usize,
    pub clip: f64,
    pub gae_lambda: f64,
    pub rollout_len: usize,
    pub n_env: usize,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-4,
            discount: 0.99,
            entropy_coef: 0.001,
            value_coef: 0.5,
            minibatches: 4,
            epochs: 2,
            clip: 0.2,
            gae_lambda: 0.95,
            rollout_len: 128,
            n_env: 8,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            normalize_advantages: true,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ppo: {m}")));
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || !(0.0..=1.0).contains(&self.discount) {
            return bad("lambda and discount must lie in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.minibatches == 0 || self.epochs == 0 || self.rollout_len == 0 || self.n_env == 0 {
            return bad("minibatches, epochs, rollout_len and n_env must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: Vec<f64>,
    /// Recurrent state fed into this step (zero right after a reset).
    pub hidden: Vec<f64>,
    pub actions: Vec<usize>,
    /// Joint log-probability under the behavior policy.
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// One environment's slice of a rollout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Segment {
    pub steps: Vec<Transition>,
    /// Value estimate of the state after the last step.
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub segments: Vec<Segment>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Advantages and returns per segment, aligned with the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

pub fn compute_targets(buffer: &RolloutBuffer, cfg: &PPOConfig) -> Targets {
    let mut advantages = Vec::new();
    let mut returns = Vec::new();
    for seg in &buffer.segments {
        let r: Vec<f64> = seg.steps.iter().map(|s| s.reward).collect();
        let v: Vec<f64> = seg.steps.iter().map(|s| s.value).collect();
        let d: Vec<bool> = seg.steps.iter().map(|s| s.done).collect();
        let (a, ret) = gae(&r, &v, &d, seg.bootstrap_value, cfg.discount, cfg.gae_lambda);
        advantages.push(a);
        returns.push(ret);
    }
    if cfg.normalize_advantages {
        let all: Vec<f64> = advantages.iter().flatten().copied().collect();
        if all.len() > 1 {
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let std = (all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
            for a in advantages.iter_mut().flatten() {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
    }
    Targets { advantages, returns }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

/// Mean PPO loss over the listed segments; when `grad` is given the
/// analytic gradient of `total` is accumulated into it.
pub fn minibatch_loss(
    params: &PolicyParams,
    buffer: &RolloutBuffer,
    targets: &Targets,
    segment_ids: &[usize],
    cfg: &PPOConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossStats> {
    let n: usize = segment_ids.iter().map(|&i| buffer.segments[i].steps.len()).sum();
    if n == 0 {
        return Ok(LossStats::default());
    }
    let inv_n = 1.0 / n as f64;
    let mut stats = LossStats::default();
    for &si in segment_ids {
        let seg = &buffer.segments[si];
        let mut caches: Vec<StepCache> = Vec::with_capacity(seg.steps.len());
        for (t, tr) in seg.steps.iter().enumerate() {
            let reset = t == 0 || seg.steps[t - 1].done;
            let h = if reset { tr.hidden.clone() } else { caches[t - 1].h.clone() };
            caches.push(params.forward_cached(&tr.features, &h)?);
        }
        let mut dh_next = vec![0.0; params.layout.hidden];
        for t in (0..seg.steps.len()).rev() {
            let tr = &seg.steps[t];
            let cache = &caches[t];
            let adv = targets.advantages[si][t];
            let ret = targets.returns[si][t];

            let logps: Vec<Vec<f64>> = cache.out.logits.iter().map(|l| log_softmax(l)).collect();
            let logp: f64 = logps.iter().zip(&tr.actions).map(|(lp, &a)| lp[a]).sum();
            let ratio = (logp - tr.log_prob).exp();
            let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
            let (unc, clp) = (ratio * adv, clipped * adv);
            let surrogate = unc.min(clp);
            let ent: f64 = cache.out.logits.iter().map(|l| super::net::entropy(l)).sum();
            let verr = cache.out.value - ret;

            stats.policy_loss -= surrogate * inv_n;
            stats.value_loss += verr * verr * inv_n;
            stats.entropy += ent * inv_n;
            if (ratio - 1.0).abs() > cfg.clip {
                stats.clip_frac += inv_n;
            }

            let Some(g) = grad.as_deref_mut() else { continue };
            let dlogp = if unc <= clp { -adv * ratio * inv_n } else { 0.0 };
            let dlogits: Vec<Vec<f64>> = cache
                .out
                .logits
                .iter()
                .zip(&logps)
                .zip(&tr.actions)
                .map(|((l, lp), &a)| {
                    let p = softmax(l);
                    let h: f64 = -p.iter().zip(lp).map(|(pi, lpi)| pi * lpi).sum::<f64>();
                    (0..l.len())
                        .map(|j| {
                            let onehot = if j == a { 1.0 } else { 0.0 };
                            dlogp * (onehot - p[j]) + cfg.entropy_coef * inv_n * p[j] * (lp[j] + h)
                        })
                        .collect()
                })
                .collect();
            let dvalue = 2.0 * cfg.value_coef * verr * inv_n;
            let dh_prev = params.backward_step(cache, &dlogits, dvalue, &dh_next, g);
            let reset = t == 0 || seg.steps[t - 1].done;
            dh_next = if reset { vec![0.0; params.layout.hidden] } else { dh_prev };
        }
    }
    stats.total = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    if !stats.total.is_finite() {
        return Err(Error::NonFinite("ppo loss"));
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize, eps: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` to at most `max_norm` in L2; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// `epochs` passes over the buffer, each split into `minibatches` groups of
/// whole segments. Stats are averaged over all minibatch steps.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &PPOConfig,
    rng: &mut R,
) -> Result<LossStats> {
    let targets = compute_targets(buffer, cfg);
    let n_seg = buffer.segments.len();
    let n_mb = cfg.minibatches.clamp(1, n_seg.max(1));
    let mut order: Vec<usize> = (0..n_seg).collect();
    let mut acc = LossStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for mb in 0..n_mb {
            let ids: Vec<usize> = order.iter().copied().skip(mb).step_by(n_mb).collect();
            let mut grad = vec![0.0; params.data.len()];
            let st = minibatch_loss(params, buffer, &targets, &ids, cfg, Some(&mut grad))?;
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut params.data, &grad, cfg.lr);
            if params.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("parameters after update"));
            }
            acc.total += st.total;
            acc.policy_loss += st.policy_loss;
            acc.value_loss += st.value_loss;
            acc.entropy += st.entropy;
            acc.clip_frac += st.clip_frac;
            count += 1.0;
        }
    }
    if count > 0.0 {
        acc.total /= count;
        acc.policy_loss /= count;
        acc.value_loss /= count;
        acc.entropy /= count;
        acc.clip_frac /= count;
    }
    Ok(acc)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::neural::net::Layout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Random buffer whose behavior log-probs come from a perturbed copy of
    /// `params`, so ratios differ from 1.
    pub(crate) fn random_buffer(params: &PolicyParams, rng: &mut ChaCha8Rng, n_seg: usize, len: usize) -> RolloutBuffer {
        let layout = &params.layout;
        let mut behavior = params.clone();
        for v in &mut behavior.data {
            *v += rng.gen_range(-0.05..0.05);
        }
        let mut segments = Vec::new();
        for _ in 0..n_seg {
            let mut h: Vec<f64> = (0..layout.hidden).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let mut steps = Vec::new();
            for t in 0..len {
                let x: Vec<f64> = (0..layout.input).map(|j| if (j + t) % 4 == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
                let out = behavior.forward(&x, &h).unwrap();
                let actions: Vec<usize> = layout.heads.iter().map(|&k| rng.gen_range(0..k)).collect();
                let log_prob = out.logits.iter().zip(&actions).map(|(l, &a)| log_softmax(l)[a]).sum();
                let done = rng.gen_bool(0.15);
                steps.push(Transition {
                    features: x,
                    hidden: h.clone(),
                    actions,
                    log_prob,
                    value: out.value,
                    reward: rng.gen_range(-1.0..1.0),
                    done,
                });
                h = if done { vec![0.0; layout.hidden] } else { out.hidden };
            }
            segments.push(Segment { steps, bootstrap_value: rng.gen_range(-1.0..1.0) });
        }
        RolloutBuffer { segments }
    }

    fn small_params(rng: &mut ChaCha8Rng) -> PolicyParams {
        let mut p = PolicyParams::init(Layout { input: 11, hidden: 6, heads: vec![4, 3] }, rng);
        for v in &mut p.data {
            *v += rng.gen_range(-0.3..0.3);
        }
        p
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = small_params(&mut rng);
        let buffer = random_buffer(&params, &mut rng, 3, 7);
        let cfg = PPOConfig { entropy_coef: 0.05, ..Default::default() };
        let targets = compute_targets(&buffer, &cfg);
        let ids = [0, 2];
        let mut grad = vec![0.0; params.data.len()];
        minibatch_loss(&params, &buffer, &targets, &ids, &cfg, Some(&mut grad)).unwrap();
        let eps = 1e-5;
        for i in 0..params.data.len() {
            let mut p = params.clone();
            p.data[i] += eps;
            let up = minibatch_loss(&p, &buffer, &targets, &ids, &cfg, None).unwrap().total;
            p.data[i] -= 2.0 * eps;
            let down = minibatch_loss(&p, &buffer, &targets, &ids, &cfg, None).unwrap().total;
            let fd = (up - down) / (2.0 * eps);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: analytic {} vs numeric {fd}", grad[i]);
        }
    }

    #[test]
    fn zero_advantages_leave_only_value_and_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = small_params(&mut rng);
        let buffer = random_buffer(&params, &mut rng, 2, 5);
        let cfg = PPOConfig { entropy_coef: 0.0, value_coef: 0.0, ..Default::default() };
        let mut targets = compute_targets(&buffer, &cfg);
        for a in targets.advantages.iter_mut().flatten() {
            *a = 0.0;
        }
        let mut grad = vec![0.0; params.data.len()];
        let st = minibatch_loss(&params, &buffer, &targets, &[0, 1], &cfg, Some(&mut grad)).unwrap();
        assert_eq!(st.policy_loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn update_is_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut params = small_params(&mut rng);
            let buffer = random_buffer(&params, &mut rng, 4, 6);
            let mut adam = Adam::new(params.data.len(), 1e-5);
            let cfg = PPOConfig { minibatches: 2, ..Default::default() };
            let a = ppo_update(&mut params, &mut adam, &buffer, &cfg, &mut rng).unwrap();
            let b = ppo_update(&mut params, &mut adam, &buffer, &cfg, &mut rng).unwrap();
            (a, b, params.data)
        };
        let (a1, b1, p1) = run();
        let (a2, b2, p2) = run();
        assert_eq!(a1.total.to_bits(), a2.total.to_bits());
        assert_eq!(b1.total.to_bits(), b2.total.to_bits());
        assert_eq!(p1, p2);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2, 1e-12);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.3, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-9);
        assert!((p[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn grad_norm_clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
    }
}
