use serde::{Deserialize, Serialize};

use super::gate::GateConfig;
use crate::policy::{kl_divergence, kl_grad_at, logprob_grad_at, Gradient, PolicyError, PolicyParams, Rollout};
use crate::reward::RewardBreakdown;

const STD_EPS: f64 = 1e-8;
const DEGENERATE_STD: f64 = 1e-12;

/// G rollouts of one prompt, sampled from the policy snapshot `π_old`.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub task_id: String,
    pub rollouts: Vec<Rollout>,
    pub scores: Vec<RewardBreakdown>,
    pub rewards: Vec<f64>,
    /// One advantage per rollout, shared by all of its tokens.
    pub advantages: Vec<f64>,
    pub pass_count: usize,
}

impl Group {
    pub fn new(task_id: String, rollouts: Vec<Rollout>, scores: Vec<RewardBreakdown>) -> Self {
        let rewards = scores.iter().map(|s| s.reward).collect();
        let pass_count = scores.iter().filter(|s| s.functional_pass).count();
        Self {
            task_id,
            advantages: vec![0.0; rollouts.len()],
            rollouts,
            scores,
            rewards,
            pass_count,
        }
    }

    pub fn size(&self) -> usize {
        self.rollouts.len()
    }

    pub fn tokens(&self) -> usize {
        self.rollouts.iter().map(Rollout::len).sum()
    }

    /// Mixed in the pass/fail sense: `0 < c < G`.
    pub fn is_mixed(&self) -> bool {
        self.pass_count > 0 && self.pass_count < self.size()
    }

    pub fn reward_std(&self) -> f64 {
        mean_std(&self.rewards).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("group rewards have zero spread (std {std:e})")]
pub struct DegenerateGroup {
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(R - mean) / (std + 1e-8)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, DegenerateGroup> {
    let (mean, std) = mean_std(rewards);
    if !(std >= DEGENERATE_STD) {
        return Err(DegenerateGroup { std });
    }
    Ok(rewards.iter().map(|r| (r - mean) / (std + STD_EPS)).collect())
}

/// `R - mean`: the group-mean baseline without scaling.
pub fn baseline_advantages(rewards: &[f64]) -> Vec<f64> {
    let (mean, _) = mean_std(rewards);
    rewards.iter().map(|r| r - mean).collect()
}

/// Keeps the groups with `0 < c < G`, in order.
pub fn filter_groups(groups: Vec<Group>) -> Vec<Group> {
    groups.into_iter().filter(Group::is_mixed).collect()
}

/// Objective settings shared by every variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub gate: GateConfig,
    pub eps_low: f64,
    pub eps_high: f64,
    pub beta: f64,
    /// Multiply each token's KL term by its gate as well.
    pub gated_kl: bool,
}

/// One token's contribution to the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenTerm {
    pub ratio: f64,
    pub gate: f64,
    /// `gate · min(r Â, clip(r, 1 - ε_low, 1 + ε_high) Â)`, before
    /// normalization.
    pub surrogate: f64,
    /// Multiplier of `∇ log π_θ(token)` in the normalized objective.
    pub coeff: f64,
    pub clipped: bool,
}

pub fn token_term(logp_new: f64, logp_old: f64, adv: f64, gate: f64, eps_low: f64, eps_high: f64, norm: f64) -> TokenTerm {
    let ratio = (logp_new - logp_old).exp();
    let clipped_ratio = ratio.clamp(1.0 - eps_low, 1.0 + eps_high);
    let unclipped = ratio * adv;
    let clipped = clipped_ratio * adv;
    let active = unclipped <= clipped;
    TokenTerm {
        ratio,
        gate,
        surrogate: gate * unclipped.min(clipped),
        coeff: if active { gate * unclipped / norm } else { 0.0 },
        clipped: !active,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tokens: usize,
    pub clip_rate: f64,
    pub gated_fraction: f64,
    pub mean_kl: f64,
}

/// Per-token terms for every rollout of `group` given `π_θ`; `π_old` is
/// read from the stored log-probabilities. `norm` is `Σ|o|` over the batch.
pub fn per_token_coefficients(
    group: &Group,
    theta: &PolicyParams,
    cfg: &ObjectiveConfig,
    norm: f64,
) -> Result<Vec<Vec<TokenTerm>>, PolicyError> {
    let mut out = Vec::with_capacity(group.size());
    for (ro, &adv) in group.rollouts.iter().zip(&group.advantages) {
        let new = crate::policy::sequence_logprobs(theta, &ro.prompt_tokens, &ro.response_tokens, ro.temperature)?;
        let gates = cfg.gate.gates(&ro.entropies);
        out.push(
            new.iter()
                .zip(&ro.logprobs)
                .zip(&gates)
                .map(|((&n, &o), &g)| token_term(n, o, adv, g, cfg.eps_low, cfg.eps_high, norm))
                .collect(),
        );
    }
    Ok(out)
}

/// Value of the token-normalized, gated clipped surrogate minus
/// `β · KL(π_θ ‖ π_ref)` over `batch`, plus diagnostics. When `grad` is
/// given, the exact gradient of that value with respect to `θ` is added to
/// it, in (group, rollout, token) order.
pub fn evaluate_batch(
    batch: &[Group],
    theta: &PolicyParams,
    reference: &PolicyParams,
    cfg: &ObjectiveConfig,
    mut grad: Option<&mut Gradient>,
) -> Result<(f64, Diagnostics), PolicyError> {
    let n: usize = batch.iter().map(Group::tokens).sum();
    if n == 0 {
        return Ok((0.0, Diagnostics::default()));
    }
    let norm = n as f64;
    let mut surrogate = 0.0;
    let mut kl_total = 0.0;
    let mut kl_weighted = 0.0;
    let mut clipped = 0usize;
    let mut gate_sum = 0.0;
    for group in batch {
        for (ro, &adv) in group.rollouts.iter().zip(&group.advantages) {
            let gates = cfg.gate.gates(&ro.entropies);
            let t_ = ro.temperature;
            for t in 0..ro.len() {
                let prefix = &ro.response_tokens[..t];
                let tok = ro.response_tokens[t];
                let (feats, p) = theta.step(&ro.prompt_tokens, prefix, t_)?;
                let term = token_term(p[tok as usize].ln(), ro.logprobs[t], adv, gates[t], cfg.eps_low, cfg.eps_high, norm);
                surrogate += term.surrogate;
                clipped += usize::from(term.clipped);
                gate_sum += gates[t];
                let (_, q) = reference.step(&ro.prompt_tokens, prefix, t_)?;
                let kl = kl_divergence(&p, &q);
                let kl_gate = if cfg.gated_kl { gates[t] } else { 1.0 };
                kl_total += kl;
                kl_weighted += kl_gate * kl;
                if let Some(g) = grad.as_deref_mut() {
                    logprob_grad_at(&feats, &p, tok, t_, term.coeff, g);
                    kl_grad_at(&feats, &p, &q, t_, -cfg.beta * kl_gate / norm, g);
                }
            }
        }
    }
    let value = (surrogate - cfg.beta * kl_weighted) / norm;
    Ok((
        value,
        Diagnostics {
            tokens: n,
            clip_rate: clipped as f64 / norm,
            gated_fraction: gate_sum / norm,
            mean_kl: kl_total / norm,
        },
    ))
}

/// `J(θ)` over a filtered batch.
pub fn objective_value(
    batch: &[Group],
    theta: &PolicyParams,
    reference: &PolicyParams,
    cfg: &ObjectiveConfig,
) -> Result<f64, PolicyError> {
    evaluate_batch(batch, theta, reference, cfg, None).map(|(v, _)| v)
}
