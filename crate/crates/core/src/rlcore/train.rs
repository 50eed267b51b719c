use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{baseline_advantages, evaluate_batch, group_advantages, Group};
use super::{RlConfig, RlError, Variant};
use crate::minirtl::Vocab;
use crate::policy::{sample_rollout, Gradient, PolicyParams};
use crate::reward::{score_rollout, RewardSchedule};
use crate::seed::{mix_all, streams};
use crate::taskgen::Task;

pub const METRICS_HEADER: &str =
    "step,mean_reward,pass_rate,clip_rate,gated_fraction,mean_kl,mean_entropy,retained_groups";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub pass_rate: f64,
    pub clip_rate: f64,
    pub gated_fraction: f64,
    pub mean_kl: f64,
    pub mean_entropy: f64,
    pub retained_groups: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub metrics: Vec<StepMetrics>,
    /// Steps with no trainable group after all resampling attempts.
    pub skipped_steps: Vec<usize>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                m.step,
                m.mean_reward,
                m.pass_rate,
                m.clip_rate,
                m.gated_fraction,
                m.mean_kl,
                m.mean_entropy,
                m.retained_groups
            );
        }
        s
    }

    /// Mean gated-token fraction over the steps that trained.
    pub fn mean_gated_fraction(&self) -> f64 {
        let trained: Vec<f64> = self
            .metrics
            .iter()
            .filter(|m| m.retained_groups > 0)
            .map(|m| m.gated_fraction)
            .collect();
        if trained.is_empty() {
            return f64::NAN;
        }
        trained.iter().sum::<f64>() / trained.len() as f64
    }
}

struct Sampled {
    groups: Vec<Group>,
    rewards: Vec<f64>,
    passes: usize,
    entropy_sum: f64,
    tokens: usize,
}

#[allow(clippy::too_many_arguments)]
fn sample_groups(
    vocab: &Vocab,
    params: &PolicyParams,
    tasks: &[&Task],
    cfg: &RlConfig,
    schedule: &RewardSchedule,
    step: usize,
    attempt: usize,
    count: usize,
) -> Result<Sampled, RlError> {
    let mut pick = ChaCha8Rng::seed_from_u64(mix_all(cfg.seed, &[streams::RL, step as u64, attempt as u64]));
    let chosen: Vec<usize> = (0..count).map(|_| pick.gen_range(0..tasks.len())).collect();
    let g = cfg.group_size;
    let jobs: Vec<(usize, usize)> = (0..count).flat_map(|slot| (0..g).map(move |i| (slot, i))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(slot, i)| {
            let task = tasks[chosen[slot]];
            let seed = mix_all(
                cfg.seed,
                &[streams::RL, step as u64, attempt as u64, slot as u64, i as u64, 1],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ro = sample_rollout(params, &task.prompt_tokens, cfg.temperature, cfg.max_len, vocab.eos(), &mut rng)?;
            let sc = score_rollout(vocab, &ro, task, schedule);
            Ok((ro, sc))
        })
        .collect::<Result<_, crate::policy::PolicyError>>()?;
    let mut out = Sampled {
        groups: Vec::with_capacity(count),
        rewards: Vec::new(),
        passes: 0,
        entropy_sum: 0.0,
        tokens: 0,
    };
    let mut it = results.into_iter();
    for &task_index in &chosen {
        let (rollouts, scores): (Vec<_>, Vec<_>) = it.by_ref().take(g).unzip();
        let group = Group::new(tasks[task_index].id.clone(), rollouts, scores);
        out.rewards.extend(&group.rewards);
        out.passes += group.pass_count;
        for ro in &group.rollouts {
            out.entropy_sum += ro.entropies.iter().sum::<f64>();
            out.tokens += ro.len();
        }
        out.groups.push(group);
    }
    Ok(out)
}

/// Runs `cfg.steps` steps of group policy optimization starting from
/// `params`, regularized toward the frozen `reference`.
///
/// Each step snapshots `π_old = params`, samples `batch_size` prompts with
/// `G` rollouts each, scores them, keeps the trainable groups (refilling
/// from fresh prompts when the variant uses dynamic sampling), assembles
/// the exact gradient of the objective and takes one ascent step.
pub fn train_rl(
    cfg: &RlConfig,
    params: &mut PolicyParams,
    reference: &PolicyParams,
    tasks: &[&Task],
    schedule: &RewardSchedule,
    vocab: &Vocab,
) -> Result<TrainLog, RlError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(RlError::EmptyCorpus);
    }
    let objective = cfg.objective();
    let dynamic = cfg.variant.dynamic_sampling();
    let attempts = if dynamic { cfg.max_resample + 1 } else { 1 };
    let mut grad = Gradient::zeros(params);
    let mut log = TrainLog::default();

    for step in 0..cfg.steps {
        let mut retained: Vec<Group> = Vec::new();
        let mut rewards = Vec::new();
        let mut passes = 0;
        let mut entropy_sum = 0.0;
        let mut tokens = 0;
        for attempt in 0..attempts {
            let need = cfg.batch_size - retained.len();
            if need == 0 {
                break;
            }
            let s = sample_groups(vocab, params, tasks, cfg, schedule, step, attempt, need)?;
            rewards.extend(s.rewards);
            passes += s.passes;
            entropy_sum += s.entropy_sum;
            tokens += s.tokens;
            for mut g in s.groups {
                let keep = if dynamic {
                    g.is_mixed()
                } else {
                    g.reward_std() >= 1e-12
                };
                if !keep {
                    continue;
                }
                g.advantages = match cfg.variant {
                    Variant::PpoBaseline => baseline_advantages(&g.rewards),
                    _ => group_advantages(&g.rewards)?,
                };
                retained.push(g);
            }
        }

        let mut m = StepMetrics {
            step,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
            pass_rate: passes as f64 / rewards.len().max(1) as f64,
            clip_rate: 0.0,
            gated_fraction: 0.0,
            mean_kl: 0.0,
            mean_entropy: entropy_sum / tokens.max(1) as f64,
            retained_groups: retained.len(),
        };
        if retained.is_empty() {
            log::warn!("step {step}: no trainable groups after {attempts} attempt(s); skipped");
            log.skipped_steps.push(step);
            log.metrics.push(m);
            continue;
        }
        grad.clear();
        let (_, diag) = evaluate_batch(&retained, params, reference, &objective, Some(&mut grad))?;
        params.apply(&grad, cfg.lr);
        if !params.is_finite() {
            return Err(RlError::NonFinite { step });
        }
        m.clip_rate = diag.clip_rate;
        m.gated_fraction = diag.gated_fraction;
        m.mean_kl = diag.mean_kl;
        log::debug!(
            "step {step}: R={:.3} pass={:.3} groups={} gated={:.3}",
            m.mean_reward,
            m.pass_rate,
            m.retained_groups,
            m.gated_fraction
        );
        log.metrics.push(m);
    }
    Ok(log)
}
