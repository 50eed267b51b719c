//! Supervised initialization: gradient descent on the mean per-token
//! negative log-likelihood of reference responses, with linear warmup and
//! cosine decay to zero.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{logprob_grad_at, Gradient, PolicyError, PolicyParams};
use crate::minirtl::{TokenId, Vocab};
use crate::seed::mix;
use crate::taskgen::Task;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftSchedule {
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SftSchedule {
    fn default() -> Self {
        Self {
            peak_lr: 5e-5,
            warmup_steps: 15,
            epochs: 3,
            batch_size: 8,
        }
    }
}

impl SftSchedule {
    pub fn total_steps(&self, examples: usize) -> usize {
        self.epochs * examples.div_ceil(self.batch_size.max(1))
    }
}

/// Learning rate at `step` of `total`: `peak · step / warmup` during warmup,
/// then cosine decay reaching 0 at the final step `total - 1`.
pub fn learning_rate(schedule: &SftSchedule, step: usize, total: usize) -> f64 {
    let peak = schedule.peak_lr;
    let warm = schedule.warmup_steps;
    if step < warm {
        return peak * step as f64 / warm as f64;
    }
    let last = total.saturating_sub(1);
    if last <= warm {
        return peak;
    }
    let progress = (step.min(last) - warm) as f64 / (last - warm) as f64;
    0.5 * peak * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftExample {
    pub prompt: Vec<TokenId>,
    /// Reference tokens followed by EOS.
    pub response: Vec<TokenId>,
}

impl SftExample {
    pub fn from_task(task: &Task, vocab: &Vocab) -> Self {
        Self {
            prompt: task.prompt_tokens.clone(),
            response: task.target_tokens(vocab),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftStep {
    pub step: usize,
    pub lr: f64,
    /// Mean per-token NLL of the minibatch before the update.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SftLog {
    pub steps: Vec<SftStep>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SftError {
    #[error("supervised corpus is empty")]
    EmptyCorpus,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("invalid learning rate {0}")]
    LearningRate(f64),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Mean per-token NLL of `examples` under `params` at `T = 1`.
pub fn mean_nll(params: &PolicyParams, examples: &[SftExample]) -> Result<f64, PolicyError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in examples {
        for t in 0..ex.response.len() {
            let (_, p) = params.step(&ex.prompt, &ex.response[..t], 1.0)?;
            total -= p[ex.response[t] as usize].ln();
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Minibatch gradient descent over `epochs` passes. Each epoch visits the
/// examples in an order shuffled by `mix(seed, epoch)`.
pub fn train_sft(
    params: &mut PolicyParams,
    examples: &[SftExample],
    schedule: &SftSchedule,
    seed: u64,
) -> Result<SftLog, SftError> {
    if examples.is_empty() {
        return Err(SftError::EmptyCorpus);
    }
    if schedule.batch_size == 0 {
        return Err(SftError::ZeroBatch);
    }
    if !(schedule.peak_lr.is_finite() && schedule.peak_lr >= 0.0) {
        return Err(SftError::LearningRate(schedule.peak_lr));
    }
    let total = schedule.total_steps(examples.len());
    let mut grad = Gradient::zeros(params);
    let mut log = SftLog::default();
    let mut step = 0;
    for epoch in 0..schedule.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, epoch as u64)));
        for batch in order.chunks(schedule.batch_size) {
            let n: usize = batch.iter().map(|&i| examples[i].response.len()).sum();
            let scale = 1.0 / n.max(1) as f64;
            let mut loss = 0.0;
            grad.clear();
            for &i in batch {
                let ex = &examples[i];
                for t in 0..ex.response.len() {
                    let (f, p) = params.step(&ex.prompt, &ex.response[..t], 1.0)?;
                    let tok = ex.response[t];
                    loss -= p[tok as usize].ln();
                    logprob_grad_at(&f, &p, tok, 1.0, scale, &mut grad);
                }
            }
            let lr = learning_rate(schedule, step, total);
            params.apply(&grad, lr);
            log.steps.push(SftStep {
                step,
                lr,
                loss: loss * scale,
            });
            step += 1;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minirtl::Vocab;
    use crate::policy::{greedy_decode, init_params, FeatureSpec};
    use crate::taskgen::{generate_task, Difficulty, TaskKind};

    #[test]
    fn schedule_endpoints() {
        let s = SftSchedule {
            peak_lr: 2.0,
            warmup_steps: 15,
            epochs: 1,
            batch_size: 1,
        };
        let total = 200;
        assert_eq!(learning_rate(&s, 0, total), 0.0);
        assert_eq!(learning_rate(&s, 15, total), 2.0);
        assert!(learning_rate(&s, total - 1, total) <= 1e-3 * 2.0);
        let mid = learning_rate(&s, 15 + (total - 1 - 15) / 2, total);
        assert!((mid - 1.0).abs() < 0.05);
        for st in 16..total {
            assert!(learning_rate(&s, st, total) <= learning_rate(&s, st - 1, total));
        }
    }

    #[test]
    fn initial_loss_is_log_v_and_single_task_is_memorized() {
        let v = Vocab::minirtl();
        let task = generate_task(4, TaskKind::Combinational, Difficulty::Medium).unwrap();
        let ex = SftExample {
            prompt: task.prompt_tokens.clone(),
            response: task.target_tokens(v),
        };
        let mut p = init_params(v, FeatureSpec::default(), 0).unwrap();
        let l0 = mean_nll(&p, std::slice::from_ref(&ex)).unwrap();
        assert!((l0 - (v.len() as f64).ln()).abs() < 0.05);
        let sched = SftSchedule {
            peak_lr: 0.5,
            warmup_steps: 15,
            epochs: 2000,
            batch_size: 1,
        };
        let log = train_sft(&mut p, std::slice::from_ref(&ex), &sched, 1).unwrap();
        assert_eq!(log.steps.len(), 2000);
        assert!(log.steps.last().unwrap().loss < log.steps[0].loss);
        let out = greedy_decode(&p, &ex.prompt, 128, v.eos()).unwrap();
        assert_eq!(out.response_tokens, ex.response);
    }

    #[test]
    fn empty_corpus_rejected() {
        let v = Vocab::minirtl();
        let mut p = init_params(v, FeatureSpec::default(), 0).unwrap();
        assert_eq!(
            train_sft(&mut p, &[], &SftSchedule::default(), 0).unwrap_err(),
            SftError::EmptyCorpus
        );
    }
}
