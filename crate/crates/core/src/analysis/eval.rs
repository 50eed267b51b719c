use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DomainError;
use crate::minirtl::Vocab;
use crate::policy::{greedy_decode, sample_rollout, PolicyError, PolicyParams, Rollout};
use crate::reward::{score_rollout, RewardBreakdown, RewardSchedule};
use crate::seed::{mix_all, streams};
use crate::taskgen::Task;

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    (0..k).try_fold(1u128, |acc, i| Some(acc.checked_mul((n - i) as u128)? / (i as u128 + 1)))
}

/// Unbiased pass@k for `c` correct out of `n` samples,
/// `1 - C(n-c, k) / C(n, k)`. The binomials are exact integers while they
/// fit in 128 bits; beyond that the ratio is `Π_{i=n-c+1}^{n} (1 - k/i)`.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, DomainError> {
    if c > n || k == 0 || k > n {
        return Err(DomainError(format!("pass@k needs 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let (Some(miss), Some(all)) = (binomial(n - c, k), binomial(n, k)) {
        return Ok(1.0 - miss as f64 / all as f64);
    }
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Samples per task.
    pub n: usize,
    pub ks: Vec<usize>,
    /// Sampling temperature; `0` decodes greedily.
    pub temperature: f64,
    pub max_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n: 5,
            ks: vec![1, 5],
            temperature: 1.0,
            max_len: 256,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.n == 0 || self.max_len == 0 {
            return Err(DomainError("eval n and max_len must be at least 1".into()));
        }
        if self.ks.is_empty() || self.ks.iter().any(|&k| k == 0 || k > self.n) {
            return Err(DomainError("every k must lie in 1..=n".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(DomainError("temperature must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEval {
    pub task_id: String,
    pub n: usize,
    /// Functional passes.
    pub c: usize,
    /// Syntax passes.
    pub c_syn: usize,
    pub mean_reward: f64,
    /// `(k, pass@k)` in `ks` order.
    pub pass_at: Vec<(usize, f64)>,
    pub syntax_pass_at: Vec<(usize, f64)>,
    pub rollouts: Vec<Rollout>,
    pub scores: Vec<RewardBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub tasks: Vec<TaskEval>,
    pub pass_at: Vec<(usize, f64)>,
    pub syntax_pass_at: Vec<(usize, f64)>,
    pub mean_reward: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Functional pass@k for `k`, or `NaN` when `k` was not evaluated.
fn lookup(v: &[(usize, f64)], k: usize) -> f64 {
    v.iter().find(|(kk, _)| *kk == k).map_or(f64::NAN, |x| x.1)
}

impl EvalReport {
    pub fn pass(&self, k: usize) -> f64 {
        lookup(&self.pass_at, k)
    }

    pub fn syntax_pass(&self, k: usize) -> f64 {
        lookup(&self.syntax_pass_at, k)
    }

    pub fn all_rollouts(&self) -> Vec<Rollout> {
        self.tasks.iter().flat_map(|t| t.rollouts.iter().cloned()).collect()
    }

    /// One row per task followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("task_id,n,c,c_syn,mean_reward");
        for k in &self.ks {
            let _ = write!(s, ",pass@{k}");
        }
        for k in &self.ks {
            let _ = write!(s, ",syn@{k}");
        }
        s.push('\n');
        for t in &self.tasks {
            let _ = write!(s, "{},{},{},{},{}", t.task_id, t.n, t.c, t.c_syn, t.mean_reward);
            for (_, p) in t.pass_at.iter().chain(&t.syntax_pass_at) {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
        }
        let _ = write!(s, "mean,,,,{}", self.mean_reward);
        for (_, p) in self.pass_at.iter().chain(&self.syntax_pass_at) {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
        s
    }
}

/// Samples `cfg.n` responses per task, scores each with the reward cascade
/// and aggregates pass@k, syntax pass@k and mean reward as unweighted means
/// over tasks. Sample `j` of task `i` uses its own seeded stream, so the
/// report does not depend on thread scheduling.
pub fn eval_suite(
    params: &PolicyParams,
    tasks: &[&Task],
    cfg: &EvalConfig,
    schedule: &RewardSchedule,
    vocab: &Vocab,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(DomainError("evaluation needs at least one task".into()).into());
    }
    let jobs: Vec<(usize, usize)> = (0..tasks.len()).flat_map(|i| (0..cfg.n).map(move |j| (i, j))).collect();
    let samples: Vec<(Rollout, RewardBreakdown)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let task = tasks[i];
            let ro = if cfg.temperature == 0.0 {
                greedy_decode(params, &task.prompt_tokens, cfg.max_len, vocab.eos())?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_all(seed, &[streams::EVAL, i as u64, j as u64]));
                sample_rollout(params, &task.prompt_tokens, cfg.temperature, cfg.max_len, vocab.eos(), &mut rng)?
            };
            let sc = score_rollout(vocab, &ro, task, schedule);
            Ok((ro, sc))
        })
        .collect::<Result<_, PolicyError>>()?;

    let mut per_task = Vec::with_capacity(tasks.len());
    let mut it = samples.into_iter();
    for task in tasks {
        let (rollouts, scores): (Vec<_>, Vec<_>) = it.by_ref().take(cfg.n).unzip();
        let c = scores.iter().filter(|s| s.functional_pass).count();
        let c_syn = scores.iter().filter(|s| s.syntax_ok).count();
        let at = |c| cfg.ks.iter().map(|&k| Ok((k, pass_at_k(cfg.n, c, k)?))).collect::<Result<Vec<_>, DomainError>>();
        per_task.push(TaskEval {
            task_id: task.id.clone(),
            n: cfg.n,
            c,
            c_syn,
            mean_reward: scores.iter().map(|s| s.reward).sum::<f64>() / cfg.n as f64,
            pass_at: at(c)?,
            syntax_pass_at: at(c_syn)?,
            rollouts,
            scores,
        });
    }
    let m = per_task.len() as f64;
    let avg = |f: &dyn Fn(&TaskEval) -> f64| per_task.iter().map(f).sum::<f64>() / m;
    let pass_at = cfg.ks.iter().enumerate().map(|(i, &k)| (k, avg(&|t| t.pass_at[i].1))).collect();
    let syntax_pass_at = cfg
        .ks
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, avg(&|t| t.syntax_pass_at[i].1)))
        .collect();
    Ok(EvalReport {
        ks: cfg.ks.clone(),
        mean_reward: avg(&|t| t.mean_reward),
        pass_at,
        syntax_pass_at,
        tasks: per_task,
    })
}
