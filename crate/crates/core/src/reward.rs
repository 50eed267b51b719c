//! Cascaded verifiable reward: syntax, then interface, then functional
//! equivalence against the task reference.

use serde::{Deserialize, Serialize};

use crate::minirtl::{equivalence_fraction, parse, tokenize, Interface, TokenId, Vocab};
use crate::policy::Rollout;
use crate::taskgen::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    ParseFail,
    Interface,
    Functional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub syntax_ok: bool,
    pub interface_score: f64,
    pub functional_fraction: f64,
    pub functional_pass: bool,
    pub reward: f64,
    pub stage: Stage,
}

/// Scalar reward values for each cascade outcome:
///
/// | outcome | reward |
/// |---|---|
/// | parse failure or truncation | `parse_fail` |
/// | interface score `s < 1` | `interface_base + interface_scale · s` |
/// | `s = 1`, matching fraction `m < 1` | `near_miss_base + near_miss_scale · m` |
/// | equivalent | `pass` |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSchedule {
    pub parse_fail: f64,
    pub interface_base: f64,
    pub interface_scale: f64,
    pub near_miss_base: f64,
    pub near_miss_scale: f64,
    pub pass: f64,
}

impl Default for RewardSchedule {
    fn default() -> Self {
        Self {
            parse_fail: 0.0,
            interface_base: 0.2,
            interface_scale: 0.3,
            near_miss_base: 0.5,
            near_miss_scale: 0.4,
            pass: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("reward schedule: {0}")]
pub struct ScheduleError(pub String);

impl RewardSchedule {
    /// Pass/fail only: every non-passing outcome scores 0.
    pub fn binary() -> Self {
        Self {
            parse_fail: 0.0,
            interface_base: 0.0,
            interface_scale: 0.0,
            near_miss_base: 0.0,
            near_miss_scale: 0.0,
            pass: 1.0,
        }
    }

    /// Values lie in `[0, 1]`, respect the cascade order, and every
    /// near-miss stays strictly below a pass.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let all = [
            self.parse_fail,
            self.interface_base,
            self.interface_scale,
            self.near_miss_base,
            self.near_miss_scale,
            self.pass,
        ];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(ScheduleError("values must lie in [0, 1]".into()));
        }
        if self.parse_fail > self.interface_base {
            return Err(ScheduleError("parse_fail exceeds interface_base".into()));
        }
        if self.interface_base + self.interface_scale > self.near_miss_base {
            return Err(ScheduleError("full interface credit exceeds near_miss_base".into()));
        }
        if self.near_miss_base + self.near_miss_scale >= self.pass {
            return Err(ScheduleError("near-miss credit must stay below pass".into()));
        }
        Ok(())
    }
}

/// `0.25 · [names equal] + 0.75 · matched / |target ports|`, where a target
/// port matches when the candidate declares the same name, direction and
/// width. Extra candidate ports earn nothing and cost nothing.
pub fn interface_score(candidate: &Interface, target: &Interface) -> f64 {
    let name = if candidate.module_name == target.module_name {
        0.25
    } else {
        0.0
    };
    if target.ports.is_empty() {
        return name + 0.75;
    }
    let matched = target
        .ports
        .iter()
        .filter(|p| candidate.ports.iter().any(|c| c == *p))
        .count();
    name + 0.75 * matched as f64 / target.ports.len() as f64
}

/// Scores a candidate response body (no EOS) against `task`.
pub fn score(
    vocab: &Vocab,
    candidate: &[TokenId],
    truncated: bool,
    task: &Task,
    schedule: &RewardSchedule,
) -> RewardBreakdown {
    let fail = RewardBreakdown {
        syntax_ok: false,
        interface_score: 0.0,
        functional_fraction: 0.0,
        functional_pass: false,
        reward: schedule.parse_fail,
        stage: Stage::ParseFail,
    };
    if truncated {
        return fail;
    }
    let Ok(ast) = parse(vocab, candidate) else {
        return fail;
    };
    let s = interface_score(&ast.interface, &task.reference.interface);
    if s < 1.0 {
        return RewardBreakdown {
            syntax_ok: true,
            interface_score: s,
            functional_fraction: 0.0,
            functional_pass: false,
            reward: schedule.interface_base + schedule.interface_scale * s,
            stage: Stage::Interface,
        };
    }
    let (m, pass) = match equivalence_fraction(&ast, &task.reference, &task.vectors) {
        Ok(eq) => (eq.fraction, eq.is_equivalent),
        Err(_) => (0.0, false),
    };
    let reward = if pass {
        schedule.pass
    } else {
        schedule.near_miss_base + schedule.near_miss_scale * m.min(1.0)
    };
    RewardBreakdown {
        syntax_ok: true,
        interface_score: 1.0,
        functional_fraction: m,
        functional_pass: pass,
        reward,
        stage: Stage::Functional,
    }
}

/// Scores candidate source text; text that does not tokenize is a parse
/// failure.
pub fn score_text(vocab: &Vocab, text: &str, task: &Task, schedule: &RewardSchedule) -> RewardBreakdown {
    match tokenize(vocab, text) {
        Ok(tokens) => score(vocab, &tokens, false, task, schedule),
        Err(_) => score(vocab, &[], false, task, schedule),
    }
}

pub fn score_rollout(vocab: &Vocab, rollout: &Rollout, task: &Task, schedule: &RewardSchedule) -> RewardBreakdown {
    score(vocab, rollout.body(vocab.eos()), rollout.truncated, task, schedule)
}

pub fn is_pass(b: &RewardBreakdown) -> bool {
    b.functional_pass
}
