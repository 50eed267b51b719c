//! Entropy-gated group policy optimization.
//!
//! The surrogate for a filtered batch of groups is
//!
//! ```text
//! J(θ) = 1/Σ|o| · Σ_i Σ_t [ g_t · min(r_t Â_i, clip(r_t, 1-ε_low, 1+ε_high) Â_i)
//!                           - β · KL(π_θ ‖ π_ref)_t ]
//! ```
//!
//! where `r_t = π_θ / π_old` for token `t` and `g_t` is the token gate. The
//! variants differ only in gate, clip range, advantage form and filtering:
//!
//! | variant | gate | clip | advantage | groups kept |
//! |---|---|---|---|---|
//! | `grpo` | none | `ε_low` both sides | standardized | reward spread > 0 |
//! | `dapo` | configured | `ε_low` / `ε_high` | standardized | `0 < c < G`, refilled |
//! | `earl` | entropy mask at `ρ` | `ε_low` / `ε_high` | standardized | `0 < c < G`, refilled |
//! | `ppo-baseline` | configured | `ε_low` both sides | `R - mean` | reward spread > 0 |

mod gate;
mod objective;
mod train;

use serde::{Deserialize, Serialize};

pub use gate::{archer_weights, entropy_mask, entropy_threshold, nearest_rank, GateConfig, GateMode};
pub use objective::{
    baseline_advantages, evaluate_batch, filter_groups, group_advantages, objective_value,
    per_token_coefficients, token_term, DegenerateGroup, Diagnostics, Group, ObjectiveConfig,
    TokenTerm,
};
pub use train::{train_rl, StepMetrics, TrainLog, METRICS_HEADER};

pub use crate::policy::kl_divergence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Grpo,
    Dapo,
    Earl,
    PpoBaseline,
}

impl Variant {
    pub fn dynamic_sampling(self) -> bool {
        matches!(self, Variant::Dapo | Variant::Earl)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Grpo => "grpo",
            Variant::Dapo => "dapo",
            Variant::Earl => "earl",
            Variant::PpoBaseline => "ppo-baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub variant: Variant,
    pub group_size: usize,
    pub rho: f64,
    pub eps_low: f64,
    pub eps_high: f64,
    pub beta: f64,
    pub lr: f64,
    pub temperature: f64,
    pub max_len: usize,
    pub batch_size: usize,
    pub max_resample: usize,
    pub steps: usize,
    /// Gate for `dapo` and `ppo-baseline`; `earl` always masks at `rho` and
    /// `grpo` never gates.
    pub gate: GateMode,
    pub gated_kl: bool,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Earl,
            group_size: 6,
            rho: 0.8,
            eps_low: 0.2,
            eps_high: 0.28,
            beta: 0.01,
            lr: 1e-6,
            temperature: 1.0,
            max_len: 256,
            batch_size: 8,
            max_resample: 4,
            steps: 500,
            gate: GateMode::None,
            gated_kl: false,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("invalid rl config: {0}")]
    Config(String),
    #[error("no training tasks")]
    EmptyCorpus,
    #[error(transparent)]
    Degenerate(#[from] DegenerateGroup),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error("parameters became non-finite at step {step}")]
    NonFinite { step: usize },
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.into()));
        let finite = [self.rho, self.eps_low, self.eps_high, self.beta, self.lr, self.temperature];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("all numeric fields must be finite");
        }
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.eps_low > 0.0 && self.eps_high > 0.0) {
            return bad("eps_low and eps_high must be positive");
        }
        if self.eps_low >= 1.0 {
            return bad("eps_low must be below 1");
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1)");
        }
        if self.beta < 0.0 || self.lr < 0.0 {
            return bad("beta and lr must be non-negative");
        }
        if self.temperature <= 0.0 {
            return bad("temperature must be positive");
        }
        if self.max_len == 0 || self.batch_size == 0 {
            return bad("max_len and batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn gate_config(&self) -> GateConfig {
        match self.variant {
            Variant::Earl => GateConfig::mask(self.rho),
            Variant::Grpo => GateConfig::none(),
            Variant::Dapo | Variant::PpoBaseline => GateConfig {
                mode: self.gate,
                rho: self.rho,
            },
        }
    }

    pub fn clip_range(&self) -> (f64, f64) {
        match self.variant {
            Variant::Grpo | Variant::PpoBaseline => (self.eps_low, self.eps_low),
            Variant::Dapo | Variant::Earl => (self.eps_low, self.eps_high),
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        let (eps_low, eps_high) = self.clip_range();
        ObjectiveConfig {
            gate: self.gate_config(),
            eps_low,
            eps_high,
            beta: self.beta,
            gated_kl: self.gated_kl,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_reductions() {
        let mut c = RlConfig {
            variant: Variant::Grpo,
            ..RlConfig::default()
        };
        assert_eq!(c.gate_config().mode, GateMode::None);
        let (lo, hi) = c.clip_range();
        assert_eq!(lo, hi);
        c.variant = Variant::Earl;
        assert_eq!(c.gate_config(), GateConfig::mask(0.8));
        assert_eq!(c.clip_range(), (0.2, 0.28));
        c.variant = Variant::PpoBaseline;
        assert!(!c.variant.dynamic_sampling());
    }

    #[test]
    fn config_validation() {
        RlConfig::default().validate().unwrap();
        for bad in [
            RlConfig { group_size: 1, ..RlConfig::default() },
            RlConfig { eps_low: 0.0, ..RlConfig::default() },
            RlConfig { rho: 1.0, ..RlConfig::default() },
            RlConfig { lr: f64::NAN, ..RlConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
