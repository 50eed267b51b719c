//! Entropy-aware reinforcement learning with verifiable rewards for RTL
//! generation, at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! - [`minirtl`]: tokenizer, parser, simulator and equivalence checker for
//!   a small Verilog subset. It is the ground truth for every reward.
//! - [`taskgen`]: synthetic specification/code/testbench triples.
//! - [`policy`]: a linear-softmax autoregressive policy with exact
//!   log-probabilities, entropies and gradients.
//! - [`reward`]: the syntax, interface, functional reward cascade.
//! - [`rlcore`]: entropy gating, group advantages, the clipped surrogate
//!   family and the training loop.
//! - [`analysis`]: entropy statistics, pass@k and the quantile ablation.
//! - [`cli`]: configuration, checkpoints and the pipeline driver.

pub mod analysis;
pub mod cli;
pub mod minirtl;
pub mod policy;
pub mod reward;
pub mod rlcore;
pub mod seed;
pub mod taskgen;
