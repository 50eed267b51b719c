//! Supervised initialization followed by group policy optimization on the
//! default corpus, reporting functional pass@1 on twenty heldout easy/medium
//! combinational tasks before and after RL.
//!
//! ```bash
//! cargo run --release --example train_earl -- [seed] [variant] [rl_steps]
//! ```
//!
//! `variant` is one of `earl` (default), `dapo`, `grpo`, `ppo-baseline`.

use std::time::Instant;

use earl::analysis::eval_suite;
use earl::cli::config::RunConfig;
use earl::cli::pipeline::{gen_data, primary_suite, run_rl, run_sft};
use earl::minirtl::Vocab;
use earl::rlcore::Variant;

fn main() {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(seed) = args.next().and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    if let Some(v) = args.next() {
        cfg.rl.variant = serde_json::from_value(serde_json::Value::String(v)).expect("unknown variant");
    }
    if let Some(steps) = args.next().and_then(|s| s.parse().ok()) {
        cfg.rl.steps = steps;
    }
    let vocab = Vocab::minirtl();
    let corpus = gen_data(&cfg).expect("corpus");
    let suite = primary_suite(&corpus);

    let t0 = Instant::now();
    let (sft, log) = run_sft(&cfg, &corpus, vocab).expect("sft");
    println!(
        "sft: {} steps, final loss {:.3} ({:.1}s)",
        log.steps.len(),
        log.steps.last().map_or(f64::NAN, |s| s.loss),
        t0.elapsed().as_secs_f64()
    );
    let before = eval_suite(&sft, &suite, &cfg.eval, &cfg.reward, vocab, cfg.seed).expect("eval");
    println!("before rl: pass@1 {:.3}  pass@5 {:.3}", before.pass(1), before.pass(5));

    let t1 = Instant::now();
    let (rl, log) = run_rl(&cfg, &corpus, &sft, vocab).expect("rl");
    for m in log.metrics.iter().filter(|m| m.step % 50 == 0 || m.step + 1 == cfg.rl.steps) {
        println!(
            "  step {:4}  R {:.3}  pass {:.3}  groups {:2}  gated {:.3}  clip {:.3}  kl {:.4}  H {:.3}",
            m.step, m.mean_reward, m.pass_rate, m.retained_groups, m.gated_fraction, m.clip_rate, m.mean_kl, m.mean_entropy
        );
    }
    let after = eval_suite(&rl, &suite, &cfg.eval, &cfg.reward, vocab, cfg.seed).expect("eval");
    let name = match cfg.rl.variant {
        Variant::Earl => format!("earl(rho={})", cfg.rl.rho),
        v => v.name().to_string(),
    };
    println!(
        "after {name}: pass@1 {:.3}  pass@5 {:.3}  ({:.1}s, {} skipped steps)",
        after.pass(1),
        after.pass(5),
        t1.elapsed().as_secs_f64(),
        log.skipped_steps.len()
    );
    println!("delta pass@1: {:+.1} points", 100.0 * (after.pass(1) - before.pass(1)));
}
