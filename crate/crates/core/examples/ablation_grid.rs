//! EARL over the ρ grid from one supervised checkpoint, printed as the
//! ablation CSV. Short RL runs by default; pass the step count to match
//! the full configuration.
//!
//! ```bash
//! cargo run --release --example ablation_grid -- [rl_steps] [seed...]
//! ```

use earl::analysis::ablation_csv;
use earl::cli::config::RunConfig;
use earl::cli::pipeline::{gen_data, run_ablation, run_sft};
use earl::minirtl::Vocab;

fn main() {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.ablation.steps = Some(args.next().and_then(|s| s.parse().ok()).unwrap_or(100));
    cfg.ablation.seeds = args.filter_map(|s| s.parse().ok()).collect();
    let vocab = Vocab::minirtl();
    let corpus = gen_data(&cfg).expect("corpus");
    let (sft, _) = run_sft(&cfg, &corpus, vocab).expect("sft");
    let rows = run_ablation(&cfg, &corpus, &sft, vocab);
    print!("{}", ablation_csv(&rows));
    for r in rows.iter().filter(|r| r.rho > 0.0) {
        println!("rho {:.1}: gated {:.3} vs 1 - rho = {:.1}", r.rho, r.gated_fraction, 1.0 - r.rho);
    }
}
