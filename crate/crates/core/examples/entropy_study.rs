//! Token-entropy study of a supervised checkpoint over heldout prompts:
//! histogram, per-class statistics, extreme tokens and heatmaps. SVG and
//! CSV files land in the output directory.
//!
//! ```bash
//! cargo run --release --example entropy_study -- [out_dir] [sft_epochs]
//! ```

use std::fs;
use std::path::PathBuf;

use earl::analysis::{heatmap_csv, heatmap_svg};
use earl::cli::config::RunConfig;
use earl::cli::pipeline::{gen_data, run_analysis, run_sft};
use earl::minirtl::Vocab;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "entropy_study".into()));
    let mut cfg = RunConfig::default();
    if let Some(e) = args.next().and_then(|s| s.parse().ok()) {
        cfg.sft.epochs = e;
    }
    let vocab = Vocab::minirtl();
    let corpus = gen_data(&cfg).expect("corpus");
    let (sft, _) = run_sft(&cfg, &corpus, vocab).expect("sft");
    let study = run_analysis(&cfg, &corpus, &sft, vocab).expect("analysis");
    let r = &study.report;
    let s = &r.summary;
    println!(
        "{} tokens: median {:.4}, mean {:.4}, right skew {}, {:.1}% below {}",
        s.tokens,
        s.median,
        s.mean,
        s.right_skewed,
        100.0 * s.fraction_below,
        s.threshold
    );
    println!("\n{:<22} {:>7} {:>8} {:>8}", "class", "count", "mean", "median");
    for c in &r.classes {
        let f = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.4}"));
        println!("{:<22} {:>7} {:>8} {:>8}", c.class.name(), c.count, f(c.mean), f(c.median));
    }
    println!("\nhighest-entropy tokens:");
    for t in r.top.highest.iter().take(8) {
        println!("  {:<10} {:.4} x{}", vocab.token(t.token).unwrap_or("?"), t.mean_entropy, t.frequency);
    }
    println!("lowest-entropy tokens:");
    for t in r.top.lowest.iter().take(8) {
        println!("  {:<10} {:.4} x{}", vocab.token(t.token).unwrap_or("?"), t.mean_entropy, t.frequency);
    }

    fs::create_dir_all(&out).expect("output directory");
    fs::write(out.join("entropy_hist.svg"), r.histogram_svg()).unwrap();
    fs::write(out.join("token_classes.csv"), r.classes_csv()).unwrap();
    let max = (vocab.len() as f64).ln();
    for (id, records) in &study.heatmaps {
        fs::write(out.join(format!("heatmap_{id}.csv")), heatmap_csv(records)).unwrap();
        fs::write(out.join(format!("heatmap_{id}.svg")), heatmap_svg(records, max)).unwrap();
    }
    println!("\nwrote histogram, class table and {} heatmaps to {}", study.heatmaps.len(), out.display());
}
