//! Builds the default corpus and prints one sample task per cell along with
//! split sizes and token-length statistics.
//!
//! ```bash
//! cargo run --example generate_corpus -- 7
//! ```

use std::collections::BTreeMap;

use earl::minirtl::{detokenize, Vocab};
use earl::taskgen::{build_corpus, CorpusConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let vocab = Vocab::minirtl();
    let corpus = build_corpus(&CorpusConfig::default(), seed).expect("default corpus builds");
    println!(
        "{} tasks: {} train, {} heldout",
        corpus.tasks.len(),
        corpus.train().count(),
        corpus.heldout().count()
    );

    let mut first = BTreeMap::new();
    let mut lengths: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for t in &corpus.tasks {
        let cell = format!("{}/{}", t.kind, t.difficulty);
        lengths
            .entry(cell.clone())
            .or_default()
            .push(t.target_tokens(vocab).len());
        first.entry(cell).or_insert(t);
    }
    for (cell, t) in &first {
        let lens = &lengths[cell];
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        println!("\n[{cell}] {} tasks, mean target length {mean:.1}", lens.len());
        println!("  prompt: {}", detokenize(vocab, &t.prompt_tokens));
        println!("  ref:    {}", t.reference_text);
        println!("  vectors: {} cycles", t.vectors.cycles.len());
    }
}
