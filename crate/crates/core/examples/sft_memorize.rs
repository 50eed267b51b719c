//! Supervised fine-tuning on a small slice of the training split: the mean
//! per-token NLL falls and greedy decoding reproduces the references.
//!
//! ```bash
//! cargo run --release --example sft_memorize -- [tasks] [epochs]
//! ```

use earl::minirtl::{detokenize, Vocab};
use earl::policy::{greedy_decode, init_params, mean_nll, train_sft, FeatureSpec, SftExample, SftSchedule};
use earl::reward::{score_rollout, RewardSchedule};
use earl::taskgen::{build_corpus, CorpusConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let vocab = Vocab::minirtl();
    let corpus = build_corpus(&CorpusConfig::default(), 1).expect("corpus");
    let tasks: Vec<_> = corpus.train().take(n).collect();
    let examples: Vec<SftExample> = tasks.iter().map(|t| SftExample::from_task(t, vocab)).collect();

    let mut params = init_params(vocab, FeatureSpec::default(), 1).expect("init");
    println!("nll before: {:.4} (ln V = {:.4})", mean_nll(&params, &examples).unwrap(), (vocab.len() as f64).ln());
    let schedule = SftSchedule {
        peak_lr: 5.0,
        warmup_steps: 15,
        epochs,
        batch_size: 8,
    };
    let log = train_sft(&mut params, &examples, &schedule, 1).expect("sft");
    let every = (log.steps.len() / 8).max(1);
    for s in log.steps.iter().step_by(every) {
        println!("  step {:5}  lr {:.3}  loss {:.4}", s.step, s.lr, s.loss);
    }
    println!("nll after:  {:.4}", mean_nll(&params, &examples).unwrap());

    let mut passed = 0;
    for t in &tasks {
        let ro = greedy_decode(&params, &t.prompt_tokens, 256, vocab.eos()).expect("decode");
        passed += usize::from(score_rollout(vocab, &ro, t, &RewardSchedule::default()).functional_pass);
    }
    println!("greedy decodes passing their own task: {passed}/{}", tasks.len());
    let t = tasks[0];
    let ro = greedy_decode(&params, &t.prompt_tokens, 256, vocab.eos()).expect("decode");
    println!("\nprompt: {}\ngreedy: {}", detokenize(vocab, &t.prompt_tokens), detokenize(vocab, ro.body(vocab.eos())));
}
