//! The unbiased pass@k estimator for n = 5 next to a sampling estimate of
//! the same probability.
//!
//! ```bash
//! cargo run --example pass_at_k
//! ```

use earl::analysis::pass_at_k;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let n = 5;
    let draws = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!(" c   k   pass@k   sampled");
    for c in 0..=n {
        for k in [1, 2, 5] {
            let exact = pass_at_k(n, c, k).unwrap();
            let hits = (0..draws).filter(|_| sample(&mut rng, n, k).iter().any(|i| i < c)).count();
            println!("{c:2}  {k:2}  {exact:7.4}  {:8.4}", hits as f64 / draws as f64);
        }
    }
    println!("\nn = 20, c = 3: {:?}", [1, 5, 10].map(|k| pass_at_k(20, 3, k).unwrap()));
}
