//! Linear-softmax autoregressive policy over the MiniRTL vocabulary.
//!
//! The logits for the next token are `b + Σ_f W[f]` over the active binary
//! features `f` of the current context:
//!
//! - one token feature per context slot: the last `k` tokens of
//!   prompt-then-response, padded with PAD;
//! - one coarse response-position bucket (`⌊log2⌋`-spaced, clamped);
//! - optionally, one feature per distinct prompt token (a bag of the
//!   prompt), which lets names and ports be copied;
//! - optionally, one of `descriptor_buckets` features chosen by a hash of
//!   the whole behaviour descriptor (the prompt from the first descriptor
//!   tag on), so identical specifications share a feature;
//! - one (slot, token) feature for each of `prompt_slots` prompt positions
//!   counted from the first descriptor tag (`<tt>`, `<reg>`, `<cnt>`,
//!   `<fsm>`), or from the start of the prompt when there is none.
//!
//! With no bag, no descriptor buckets and `prompt_slots = 0` the feature
//! dimension is `k·V + P`.
//!
//! Probabilities are `softmax(z / T)` with the maximum logit subtracted
//! first. All gradients are exact.

mod sft;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::minirtl::{TokenId, Vocab};
use crate::seed::mix_all;

pub use sft::{learning_rate, mean_nll, train_sft, SftError, SftExample, SftLog, SftSchedule, SftStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub context: usize,
    pub position_buckets: usize,
    pub prompt_bag: bool,
    pub descriptor_buckets: usize,
    pub prompt_slots: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            context: 4,
            position_buckets: 8,
            prompt_bag: true,
            descriptor_buckets: 512,
            prompt_slots: 24,
        }
    }
}

impl FeatureSpec {
    pub fn dim(&self, vocab_size: usize) -> usize {
        let bag = if self.prompt_bag { vocab_size } else { 0 };
        self.context * vocab_size + self.position_buckets + bag + self.descriptor_buckets + self.prompt_slots * vocab_size
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("context window k must be at least 1")]
    ZeroContext,
    #[error("at least one position bucket is required")]
    ZeroBuckets,
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("maximum response length must be at least 1")]
    ZeroLength,
}

/// Parameters of the policy. `w` is stored feature-major: the logit
/// contribution of feature `f` to token `j` is `w[f * V + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub spec: FeatureSpec,
    pub vocab_size: usize,
    pub pad: TokenId,
    pub vocab_hash: String,
    /// Descriptor tags that anchor the prompt slots.
    pub anchors: Vec<TokenId>,
    pub version: u64,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// `W` and `b` drawn i.i.d. uniform in `[-0.01, 0.01]`.
pub fn init_params(vocab: &Vocab, spec: FeatureSpec, seed: u64) -> Result<PolicyParams, PolicyError> {
    use rand::SeedableRng;
    if spec.context == 0 {
        return Err(PolicyError::ZeroContext);
    }
    if spec.position_buckets == 0 {
        return Err(PolicyError::ZeroBuckets);
    }
    let v = vocab.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = (0..spec.dim(v) * v).map(|_| rng.gen_range(-0.01..=0.01)).collect();
    let b = (0..v).map(|_| rng.gen_range(-0.01..=0.01)).collect();
    Ok(PolicyParams {
        spec,
        vocab_size: v,
        pad: vocab.pad(),
        vocab_hash: vocab.hash(),
        anchors: descriptor_anchors(vocab),
        version: 0,
        w,
        b,
    })
}

pub fn descriptor_anchors(vocab: &Vocab) -> Vec<TokenId> {
    use crate::minirtl::vocab::{CNT_TAG, FSM_TAG, REG_TAG, TT};
    [TT, REG_TAG, CNT_TAG, FSM_TAG].iter().filter_map(|t| vocab.id(t)).collect()
}

fn bucket(position: usize, buckets: usize) -> usize {
    let bits = (usize::BITS - position.leading_zeros()) as usize;
    bits.min(buckets - 1)
}

impl PolicyParams {
    pub fn num_features(&self) -> usize {
        self.spec.dim(self.vocab_size)
    }

    /// Active feature indices for predicting response token `prefix.len()`.
    pub fn features(&self, prompt: &[TokenId], prefix: &[TokenId]) -> Vec<usize> {
        let v = self.vocab_size;
        let k = self.spec.context;
        let mut out = Vec::with_capacity(k + 1 + prompt.len() + self.spec.prompt_slots);
        let total = prompt.len() + prefix.len();
        for i in 0..k {
            let tok = if i < total {
                let pos = total - 1 - i;
                if pos >= prompt.len() {
                    prefix[pos - prompt.len()]
                } else {
                    prompt[pos]
                }
            } else {
                self.pad
            };
            out.push(i * v + tok as usize);
        }
        out.push(k * v + bucket(prefix.len(), self.spec.position_buckets));
        let mut base = k * v + self.spec.position_buckets;
        if self.spec.prompt_bag {
            let mut bag: Vec<usize> = prompt.iter().map(|&t| base + t as usize).collect();
            bag.sort_unstable();
            bag.dedup();
            out.extend(bag);
            base += v;
        }
        let anchor = prompt.iter().position(|t| self.anchors.contains(t));
        if self.spec.descriptor_buckets > 0 {
            if let Some(a) = anchor {
                let ids: Vec<u64> = prompt[a..].iter().map(|&t| u64::from(t)).collect();
                out.push(base + (mix_all(0, &ids) % self.spec.descriptor_buckets as u64) as usize);
            }
            base += self.spec.descriptor_buckets;
        }
        let anchor = anchor.unwrap_or(0);
        for (j, &tok) in prompt[anchor..].iter().take(self.spec.prompt_slots).enumerate() {
            out.push(base + j * v + tok as usize);
        }
        out
    }

    pub fn logits(&self, features: &[usize]) -> Vec<f64> {
        let v = self.vocab_size;
        let mut z = self.b.clone();
        for &f in features {
            for (zj, wj) in z.iter_mut().zip(&self.w[f * v..(f + 1) * v]) {
                *zj += wj;
            }
        }
        z
    }

    /// Features and tempered next-token distribution in one pass.
    pub fn step(
        &self,
        prompt: &[TokenId],
        prefix: &[TokenId],
        temperature: f64,
    ) -> Result<(Vec<usize>, Vec<f64>), PolicyError> {
        let feats = self.features(prompt, prefix);
        let p = softmax(&self.logits(&feats), temperature)?;
        Ok((feats, p))
    }

    /// `self += scale * grad`, touching only rows the gradient visited.
    pub fn apply(&mut self, grad: &Gradient, scale: f64) {
        let v = self.vocab_size;
        for &f in &grad.rows {
            for j in 0..v {
                self.w[f * v + j] += scale * grad.w[f * v + j];
            }
        }
        for (b, g) in self.b.iter_mut().zip(&grad.b) {
            *b += scale * g;
        }
        self.version += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).all(|x| x.is_finite())
    }
}

/// `softmax(z / T)` with max subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>, PolicyError> {
    if !(temperature > 0.0) {
        return Err(PolicyError::Temperature(temperature));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| ((z - m) / temperature).exp()).collect();
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    Ok(p)
}

pub fn next_token_distribution(
    params: &PolicyParams,
    prompt: &[TokenId],
    prefix: &[TokenId],
    temperature: f64,
) -> Result<Vec<f64>, PolicyError> {
    params.step(prompt, prefix, temperature).map(|(_, p)| p)
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn token_entropy(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    h.clamp(0.0, (p.len() as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub prompt_tokens: Vec<TokenId>,
    pub response_tokens: Vec<TokenId>,
    /// Log-probability of each emitted token under the sampling policy.
    pub logprobs: Vec<f64>,
    /// Entropy (nats) of the distribution each token was drawn from.
    pub entropies: Vec<f64>,
    pub temperature: f64,
    /// No EOS within the length budget.
    pub truncated: bool,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.response_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response_tokens.is_empty()
    }

    /// Response tokens with a trailing EOS removed.
    pub fn body(&self, eos: TokenId) -> &[TokenId] {
        match self.response_tokens.split_last() {
            Some((&last, rest)) if last == eos && !self.truncated => rest,
            _ => &self.response_tokens,
        }
    }
}

fn draw<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

fn decode<F>(
    params: &PolicyParams,
    prompt: &[TokenId],
    temperature: f64,
    max_len: usize,
    eos: TokenId,
    mut choose: F,
) -> Result<Rollout, PolicyError>
where
    F: FnMut(&[f64]) -> usize,
{
    if max_len == 0 {
        return Err(PolicyError::ZeroLength);
    }
    let mut out = Rollout {
        prompt_tokens: prompt.to_vec(),
        response_tokens: Vec::new(),
        logprobs: Vec::new(),
        entropies: Vec::new(),
        temperature,
        truncated: true,
    };
    while out.response_tokens.len() < max_len {
        let (_, p) = params.step(prompt, &out.response_tokens, temperature)?;
        let tok = choose(&p);
        out.logprobs.push(p[tok].ln());
        out.entropies.push(token_entropy(&p));
        out.response_tokens.push(tok as TokenId);
        if tok as TokenId == eos {
            out.truncated = false;
            break;
        }
    }
    Ok(out)
}

/// Samples a response token by token until EOS or `max_len` tokens.
pub fn sample_rollout<R: Rng>(
    params: &PolicyParams,
    prompt: &[TokenId],
    temperature: f64,
    max_len: usize,
    eos: TokenId,
    rng: &mut R,
) -> Result<Rollout, PolicyError> {
    decode(params, prompt, temperature, max_len, eos, |p| draw(p, rng))
}

/// Zero-temperature decoding: always the most probable token. Recorded
/// log-probabilities and entropies are those of the `T = 1` distribution.
pub fn greedy_decode(
    params: &PolicyParams,
    prompt: &[TokenId],
    max_len: usize,
    eos: TokenId,
) -> Result<Rollout, PolicyError> {
    decode(params, prompt, 1.0, max_len, eos, argmax)
}

/// Log-probability of each response token under `params`, given the same
/// contexts that were used when sampling.
pub fn sequence_logprobs(
    params: &PolicyParams,
    prompt: &[TokenId],
    response: &[TokenId],
    temperature: f64,
) -> Result<Vec<f64>, PolicyError> {
    (0..response.len())
        .map(|t| {
            let (_, p) = params.step(prompt, &response[..t], temperature)?;
            Ok(p[response[t] as usize].ln())
        })
        .collect()
}

/// Gradient buffer shaped like the parameters. Rows are recorded as they
/// are first touched so updates and resets stay proportional to the number
/// of active features.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: Vec<usize>,
    touched: Vec<bool>,
    vocab_size: usize,
}

impl Gradient {
    pub fn zeros(params: &PolicyParams) -> Self {
        Self {
            w: vec![0.0; params.w.len()],
            b: vec![0.0; params.b.len()],
            rows: Vec::new(),
            touched: vec![false; params.num_features()],
            vocab_size: params.vocab_size,
        }
    }

    pub fn clear(&mut self) {
        let v = self.vocab_size;
        for &f in &self.rows {
            self.w[f * v..(f + 1) * v].fill(0.0);
            self.touched[f] = false;
        }
        self.rows.clear();
        self.b.fill(0.0);
    }

    /// Adds `dz` (a gradient with respect to the logits) through the
    /// active features.
    pub fn add_logit_grad(&mut self, features: &[usize], dz: &[f64]) {
        let v = self.vocab_size;
        for &f in features {
            if !self.touched[f] {
                self.touched[f] = true;
                self.rows.push(f);
            }
            for (g, d) in self.w[f * v..(f + 1) * v].iter_mut().zip(dz) {
                *g += d;
            }
        }
        for (g, d) in self.b.iter_mut().zip(dz) {
            *g += d;
        }
    }

    /// Euclidean norm over touched rows and the bias.
    pub fn norm(&self) -> f64 {
        let v = self.vocab_size;
        let w: f64 = self
            .rows
            .iter()
            .flat_map(|&f| &self.w[f * v..(f + 1) * v])
            .map(|x| x * x)
            .sum();
        (w + self.b.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }
}

/// `grad += coeff · ∇θ log π(token | context)` given the context's features
/// and tempered distribution `p`.
pub fn logprob_grad_at(features: &[usize], p: &[f64], token: TokenId, temperature: f64, coeff: f64, grad: &mut Gradient) {
    if coeff == 0.0 {
        return;
    }
    let mut dz: Vec<f64> = p.iter().map(|&x| -coeff * x / temperature).collect();
    dz[token as usize] += coeff / temperature;
    grad.add_logit_grad(features, &dz);
}

/// `grad += coeff · ∇θ KL(p ‖ q)` where `p` is the policy's tempered
/// distribution at the context and `q` is fixed.
pub fn kl_grad_at(features: &[usize], p: &[f64], q: &[f64], temperature: f64, coeff: f64, grad: &mut Gradient) {
    if coeff == 0.0 {
        return;
    }
    let kl = kl_divergence(p, q);
    let dz: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pj, &qj)| {
            let log_ratio = if pj > 0.0 { (pj / qj).ln() } else { 0.0 };
            coeff * pj * (log_ratio - kl) / temperature
        })
        .collect();
    grad.add_logit_grad(features, &dz);
}

#[allow(clippy::too_many_arguments)]
pub fn accumulate_logprob_grad(
    params: &PolicyParams,
    prompt: &[TokenId],
    prefix: &[TokenId],
    token: TokenId,
    temperature: f64,
    coeff: f64,
    grad: &mut Gradient,
) -> Result<(), PolicyError> {
    let (f, p) = params.step(prompt, prefix, temperature)?;
    logprob_grad_at(&f, &p, token, temperature, coeff, grad);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn accumulate_kl_grad(
    params: &PolicyParams,
    prompt: &[TokenId],
    prefix: &[TokenId],
    reference: &[f64],
    temperature: f64,
    coeff: f64,
    grad: &mut Gradient,
) -> Result<(), PolicyError> {
    let (f, p) = params.step(prompt, prefix, temperature)?;
    kl_grad_at(&f, &p, reference, temperature, coeff, grad);
    Ok(())
}

/// Exact `Σ p ln(p / q)`; terms with `p = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pj, _)| pj > 0.0)
        .map(|(&pj, &qj)| pj * (pj / qj).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_vocab(n: usize) -> Vocab {
        Vocab::from_tokens((0..n).map(|i| format!("t{i}"))).unwrap()
    }

    fn spec(k: usize, s: usize) -> FeatureSpec {
        FeatureSpec {
            context: k,
            position_buckets: 8,
            prompt_bag: s % 2 == 1,
            descriptor_buckets: 0,
            prompt_slots: s,
        }
    }

    fn randomize(p: &mut PolicyParams, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in p.w.iter_mut().chain(p.b.iter_mut()) {
            *x = rng.gen_range(-scale..scale);
        }
    }

    #[test]
    fn init_is_deterministic_and_near_uniform() {
        let v = small_vocab(100);
        let a = init_params(&v, spec(4, 0), 0).unwrap();
        let b = init_params(&v, spec(4, 0), 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_features(), 4 * 100 + 8);
        let p = next_token_distribution(&a, &[1, 2, 3], &[4], 1.0).unwrap();
        for x in &p {
            assert!((x - 0.01).abs() < 0.01);
            assert!((x * 100.0 - 1.0).abs() < 0.15);
        }
        assert!(((100f64).ln() - token_entropy(&p)).abs() < 1e-3);
        assert_eq!(
            init_params(&v, spec(0, 0), 0).unwrap_err(),
            PolicyError::ZeroContext
        );
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[3.0; 7], 0.3).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 7.0).abs() < 1e-15));
        let p = softmax(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[5.0, -3.0, 0.5, 12.0], 1e6).unwrap();
        let (lo, hi) = p.iter().fold((1.0f64, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(hi - lo < 1e-4);
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(token_entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((token_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        let h = token_entropy(&[2.0 / 3.0, 1.0 / 3.0]);
        assert!((h - 0.636514).abs() < 1e-6);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let v = small_vocab(12);
        let mut p = init_params(&v, spec(2, 3), 5).unwrap();
        randomize(&mut p, 9, 1.0);
        let r1 = sample_rollout(&p, &[1, 2], 1.0, 20, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let r2 = sample_rollout(&p, &[1, 2], 1.0, 20, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.logprobs.len(), r1.len());
        assert!(r1.entropies.iter().all(|&h| (0.0..=(12f64).ln()).contains(&h)));
        assert!(r1.logprobs.iter().all(|&l| l <= 0.0));
        let one = sample_rollout(&p, &[1], 1.0, 1, 0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(one.len(), 1);
        let again = sequence_logprobs(&p, &r1.prompt_tokens, &r1.response_tokens, 1.0).unwrap();
        assert_eq!(again, r1.logprobs);
    }

    #[test]
    fn forced_sequence_has_zero_entropy() {
        let v = small_vocab(5);
        let mut p = init_params(&v, spec(1, 0), 0).unwrap();
        p.w.fill(0.0);
        p.b.fill(0.0);
        // Token i is always followed by i + 1; 4 plays EOS.
        for i in 0..4 {
            p.w[i * 5 + i + 1] = 1e4;
        }
        let r = sample_rollout(&p, &[0], 1.0, 10, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.response_tokens, vec![1, 2, 3, 4]);
        assert!(r.entropies.iter().all(|&h| h == 0.0));
        assert!(!r.truncated);
    }

    #[test]
    fn empirical_frequencies_match() {
        let v = small_vocab(2);
        let mut p = init_params(&v, spec(1, 0), 0).unwrap();
        p.w.fill(0.0);
        p.b = vec![0.0, (0.3f64 / 0.7).ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| sample_rollout(&p, &[0], 1.0, 1, 9, &mut rng).unwrap().response_tokens[0] == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.7).abs() < 0.02);
    }

    #[test]
    fn uniform_policy_logprobs() {
        let v = small_vocab(9);
        let mut p = init_params(&v, spec(2, 1), 0).unwrap();
        p.w.fill(0.0);
        p.b.fill(0.0);
        let lp = sequence_logprobs(&p, &[1], &[3, 4, 5], 1.0).unwrap();
        assert!(lp.iter().all(|&l| (l + 9f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn zero_coeff_and_saturated_token_leave_gradient_unchanged() {
        let v = small_vocab(6);
        let mut p = init_params(&v, spec(2, 2), 0).unwrap();
        let mut g = Gradient::zeros(&p);
        accumulate_logprob_grad(&p, &[1, 2], &[3], 4, 1.0, 0.0, &mut g).unwrap();
        assert!(g.w.iter().all(|&x| x == 0.0) && g.rows.is_empty());
        p.b[4] = 1e4;
        accumulate_logprob_grad(&p, &[1, 2], &[3], 4, 1.0, 1.0, &mut g).unwrap();
        assert!(g.w.iter().chain(&g.b).all(|&x| x.abs() < 1e-300));
        let q = next_token_distribution(&p, &[1, 2], &[3], 1.0).unwrap();
        let mut g = Gradient::zeros(&p);
        accumulate_kl_grad(&p, &[1, 2], &[3], &q, 1.0, 1.0, &mut g).unwrap();
        assert!(g.w.iter().chain(&g.b).all(|&x| x.abs() < 1e-15));
    }

    fn fd_check(kl: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vsize = rng.gen_range(3..30);
        let v = small_vocab(vsize);
        let k = rng.gen_range(1..4);
        let t = rng.gen_range(0.5..2.0);
        let mut p = init_params(&v, spec(k, 2), seed).unwrap();
        randomize(&mut p, seed + 1, 0.5);
        let prompt: Vec<TokenId> = (0..3).map(|_| rng.gen_range(0..vsize as u32)).collect();
        let prefix: Vec<TokenId> = (0..rng.gen_range(0..5)).map(|_| rng.gen_range(0..vsize as u32)).collect();
        let token = rng.gen_range(0..vsize as u32);
        let mut qref = p.clone();
        randomize(&mut qref, seed + 2, 0.5);
        let q = next_token_distribution(&qref, &prompt, &prefix, t).unwrap();
        let f = |pp: &PolicyParams| {
            let d = next_token_distribution(pp, &prompt, &prefix, t).unwrap();
            if kl {
                kl_divergence(&d, &q)
            } else {
                d[token as usize].ln()
            }
        };
        let mut g = Gradient::zeros(&p);
        if kl {
            accumulate_kl_grad(&p, &prompt, &prefix, &q, t, 1.0, &mut g).unwrap();
        } else {
            accumulate_logprob_grad(&p, &prompt, &prefix, token, t, 1.0, &mut g).unwrap();
        }
        let feats = p.features(&prompt, &prefix);
        let h = 1e-5;
        for _ in 0..100 {
            let (is_bias, idx) = if rng.gen_bool(0.2) {
                (true, rng.gen_range(0..vsize))
            } else {
                let f = feats[rng.gen_range(0..feats.len())];
                (false, f * vsize + rng.gen_range(0..vsize))
            };
            let mut plus = p.clone();
            let mut minus = p.clone();
            if is_bias {
                plus.b[idx] += h;
                minus.b[idx] -= h;
            } else {
                plus.w[idx] += h;
                minus.w[idx] -= h;
            }
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let an = if is_bias { g.b[idx] } else { g.w[idx] };
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel <= 1e-4, "kl={kl} an={an} fd={fd}");
        }
    }

    #[test]
    fn logprob_gradient_matches_finite_differences() {
        for s in 0..20 {
            fd_check(false, s);
        }
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        for s in 0..20 {
            fd_check(true, 100 + s);
        }
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((kl_divergence(&[1.0, 0.0], &[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn features_layout() {
        let v = small_vocab(10);
        let p = init_params(&v, spec(3, 2), 0).unwrap();
        let f = p.features(&[7, 8, 9], &[1]);
        assert_eq!(f, vec![1, 10 + 9, 20 + 8, 30 + 1, 38 + 7, 48 + 8]);
        let f = p.features(&[7], &[]);
        assert_eq!(&f[..3], &[7, 10 + p.pad as usize, 20 + p.pad as usize]);
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_temperature_monotonicity(
            logits in prop::collection::vec(-20.0f64..20.0, 2..40),
            t1 in 0.05f64..5.0,
            dt in 0.0f64..5.0,
        ) {
            let lnv = (logits.len() as f64).ln();
            let p1 = softmax(&logits, t1).unwrap();
            let p2 = softmax(&logits, t1 + dt).unwrap();
            prop_assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p1.iter().all(|&x| x >= 0.0));
            let (h1, h2) = (token_entropy(&p1), token_entropy(&p2));
            prop_assert!((0.0..=lnv).contains(&h1));
            prop_assert!(h1 <= h2 + 1e-12);
        }
    }
}
