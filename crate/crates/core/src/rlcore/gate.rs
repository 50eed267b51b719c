use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    None,
    Mask,
    ArcherWeight,
}

/// Per-token gate applied to the surrogate. `rho` is only read in mask
/// mode; ties at the threshold are kept (inclusive `≥`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub mode: GateMode,
    pub rho: f64,
}

impl GateConfig {
    pub fn none() -> Self {
        Self {
            mode: GateMode::None,
            rho: 0.0,
        }
    }

    pub fn mask(rho: f64) -> Self {
        Self {
            mode: GateMode::Mask,
            rho,
        }
    }

    pub fn archer() -> Self {
        Self {
            mode: GateMode::ArcherWeight,
            rho: 0.0,
        }
    }

    /// Gate value of every token of a response with the given entropies.
    pub fn gates(&self, entropies: &[f64]) -> Vec<f64> {
        match self.mode {
            GateMode::None => vec![1.0; entropies.len()],
            GateMode::Mask => {
                let tau = entropy_threshold(entropies, self.rho);
                entropy_mask(entropies, tau)
                    .into_iter()
                    .map(|m| if m { 1.0 } else { 0.0 })
                    .collect()
            }
            GateMode::ArcherWeight => archer_weights(entropies),
        }
    }
}

/// Nearest-rank quantile: the `⌈ρT⌉`-th smallest entropy, or `-∞` when
/// `⌈ρT⌉ = 0`.
pub fn entropy_threshold(entropies: &[f64], rho: f64) -> f64 {
    let rank = nearest_rank(rho, entropies.len());
    if rank == 0 || entropies.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut sorted = entropies.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[rank.min(sorted.len()) - 1]
}

/// `⌈ρT⌉`, tolerant of representation error in `ρ` (`0.7 · 10` is 7).
pub fn nearest_rank(rho: f64, t: usize) -> usize {
    let x = rho * t as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub fn entropy_mask(entropies: &[f64], tau: f64) -> Vec<bool> {
    entropies.iter().map(|&h| h >= tau).collect()
}

/// `H_t / max H`, or all ones when every entropy is zero.
pub fn archer_weights(entropies: &[f64]) -> Vec<f64> {
    let max = entropies.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![1.0; entropies.len()];
    }
    entropies.iter().map(|&h| h / max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

    #[test]
    fn threshold_and_mask_examples() {
        let tau = entropy_threshold(&H, 0.8);
        assert_eq!(tau, 0.3);
        assert_eq!(entropy_mask(&H, tau), [false, false, false, true, true]);
        assert_eq!(entropy_threshold(&H, 0.0), f64::NEG_INFINITY);
        assert!(entropy_mask(&H, f64::NEG_INFINITY).iter().all(|&m| m));
        assert_eq!(nearest_rank(0.7, 10), 7);
        assert_eq!(nearest_rank(0.8, 22), 18);
        let flat = [0.7; 6];
        assert_eq!(entropy_threshold(&flat, 0.5), 0.7);
        assert!(GateConfig::mask(0.9).gates(&flat).iter().all(|&g| g == 1.0));
    }

    #[test]
    fn hundred_distinct_tokens_at_point_eight() {
        let h: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let n = GateConfig::mask(0.8).gates(&h).iter().filter(|&&g| g == 1.0).count();
        assert_eq!(n, 21);
    }

    #[test]
    fn archer_examples() {
        assert_eq!(archer_weights(&[0.2, 0.4]), [0.5, 1.0]);
        assert_eq!(archer_weights(&[0.0, 0.0]), [1.0, 1.0]);
        let w = archer_weights(&[0.3, 1.7, 0.2]);
        assert_eq!(w[1], 1.0);
    }

    proptest! {
        #[test]
        fn mask_cardinality(
            raw in prop::collection::hash_set(0u32..1_000_000, 1..200),
            permille in 0usize..1000,
        ) {
            let h: Vec<f64> = raw.iter().map(|&x| x as f64 * 1e-6).collect();
            let t = h.len();
            let rho = permille as f64 / 1000.0;
            let selected = GateConfig::mask(rho).gates(&h).iter().filter(|&&g| g == 1.0).count();
            let rank = (permille * t).div_ceil(1000);
            let expect = if rank == 0 { t } else { t - rank + 1 };
            prop_assert_eq!(selected, expect);
        }

        #[test]
        fn mask_with_ties_selects_at_least_nearest_rank(
            h in prop::collection::vec(0u8..4, 1..60),
            permille in 0usize..1000,
        ) {
            let h: Vec<f64> = h.into_iter().map(f64::from).collect();
            let t = h.len();
            let rho = permille as f64 / 1000.0;
            let selected = GateConfig::mask(rho).gates(&h).iter().filter(|&&g| g == 1.0).count();
            let rank = (permille * t).div_ceil(1000);
            let floor = if rank == 0 { t } else { t - rank + 1 };
            prop_assert!(selected >= floor);
        }
    }
}
