//! Fixed-length keyframe sampling with a minimum index gap.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Random,
    Even,
}

impl FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SampleMode::Random),
            "even" => Ok(SampleMode::Even),
            other => Err(Error::config(format!("unknown sampler mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub length: usize,
    pub min_gap: usize,
    pub seed: u64,
    pub mode: SampleMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            length: 40,
            min_gap: 2,
            seed: 0,
            mode: SampleMode::Even,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::config("sampler.length must be at least 1"));
        }
        Ok(())
    }
}

/// Stable 64-bit FNV-1a, used to derive per-tracklet seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, tracklet_id: &str) -> u64 {
    seed ^ fnv1a(tracklet_id.as_bytes())
}

/// Samples with a generator seeded from `cfg.seed`.
pub fn sample(keyframes: &[usize], cfg: &SamplerConfig) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_with(keyframes, cfg, &mut rng)
}

/// Picks `cfg.length` entries of the sorted, distinct `keyframes`.
///
/// Random mode draws uniformly among subsets whose consecutive members are
/// at least `min_gap` apart and returns them sorted. Even mode takes evenly
/// spaced positions of the list. When fewer feasible entries exist than
/// requested, the feasible selection is repeated cyclically.
pub fn sample_with<R: Rng + ?Sized>(
    keyframes: &[usize],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if keyframes.is_empty() {
        return Err(Error::NoKeyframes);
    }
    let length = cfg.length.max(1);
    let chosen = match cfg.mode {
        SampleMode::Even => even_positions(keyframes.len(), length)
            .into_iter()
            .map(|p| keyframes[p])
            .collect(),
        SampleMode::Random => {
            let next = next_feasible(keyframes, cfg.min_gap);
            let max_feasible = greedy_count(&next);
            let take = length.min(max_feasible);
            uniform_gapped(&next, take, rng)
                .into_iter()
                .map(|p| keyframes[p])
                .collect()
        }
    };
    Ok(pad_cyclic(chosen, length))
}

fn pad_cyclic(chosen: Vec<usize>, length: usize) -> Vec<usize> {
    if chosen.len() >= length {
        return chosen;
    }
    chosen.iter().copied().cycle().take(length).collect()
}

/// Centered evenly spaced positions; all positions when `n <= length`.
fn even_positions(n: usize, length: usize) -> Vec<usize> {
    if n <= length {
        return (0..n).collect();
    }
    (0..length).map(|i| (2 * i + 1) * n / (2 * length)).collect()
}

/// `next[i]`: first position whose key is at least `gap` past key `i`.
fn next_feasible(keys: &[usize], gap: usize) -> Vec<usize> {
    let mut next = vec![keys.len(); keys.len()];
    let mut j = 0;
    for (i, slot) in next.iter_mut().enumerate() {
        j = j.max(i + 1);
        while j < keys.len() && keys[j] - keys[i] < gap {
            j += 1;
        }
        *slot = j;
    }
    next
}

fn greedy_count(next: &[usize]) -> usize {
    let mut count = 0;
    let mut i = 0;
    while i < next.len() {
        count += 1;
        i = next[i];
    }
    count
}

/// Uniform draw of `take` gap-respecting positions by sequential sampling
/// over completion counts (no rejection).
fn uniform_gapped<R: Rng + ?Sized>(next: &[usize], take: usize, rng: &mut R) -> Vec<usize> {
    let n = next.len();
    if take == 0 {
        return Vec::new();
    }
    // suffix[r][i]: number of valid r-sequences whose first position is >= i
    let mut suffix = vec![vec![0.0f64; n + 1]; take + 1];
    for i in (0..n).rev() {
        suffix[1][i] = suffix[1][i + 1] + 1.0;
    }
    for r in 2..=take {
        for i in (0..n).rev() {
            let starting_here = suffix[r - 1][next[i]];
            suffix[r][i] = suffix[r][i + 1] + starting_here;
        }
    }
    let starting_at = |r: usize, i: usize| -> f64 {
        if r == 1 {
            1.0
        } else {
            suffix[r - 1][next[i]]
        }
    };

    let mut out = Vec::with_capacity(take);
    let mut from = 0;
    for r in (1..=take).rev() {
        let total = suffix[r][from];
        let mut u = rng.gen::<f64>() * total;
        let mut pick = None;
        for i in from..n {
            let w = starting_at(r, i);
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if u < w {
                break;
            }
            u -= w;
        }
        let i = pick.expect("feasible draw exists");
        out.push(i);
        from = next[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn cfg(length: usize, min_gap: usize, mode: SampleMode) -> SamplerConfig {
        SamplerConfig {
            length,
            min_gap,
            seed: 7,
            mode,
        }
    }

    #[test]
    fn random_respects_gap() {
        let keys: Vec<usize> = (0..100).collect();
        let out = sample(&keys, &cfg(40, 2, SampleMode::Random)).unwrap();
        assert_eq!(out.len(), 40);
        assert!(out.windows(2).all(|w| w[1] >= w[0] + 2));
    }

    #[test]
    fn even_pads_cyclically() {
        let out = sample(&[3, 5, 9], &cfg(5, 2, SampleMode::Even)).unwrap();
        assert_eq!(out, vec![3, 5, 9, 3, 5]);
        let keys: Vec<usize> = (0..10).collect();
        assert_eq!(sample(&keys, &cfg(5, 0, SampleMode::Even)).unwrap(), vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn deterministic_under_seed() {
        let keys: Vec<usize> = (0..200).step_by(3).collect();
        let c = cfg(20, 4, SampleMode::Random);
        assert_eq!(sample(&keys, &c).unwrap(), sample(&keys, &c).unwrap());
    }

    #[test]
    fn seeds_differ() {
        let keys: Vec<usize> = (0..100).collect();
        let draws: std::collections::HashSet<Vec<usize>> = (0..100)
            .map(|s| {
                let c = SamplerConfig {
                    seed: s,
                    ..cfg(40, 2, SampleMode::Random)
                };
                sample(&keys, &c).unwrap()
            })
            .collect();
        assert!(draws.len() >= 99);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            sample(&[], &cfg(4, 1, SampleMode::Random)),
            Err(Error::NoKeyframes)
        ));
    }

    #[test]
    fn infeasible_gap_pads_feasible_selection() {
        // only 3 keys can be 5 apart among 0..=10
        let keys: Vec<usize> = (0..=10).collect();
        let out = sample(&keys, &cfg(7, 5, SampleMode::Random)).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(out[..3], [0, 5, 10]);
        assert_eq!(out[3..], [0, 5, 10, 0]);
    }

    #[test]
    fn random_draw_is_uniform() {
        // brute-force oracle: all 3-subsets of 0..7 with gaps >= 2
        let keys: Vec<usize> = (0..7).collect();
        let mut feasible = Vec::new();
        for a in 0..7 {
            for b in a + 2..7 {
                for c in b + 2..7 {
                    feasible.push(vec![a, b, c]);
                }
            }
        }
        assert_eq!(feasible.len(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits: HashMap<Vec<usize>, usize> = HashMap::new();
        let trials = 20_000;
        for _ in 0..trials {
            let s = sample_with(&keys, &cfg(3, 2, SampleMode::Random), &mut rng).unwrap();
            *hits.entry(s).or_default() += 1;
        }
        assert_eq!(hits.len(), feasible.len());
        for f in &feasible {
            let p = hits[f] as f64 / trials as f64;
            assert!((p - 0.1).abs() < 0.015, "{f:?}: {p}");
        }
    }

    proptest! {
        #[test]
        fn outputs_are_members(
            mut keys in proptest::collection::btree_set(0usize..300, 1..60)
                .prop_map(|s| s.into_iter().collect::<Vec<_>>()),
            length in 1usize..50, gap in 0usize..6, seed in any::<u64>(), even in any::<bool>()
        ) {
            keys.dedup();
            let c = SamplerConfig {
                length, min_gap: gap, seed,
                mode: if even { SampleMode::Even } else { SampleMode::Random },
            };
            let out = sample(&keys, &c).unwrap();
            prop_assert_eq!(out.len(), length);
            prop_assert!(out.iter().all(|k| keys.contains(k)));
            if !even {
                let feasible = greedy_count(&next_feasible(&keys, gap));
                if feasible >= length {
                    prop_assert!(out.windows(2).all(|w| w[1] >= w[0] + gap && w[1] > w[0]));
                }
            }
        }
    }
}
