//! Context featurization: hashed n-gram features over the trailing tokens.
//!
//! At most four features are active per position: a bias, the last token,
//! the last bigram, and a trigram taken one position back, so together the
//! active set covers the last four tokens. That one-token offset is what
//! lets a linear model read a whole rendered equation `a op b =` when it
//! emits the result.
//!
//! The feature space is partitioned: unigrams and bigrams get collision-free
//! slots, and the trigram region is indexed by a perfect pack whenever
//! `V^3` fits (it does for the task vocabulary), falling back to FNV hashing
//! for larger custom vocabularies.

use crate::util::fnv1a;

use super::vocab::MAX_VOCAB;

/// Total feature dimension (2^16).
pub const FEATURE_DIM: usize = 1 << 16;

const BIAS: u32 = 0;
const UNI_BASE: u32 = 1;
const BI_BASE: u32 = UNI_BASE + MAX_VOCAB as u32; // 65
const TRI_BASE: u32 = BI_BASE + (MAX_VOCAB * MAX_VOCAB) as u32; // 4161
const TRI_SPACE: u32 = FEATURE_DIM as u32 - TRI_BASE; // 61375

/// Active feature set for one position; at most four entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveFeatures {
    ids: [u32; 4],
    len: usize,
}

impl ActiveFeatures {
    pub fn as_slice(&self) -> &[u32] {
        &self.ids[..self.len]
    }
}

fn trigram_index(a: u32, b: u32, c: u32, vocab_size: usize) -> u32 {
    let v = vocab_size as u64;
    if v * v * v <= TRI_SPACE as u64 {
        ((a as u64 * v + b as u64) * v + c as u64) as u32
    } else {
        let mut bytes = [0u8; 12];
        bytes[..4].copy_from_slice(&a.to_le_bytes());
        bytes[4..8].copy_from_slice(&b.to_le_bytes());
        bytes[8..].copy_from_slice(&c.to_le_bytes());
        (fnv1a(&bytes) % TRI_SPACE as u64) as u32
    }
}

/// Features of the trailing context. Deterministic; empty context activates
/// only the bias.
pub fn featurize(context: &[u32], vocab_size: usize) -> ActiveFeatures {
    debug_assert!(vocab_size <= MAX_VOCAB);
    let mut ids = [BIAS; 4];
    let mut len = 1usize;
    let n = context.len();
    if n >= 1 {
        ids[len] = UNI_BASE + context[n - 1];
        len += 1;
    }
    if n >= 2 {
        ids[len] = BI_BASE + context[n - 2] * MAX_VOCAB as u32 + context[n - 1];
        len += 1;
    }
    if n >= 4 {
        ids[len] = TRI_BASE + trigram_index(context[n - 4], context[n - 3], context[n - 2], vocab_size);
        len += 1;
    }
    ActiveFeatures { ids, len }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::vocab::Vocab;

    #[test]
    fn empty_context_is_bias_only() {
        let f = featurize(&[], 27);
        assert_eq!(f.as_slice(), &[BIAS]);
    }

    #[test]
    fn featurize_is_deterministic_and_length_sensitive() {
        let ctx = [3u32, 1, 4, 1, 5];
        assert_eq!(featurize(&ctx, 27), featurize(&ctx, 27));
        assert_eq!(featurize(&ctx[..1], 27).as_slice().len(), 2);
        assert_eq!(featurize(&ctx[..2], 27).as_slice().len(), 3);
        assert_eq!(featurize(&ctx[..3], 27).as_slice().len(), 3);
        assert_eq!(featurize(&ctx, 27).as_slice().len(), 4);
    }

    #[test]
    fn regions_do_not_overlap() {
        let v = Vocab::task_default().size();
        let f = featurize(&[1, 2, 3, 4], v);
        let s = f.as_slice();
        assert_eq!(s[0], BIAS);
        assert!((UNI_BASE..BI_BASE).contains(&s[1]));
        assert!((BI_BASE..TRI_BASE).contains(&s[2]));
        assert!(s[3] >= TRI_BASE && s[3] < FEATURE_DIM as u32);
    }

    /// Enumeration over the full task alphabet: any two contexts that differ
    /// in their last token activate different feature sets. The unigram slot
    /// is collision-free by construction, so the observed rate is zero,
    /// comfortably under the 1% budget.
    #[test]
    fn contexts_differing_in_last_token_differ_in_features() {
        let v = Vocab::task_default().size();
        let prefixes: [&[u32]; 4] = [&[], &[7], &[18, 3], &[14, 9, 17, 18]];
        let mut pairs = 0u64;
        let mut collisions = 0u64;
        for prefix in prefixes {
            for a in 0..v as u32 {
                for b in 0..v as u32 {
                    if a == b {
                        continue;
                    }
                    let mut ca = prefix.to_vec();
                    ca.push(a);
                    let mut cb = prefix.to_vec();
                    cb.push(b);
                    pairs += 1;
                    if featurize(&ca, v).as_slice() == featurize(&cb, v).as_slice() {
                        collisions += 1;
                    }
                }
            }
        }
        let rate = collisions as f64 / pairs as f64;
        assert!(rate < 0.01, "collision rate {rate} over {pairs} pairs");
        assert_eq!(collisions, 0);
    }

    /// The task vocabulary's trigram packing is collision-free: distinct
    /// trigrams map to distinct slots over the whole alphabet.
    #[test]
    fn trigram_packing_is_perfect_for_task_vocab() {
        let v = Vocab::task_default().size();
        assert!(v * v * v <= TRI_SPACE as usize);
        let mut seen = vec![false; TRI_SPACE as usize];
        for a in 0..v as u32 {
            for b in 0..v as u32 {
                for c in 0..v as u32 {
                    let idx = trigram_index(a, b, c, v) as usize;
                    assert!(!seen[idx], "collision at ({a},{b},{c})");
                    seen[idx] = true;
                }
            }
        }
    }

    #[test]
    fn equation_is_visible_when_emitting_the_result() {
        // "7+2=" as token ids: 7, '+', 2, '='
        let v = Vocab::task_default();
        let ctx = v.encode("7+2=").unwrap();
        let feats = featurize(&ctx, v.size());
        // The offset trigram covers (7, +, 2): recompute and compare.
        let expected = TRI_BASE + trigram_index(ctx[0], ctx[1], ctx[2], v.size());
        assert!(feats.as_slice().contains(&expected));
    }
}
