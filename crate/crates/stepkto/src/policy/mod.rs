//! Feature-based log-linear autoregressive policy.
//!
//! Next-token logits are sums of weight rows selected by the active context
//! features ([`featurize`]); the conditional distribution is their
//! log-softmax. Everything downstream needs from a "model" lives here:
//! seeded nucleus/temperature sampling, greedy decoding, sequence and
//! per-step log-probabilities, exact softmax gradients in sparse form, and
//! an exact-round-trip checkpoint format.
//!
//! Parameters are immutable during generation and evaluation; only the
//! trainer mutates them between phases.

mod features;
mod vocab;

pub use features::{featurize, ActiveFeatures, FEATURE_DIM};
pub use vocab::{TokenId, Vocab, VocabError, MAX_VOCAB};

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::judge::segment_offsets;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Encode(#[from] VocabError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Decoding mode: greedy argmax (ties to the lowest token id) or temperature
/// sampling. Greedy is an explicit flag rather than temperature zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decode {
    Greedy,
    Temperature(f64),
}

/// Dense weight matrix of shape `FEATURE_DIM x V`, feature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    vocab: Vocab,
    w: Vec<f64>,
}

/// One rollout: generated tokens (including end-of-sequence when reached),
/// their log-probabilities under the generating parameters at unit
/// temperature, the rendered text, and a token-index fence partitioning the
/// sequence into reasoning steps.
#[derive(Debug, Clone)]
pub struct SampledSolution {
    pub tokens: Vec<TokenId>,
    pub logprobs: Vec<f64>,
    /// Partition fence over `tokens`: starts with 0, ends with
    /// `tokens.len()`, strictly increasing.
    pub step_bounds: Vec<usize>,
    pub text: String,
}

impl SampledSolution {
    pub fn step_spans(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.step_bounds.windows(2).map(|w| w[0]..w[1])
    }
}

impl PolicyParams {
    /// Zero-initialized parameters: the uniform policy.
    pub fn zeros(vocab: Vocab) -> Self {
        let w = vec![0.0; FEATURE_DIM * vocab.size()];
        PolicyParams { vocab, w }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Mutable weight access for the optimizer and for perturbation-based
    /// tests. Index layout is `feature * V + token`.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn weight(&self, feature: usize, token: usize) -> f64 {
        self.w[feature * self.vocab.size() + token]
    }

    pub fn weight_mut(&mut self, feature: usize, token: usize) -> &mut f64 {
        let v = self.vocab.size();
        &mut self.w[feature * v + token]
    }

    fn logits(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.size();
        let mut logits = vec![0.0; v];
        for &f in featurize(context, v).as_slice() {
            let row = &self.w[f as usize * v..(f as usize + 1) * v];
            for (l, w) in logits.iter_mut().zip(row) {
                *l += w;
            }
        }
        logits
    }

    /// Log-softmax of the active-feature row sums; exponentials sum to one
    /// within 1e-12.
    pub fn logprobs(&self, context: &[TokenId]) -> Vec<f64> {
        let mut logits = self.logits(context);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        for l in logits.iter_mut() {
            *l -= log_z;
        }
        logits
    }

    // -- checkpoint format ---------------------------------------------------

    /// Binary checkpoint: magic, version, dimensions, vocabulary, then the
    /// nonzero weights in ascending index order. Bit-exact round trip.
    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SKPC");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(FEATURE_DIM as u64).to_le_bytes());
        out.extend_from_slice(&(self.vocab.size() as u32).to_le_bytes());
        out.extend_from_slice(&self.vocab.eos().to_le_bytes());
        for tok in self.vocab.tokens() {
            out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
        }
        let nnz = self.w.iter().filter(|&&x| x != 0.0).count() as u64;
        out.extend_from_slice(&nnz.to_le_bytes());
        for (i, &x) in self.w.iter().enumerate() {
            if x != 0.0 {
                out.extend_from_slice(&(i as u64).to_le_bytes());
                out.extend_from_slice(&x.to_bits().to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], PolicyError> {
            let slice = bytes
                .get(pos..pos + n)
                .ok_or_else(|| PolicyError::BadCheckpoint("truncated file".to_string()))?;
            pos += n;
            Ok(slice)
        };
        if take(4)? != b"SKPC" {
            return Err(PolicyError::BadCheckpoint("bad magic".to_string()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != 1 {
            return Err(PolicyError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let fdim = u64::from_le_bytes(take(8)?.try_into().unwrap());
        if fdim != FEATURE_DIM as u64 {
            return Err(PolicyError::BadCheckpoint(format!("feature dim {fdim}")));
        }
        let vsize = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let eos = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let mut tokens = Vec::with_capacity(vsize);
        for _ in 0..vsize {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let tok = std::str::from_utf8(take(len)?)
                .map_err(|e| PolicyError::BadCheckpoint(format!("bad token utf8: {e}")))?;
            tokens.push(tok.to_string());
        }
        let vocab = Vocab::new(tokens, eos)
            .map_err(|e| PolicyError::BadCheckpoint(format!("bad vocab: {e}")))?;
        let mut params = PolicyParams::zeros(vocab);
        let nnz = u64::from_le_bytes(take(8)?.try_into().unwrap());
        for _ in 0..nnz {
            let idx = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let bits = u64::from_le_bytes(take(8)?.try_into().unwrap());
            *params
                .w
                .get_mut(idx)
                .ok_or_else(|| PolicyError::BadCheckpoint(format!("index {idx} out of range")))? =
                f64::from_bits(bits);
        }
        if pos != bytes.len() {
            return Err(PolicyError::BadCheckpoint("trailing bytes".to_string()));
        }
        Ok(params)
    }
}

// ---------------------------------------------------------------------------
// Sampling and decoding
// ---------------------------------------------------------------------------

fn argmax_lowest_id(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Token order for the nucleus rule: probability descending, ties broken by
/// token id ascending.
fn nucleus_order(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b].partial_cmp(&probs[a]).expect("probs are finite").then(a.cmp(&b))
    });
    order
}

/// Draws one token: logits are divided by the temperature, the smallest
/// probability-sorted prefix with cumulative mass >= top_p is kept and
/// renormalized, then sampled.
pub fn sample_next(
    params: &PolicyParams,
    context: &[TokenId],
    temperature: f64,
    top_p: f64,
    rng: &mut impl Rng,
) -> TokenId {
    debug_assert!(temperature > 0.0 && top_p > 0.0 && top_p <= 1.0);
    let logprobs = params.logprobs(context);
    let scaled: Vec<f64> = logprobs.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();

    let order = nucleus_order(&probs);
    let mut kept = order.len();
    let mut cum = 0.0;
    for (i, &id) in order.iter().enumerate() {
        cum += probs[id];
        if cum >= top_p {
            kept = i + 1;
            break;
        }
    }
    let kept = &order[..kept];
    let mass: f64 = kept.iter().map(|&id| probs[id]).sum();
    let mut dart = rng.random::<f64>() * mass;
    for &id in kept {
        dart -= probs[id];
        if dart <= 0.0 {
            return id as TokenId;
        }
    }
    *kept.last().expect("kept set is nonempty") as TokenId
}

fn decode_loop(
    params: &PolicyParams,
    prompt: &str,
    mode: Decode,
    top_p: f64,
    max_tokens: usize,
    seed: u64,
) -> Result<SampledSolution, PolicyError> {
    assert!(max_tokens >= 1, "max_tokens must be >= 1");
    let vocab = params.vocab();
    let mut context = vocab.encode(prompt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    for _ in 0..max_tokens {
        let tok = match mode {
            Decode::Greedy => argmax_lowest_id(&params.logprobs(&context)) as TokenId,
            Decode::Temperature(t) => sample_next(params, &context, t, top_p, &mut rng),
        };
        logprobs.push(params.logprobs(&context)[tok as usize]);
        tokens.push(tok);
        context.push(tok);
        if tok == vocab.eos() {
            break;
        }
    }
    let text = vocab.decode(&tokens);
    let step_bounds = token_step_bounds(vocab, &tokens, &text);
    Ok(SampledSolution { tokens, logprobs, step_bounds, text })
}

/// Nucleus sampling at the given temperature; deterministic for a fixed
/// (params, prompt, seed) regardless of worker count.
pub fn sample(
    params: &PolicyParams,
    prompt: &str,
    temperature: f64,
    top_p: f64,
    max_tokens: usize,
    seed: u64,
) -> Result<SampledSolution, PolicyError> {
    decode_loop(params, prompt, Decode::Temperature(temperature), top_p, max_tokens, seed)
}

/// Greedy argmax decoding, ties to the lowest token id.
pub fn greedy(
    params: &PolicyParams,
    prompt: &str,
    max_tokens: usize,
) -> Result<SampledSolution, PolicyError> {
    decode_loop(params, prompt, Decode::Greedy, 1.0, max_tokens, 0)
}

/// Maps the text-level step boundaries onto token indices. Every segment
/// boundary is a line start, and only the newline token contains a newline,
/// so boundaries always coincide with token starts.
pub fn token_step_bounds(vocab: &Vocab, tokens: &[TokenId], text: &str) -> Vec<usize> {
    let mut starts = Vec::with_capacity(tokens.len());
    let mut acc = 0usize;
    for &id in tokens {
        starts.push(acc);
        acc += vocab.token(id).len();
    }
    let mut fence = vec![0usize];
    for off in segment_offsets(text) {
        let idx = match starts.binary_search(&off) {
            Ok(mut i) => {
                // Zero-width tokens share a start; take the first.
                while i > 0 && starts[i - 1] == off {
                    i -= 1;
                }
                i
            }
            Err(i) => i,
        };
        if idx > *fence.last().expect("fence nonempty") && idx < tokens.len() {
            fence.push(idx);
        }
    }
    if *fence.last().unwrap() < tokens.len() || tokens.is_empty() {
        fence.push(tokens.len());
    }
    fence
}

// ---------------------------------------------------------------------------
// Log-probabilities of given sequences
// ---------------------------------------------------------------------------

/// Log-probability of the span `range` of `y` conditioned on `x` and the
/// preceding tokens of `y`.
pub fn span_logprob(
    params: &PolicyParams,
    x: &[TokenId],
    y: &[TokenId],
    range: Range<usize>,
) -> f64 {
    let mut context = Vec::with_capacity(x.len() + range.end);
    context.extend_from_slice(x);
    context.extend_from_slice(&y[..range.start]);
    let mut total = 0.0;
    for &tok in &y[range] {
        total += params.logprobs(&context)[tok as usize];
        context.push(tok);
    }
    total
}

/// Log-probability of the whole sequence `y` given `x`. Equals the sum of
/// [`span_logprob`] over any partition of `y`.
pub fn sequence_logprob(params: &PolicyParams, x: &[TokenId], y: &[TokenId]) -> f64 {
    span_logprob(params, x, y, 0..y.len())
}

/// Text-level convenience wrapper; fails on untokenizable text.
pub fn sequence_logprob_text(params: &PolicyParams, x: &str, y: &str) -> Result<f64, PolicyError> {
    let xt = params.vocab().encode(x)?;
    let yt = params.vocab().encode(y)?;
    Ok(sequence_logprob(params, &xt, &yt))
}

// ---------------------------------------------------------------------------
// Sparse gradients
// ---------------------------------------------------------------------------

/// Sparse gradient over the weight matrix: full rows keyed by feature id.
/// BTreeMap keys give a fixed reduction order, keeping accumulation
/// bit-stable across runs.
#[derive(Debug, Clone)]
pub struct SparseGrad {
    rows: BTreeMap<u32, Vec<f64>>,
    vocab_size: usize,
}

impl SparseGrad {
    pub fn new(vocab_size: usize) -> Self {
        SparseGrad { rows: BTreeMap::new(), vocab_size }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, feature: u32, token: usize) -> f64 {
        self.rows.get(&feature).map_or(0.0, |row| row[token])
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.rows.iter().map(|(&f, row)| (f, row.as_slice()))
    }

    /// Adds `coeff * (onehot(target) - probs)` to every active feature row:
    /// the exact softmax gradient of one position's log-probability.
    pub fn accumulate_position(
        &mut self,
        feats: &ActiveFeatures,
        probs: &[f64],
        target: TokenId,
        coeff: f64,
    ) {
        for &f in feats.as_slice() {
            let row = self.rows.entry(f).or_insert_with(|| vec![0.0; self.vocab_size]);
            for (v, (r, &p)) in row.iter_mut().zip(probs).enumerate() {
                let indicator = if v == target as usize { 1.0 } else { 0.0 };
                *r += coeff * (indicator - p);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &SparseGrad, coeff: f64) {
        debug_assert_eq!(self.vocab_size, other.vocab_size);
        for (&f, src) in &other.rows {
            let row = self.rows.entry(f).or_insert_with(|| vec![0.0; self.vocab_size]);
            for (r, &s) in row.iter_mut().zip(src) {
                *r += coeff * s;
            }
        }
    }

    pub fn scale(&mut self, coeff: f64) {
        for row in self.rows.values_mut() {
            for r in row.iter_mut() {
                *r *= coeff;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.rows.values().flat_map(|row| row.iter()).map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().all(|row| row.iter().all(|x| x.is_finite()))
    }
}

/// Accumulates `coeff * d span_logprob / d W` into `grad`.
pub fn accumulate_span_grad(
    params: &PolicyParams,
    x: &[TokenId],
    y: &[TokenId],
    range: Range<usize>,
    coeff: f64,
    grad: &mut SparseGrad,
) {
    let v = params.vocab().size();
    let mut context = Vec::with_capacity(x.len() + range.end);
    context.extend_from_slice(x);
    context.extend_from_slice(&y[..range.start]);
    for &tok in &y[range] {
        let logprobs = params.logprobs(&context);
        let probs: Vec<f64> = logprobs.iter().map(|l| l.exp()).collect();
        let feats = featurize(&context, v);
        grad.accumulate_position(&feats, &probs, tok, coeff);
        context.push(tok);
    }
}

/// Exact gradient of the sequence log-probability, returned sparsely.
pub fn grad_logprob(params: &PolicyParams, x: &[TokenId], y: &[TokenId]) -> SparseGrad {
    let mut grad = SparseGrad::new(params.vocab().size());
    accumulate_span_grad(params, x, y, 0..y.len(), 1.0, &mut grad);
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::generate;

    fn toy_vocab() -> Vocab {
        Vocab::new(vec!["a".into(), "b".into(), "c".into(), "".into()], 3).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_logprobs() {
        let params = PolicyParams::zeros(Vocab::task_default());
        let v = params.vocab().size() as f64;
        let lp = params.logprobs(&[1, 2, 3]);
        for &l in &lp {
            assert!((l - (1.0 / v).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn logprobs_normalize_for_random_weights() {
        let mut params = PolicyParams::zeros(toy_vocab());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..params.dim() {
            if rng.random::<f64>() < 0.01 {
                params.weights_mut()[i] = rng.random::<f64>() * 4.0 - 2.0;
            }
        }
        for ctx in [vec![], vec![0], vec![2, 1, 0, 1]] {
            let lp = params.logprobs(&ctx);
            let z: f64 = lp.iter().map(|l| l.exp()).sum();
            assert!((z - 1.0).abs() < 1e-12, "sum {z}");
        }
    }

    #[test]
    fn raising_one_column_raises_only_that_token() {
        let vocab = toy_vocab();
        let base = PolicyParams::zeros(vocab.clone());
        let ctx = [0u32, 1];
        let before = base.logprobs(&ctx);
        let mut boosted = base.clone();
        for &f in featurize(&ctx, vocab.size()).as_slice() {
            *boosted.weight_mut(f as usize, 2) += 1.5;
        }
        let after = boosted.logprobs(&ctx);
        assert!(after[2] > before[2]);
        for v in [0usize, 1, 3] {
            assert!(after[v] < before[v]);
        }
    }

    #[test]
    fn greedy_on_uniform_repeats_token_zero() {
        let params = PolicyParams::zeros(Vocab::task_default());
        let sol = greedy(&params, "Start with 3.", 7).unwrap();
        assert_eq!(sol.tokens, vec![0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(sol.text, "0000000");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let params = PolicyParams::zeros(Vocab::task_default());
        let a = sample(&params, "Start with 3.", 0.7, 0.95, 64, 9).unwrap();
        let b = sample(&params, "Start with 3.", 0.7, 0.95, 64, 9).unwrap();
        assert_eq!(a.tokens, b.tokens);
        let c = sample(&params, "Start with 3.", 0.7, 0.95, 64, 10).unwrap();
        assert_ne!(a.tokens, c.tokens);
    }

    #[test]
    fn per_token_logprobs_sum_to_sequence_logprob() {
        let params = PolicyParams::zeros(Vocab::task_default());
        let sol = sample(&params, "Start with 5.", 1.0, 1.0, 40, 3).unwrap();
        let x = params.vocab().encode("Start with 5.").unwrap();
        let seq = sequence_logprob(&params, &x, &sol.tokens);
        let stored: f64 = sol.logprobs.iter().sum();
        assert!((seq - stored).abs() < 1e-12);
    }

    #[test]
    fn step_bounds_partition_the_rollout() {
        let mut params = PolicyParams::zeros(Vocab::task_default());
        // Nudge the policy toward structured output so bounds are nontrivial.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..params.dim() {
            if rng.random::<f64>() < 0.002 {
                params.weights_mut()[i] = rng.random::<f64>() * 3.0;
            }
        }
        for seed in 0..20u64 {
            let sol = sample(&params, "Start with 5.", 1.0, 1.0, 50, seed).unwrap();
            assert_eq!(sol.step_bounds[0], 0);
            assert_eq!(*sol.step_bounds.last().unwrap(), sol.tokens.len());
            assert!(sol.step_bounds.windows(2).all(|w| w[0] < w[1]));
            let total: usize = sol.step_spans().map(|r| r.len()).sum();
            assert_eq!(total, sol.tokens.len());
        }
    }

    #[test]
    fn token_bounds_match_text_segmentation_on_ground_truth() {
        let vocab = Vocab::task_default();
        for p in generate(10, (2, 6), 33) {
            let text = p.render_solution();
            let mut tokens = vocab.encode(&text).unwrap();
            tokens.push(vocab.eos());
            let fence = token_step_bounds(&vocab, &tokens, &text);
            let segs = crate::judge::segment_steps(&text);
            assert_eq!(fence.len() - 1, segs.steps.len(), "{text:?}");
            // Decoding each token span reproduces the corresponding segment
            // (the final span additionally carries the zero-width eos).
            for (span, seg) in fence.windows(2).zip(&segs.steps) {
                let piece = vocab.decode(&tokens[span[0]..span[1]]);
                assert_eq!(&piece, seg);
            }
        }
    }

    #[test]
    fn span_logprobs_telescope() {
        let params = PolicyParams::zeros(Vocab::task_default());
        let x = params.vocab().encode("Start with 4.").unwrap();
        let p = generate(1, (3, 3), 17).remove(0);
        let mut y = params.vocab().encode(&p.render_solution()).unwrap();
        y.push(params.vocab().eos());
        let fence = token_step_bounds(params.vocab(), &y, &p.render_solution());
        let total: f64 =
            fence.windows(2).map(|w| span_logprob(&params, &x, &y, w[0]..w[1])).sum();
        assert!((total - sequence_logprob(&params, &x, &y)).abs() < 1e-10);
    }

    #[test]
    fn uniform_sequence_logprob_is_minus_log_v_per_token() {
        let params = PolicyParams::zeros(toy_vocab());
        let v = params.vocab().size() as f64;
        assert!((sequence_logprob(&params, &[], &[0]) + v.ln()).abs() < 1e-12);
        assert!((sequence_logprob(&params, &[], &[0, 2]) + 2.0 * v.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_closed_form_on_uniform_single_token() {
        let params = PolicyParams::zeros(toy_vocab());
        let v = params.vocab().size() as f64;
        let grad = grad_logprob(&params, &[], &[1]);
        // Empty context activates only the bias feature.
        assert_eq!(grad.row_count(), 1);
        assert!((grad.get(0, 1) - (1.0 - 1.0 / v)).abs() < 1e-12);
        assert!((grad.get(0, 0) + 1.0 / v).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let vocab = toy_vocab();
        let mut params = PolicyParams::zeros(vocab.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = vec![0u32, 1, 2];
        let y = vec![1u32, 0, 2, 2, 3];
        // Touch the rows the sequence will use.
        let mut active: Vec<u32> = Vec::new();
        let mut ctx = x.clone();
        for &tok in &y {
            active.extend_from_slice(featurize(&ctx, vocab.size()).as_slice());
            ctx.push(tok);
        }
        active.sort_unstable();
        active.dedup();
        for &f in &active {
            for v in 0..vocab.size() {
                *params.weight_mut(f as usize, v) = rng.random::<f64>() - 0.5;
            }
        }
        let grad = grad_logprob(&params, &x, &y);
        let eps = 1e-5;
        let mut checked = 0;
        for &f in active.iter().take(5) {
            for v in 0..vocab.size() {
                let orig = params.weight(f as usize, v);
                *params.weight_mut(f as usize, v) = orig + eps;
                let up = sequence_logprob(&params, &x, &y);
                *params.weight_mut(f as usize, v) = orig - eps;
                let down = sequence_logprob(&params, &x, &y);
                *params.weight_mut(f as usize, v) = orig;
                let fd = (up - down) / (2.0 * eps);
                let analytic = grad.get(f, v);
                let denom = analytic.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((analytic - fd) / denom).abs() <= 1e-5,
                    "f={f} v={v}: {analytic} vs {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 20);
    }

    #[test]
    fn saturated_softmax_has_vanishing_gradient() {
        let vocab = toy_vocab();
        let mut params = PolicyParams::zeros(vocab.clone());
        let y = vec![2u32];
        for &f in featurize(&[], vocab.size()).as_slice() {
            *params.weight_mut(f as usize, 2) = 60.0;
        }
        let grad = grad_logprob(&params, &[], &y);
        assert!(grad.global_norm() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint");
        let mut params = PolicyParams::zeros(Vocab::task_default());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..params.dim() {
            if rng.random::<f64>() < 0.001 {
                params.weights_mut()[i] = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        params.save(&path).unwrap();
        let loaded = PolicyParams::load(&path).unwrap();
        assert_eq!(params, loaded);
        // Saving again produces identical bytes.
        let path2 = dir.path().join("checkpoint2");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn greedy_equals_sample_with_greedy_mode() {
        let mut params = PolicyParams::zeros(Vocab::task_default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..params.dim() {
            if rng.random::<f64>() < 0.001 {
                params.weights_mut()[i] = rng.random::<f64>();
            }
        }
        let a = greedy(&params, "Start with 6.", 30).unwrap();
        let b = decode_loop(&params, "Start with 6.", Decode::Greedy, 1.0, 30, 99).unwrap();
        assert_eq!(a.tokens, b.tokens);
    }

    /// Overfit a single sequence by plain gradient ascent, then check greedy
    /// decoding echoes it.
    #[test]
    fn overfit_single_sequence_then_greedy_echoes_it() {
        let vocab = Vocab::task_default();
        let mut params = PolicyParams::zeros(vocab.clone());
        let prompt = "Start with 7. Subtract 7.";
        let target = "## Step:7-7=0\nThe final answer is: $\\boxed{0}$";
        let x = vocab.encode(prompt).unwrap();
        let mut y = vocab.encode(target).unwrap();
        y.push(vocab.eos());
        for _ in 0..200 {
            let grad = grad_logprob(&params, &x, &y);
            for (f, row) in grad.iter_rows() {
                for (v, &g) in row.iter().enumerate() {
                    *params.weight_mut(f as usize, v) += 0.5 * g;
                }
            }
            let decoded = greedy(&params, prompt, 64).unwrap();
            if decoded.tokens == y {
                break;
            }
        }
        let decoded = greedy(&params, prompt, 64).unwrap();
        assert_eq!(decoded.text, target);
    }
}
