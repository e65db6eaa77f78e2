//! Token vocabulary for the task grammar.
//!
//! Tokens are short strings (digits, operator symbols, operator words,
//! the step and boxed-answer markers, whitespace) plus a zero-width
//! end-of-sequence token. Encoding is greedy longest-match, which is the
//! identity round trip on everything the task generator and the ground-truth
//! renderer emit. No token other than `"\n"` contains a newline, so line
//! starts always fall on token boundaries.

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// Hard cap on vocabulary size; feature packing relies on it.
pub const MAX_VOCAB: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("cannot encode input at byte {offset}: {snippet:?}")]
    Encode { offset: usize, snippet: String },
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    eos: TokenId,
    /// Token ids sorted by surface length, longest first, zero-width
    /// excluded; drives longest-match encoding.
    #[serde(skip)]
    match_order: Vec<u32>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>, eos: TokenId) -> Result<Self, VocabError> {
        if tokens.len() > MAX_VOCAB {
            return Err(VocabError::Invalid(format!(
                "{} tokens exceeds the maximum of {MAX_VOCAB}",
                tokens.len()
            )));
        }
        if (eos as usize) >= tokens.len() {
            return Err(VocabError::Invalid("eos id out of range".to_string()));
        }
        for (i, a) in tokens.iter().enumerate() {
            if a.contains('\n') && a != "\n" {
                return Err(VocabError::Invalid(format!(
                    "token {i:?} embeds a newline; only the newline token may"
                )));
            }
            for (j, b) in tokens.iter().enumerate() {
                if i != j && a == b {
                    return Err(VocabError::Invalid(format!("duplicate token {a:?}")));
                }
            }
        }
        let mut vocab = Vocab { tokens, eos, match_order: Vec::new() };
        vocab.rebuild_match_order();
        Ok(vocab)
    }

    pub(crate) fn rebuild_match_order(&mut self) {
        let mut order: Vec<u32> =
            (0..self.tokens.len() as u32).filter(|&i| !self.tokens[i as usize].is_empty()).collect();
        order.sort_by(|&a, &b| {
            self.tokens[b as usize]
                .len()
                .cmp(&self.tokens[a as usize].len())
                .then(a.cmp(&b))
        });
        self.match_order = order;
    }

    /// The task vocabulary: digits, operator symbols, punctuation,
    /// whitespace, the step and final-answer markers, the operator words
    /// used in prompts, and end-of-sequence.
    pub fn task_default() -> Vocab {
        let mut tokens: Vec<String> = ('0'..='9').map(|c| c.to_string()).collect();
        for s in [
            "+", "-", "*", "/", "=", ".", " ", "\n",
            "## Step:",
            "The final answer is: $\\boxed{",
            "}$",
            "Start with ",
            "Add ",
            "Subtract ",
            "Multiply by ",
            "Divide by ",
            "", // end-of-sequence
        ] {
            tokens.push(s.to_string());
        }
        let eos = (tokens.len() - 1) as TokenId;
        Vocab::new(tokens, eos).expect("task vocabulary is valid")
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Greedy longest-match tokenization.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        let mut ids = Vec::new();
        let mut pos = 0usize;
        'outer: while pos < text.len() {
            let rest = &text[pos..];
            for &id in &self.match_order {
                let tok = &self.tokens[id as usize];
                if rest.starts_with(tok.as_str()) {
                    ids.push(id);
                    pos += tok.len();
                    continue 'outer;
                }
            }
            let snippet: String = rest.chars().take(12).collect();
            return Err(VocabError::Encode { offset: pos, snippet });
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&id| self.tokens[id as usize].as_str()).collect()
    }
}
