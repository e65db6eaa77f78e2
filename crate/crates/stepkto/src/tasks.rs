//! Synthetic multi-step arithmetic problems with ground-truth solutions.
//!
//! A problem is a chain of exact operations applied to a start value:
//!
//! ```text
//! prompt:  "Start with 7. Add 2. Subtract 9."
//! steps:   7+2=9   9-9=0
//! answer:  "0"
//! ```
//!
//! Two value profiles share this shape. [`Profile::Compact`] keeps every
//! value a single digit (interior values in 3..=9, the final value in 0..=2),
//! which keeps each rendered step inside the policy's feature window and
//! gives the training loop something it can actually learn. [`Profile::Wide`]
//! lets chains grow toward the `|value| <= 10^6` magnitude bound and is the
//! general-purpose generator. Generation is deterministic per seed and shards
//! by problem index, so parallel and serial generation agree.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_rational::Rational64;
use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::derive_seed;

/// Magnitude bound on every intermediate numerator.
pub const MAGNITUDE_BOUND: i64 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum TasksError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    fn phrase(self, operand: i64) -> String {
        match self {
            Op::Add => format!("Add {operand}."),
            Op::Sub => format!("Subtract {operand}."),
            Op::Mul => format!("Multiply by {operand}."),
            Op::Div => format!("Divide by {operand}."),
        }
    }

    pub fn apply(self, value: i64, operand: i64) -> Option<i64> {
        match self {
            Op::Add => value.checked_add(operand),
            Op::Sub => value.checked_sub(operand),
            Op::Mul => value.checked_mul(operand),
            Op::Div => {
                if operand == 0 || value % operand != 0 {
                    None
                } else {
                    Some(value / operand)
                }
            }
        }
    }
}

/// One ground-truth reasoning step: `text` is the rendered equation line
/// content, `value` the exact intermediate result after this step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub index: u32,
    pub text: String,
    pub value: Rational64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub prompt: String,
    pub ground_truth_steps: Vec<StepRecord>,
    pub final_answer: String,
    pub difficulty: u32,
}

impl Problem {
    /// Renders the ground-truth solution in the format the policy learns:
    /// one `## Step:` line per operation, then the boxed final answer.
    pub fn render_solution(&self) -> String {
        let mut out = String::new();
        for step in &self.ground_truth_steps {
            out.push_str("## Step:");
            out.push_str(&step.text);
            out.push('\n');
        }
        out.push_str("The final answer is: $\\boxed{");
        out.push_str(&self.final_answer);
        out.push_str("}$");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Single-digit chains: interior values in 3..=9, final value in 0..=2.
    #[default]
    Compact,
    /// Multi-digit chains bounded by [`MAGNITUDE_BOUND`].
    Wide,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub count: usize,
    pub difficulty: (u32, u32),
    pub seed: u64,
    pub profile: Profile,
}

/// Generates `count` problems in the default profile. Deterministic for a
/// fixed seed; `difficulty` is the inclusive range of chain lengths, each in
/// 2..=8.
pub fn generate(count: usize, difficulty: (u32, u32), seed: u64) -> Vec<Problem> {
    generate_with(&GenConfig { count, difficulty, seed, profile: Profile::default() })
}

pub fn generate_with(cfg: &GenConfig) -> Vec<Problem> {
    assert!(cfg.count >= 1, "count must be >= 1");
    let (lo, hi) = cfg.difficulty;
    assert!(
        (2..=8).contains(&lo) && lo <= hi && hi <= 8,
        "difficulty range must satisfy 2 <= lo <= hi <= 8"
    );
    (0..cfg.count).map(|i| generate_one(cfg, i as u64)).collect()
}

fn generate_one(cfg: &GenConfig, index: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "task", &[index]));
    let (lo, hi) = cfg.difficulty;
    let difficulty = rng.random_range(lo..=hi);
    let (start, moves) = match cfg.profile {
        Profile::Compact => compact_chain(&mut rng, difficulty),
        Profile::Wide => wide_chain(&mut rng, difficulty),
    };

    let mut prompt = format!("Start with {start}.");
    let mut steps = Vec::with_capacity(moves.len());
    let mut value = start;
    for (h, &(op, operand)) in moves.iter().enumerate() {
        prompt.push(' ');
        prompt.push_str(&op.phrase(operand));
        let next = op.apply(value, operand).expect("generator picks exact operations");
        steps.push(StepRecord {
            index: (h + 1) as u32,
            text: format!("{value}{}{operand}={next}", op.symbol()),
            value: Rational64::from_integer(next),
        });
        value = next;
    }

    Problem {
        id: format!("task-{:08x}-{index}", cfg.seed as u32),
        prompt,
        ground_truth_steps: steps,
        final_answer: value.to_string(),
        difficulty,
    }
}

/// Compact profile: every value is one digit. Interior steps keep the value
/// in 3..=9 so the final drop into 0..=2 doubles as the stop signal the
/// policy can read off the last result.
fn compact_chain(rng: &mut ChaCha8Rng, difficulty: u32) -> (i64, Vec<(Op, i64)>) {
    let start = rng.random_range(3..=9i64);
    let mut moves = Vec::with_capacity(difficulty as usize);
    let mut value = start;
    for h in 0..difficulty {
        let last = h + 1 == difficulty;
        let choices = if last { compact_final_moves(value) } else { compact_interior_moves(value) };
        let &(op, operand) = choices.choose(rng).expect("compact move set is never empty");
        value = op.apply(value, operand).expect("compact moves are exact");
        moves.push((op, operand));
    }
    (start, moves)
}

/// Feasible (op, operand) pairs from `v` that land in 3..=9.
fn compact_interior_moves(v: i64) -> Vec<(Op, i64)> {
    let mut out = Vec::new();
    for b in 1..=(9 - v) {
        out.push((Op::Add, b));
    }
    for b in 1..=(v - 3) {
        out.push((Op::Sub, b));
    }
    for m in 2..=9 {
        if v * m <= 9 {
            out.push((Op::Mul, m));
        }
    }
    for d in 2..=9 {
        if d <= v && v % d == 0 && v / d >= 3 {
            out.push((Op::Div, d));
        }
    }
    debug_assert!(!out.is_empty(), "no interior move from {v}");
    out
}

/// Feasible (op, operand) pairs from `v` (in 3..=9) that land in 0..=2.
fn compact_final_moves(v: i64) -> Vec<(Op, i64)> {
    let mut out = vec![(Op::Sub, v), (Op::Sub, v - 1), (Op::Sub, v - 2), (Op::Div, v)];
    if v % 2 == 0 && v / 2 >= 2 {
        out.push((Op::Div, v / 2));
    }
    out
}

/// Wide profile: values may grow to the magnitude bound; division only by
/// exact divisors, retrying the operator draw when an op is infeasible.
fn wide_chain(rng: &mut ChaCha8Rng, difficulty: u32) -> (i64, Vec<(Op, i64)>) {
    let start = rng.random_range(2..=20i64);
    let mut moves = Vec::with_capacity(difficulty as usize);
    let mut value = start;
    for _ in 0..difficulty {
        let (op, operand) = loop {
            match [Op::Add, Op::Sub, Op::Mul, Op::Div][rng.random_range(0..4)] {
                Op::Add => {
                    let b = rng.random_range(2..=50i64);
                    if value + b <= MAGNITUDE_BOUND {
                        break (Op::Add, b);
                    }
                }
                Op::Sub => {
                    let b = rng.random_range(2..=50i64);
                    if value - b >= -MAGNITUDE_BOUND {
                        break (Op::Sub, b);
                    }
                }
                Op::Mul => {
                    let m = rng.random_range(2..=12i64);
                    if value.abs() * m <= MAGNITUDE_BOUND {
                        break (Op::Mul, m);
                    }
                }
                Op::Div => {
                    let divisors: Vec<i64> = (2..=12).filter(|d| value % d == 0).collect();
                    if let Some(&d) = divisors.as_slice().choose(rng) {
                        break (Op::Div, d);
                    }
                }
            }
        };
        value = op.apply(value, operand).expect("wide moves are exact");
        moves.push((op, operand));
    }
    (start, moves)
}

// ---------------------------------------------------------------------------
// JSONL serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StepJson {
    index: u32,
    text: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
struct ProblemJson {
    id: String,
    prompt: String,
    steps: Vec<StepJson>,
    final_answer: String,
    difficulty: u32,
}

fn rational_to_string(q: &Rational64) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

fn rational_from_string(s: &str) -> Option<Rational64> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim().parse().ok()?, d.trim().parse().ok()?),
        None => (s.trim().parse().ok()?, 1i64),
    };
    if den == 0 {
        return None;
    }
    Some(Rational64::new(num, den))
}

pub fn save_jsonl(problems: &[Problem], path: &Path) -> Result<(), TasksError> {
    let io_err = |source| TasksError::Io { path: path.display().to_string(), source };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for p in problems {
        let row = ProblemJson {
            id: p.id.clone(),
            prompt: p.prompt.clone(),
            steps: p
                .ground_truth_steps
                .iter()
                .map(|s| StepJson {
                    index: s.index,
                    text: s.text.clone(),
                    value: rational_to_string(&s.value),
                })
                .collect(),
            final_answer: p.final_answer.clone(),
            difficulty: p.difficulty,
        };
        let line = serde_json::to_string(&row).expect("problem serializes");
        writeln!(file, "{line}")
            .map_err(|e| TasksError::Io { path: path.display().to_string(), source: e })?;
    }
    file.flush().map_err(|e| TasksError::Io { path: path.display().to_string(), source: e })
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Problem>, TasksError> {
    let file = std::fs::File::open(path).map_err(|source| TasksError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut problems = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line =
            line.map_err(|source| TasksError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ProblemJson = serde_json::from_str(&line)
            .map_err(|e| TasksError::Parse { line: lineno, msg: e.to_string() })?;
        let mut steps = Vec::with_capacity(row.steps.len());
        for s in row.steps {
            let value = rational_from_string(&s.value).ok_or_else(|| TasksError::Parse {
                line: lineno,
                msg: format!("bad rational {:?}", s.value),
            })?;
            steps.push(StepRecord { index: s.index, text: s.text, value });
        }
        problems.push(Problem {
            id: row.id,
            prompt: row.prompt,
            ground_truth_steps: steps,
            final_answer: row.final_answer,
            difficulty: row.difficulty,
        });
    }
    Ok(problems)
}
