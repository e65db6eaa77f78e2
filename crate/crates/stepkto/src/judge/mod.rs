//! Binary feedback signals: outcome correctness and per-step correctness.
//!
//! Solutions are segmented at lines beginning with `## Step`; the final
//! answer line forms its own final segment. The rule oracle labels every
//! intermediate step (the final segment is covered by the outcome signal)
//! by its own arithmetic: a step is positive exactly when the equation it
//! states re-evaluates, so a step after an earlier mistake is still judged
//! on its own claimed inputs rather than against the reference chain.
//!
//! Rollouts from an untrained policy are routinely garbage, so missing or
//! unparseable answers score 0 instead of erroring.

pub mod external;

pub use external::{ExternalJudge, JudgeError, StepVerdict};

use crate::exprcheck::{equivalent, extract_boxed, parse_answer};
use crate::tasks::Problem;

/// Marker that opens a reasoning step line.
pub const STEP_MARKER: &str = "## Step";
/// Marker that opens the final-answer line.
pub const FINAL_MARKER: &str = "The final answer";

/// A solution split into reasoning segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionView {
    pub raw_text: String,
    /// Raw segments, markers and separators included; concatenating them
    /// reproduces `raw_text` byte for byte.
    pub steps: Vec<String>,
    pub boxed_answer: Option<String>,
}

impl SolutionView {
    /// Number of intermediate steps, i.e. all segments but the final one.
    pub fn intermediate_count(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

/// Byte offsets where a new segment begins (offset 0 excluded). Boundaries
/// sit at line starts, which in the policy's vocabulary always coincide with
/// token boundaries.
pub fn segment_offsets(text: &str) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut final_start: Option<usize> = None;
    let mut line_start = 0usize;
    for line in text.split_inclusive('\n') {
        let content = line.strip_suffix('\n').unwrap_or(line);
        if line_start > 0 && content.starts_with(STEP_MARKER) {
            offsets.push(line_start);
        }
        if content.starts_with(FINAL_MARKER) {
            final_start = Some(line_start);
        }
        line_start += line.len();
    }
    if let Some(fs) = final_start {
        if fs > 0 && !offsets.contains(&fs) {
            offsets.push(fs);
        }
    }
    offsets.sort_unstable();
    offsets
}

/// Splits a solution into steps. Text before the first marker is prepended
/// to step 1; the final segment (holding the boxed answer, if any) is the
/// final step. A markerless text is a single step.
pub fn segment_steps(solution_text: &str) -> SolutionView {
    let offsets = segment_offsets(solution_text);
    let mut steps = Vec::with_capacity(offsets.len() + 1);
    let mut prev = 0usize;
    for &off in &offsets {
        steps.push(solution_text[prev..off].to_string());
        prev = off;
    }
    steps.push(solution_text[prev..].to_string());
    let boxed_answer = extract_boxed(solution_text).ok().flatten();
    SolutionView { raw_text: solution_text.to_string(), steps, boxed_answer }
}

/// Outcome correctness: 1 iff a boxed answer is present, parseable and
/// mathematically equivalent to the ground truth.
pub fn outcome_correct(solution: &SolutionView, truth: &Problem) -> bool {
    let Some(boxed) = &solution.boxed_answer else {
        return false;
    };
    let (Ok(candidate), Ok(reference)) = (parse_answer(boxed), parse_answer(&truth.final_answer))
    else {
        return false;
    };
    equivalent(&candidate, &reference).unwrap_or(false)
}

/// Extracts the claim portion of a step segment: everything after the first
/// `:` of a marker line, or the whole segment when no marker leads it.
fn step_claim(segment: &str) -> &str {
    if segment.starts_with(STEP_MARKER) {
        match segment.find(':') {
            Some(pos) => &segment[pos + 1..],
            None => "",
        }
    } else {
        segment
    }
}

/// Validity of one step's own arithmetic: the text must state an equation
/// whose sides are parseable and exactly equal.
fn step_claim_valid(segment: &str) -> bool {
    let claim = step_claim(segment);
    let Some(eq) = claim.rfind('=') else {
        return false;
    };
    let (lhs, rhs) = (claim[..eq].trim(), claim[eq + 1..].trim());
    if lhs.is_empty() || rhs.is_empty() {
        return false;
    }
    let (Ok(a), Ok(b)) = (parse_answer(lhs), parse_answer(rhs)) else {
        return false;
    };
    equivalent(&a, &b).unwrap_or(false)
}

/// One label per intermediate step; the final step is excluded (it is covered
/// by the outcome signal). The reference solution is not consulted: each
/// step's stated equation is recomputed exactly on its own claimed inputs.
pub fn step_labels_rule(solution: &SolutionView, _truth: &Problem) -> Vec<bool> {
    let n = solution.intermediate_count();
    solution.steps[..n].iter().map(|s| step_claim_valid(s)).collect()
}

/// 1-based index of the first negative intermediate step under the rule
/// oracle, or -1 when every label is positive.
pub fn earliest_error(solution: &SolutionView, truth: &Problem) -> i64 {
    match step_labels_rule(solution, truth).iter().position(|ok| !ok) {
        Some(pos) => (pos + 1) as i64,
        None => -1,
    }
}
