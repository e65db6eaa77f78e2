//! Desk-scale laboratory for aligning a toy autoregressive policy with
//! combined outcome-level and stepwise binary feedback on synthetic
//! multi-step arithmetic problems.
//!
//! The pipeline is organized bottom-up:
//!
//! - [`exprcheck`] — parse final answers into a small expression language and
//!   decide mathematical equivalence with exact rational arithmetic.
//! - [`tasks`] — generate synthetic arithmetic-chain problems with
//!   ground-truth stepwise solutions, plus JSONL ingestion.
//! - [`judge`] — outcome and per-step binary correctness signals: an exact
//!   rule oracle and a line-delimited external-judge protocol.
//! - [`policy`] — a log-linear autoregressive policy over a small vocabulary
//!   with seeded sampling and closed-form gradients.
//! - [`losses`] — outcome-level and stepwise value functions and losses with
//!   exact gradients, plus a rejection-finetuning baseline.
//! - [`trainer`] — the iterative generate / assess / label / train loop with
//!   an AdamW-style optimizer and warmup + cosine schedule.
//! - [`evalsuite`] — greedy and majority-vote accuracy metrics and stepwise
//!   error-rate reports.
//! - [`config`] — strict JSON run configuration shared by the CLI.

pub mod config;
pub mod evalsuite;
pub mod exprcheck;
pub mod judge;
pub mod losses;
pub mod policy;
pub mod tasks;
pub mod trainer;
pub mod util;
