//! Adapter for an external judge process speaking a line-delimited protocol.
//!
//! One request per line on the child's stdin:
//!
//! ```json
//! {"problem": "...", "answer": "...", "steps": ["...", "..."]}
//! ```
//!
//! One response per line on its stdout: a JSON array of verdicts, one per
//! intermediate step, field names fixed:
//!
//! ```json
//! [{"step": 1, "reflection": "...", "decision": "positive"}]
//! ```
//!
//! The verdict set must cover steps `1..=S-1` exactly; anything else is a
//! protocol error. Replies are awaited with a configurable timeout
//! (default 30 s).

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SolutionView;
use crate::tasks::Problem;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("failed to spawn judge {command:?}: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("judge protocol error: {0}")]
    Protocol(String),
    #[error("judge timed out after {0:?}")]
    Timeout(Duration),
    #[error("judge io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One step verdict as exchanged on the wire.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepVerdict {
    pub step: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
    pub decision: String,
}

#[derive(Serialize)]
struct Request<'a> {
    problem: &'a str,
    answer: &'a str,
    steps: Vec<&'a str>,
}

/// Handle on a spawned judge process. Owned by one worker at a time; spawn a
/// pool of handles for parallel evaluation.
pub struct ExternalJudge {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl ExternalJudge {
    /// Spawns `command` (program plus arguments) and wires up its standard
    /// streams. Stderr is inherited so judge diagnostics stay visible.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, JudgeError> {
        let (program, args) = command.split_first().ok_or_else(|| JudgeError::Protocol(
            "empty judge command".to_string(),
        ))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|source| JudgeError::Spawn { command: command.join(" "), source })?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, lines) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(ExternalJudge { child, stdin, lines, timeout })
    }

    /// Sends one request and maps the verdicts to booleans
    /// (positive -> true). The verdict index set must equal `1..=S-1`.
    pub fn step_labels(
        &mut self,
        solution: &SolutionView,
        truth: &Problem,
    ) -> Result<Vec<bool>, JudgeError> {
        let n = solution.intermediate_count();
        let request = Request {
            problem: &truth.prompt,
            answer: &truth.final_answer,
            steps: solution.steps[..n].iter().map(|s| s.as_str()).collect(),
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()?;

        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(JudgeError::Io(e)),
            Err(RecvTimeoutError::Timeout) => return Err(JudgeError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(JudgeError::Protocol("judge closed its output".to_string()))
            }
        };
        let verdicts: Vec<StepVerdict> = serde_json::from_str(reply.trim())
            .map_err(|e| JudgeError::Protocol(format!("bad verdict json: {e}")))?;
        verdicts_to_labels(&verdicts, n)
    }
}

impl Drop for ExternalJudge {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn verdicts_to_labels(verdicts: &[StepVerdict], expected: usize) -> Result<Vec<bool>, JudgeError> {
    if verdicts.len() != expected {
        return Err(JudgeError::Protocol(format!(
            "expected {expected} verdicts, got {}",
            verdicts.len()
        )));
    }
    let mut labels = vec![None; expected];
    for v in verdicts {
        let decision = match v.decision.as_str() {
            "positive" => true,
            "negative" => false,
            other => {
                return Err(JudgeError::Protocol(format!(
                    "unknown decision {other:?} for step {}",
                    v.step
                )))
            }
        };
        let idx = usize::try_from(v.step - 1)
            .ok()
            .filter(|&i| i < expected)
            .ok_or_else(|| JudgeError::Protocol(format!("step index {} out of range", v.step)))?;
        if labels[idx].replace(decision).is_some() {
            return Err(JudgeError::Protocol(format!("duplicate verdict for step {}", v.step)));
        }
    }
    Ok(labels.into_iter().map(|l| l.expect("all slots filled")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(step: i64, decision: &str) -> StepVerdict {
        StepVerdict { step, reflection: None, decision: decision.to_string() }
    }

    #[test]
    fn maps_positive_and_negative() {
        let labels =
            verdicts_to_labels(&[verdict(1, "positive"), verdict(2, "negative")], 2).unwrap();
        assert_eq!(labels, vec![true, false]);
    }

    #[test]
    fn order_does_not_matter() {
        let labels =
            verdicts_to_labels(&[verdict(2, "negative"), verdict(1, "positive")], 2).unwrap();
        assert_eq!(labels, vec![true, false]);
    }

    #[test]
    fn unknown_decision_is_protocol_error() {
        let err = verdicts_to_labels(&[verdict(1, "maybe")], 1).unwrap_err();
        assert!(matches!(err, JudgeError::Protocol(_)));
    }

    #[test]
    fn missing_or_duplicate_steps_are_protocol_errors() {
        let err =
            verdicts_to_labels(&[verdict(1, "positive"), verdict(3, "positive")], 3).unwrap_err();
        assert!(matches!(err, JudgeError::Protocol(_)));
        let err =
            verdicts_to_labels(&[verdict(1, "positive"), verdict(1, "positive")], 2).unwrap_err();
        assert!(matches!(err, JudgeError::Protocol(_)));
    }

    #[test]
    fn reflection_field_is_optional_on_the_wire() {
        let verdicts: Vec<StepVerdict> =
            serde_json::from_str(r#"[{"step":1,"decision":"positive"}]"#).unwrap();
        assert_eq!(verdicts_to_labels(&verdicts, 1).unwrap(), vec![true]);
        let verdicts: Vec<StepVerdict> = serde_json::from_str(
            r#"[{"step":1,"reflection":"looks right","decision":"positive"}]"#,
        )
        .unwrap();
        assert_eq!(verdicts[0].reflection.as_deref(), Some("looks right"));
    }
}
