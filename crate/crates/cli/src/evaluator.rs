//! External density evaluator speaking NDJSON over stdin/stdout.
//!
//! For each batch the parent starts `sh -c COMMAND`, writes one line
//! `{"params": [...]}` per point followed by a blank line, and closes stdin.
//! The child answers one line per point, in order, each either
//! `{"log_prior": r, "log_lik": [...]}` or `{"error": "message"}`.

use std::io::{BufRead, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use powerscale_core::moment_match::RowEvaluation;
use powerscale_core::oracle::ScalarModel;
use powerscale_core::{DensityEvaluator, PointEvaluation};

use crate::error::{CliError, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub params: Vec<f64>,
}

pub struct SubprocessEvaluator {
    command: String,
    timeout: Duration,
}

impl SubprocessEvaluator {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        SubprocessEvaluator {
            command: command.into(),
            timeout,
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn spawn(&self) -> Result<Child> {
        Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| CliError::SpawnFailure {
                command: self.command.clone(),
                reason: e.to_string(),
            })
    }

    /// Evaluates every row of `points` in one child process.
    pub fn evaluate_batch(&mut self, points: &DMatrix<f64>) -> Result<Vec<RowEvaluation>> {
        let mut payload = String::new();
        for row in points.row_iter() {
            let req = Request {
                params: row.iter().copied().collect(),
            };
            payload.push_str(&serde_json::to_string(&req).expect("finite floats serialize"));
            payload.push('\n');
        }
        payload.push('\n');

        let mut child = self.spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        // A child that exits early closes the pipe; its replies decide the outcome.
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(payload.as_bytes());
        });
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut out = String::new();
            let res = stdout.read_to_string(&mut out).map(|_| out);
            let _ = tx.send(res);
        });

        let output = match rx.recv_timeout(self.timeout) {
            Ok(res) => res,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(CliError::Timeout(self.timeout));
            }
        };
        let _ = writer.join();
        let _ = child.wait();
        let output = output.map_err(|e| CliError::ProtocolViolation {
            line: 1,
            detail: e.to_string(),
        })?;
        parse_replies(&output, points.nrows())
    }
}

fn parse_replies(output: &str, expected: usize) -> Result<Vec<RowEvaluation>> {
    let lines: Vec<&str> = output.trim_end_matches(['\n', '\r', ' ']).lines().collect();
    let lines = if output.trim().is_empty() {
        Vec::new()
    } else {
        lines
    };
    let mut replies = Vec::with_capacity(expected);
    for (i, line) in lines.iter().enumerate() {
        let lineno = i + 1;
        if lineno > expected {
            return Err(CliError::ProtocolViolation {
                line: lineno,
                detail: format!("expected {expected} replies, got {}", lines.len()),
            });
        }
        replies.push(
            parse_reply(line).map_err(|detail| CliError::ProtocolViolation {
                line: lineno,
                detail,
            })?,
        );
    }
    if replies.len() != expected {
        return Err(CliError::ProtocolViolation {
            line: replies.len() + 1,
            detail: format!("expected {expected} replies, got {}", replies.len()),
        });
    }
    Ok(replies)
}

fn parse_reply(line: &str) -> std::result::Result<RowEvaluation, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("reply is not a JSON object")?;
    if let Some(msg) = obj.get("error") {
        return Ok(Err(match msg {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }));
    }
    let log_prior = obj
        .get("log_prior")
        .and_then(Value::as_f64)
        .ok_or("missing numeric `log_prior`")?;
    let log_lik = obj
        .get("log_lik")
        .and_then(Value::as_array)
        .ok_or("missing array `log_lik`")?
        .iter()
        .map(|v| v.as_f64().ok_or("`log_lik` holds a non-number"))
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    if log_lik.is_empty() {
        return Err("`log_lik` is empty".into());
    }
    Ok(Ok(PointEvaluation { log_prior, log_lik }))
}

impl DensityEvaluator for SubprocessEvaluator {
    fn evaluate(&mut self, points: &DMatrix<f64>) -> powerscale_core::Result<Vec<RowEvaluation>> {
        self.evaluate_batch(points)
            .map_err(|e| powerscale_core::Error::EvaluatorBackend(e.to_string()))
    }
}

/// Child side of the protocol for a one-parameter model: answers requests
/// until a blank line or end of input.
pub fn serve<M: ScalarModel, R: BufRead, W: Write>(
    model: &M,
    input: R,
    mut out: W,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            break;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request { params }) if params.len() == 1 => {
                let theta = params[0];
                let log_prior = model.log_prior(theta);
                let log_lik = model.log_lik(theta);
                if log_prior.is_finite() && log_lik.iter().all(|v| v.is_finite()) {
                    serde_json::json!({ "log_prior": log_prior, "log_lik": log_lik })
                } else {
                    serde_json::json!({ "error": format!("theta = {theta} is outside the support") })
                }
            }
            Ok(Request { params }) => {
                serde_json::json!({ "error": format!("expected 1 parameter, got {}", params.len()) })
            }
            Err(e) => serde_json::json!({ "error": format!("bad request: {e}") }),
        };
        writeln!(out, "{reply}")?;
    }
    out.flush()
}
