use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::protocol::{Op, Request, Response};
use super::{LmError, Scorer};

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// A child process answering scoring requests one at a time.
#[derive(Debug)]
pub struct ExternalScorer {
    command: String,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: i64,
    timeout: Duration,
}

impl ExternalScorer {
    pub fn spawn(argv: &[String]) -> Result<Self, LmError> {
        Self::spawn_with_timeout(argv, DEFAULT_TIMEOUT)
    }

    pub fn spawn_with_timeout(argv: &[String], timeout: Duration) -> Result<Self, LmError> {
        let command = argv.join(" ");
        let spawn_err = |reason: String| LmError::Spawn {
            command: argv.join(" "),
            reason,
        };
        let (program, args) = argv.split_first().ok_or_else(|| spawn_err("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| spawn_err(e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut scorer = Self {
            command,
            child,
            stdin,
            lines: rx,
            next_id: 0,
            timeout,
        };
        match scorer.request(Op::Ping) {
            Ok(Response::Pong { .. }) => Ok(scorer),
            Ok(other) => Err(spawn_err(format!("unexpected ping response {}", other.to_line()))),
            Err(e) => Err(spawn_err(format!("health check failed: {e}"))),
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn request(&mut self, op: Op) -> Result<Response, LmError> {
        let id = self.next_id;
        self.next_id += 1;
        let line = Request { id, op }.to_line();
        let write = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush());
        if let Err(e) = write {
            return Err(LmError::Protocol {
                reason: format!("scorer closed its input: {e}"),
                line: None,
            });
        }
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                return Err(LmError::Protocol {
                    reason: format!("read failed: {e}"),
                    line: None,
                })
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(LmError::Protocol {
                    reason: format!("no response to request {id} within {:?}", self.timeout),
                    line: None,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(LmError::Protocol {
                    reason: format!("scorer exited before answering request {id}"),
                    line: None,
                })
            }
        };
        let resp = Response::parse(&reply)?;
        if resp.id() != id {
            return Err(LmError::Protocol {
                reason: format!("expected response id {id}, got {}", resp.id()),
                line: Some(reply),
            });
        }
        Ok(resp)
    }

    fn score(&mut self, op: Op) -> Result<f64, LmError> {
        match self.request(op)? {
            Response::Logprob { logprob, .. } => Ok(logprob),
            Response::Error { id, error } => Err(LmError::Remote { id, message: error }),
            other => Err(LmError::Protocol {
                reason: "expected a logprob response".into(),
                line: Some(other.to_line()),
            }),
        }
    }
}

impl Scorer for ExternalScorer {
    fn logprob_total(&mut self, text: &[String]) -> Result<f64, LmError> {
        self.score(Op::Logprob { text: text.to_vec() })
    }

    fn conditional_total(&mut self, target: &[String], condition: &[String]) -> Result<f64, LmError> {
        self.score(Op::Cond {
            target: target.to_vec(),
            condition: condition.to_vec(),
        })
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
