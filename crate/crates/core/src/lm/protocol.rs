//! Line-delimited JSON protocol spoken between the pipeline and an external
//! scorer process over the child's stdin/stdout.
//!
//! Requests:
//!
//! ```text
//! {"id":1,"op":"logprob","text":["the","cat"]}
//! {"id":2,"op":"cond","target":["sat"],"condition":["the","cat"]}
//! {"id":0,"op":"ping"}
//! ```
//!
//! Responses echo the request id: `{"id":1,"logprob":-3.2}`,
//! `{"id":0,"pong":true}` or `{"id":2,"error":"..."}`. A line that cannot be
//! parsed as a request is answered with id `-1`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{LmError, Scorer};

/// Error text sent back for unparseable request lines.
pub const MALFORMED: &str = "malformed request";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: i64,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Op {
    Logprob {
        text: Vec<String>,
    },
    Cond {
        target: Vec<String>,
        condition: Vec<String>,
    },
    Ping,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Logprob { id: i64, logprob: f64 },
    Pong { id: i64 },
    Error { id: i64, error: String },
}

#[derive(Serialize, Deserialize)]
struct RawResponse {
    id: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pong: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl Response {
    pub fn id(&self) -> i64 {
        match self {
            Response::Logprob { id, .. } | Response::Pong { id } | Response::Error { id, .. } => *id,
        }
    }

    pub fn to_line(&self) -> String {
        let raw = match self {
            Response::Logprob { id, logprob } => RawResponse {
                id: *id,
                logprob: Some(*logprob),
                pong: None,
                error: None,
            },
            Response::Pong { id } => RawResponse {
                id: *id,
                logprob: None,
                pong: Some(true),
                error: None,
            },
            Response::Error { id, error } => RawResponse {
                id: *id,
                logprob: None,
                pong: None,
                error: Some(error.clone()),
            },
        };
        serde_json::to_string(&raw).expect("response serializes")
    }

    /// Parses one response line; exactly one payload field must be present.
    pub fn parse(line: &str) -> Result<Self, LmError> {
        let violation = |reason: &str| LmError::Protocol {
            reason: reason.to_string(),
            line: Some(line.to_string()),
        };
        let raw: RawResponse = serde_json::from_str(line).map_err(|e| violation(&e.to_string()))?;
        match (raw.logprob, raw.pong, raw.error) {
            (Some(logprob), None, None) => Ok(Response::Logprob { id: raw.id, logprob }),
            (None, Some(true), None) => Ok(Response::Pong { id: raw.id }),
            (None, None, Some(error)) => Ok(Response::Error { id: raw.id, error }),
            _ => Err(violation("expected exactly one of logprob, pong or error")),
        }
    }
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

/// Answers one request line using `scorer`.
pub fn respond<S: Scorer + ?Sized>(scorer: &mut S, line: &str) -> Response {
    let Ok(req) = serde_json::from_str::<Request>(line) else {
        return Response::Error {
            id: -1,
            error: MALFORMED.to_string(),
        };
    };
    let id = req.id;
    let result = match &req.op {
        Op::Ping => return Response::Pong { id },
        Op::Logprob { text } => scorer.logprob_total(text),
        Op::Cond { target, condition } => scorer.conditional_total(target, condition),
    };
    match result {
        Ok(logprob) if logprob.is_finite() => Response::Logprob { id, logprob },
        Ok(_) => Response::Error {
            id,
            error: "non-finite score".to_string(),
        },
        Err(e) => Response::Error {
            id,
            error: e.to_string(),
        },
    }
}

/// Serves requests from `input` until end of stream, flushing after every response.
pub fn serve<S, R, W>(scorer: &mut S, input: R, mut output: W) -> io::Result<()>
where
    S: Scorer + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = respond(scorer, &line);
        writeln!(output, "{}", resp.to_line())?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let r = Request {
            id: 3,
            op: Op::Cond {
                target: vec!["b".into()],
                condition: vec!["a".into()],
            },
        };
        assert_eq!(r.to_line(), r#"{"id":3,"op":"cond","target":["b"],"condition":["a"]}"#);
        assert_eq!(Request { id: 0, op: Op::Ping }.to_line(), r#"{"id":0,"op":"ping"}"#);
        let back: Request = serde_json::from_str(&r.to_line()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn response_parsing() {
        assert_eq!(
            Response::parse(r#"{"id":4,"logprob":-1.5}"#).unwrap(),
            Response::Logprob { id: 4, logprob: -1.5 }
        );
        assert_eq!(
            Response::parse(r#"{"id":0,"pong":true}"#).unwrap(),
            Response::Pong { id: 0 }
        );
        assert!(Response::parse(r#"{"id":0}"#).is_err());
        assert!(Response::parse(r#"{"id":0,"pong":true,"logprob":1.0}"#).is_err());
        assert!(Response::parse("not json").is_err());
    }
}
