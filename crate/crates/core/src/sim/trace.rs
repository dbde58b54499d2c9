//! Recorded executions.
//!
//! On disk a trace is a header line followed by one block per step, each a
//! `=== step N` line and the step's canonical JSON.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{canonical_json_pretty, AfsState, Filename, FsResult, Timestamp, Vnode};

pub const TRACE_HEADER: &str = "# afs trace v1";
const STEP_MARKER: &str = "=== step ";

/// An operation together with every input handed to it, including the
/// timestamp the step runs at.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum OpCall {
    Create {
        time: Timestamp,
        vdir: Vnode,
        name: Filename,
        mode: u32,
        vnode: Vnode,
    },
    Unlink {
        time: Timestamp,
        vdir: Vnode,
        name: Filename,
    },
    Lookup {
        time: Timestamp,
        vdir: Vnode,
        name: Filename,
    },
    Fsync {
        time: Timestamp,
    },
}

impl OpCall {
    pub fn time(&self) -> Timestamp {
        match self {
            OpCall::Create { time, .. }
            | OpCall::Unlink { time, .. }
            | OpCall::Lookup { time, .. }
            | OpCall::Fsync { time } => *time,
        }
    }
}

/// Everything an operation returns besides the state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum OpOutcome {
    Create {
        vdir: Vnode,
        vnode: Vnode,
        result: FsResult<()>,
    },
    Unlink {
        vdir: Vnode,
        result: FsResult<()>,
    },
    Lookup {
        result: FsResult<Vnode>,
    },
    Fsync {
        result: FsResult<()>,
    },
}

impl OpOutcome {
    pub fn is_ok(&self) -> bool {
        match self {
            OpOutcome::Create { result, .. } | OpOutcome::Unlink { result, .. } | OpOutcome::Fsync { result } => {
                result.is_ok()
            }
            OpOutcome::Lookup { result } => result.is_ok(),
        }
    }
}

/// One executed call: abstract states on either side and what it returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub op: OpCall,
    pub pre: AfsState,
    pub post: AfsState,
    pub outcome: OpOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The first `n` steps.
    pub fn prefix(&self, n: usize) -> Trace {
        Trace {
            steps: self.steps[..n.min(self.steps.len())].to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(STEP_MARKER);
            out.push_str(&i.to_string());
            out.push('\n');
            out.push_str(&canonical_json_pretty(step));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == TRACE_HEADER => {}
            _ => {
                return Err(TraceError {
                    line: 1,
                    message: format!("expected header {TRACE_HEADER:?}"),
                })
            }
        }

        let mut steps = Vec::new();
        // (line of the marker, accumulated body)
        let mut block: Option<(usize, String)> = None;
        let finish = |block: Option<(usize, String)>, steps: &mut Vec<Step>| -> Result<(), TraceError> {
            if let Some((line, body)) = block {
                let step = serde_json::from_str(&body).map_err(|e| TraceError {
                    line: line + e.line(),
                    message: e.to_string(),
                })?;
                steps.push(step);
            }
            Ok(())
        };
        for (idx, l) in lines {
            let line = idx + 1;
            if let Some(n) = l.strip_prefix(STEP_MARKER) {
                finish(block.take(), &mut steps)?;
                if n.trim().parse::<usize>().ok() != Some(steps.len()) {
                    return Err(TraceError {
                        line,
                        message: format!("expected step {}, found {:?}", steps.len(), n.trim()),
                    });
                }
                block = Some((line, String::new()));
            } else if let Some((_, body)) = block.as_mut() {
                body.push_str(l);
                body.push('\n');
            } else if !l.trim().is_empty() {
                return Err(TraceError {
                    line,
                    message: "content before the first step".into(),
                });
            }
        }
        finish(block, &mut steps)?;
        Ok(Trace { steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ErrorCode;

    fn step(t: u64) -> Step {
        let s = AfsState::fresh();
        Step {
            op: OpCall::Fsync { time: Timestamp(t) },
            pre: s.clone(),
            post: s.with_time(Timestamp(t)),
            outcome: OpOutcome::Fsync { result: Err(ErrorCode::Io) },
        }
    }

    #[test]
    fn empty_trace_round_trips() {
        let t = Trace::default();
        assert_eq!(t.to_text(), "# afs trace v1\n");
        assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn steps_round_trip() {
        let t = Trace { steps: vec![step(1), step(2)] };
        let text = t.to_text();
        assert!(text.contains("\"result\": {\n      \"Err\": \"eIO\""));
        assert_eq!(Trace::parse(&text).unwrap(), t);
        assert_eq!(t.prefix(1).len(), 1);
    }

    #[test]
    fn parse_errors_have_lines() {
        assert_eq!(Trace::parse("nope\n").unwrap_err().line, 1);
        let text = Trace { steps: vec![step(1)] }.to_text().replace("=== step 0", "=== step 3");
        assert_eq!(Trace::parse(&text).unwrap_err().line, 2);
        let text = Trace { steps: vec![step(1)] }.to_text().replace("\"eIO\"", "\"eBogus\"");
        assert!(Trace::parse(&text).unwrap_err().line > 2);
    }
}
