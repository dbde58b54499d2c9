use std::fmt;

use serde::{Deserialize, Serialize};

use super::ScriptError;
use crate::model::ErrorCode;

/// One decision the simulator would otherwise have to make on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureEvent {
    /// Succeed, writing at least this many buffered records to the medium
    /// (more when the buffer would otherwise exceed its capacity).
    FlushOk(usize),
    /// Fail with `code` after writing up to `applied` records; the record
    /// being submitted never lands.
    FlushFail { code: ErrorCode, applied: usize },
    /// Fail to allocate buffer memory.
    AllocFail,
}

impl FailureEvent {
    /// Codes a flush may fail with.
    pub const FLUSH_CODES: [ErrorCode; 2] = [ErrorCode::Io, ErrorCode::NoSpc];
}

impl fmt::Display for FailureEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureEvent::FlushOk(0) => f.write_str("ok"),
            FailureEvent::FlushOk(n) => write!(f, "ok {n}"),
            FailureEvent::FlushFail { code, applied } => write!(f, "fail {code} {applied}"),
            FailureEvent::AllocFail => f.write_str("allocfail"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FailureSchedule {
    events: Vec<FailureEvent>,
}

impl FailureSchedule {
    pub fn new(events: Vec<FailureEvent>) -> Result<Self, ScriptError> {
        for (i, ev) in events.iter().enumerate() {
            if let FailureEvent::FlushFail { code, .. } = ev {
                if !FailureEvent::FLUSH_CODES.contains(code) {
                    return Err(ScriptError::new(i + 1, format!("flush cannot fail with {code}")));
                }
            }
        }
        Ok(FailureSchedule { events })
    }

    pub fn events(&self) -> &[FailureEvent] {
        &self.events
    }

    pub fn get(&self, i: usize) -> Option<FailureEvent> {
        self.events.get(i).copied()
    }

    /// Parses one event per line: `ok [n]`, `fail <code> <applied>`,
    /// `allocfail`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut events = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let count = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| ScriptError::new(line, format!("expected a count, found {s:?}")))
            };
            let ev = match words.as_slice() {
                ["ok"] => FailureEvent::FlushOk(0),
                ["ok", n] => FailureEvent::FlushOk(count(n)?),
                ["fail", code, applied] => {
                    let code = ErrorCode::parse(code)
                        .filter(|c| FailureEvent::FLUSH_CODES.contains(c))
                        .ok_or_else(|| ScriptError::new(line, format!("flush cannot fail with {code:?}")))?;
                    FailureEvent::FlushFail {
                        code,
                        applied: count(applied)?,
                    }
                }
                ["allocfail"] => FailureEvent::AllocFail,
                _ => return Err(ScriptError::new(line, format!("unrecognised event {content:?}"))),
            };
            events.push(ev);
        }
        Ok(FailureSchedule { events })
    }

    pub fn to_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }
}
