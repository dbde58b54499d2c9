//! Operation scripts and their execution.
//!
//! One operation per line:
//!
//! ```text
//! create <parent-path> <name> <mode-hex>
//! unlink <parent-path> <name>
//! lookup <parent-path> <name>
//! fsync
//! ```
//!
//! Names and path components use the escaped form (`\xNN`). Paths are
//! resolved through the buffer-overlaid view at the time the line runs.

use std::fmt;
use std::num::NonZeroUsize;

use thiserror::Error;

use super::{alpha, FailureSchedule, ImplState, OpCall, OpOutcome, Step, Trace};
use crate::model::{AfsMap, Filename, InodeNum, Timestamp, Vnode, ROOT_INO, S_IFMT, S_IFREG};

/// Nanoseconds between consecutive steps.
pub const STEP_NANOS: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl ScriptError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        ScriptError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScriptOp {
    Create { parent: String, name: Filename, mode: u32 },
    Unlink { parent: String, name: Filename },
    Lookup { parent: String, name: Filename },
    Fsync,
}

impl fmt::Display for ScriptOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptOp::Create { parent, name, mode } => write!(f, "create {parent} {name} {mode:x}"),
            ScriptOp::Unlink { parent, name } => write!(f, "unlink {parent} {name}"),
            ScriptOp::Lookup { parent, name } => write!(f, "lookup {parent} {name}"),
            ScriptOp::Fsync => f.write_str("fsync"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    /// Operations with their source line numbers.
    ops: Vec<(usize, ScriptOp)>,
}

impl Script {
    /// Numbers the operations 1, 2, ... as if written one per line.
    pub fn from_ops(ops: impl IntoIterator<Item = ScriptOp>) -> Self {
        Script {
            ops: ops.into_iter().enumerate().map(|(i, op)| (i + 1, op)).collect(),
        }
    }

    pub fn ops(&self) -> impl Iterator<Item = &ScriptOp> {
        self.ops.iter().map(|(_, op)| op)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn prefix(&self, n: usize) -> Script {
        Script {
            ops: self.ops[..n.min(self.ops.len())].to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        self.ops().map(|op| format!("{op}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Script, ScriptError> {
        let mut ops = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let name = |s: &str| {
                Filename::parse_escaped(s).map_err(|e| ScriptError::new(line, format!("bad name {s:?}: {e}")))
            };
            let path = |s: &str| {
                if s.starts_with('/') {
                    Ok(s.to_string())
                } else {
                    Err(ScriptError::new(line, format!("path {s:?} is not absolute")))
                }
            };
            let op = match words.as_slice() {
                ["create", parent, n, mode] => ScriptOp::Create {
                    parent: path(parent)?,
                    name: name(n)?,
                    mode: parse_mode(mode).map_err(|m| ScriptError::new(line, m))?,
                },
                ["unlink", parent, n] => ScriptOp::Unlink {
                    parent: path(parent)?,
                    name: name(n)?,
                },
                ["lookup", parent, n] => ScriptOp::Lookup {
                    parent: path(parent)?,
                    name: name(n)?,
                },
                ["fsync"] => ScriptOp::Fsync,
                [op, ..] => {
                    return Err(ScriptError::new(
                        line,
                        format!("unrecognised or malformed operation {op:?}"),
                    ))
                }
                [] => unreachable!("blank lines are skipped"),
            };
            ops.push((line, op));
        }
        Ok(Script { ops })
    }
}

fn parse_mode(s: &str) -> Result<u32, String> {
    let digits = s.strip_prefix("0x").unwrap_or(s);
    let mode = u32::from_str_radix(digits, 16).map_err(|_| format!("bad mode {s:?}"))?;
    let kind = mode & S_IFMT;
    if mode & !(S_IFMT | 0o7777) != 0 || (kind != 0 && kind != S_IFREG) {
        return Err(format!("mode {s:?} is not a regular-file mode"));
    }
    Ok(mode)
}

/// Resolves an absolute path to a directory in `m`.
pub fn resolve_dir(m: &AfsMap, path: &str) -> Option<InodeNum> {
    let mut cur = ROOT_INO;
    for comp in path.split('/').filter(|c| !c.is_empty()) {
        let name = Filename::parse_escaped(comp).ok()?;
        cur = *m.get(cur)?.entries()?.get(&name)?;
    }
    m.get(cur).filter(|i| i.is_dir()).map(|i| i.i_ino)
}

/// Runs `script` against a fresh simulator. Step `i` (from 0) executes at
/// time `(i + 1) * STEP_NANOS`.
pub fn run_script(
    script: &Script,
    schedule: &FailureSchedule,
    capacity: NonZeroUsize,
) -> Result<Trace, ScriptError> {
    let mut s = ImplState::new(capacity, schedule.clone());
    let mut steps = Vec::with_capacity(script.len());
    for (i, (line, op)) in script.ops.iter().enumerate() {
        let time = Timestamp((i as u64 + 1) * STEP_NANOS);
        let dir_vnode = |s: &ImplState, parent: &str| {
            resolve_dir(s.combined(), parent)
                .and_then(|ino| s.combined().get(ino))
                .map(Vnode::from_inode)
                .ok_or_else(|| ScriptError::new(*line, format!("{parent:?} is not a directory")))
        };
        let pre = alpha(&s);
        let (call, outcome) = match op {
            ScriptOp::Create { parent, name, mode } => {
                let vdir = dir_vnode(&s, parent)?;
                let vnode = Vnode::default();
                s.set_clock(time);
                let (vdir_out, vnode_out, result) = s.create(&vdir, name, *mode, &vnode);
                (
                    OpCall::Create {
                        time,
                        vdir,
                        name: name.clone(),
                        mode: *mode,
                        vnode,
                    },
                    OpOutcome::Create {
                        vdir: vdir_out,
                        vnode: vnode_out,
                        result,
                    },
                )
            }
            ScriptOp::Unlink { parent, name } => {
                let vdir = dir_vnode(&s, parent)?;
                s.set_clock(time);
                let (vdir_out, result) = s.unlink(&vdir, name);
                (
                    OpCall::Unlink {
                        time,
                        vdir,
                        name: name.clone(),
                    },
                    OpOutcome::Unlink { vdir: vdir_out, result },
                )
            }
            ScriptOp::Lookup { parent, name } => {
                let vdir = dir_vnode(&s, parent)?;
                s.set_clock(time);
                let result = s.lookup(&vdir, name);
                (
                    OpCall::Lookup {
                        time,
                        vdir,
                        name: name.clone(),
                    },
                    OpOutcome::Lookup { result },
                )
            }
            ScriptOp::Fsync => {
                s.set_clock(time);
                (OpCall::Fsync { time }, OpOutcome::Fsync { result: s.fsync() })
            }
        };
        steps.push(Step {
            op: call,
            pre,
            post: alpha(&s),
            outcome,
        });
    }
    Ok(Trace { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ErrorCode, NAME_MAX};
    use crate::sim::FailureEvent;
    use crate::update::combined_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn cap(n: usize) -> NonZeroUsize {
        NonZeroUsize::new(n).unwrap()
    }

    #[test]
    fn parses_and_prints() {
        let text = "# setup\ncreate / a 1a4\nlookup / a  # trailing\nunlink / a\nfsync\ncreate / b\\x20c 0x81a4\n";
        let s = Script::parse(text).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(Script::parse(&s.to_text()).unwrap().to_text(), s.to_text());
        assert!(s.to_text().contains("create / b\\x20c 81a4"));
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert_eq!(Script::parse("fsync\nmkdir / a\n").unwrap_err().line, 2);
        assert_eq!(Script::parse("create / a 41ed\n").unwrap_err().line, 1);
        assert_eq!(Script::parse("\n\ncreate a b 1a4\n").unwrap_err().line, 3);
        assert_eq!(Script::parse("create / a/b 1a4\n").unwrap_err().line, 1);
        assert_eq!(Script::parse("fsync now\n").unwrap_err().line, 1);
    }

    #[test]
    fn unresolvable_parent() {
        let s = Script::parse("create / a 1a4\ncreate /a b 1a4\n").unwrap();
        let e = run_script(&s, &FailureSchedule::default(), cap(4)).unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn empty_script_empty_trace() {
        let t = run_script(&Script::default(), &FailureSchedule::default(), cap(4)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn run_is_deterministic() {
        let s = Script::parse("create / a 1a4\ncreate / b 1a4\nfsync\nunlink / a\nlookup / b\n").unwrap();
        let sched = FailureSchedule::parse("ok\nfail eIO 1\n").unwrap();
        let a = run_script(&s, &sched, cap(1)).unwrap().to_text();
        let b = run_script(&s, &sched, cap(1)).unwrap().to_text();
        assert_eq!(a, b);
    }

    #[test]
    fn steps_chain_and_advance_time() {
        let s = Script::parse("create / a 1a4\nfsync\nlookup / a\n").unwrap();
        let t = run_script(&s, &FailureSchedule::default(), cap(4)).unwrap();
        for w in t.steps.windows(2) {
            assert_eq!(w[0].post, w[1].pre);
        }
        for (i, st) in t.steps.iter().enumerate() {
            assert_eq!(st.op.time(), Timestamp((i as u64 + 1) * STEP_NANOS));
            assert_eq!(st.post.a_current_time, st.op.time());
        }
    }

    #[test]
    fn unlink_then_fsync_clears_medium() {
        let s = Script::parse("create / a 1a4\nfsync\nunlink / a\nfsync\n").unwrap();
        let t = run_script(&s, &FailureSchedule::default(), cap(4)).unwrap();
        let last = &t.steps.last().unwrap().post;
        assert!(last.a_medium_updates.is_empty());
        let root = last.a_medium_afs.get(ROOT_INO).unwrap();
        assert!(root.entries().unwrap().is_empty());
    }

    /// Plain-map replay: the set of names in the root directory, changed only
    /// by operations that reported success.
    fn oracle_names(t: &Trace) -> BTreeSet<Filename> {
        let mut names = BTreeSet::new();
        for st in &t.steps {
            match (&st.op, &st.outcome) {
                (OpCall::Create { name, .. }, OpOutcome::Create { result: Ok(()), .. }) => {
                    names.insert(name.clone());
                }
                (OpCall::Unlink { name, .. }, OpOutcome::Unlink { result: Ok(()), .. }) => {
                    names.remove(name);
                }
                _ => {}
            }
        }
        names
    }

    #[test]
    fn random_scripts_match_plain_map_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let names = ["a", "b", "c", "d"];
            let mut ops = Vec::new();
            for _ in 0..30 {
                let n = Filename::new(names[rng.gen_range(0..names.len())]).unwrap();
                let parent = "/".to_string();
                ops.push(match rng.gen_range(0..10) {
                    0..=3 => ScriptOp::Create { parent, name: n, mode: 0o644 },
                    4..=5 => ScriptOp::Unlink { parent, name: n },
                    6..=7 => ScriptOp::Lookup { parent, name: n },
                    8 => ScriptOp::Create {
                        parent,
                        name: Filename::new("z".repeat(NAME_MAX + 1)).unwrap(),
                        mode: 0o600,
                    },
                    _ => ScriptOp::Fsync,
                });
            }
            let events = (0..30)
                .map(|_| match rng.gen_range(0..10) {
                    0 => FailureEvent::AllocFail,
                    1 => FailureEvent::FlushFail { code: ErrorCode::NoSpc, applied: rng.gen_range(0..3) },
                    _ => FailureEvent::FlushOk(rng.gen_range(0..2)),
                })
                .collect();
            let script = Script::from_ops(ops);
            let sched = FailureSchedule::new(events).unwrap();
            let t = run_script(&script, &sched, cap(rng.gen_range(1..5))).unwrap();
            let last = t.steps.last().unwrap();
            let combined = combined_state(&last.post);
            let actual: BTreeSet<Filename> = combined
                .get(ROOT_INO)
                .unwrap()
                .entries()
                .unwrap()
                .keys()
                .cloned()
                .collect();
            assert_eq!(actual, oracle_names(&t));
            assert!(t.steps.iter().all(|s| s.post.a_medium_updates.len() <= 4));
        }
    }
}
