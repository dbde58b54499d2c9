//! Listing the outcome set of a single specification call.

use std::fmt::Write as _;
use std::num::NonZeroUsize;

use serde::Serialize;
use thiserror::Error;

use crate::model::{canonical_json, AfsState, Filename, InodeNum};
use crate::nondet::{EnumBudget, Enumeration, Nondet, Outcome};
use crate::ops::{
    afs_fsync, afs_init_inode, afs_lookup, afs_unlink, blank_vnode, read_afs_inode, root_vnode, vfs_create,
};
use crate::sim::{run_script, FailureSchedule, Script};
use crate::update::afs_apply_updates_nondet;

pub const FIXTURES: [&str; 2] = ["fresh", "pending2"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerateError {
    #[error("unknown operation {0:?} (expected create, unlink, lookup, fsync, init, read or flush)")]
    UnknownOp(String),
    #[error("bad arguments for {op}: {message}")]
    BadArgs { op: String, message: String },
    #[error("state has no root directory")]
    NoRoot,
}

/// Named starting states: `fresh` holds only the root; `pending2` has two
/// buffered creates (`a`, then `b`) and nothing on the medium beyond the root.
pub fn fixture(name: &str) -> Option<AfsState> {
    match name {
        "fresh" => Some(AfsState::fresh()),
        "pending2" => {
            let script = Script::parse("create / a 1a4\ncreate / b 1a4\n").expect("fixed script");
            let cap = NonZeroUsize::new(8).expect("non-zero");
            let trace = run_script(&script, &FailureSchedule::default(), cap).expect("fixed script runs");
            trace.steps.last().map(|s| s.post.clone())
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumeratedOutcomes {
    /// One canonical line per outcome.
    pub lines: Vec<String>,
    pub truncated: bool,
}

impl EnumeratedOutcomes {
    fn from_enumeration<T: Outcome + Serialize>(e: Enumeration<T>) -> Self {
        EnumeratedOutcomes {
            lines: e.outcomes.iter().map(canonical_json).collect(),
            truncated: e.truncated,
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        let _ = writeln!(out, "outcomes {}", self.lines.len());
        let _ = writeln!(out, "truncated {}", self.truncated);
        out
    }
}

fn list<T: Outcome + Serialize>(m: Nondet<T>, budget: EnumBudget) -> EnumeratedOutcomes {
    EnumeratedOutcomes::from_enumeration(m.enumerate(budget))
}

/// Enumerates `op` with `args` on `state`. Directory arguments are always the
/// root.
pub fn enumerate_call(
    state: &AfsState,
    op: &str,
    args: &[String],
    budget: EnumBudget,
) -> Result<EnumeratedOutcomes, EnumerateError> {
    let bad = |message: &str| EnumerateError::BadArgs {
        op: op.to_string(),
        message: message.to_string(),
    };
    let name = |i: usize| -> Result<Filename, EnumerateError> {
        let raw = args.get(i).ok_or_else(|| bad("missing name"))?;
        Filename::parse_escaped(raw).map_err(|e| bad(&e))
    };
    let arity = |n: usize| if args.len() > n { Err(bad("too many arguments")) } else { Ok(()) };
    let root = || root_vnode(state).ok_or(EnumerateError::NoRoot);

    Ok(match op {
        "fsync" => {
            arity(0)?;
            list(afs_fsync(state), budget)
        }
        "flush" => {
            arity(0)?;
            list(afs_apply_updates_nondet(state), budget)
        }
        "create" => {
            arity(2)?;
            let mode = match args.get(1) {
                Some(m) => u32::from_str_radix(m.trim_start_matches("0x"), 16).map_err(|_| bad("bad mode"))?,
                None => 0o644,
            };
            let m = vfs_create(state, &root()?, &name(0)?, mode, &blank_vnode()).map(|r| {
                // serializable view of the result tuple
                (r.state, r.vdir, r.vnode, r.result)
            });
            list(m, budget)
        }
        "unlink" => {
            arity(1)?;
            list(
                afs_unlink(state, &root()?, &name(0)?).map(|r| (r.state, r.vdir, r.result)),
                budget,
            )
        }
        "lookup" => {
            arity(1)?;
            list(afs_lookup(state, &root()?, &name(0)?), budget)
        }
        "init" => {
            arity(0)?;
            let m = afs_init_inode(state, &root()?, &blank_vnode(), crate::model::S_IFREG | 0o644);
            list(m, budget)
        }
        "read" => {
            arity(1)?;
            let ino = args
                .first()
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| bad("expected an inode number"))?;
            list(read_afs_inode(state, InodeNum(ino)), budget)
        }
        other => return Err(EnumerateError::UnknownOp(other.to_string())),
    })
}
