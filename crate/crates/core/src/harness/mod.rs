//! Refinement checking of simulator traces against the specification.
//!
//! Each recorded step is replayed through the corresponding specification
//! operation on the abstracted pre-state, and the abstracted post-state plus
//! outputs must be a member of the resulting outcome set. Steps must also
//! chain, and every post-state must satisfy the global invariant.

mod enumerate;
mod explore;
mod fuzz;

use std::fmt;

pub use enumerate::{enumerate_call, fixture, EnumerateError, EnumeratedOutcomes, FIXTURES};
pub use explore::{explore, ExploreConfig, ExploreOp, ExploreReport};
pub use fuzz::{fuzz, generate_scenario, ConfigError, EventWeights, FuzzConfig, FuzzSummary, Scenario};

use crate::model::{canonical_json_pretty, check_invariant, AfsInode, Clause, Filename, ROOT_INO};
use crate::nondet::NondetError;
use crate::ops::{afs_fsync, afs_lookup, afs_unlink, vfs_create, CreateResult, UnlinkResult};
use crate::sim::{OpCall, OpOutcome, Step, Trace};
use crate::update::combined_state;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureReason {
    /// The step's post-state and outputs are not a permitted outcome.
    NotInSpecSet(String),
    InvariantViolated(Vec<Clause>),
    OracleMismatch(String),
    /// The step does not start where the previous one ended, or runs
    /// backwards in time.
    Discontinuity,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::NotInSpecSet(d) => write!(f, "not in spec outcome set ({d})"),
            FailureReason::InvariantViolated(cs) => {
                let names: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
                write!(f, "invariant violated: {}", names.join(", "))
            }
            FailureReason::OracleMismatch(d) => write!(f, "oracle mismatch: {d}"),
            FailureReason::Discontinuity => f.write_str("discontinuity with previous step"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    pub failing_step: Option<usize>,
    pub reason: Option<FailureReason>,
    /// Serialized failing step.
    pub witness: Option<String>,
}

impl Verdict {
    pub fn passed() -> Self {
        Verdict {
            pass: true,
            failing_step: None,
            reason: None,
            witness: None,
        }
    }

    pub fn failed(step: usize, reason: FailureReason, witness: &Step) -> Self {
        Verdict {
            pass: false,
            failing_step: Some(step),
            reason: Some(reason),
            witness: Some(canonical_json_pretty(witness)),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.failing_step, &self.reason) {
            (Some(i), Some(r)) => write!(f, "FAIL at step {i}: {r}"),
            _ => f.write_str("PASS"),
        }
    }
}

/// Exact membership of a recorded step in its specification outcome set.
pub fn step_membership(step: &Step) -> Result<bool, NondetError> {
    let pre = step.pre.with_time(step.op.time());
    let post = &step.post;
    match (&step.op, &step.outcome) {
        (
            OpCall::Create {
                vdir,
                name,
                mode,
                vnode,
                ..
            },
            OpOutcome::Create {
                vdir: vdir_out,
                vnode: vnode_out,
                result,
            },
        ) => vfs_create(&pre, vdir, name, *mode, vnode).contains(&CreateResult {
            state: post.clone(),
            vdir: *vdir_out,
            vnode: *vnode_out,
            result: *result,
        }),
        (OpCall::Unlink { vdir, name, .. }, OpOutcome::Unlink { vdir: vdir_out, result }) => {
            afs_unlink(&pre, vdir, name).contains(&UnlinkResult {
                state: post.clone(),
                vdir: *vdir_out,
                result: *result,
            })
        }
        (OpCall::Lookup { vdir, name, .. }, OpOutcome::Lookup { result }) => {
            if *post != pre {
                return Ok(false);
            }
            afs_lookup(&pre, vdir, name).contains(result)
        }
        (OpCall::Fsync { .. }, OpOutcome::Fsync { result }) => {
            afs_fsync(&pre).contains(&(post.clone(), *result))
        }
        _ => Ok(false),
    }
}

/// Whether the step is a permitted behaviour of the specification.
pub fn check_step(step: &Step) -> bool {
    matches!(step_membership(step), Ok(true))
}

/// Checks continuity, membership and the invariant for every step; the first
/// failure wins.
pub fn check_trace(trace: &Trace) -> Verdict {
    for (i, step) in trace.steps.iter().enumerate() {
        let chained = i == 0 || trace.steps[i - 1].post == step.pre;
        if !chained || step.op.time() < step.pre.a_current_time {
            return Verdict::failed(i, FailureReason::Discontinuity, step);
        }
        match step_membership(step) {
            Ok(true) => {}
            Ok(false) => return Verdict::failed(i, FailureReason::NotInSpecSet("no matching outcome".into()), step),
            Err(e) => return Verdict::failed(i, FailureReason::NotInSpecSet(e.to_string()), step),
        }
        let report = check_invariant(&combined_state(&step.post));
        if !report.holds() {
            return Verdict::failed(i, FailureReason::InvariantViolated(report.clauses()), step);
        }
    }
    Verdict::passed()
}

fn root_names(root: Option<&AfsInode>) -> Vec<Filename> {
    root.and_then(|r| r.entries())
        .map(|e| e.keys().cloned().collect())
        .unwrap_or_default()
}

/// Replays successful creates and unlinks of root entries on a plain name set
/// and compares it, and every lookup result, with the trace.
pub fn namespace_oracle(trace: &Trace) -> Verdict {
    let mut names = std::collections::BTreeSet::new();
    for (i, step) in trace.steps.iter().enumerate() {
        let in_root = |vdir: &crate::model::Vnode| vdir.v_ino == ROOT_INO;
        match (&step.op, &step.outcome) {
            (OpCall::Create { vdir, name, .. }, OpOutcome::Create { result: Ok(()), .. }) if in_root(vdir) => {
                names.insert(name.clone());
            }
            (OpCall::Unlink { vdir, name, .. }, OpOutcome::Unlink { result: Ok(()), .. }) if in_root(vdir) => {
                names.remove(name);
            }
            (OpCall::Lookup { vdir, name, .. }, OpOutcome::Lookup { result }) if in_root(vdir) => {
                let found = names.contains(name);
                let consistent = match result {
                    Ok(_) => found,
                    Err(crate::model::ErrorCode::NotFound) => !found,
                    Err(_) => found,
                };
                if !consistent {
                    let d = format!("lookup of {name} returned {result:?}");
                    return Verdict::failed(i, FailureReason::OracleMismatch(d), step);
                }
            }
            _ => {}
        }
        let combined = combined_state(&step.post);
        let actual = root_names(combined.get(ROOT_INO));
        if actual != names.iter().cloned().collect::<Vec<_>>() {
            let d = format!("root holds {} names, oracle expects {}", actual.len(), names.len());
            return Verdict::failed(i, FailureReason::OracleMismatch(d), step);
        }
    }
    Verdict::passed()
}
