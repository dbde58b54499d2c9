//! Bounded breadth-first exploration of every specification outcome.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::model::{canonical_json, check_invariant, AfsState, Filename, Timestamp, Violation};
use crate::nondet::EnumBudget;
use crate::ops::{afs_fsync, afs_lookup, afs_unlink, blank_vnode, root_vnode, vfs_create};
use crate::update::combined_state;

/// Mode passed to every explored create.
const EXPLORE_MODE: u32 = 0o644;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExploreOp {
    Create(Filename),
    Unlink(Filename),
    Lookup(Filename),
    Fsync,
}

impl fmt::Display for ExploreOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExploreOp::Create(n) => write!(f, "create {n}"),
            ExploreOp::Unlink(n) => write!(f, "unlink {n}"),
            ExploreOp::Lookup(n) => write!(f, "lookup {n}"),
            ExploreOp::Fsync => f.write_str("fsync"),
        }
    }
}

impl FromStr for ExploreOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let name = |n: &str| Filename::parse_escaped(n);
        match words.as_slice() {
            ["create", n] => Ok(ExploreOp::Create(name(n)?)),
            ["unlink", n] => Ok(ExploreOp::Unlink(name(n)?)),
            ["lookup", n] => Ok(ExploreOp::Lookup(name(n)?)),
            ["fsync"] => Ok(ExploreOp::Fsync),
            _ => Err(format!("unrecognised operation {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreConfig {
    pub depth: usize,
    pub alphabet: Vec<ExploreOp>,
    /// `max_predicate_samples` bounds both inode-number and size sampling.
    pub budget: EnumBudget,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExploreReport {
    /// Distinct states visited, the initial one included.
    pub states: usize,
    /// New distinct states per level, level 0 first.
    pub per_level: Vec<usize>,
    /// Canonical state and violations for each failing state.
    pub violations: Vec<(String, Vec<Violation>)>,
    /// Calls whose outcome set was cut off by the budget.
    pub truncated_calls: usize,
}

impl ExploreReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("states {}\n", self.states);
        for (i, n) in self.per_level.iter().enumerate() {
            out.push_str(&format!("level {i}: {n}\n"));
        }
        out.push_str(&format!("truncated calls {}\n", self.truncated_calls));
        for (_, vs) in &self.violations {
            for v in vs {
                out.push_str(&format!("violation {v}\n"));
            }
        }
        out.push_str(&format!("violations {}\n", self.violations.len()));
        out
    }
}

/// Every successor state of `pre` under `op`, run at time `t`.
pub(crate) fn successors(pre: &AfsState, op: &ExploreOp, t: Timestamp, budget: EnumBudget) -> (Vec<AfsState>, bool) {
    let s = pre.with_time(t);
    let Some(root) = root_vnode(&s) else {
        return (Vec::new(), false);
    };
    match op {
        ExploreOp::Create(n) => {
            let e = vfs_create(&s, &root, n, EXPLORE_MODE, &blank_vnode()).enumerate(budget);
            (e.outcomes.into_iter().map(|o| o.state).collect(), e.truncated)
        }
        ExploreOp::Unlink(n) => {
            let e = afs_unlink(&s, &root, n).enumerate(budget);
            (e.outcomes.into_iter().map(|o| o.state).collect(), e.truncated)
        }
        ExploreOp::Lookup(n) => {
            // lookup never changes the state
            let e = afs_lookup(&s, &root, n).enumerate(budget);
            (vec![s], e.truncated)
        }
        ExploreOp::Fsync => {
            let e = afs_fsync(&s).enumerate(budget);
            (e.outcomes.into_iter().map(|(st, _)| st).collect(), e.truncated)
        }
    }
}

/// Explores `depth` levels from `initial`; level `d` runs at time `d`.
pub fn explore(initial: &AfsState, config: &ExploreConfig) -> ExploreReport {
    let mut report = ExploreReport::default();
    let mut seen: HashSet<String> = HashSet::new();
    let audit = |state: &AfsState, key: String, report: &mut ExploreReport| {
        let inv = check_invariant(&combined_state(state));
        if !inv.holds() {
            report.violations.push((key, inv.violations));
        }
    };

    let key = canonical_json(initial);
    seen.insert(key.clone());
    audit(initial, key, &mut report);
    report.per_level.push(1);
    let mut frontier = vec![initial.clone()];

    for level in 1..=config.depth {
        let t = Timestamp(level as u64);
        let mut next = Vec::new();
        for pre in &frontier {
            for op in &config.alphabet {
                let (succ, truncated) = successors(pre, op, t, config.budget);
                if truncated {
                    report.truncated_calls += 1;
                }
                for st in succ {
                    let key = canonical_json(&st);
                    if seen.insert(key.clone()) {
                        audit(&st, key, &mut report);
                        next.push(st);
                    }
                }
            }
        }
        report.per_level.push(next.len());
        frontier = next;
    }
    report.states = seen.len();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ops(list: &[&str]) -> Vec<ExploreOp> {
        list.iter().map(|s| s.parse().unwrap()).collect()
    }

    fn config(depth: usize, list: &[&str]) -> ExploreConfig {
        ExploreConfig {
            depth,
            alphabet: ops(list),
            budget: EnumBudget::new(100_000, 2).unwrap(),
        }
    }

    /// Depth-first recount: the set of states reachable in exactly `d` steps,
    /// collected level by level without a shared visited set.
    fn recount(s: &AfsState, level: usize, depth: usize, cfg: &ExploreConfig, acc: &mut Vec<BTreeSet<String>>) {
        acc[level].insert(canonical_json(s));
        if level == depth {
            return;
        }
        for op in &cfg.alphabet {
            let (succ, _) = successors(s, op, Timestamp(level as u64 + 1), cfg.budget);
            for st in succ {
                recount(&st, level + 1, depth, cfg, acc);
            }
        }
    }

    #[test]
    fn depth_zero() {
        let r = explore(&AfsState::fresh(), &config(0, &["create a", "fsync"]));
        assert_eq!(r.states, 1);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn depth_two_create_fsync() {
        let cfg = config(2, &["create a", "fsync"]);
        let r = explore(&AfsState::fresh(), &cfg);
        assert!(r.violations.is_empty(), "{}", r.to_text());
        let mut acc = vec![BTreeSet::new(); 3];
        recount(&AfsState::fresh(), 0, 2, &cfg, &mut acc);
        // states carry their level's timestamp, so levels never overlap
        let total: BTreeSet<&String> = acc.iter().flatten().collect();
        assert_eq!(r.states, total.len());
        assert_eq!(r.per_level, acc.iter().map(|l| l.len()).collect::<Vec<_>>());
    }

    #[test]
    fn recount_matches_with_unlink_and_lookup() {
        let cfg = config(2, &["create a", "unlink a", "lookup a", "fsync"]);
        let r = explore(&AfsState::fresh(), &cfg);
        let mut acc = vec![BTreeSet::new(); 3];
        recount(&AfsState::fresh(), 0, 2, &cfg, &mut acc);
        assert_eq!(r.states, acc.iter().flatten().collect::<BTreeSet<_>>().len());
        assert!(r.violations.is_empty());
    }

    #[test]
    fn violations_are_reported() {
        let mut broken = AfsState::fresh();
        broken.a_medium_afs = crate::model::AfsMap::new();
        let r = explore(&broken, &config(1, &["fsync"]));
        assert!(!r.violations.is_empty());
        assert!(r.to_text().contains("(1) root-exists"));
    }

    #[test]
    fn parses_ops() {
        assert_eq!("create a".parse::<ExploreOp>().unwrap().to_string(), "create a");
        assert!("mkdir a".parse::<ExploreOp>().is_err());
        assert!("create".parse::<ExploreOp>().is_err());
    }
}
