//! The global well-formedness invariant over an [`AfsMap`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::{AfsMap, InodeContent, InodeNum, PAGE_SIZE, ROOT_INO, S_IFDIR, S_IFMT, S_IFREG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Clause {
    /// (1) the root inode is mapped and is a directory
    RootExists,
    /// (2) no directory is the target of more than one entry; the root of none
    NoDirectoryHardlinks,
    /// (3) every inode is stored under its own number
    InoMatchesKey,
    /// (4) link counts match the entries referencing each inode
    LinkCount,
    /// (5) file size agrees with the attached pages
    FileSize,
    /// the type bits of `i_mode` agree with the content kind
    ModeMatchesType,
    /// every directory entry targets a mapped inode
    DanglingEntry,
    /// every inode is reachable from the root, without cycles
    Reachability,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Clause::RootExists => "(1) root-exists",
            Clause::NoDirectoryHardlinks => "(2) no-directory-hardlinks",
            Clause::InoMatchesKey => "(3) ino-matches-key",
            Clause::LinkCount => "(4) link-count",
            Clause::FileSize => "(5) file-size",
            Clause::ModeMatchesType => "mode-matches-type",
            Clause::DanglingEntry => "dangling-entry",
            Clause::Reachability => "reachability",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub clause: Clause,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.clause, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    /// Distinct violated clauses, ordered.
    pub fn clauses(&self) -> Vec<Clause> {
        let set: BTreeSet<Clause> = self.violations.iter().map(|v| v.clause).collect();
        set.into_iter().collect()
    }

    fn push(&mut self, clause: Clause, detail: String) {
        self.violations.push(Violation { clause, detail });
    }
}

pub fn invariant_holds(m: &AfsMap) -> bool {
    check_invariant(m).holds()
}

pub fn check_invariant(m: &AfsMap) -> InvariantReport {
    let mut report = InvariantReport::default();

    match m.get(ROOT_INO) {
        None => report.push(Clause::RootExists, "root inode not mapped".into()),
        Some(root) if !root.is_dir() => {
            report.push(Clause::RootExists, "root inode is not a directory".into())
        }
        Some(_) => {}
    }

    // entry references per target, and child directories per directory
    let mut refs: BTreeMap<InodeNum, u32> = BTreeMap::new();
    let mut child_dirs: BTreeMap<InodeNum, u32> = BTreeMap::new();
    for (key, inode) in m.iter() {
        if let Some(entries) = inode.entries() {
            for (name, target) in entries {
                *refs.entry(*target).or_default() += 1;
                match m.get(*target) {
                    None => report.push(
                        Clause::DanglingEntry,
                        format!("entry {name} in {key} targets unmapped inode {target}"),
                    ),
                    Some(t) if t.is_dir() => *child_dirs.entry(key).or_default() += 1,
                    Some(_) => {}
                }
            }
        }
    }

    for (key, inode) in m.iter() {
        if inode.i_ino != key {
            report.push(
                Clause::InoMatchesKey,
                format!("inode stored at {key} has i_ino {}", inode.i_ino),
            );
        }
        let nrefs = refs.get(&key).copied().unwrap_or(0);
        match &inode.i_type {
            InodeContent::Dir(_) => {
                if key == ROOT_INO && nrefs > 0 {
                    report.push(
                        Clause::NoDirectoryHardlinks,
                        format!("root is referenced by {nrefs} entries"),
                    );
                } else if nrefs > 1 {
                    report.push(
                        Clause::NoDirectoryHardlinks,
                        format!("directory {key} is referenced by {nrefs} entries"),
                    );
                }
                let expected = 2 + child_dirs.get(&key).copied().unwrap_or(0);
                if inode.i_nlink != expected {
                    report.push(
                        Clause::LinkCount,
                        format!("directory {key} has i_nlink {}, expected {expected}", inode.i_nlink),
                    );
                }
                if inode.i_mode & S_IFMT != S_IFDIR {
                    report.push(
                        Clause::ModeMatchesType,
                        format!("directory {key} has mode {:#o}", inode.i_mode),
                    );
                }
            }
            InodeContent::File(pages) => {
                if inode.i_nlink != nrefs {
                    report.push(
                        Clause::LinkCount,
                        format!("file {key} has i_nlink {}, referenced {nrefs} times", inode.i_nlink),
                    );
                }
                if inode.i_mode & S_IFMT != S_IFREG {
                    report.push(
                        Clause::ModeMatchesType,
                        format!("file {key} has mode {:#o}", inode.i_mode),
                    );
                }
                let expected_pages = inode.i_size.div_ceil(PAGE_SIZE as u64);
                if pages.len() as u64 != expected_pages {
                    report.push(
                        Clause::FileSize,
                        format!(
                            "file {key} of size {} has {} pages, expected {expected_pages}",
                            inode.i_size,
                            pages.len()
                        ),
                    );
                } else if let Some(last) = pages.last() {
                    let used = (inode.i_size - (pages.len() as u64 - 1) * PAGE_SIZE as u64) as usize;
                    if last.bytes()[used..].iter().any(|b| *b != 0) {
                        report.push(
                            Clause::FileSize,
                            format!("file {key} has non-zero bytes past its size"),
                        );
                    }
                }
            }
        }
    }

    if let Some(root) = m.get(ROOT_INO).filter(|r| r.is_dir()) {
        let mut seen: BTreeSet<InodeNum> = BTreeSet::from([ROOT_INO]);
        let mut queue: VecDeque<&super::AfsInode> = VecDeque::from([root]);
        while let Some(dir) = queue.pop_front() {
            for target in dir.entries().into_iter().flat_map(|e| e.values()) {
                let Some(t) = m.get(*target) else { continue };
                if t.is_dir() {
                    if !seen.insert(*target) {
                        report.push(
                            Clause::Reachability,
                            format!("directory {target} reached twice (cycle or shared parent)"),
                        );
                        continue;
                    }
                    queue.push_back(t);
                } else {
                    seen.insert(*target);
                }
            }
        }
        for (key, _) in m.iter() {
            if !seen.contains(&key) {
                report.push(Clause::Reachability, format!("inode {key} unreachable from root"));
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AfsInode, DirEntries, Filename, Timestamp, VfsPage};

    fn dir(ino: u32, entries: &[(&str, u32)], nlink: u32) -> AfsInode {
        AfsInode {
            i_type: InodeContent::Dir(
                entries
                    .iter()
                    .map(|(n, i)| (Filename::new(*n).unwrap(), InodeNum(*i)))
                    .collect::<DirEntries>(),
            ),
            i_ino: InodeNum(ino),
            i_nlink: nlink,
            i_size: 0,
            i_mode: S_IFDIR | 0o755,
            i_ctime: Timestamp(0),
            i_mtime: Timestamp(0),
        }
    }

    fn file(ino: u32, nlink: u32, size: u64, pages: Vec<VfsPage>) -> AfsInode {
        AfsInode {
            i_type: InodeContent::File(pages),
            i_ino: InodeNum(ino),
            i_nlink: nlink,
            i_size: size,
            i_mode: S_IFREG | 0o644,
            i_ctime: Timestamp(0),
            i_mtime: Timestamp(0),
        }
    }

    fn map(inodes: Vec<AfsInode>) -> AfsMap {
        let mut m = AfsMap::new();
        for i in inodes {
            m.insert(i);
        }
        m
    }

    #[test]
    fn empty_map_lacks_root() {
        let r = check_invariant(&AfsMap::new());
        assert_eq!(r.clauses(), vec![Clause::RootExists]);
    }

    #[test]
    fn lone_root_holds() {
        assert!(invariant_holds(&AfsMap::with_root()));
        assert!(!invariant_holds(&map(vec![dir(1, &[], 1)])));
    }

    #[test]
    fn directory_hardlink_is_rejected() {
        let m = map(vec![
            dir(1, &[("x", 2), ("y", 3)], 4),
            dir(2, &[("c", 4)], 3),
            dir(3, &[("c", 4)], 3),
            dir(4, &[], 2),
        ]);
        let r = check_invariant(&m);
        assert!(r.clauses().contains(&Clause::NoDirectoryHardlinks), "{r:?}");
    }

    #[test]
    fn file_hardlinks_are_fine() {
        let m = map(vec![dir(1, &[("a", 2), ("b", 2)], 2), file(2, 2, 0, vec![])]);
        assert!(invariant_holds(&m));
        let m = map(vec![dir(1, &[("a", 2), ("b", 2)], 2), file(2, 1, 0, vec![])]);
        assert_eq!(check_invariant(&m).clauses(), vec![Clause::LinkCount]);
    }

    #[test]
    fn key_mismatch() {
        let mut m = AfsMap::with_root();
        m.insert_at(InodeNum(9), file(2, 0, 0, vec![]));
        let clauses = check_invariant(&m).clauses();
        assert!(clauses.contains(&Clause::InoMatchesKey));
    }

    #[test]
    fn file_size_and_pages() {
        let ok = map(vec![dir(1, &[("f", 2)], 2), file(2, 1, 10, vec![VfsPage::zeroed()])]);
        assert!(invariant_holds(&ok));
        let missing = map(vec![dir(1, &[("f", 2)], 2), file(2, 1, 4097, vec![VfsPage::zeroed()])]);
        assert_eq!(check_invariant(&missing).clauses(), vec![Clause::FileSize]);
        let mut bytes = vec![0u8; PAGE_SIZE];
        bytes[20] = 1;
        let dirty = map(vec![
            dir(1, &[("f", 2)], 2),
            file(2, 1, 10, vec![VfsPage::new(bytes).unwrap()]),
        ]);
        assert_eq!(check_invariant(&dirty).clauses(), vec![Clause::FileSize]);
    }

    #[test]
    fn dangling_and_unreachable() {
        let m = map(vec![dir(1, &[("f", 7)], 2)]);
        assert!(check_invariant(&m).clauses().contains(&Clause::DanglingEntry));
        let m = map(vec![dir(1, &[], 2), file(2, 0, 0, vec![])]);
        assert_eq!(check_invariant(&m).clauses(), vec![Clause::Reachability]);
    }

    #[test]
    fn cycle_is_detected() {
        let m = map(vec![dir(1, &[("a", 2)], 3), dir(2, &[("b", 3)], 3), dir(3, &[("c", 2)], 3)]);
        let clauses = check_invariant(&m).clauses();
        assert!(clauses.contains(&Clause::NoDirectoryHardlinks));
        assert!(clauses.contains(&Clause::Reachability));
    }

    #[test]
    fn diagnostics_are_deterministic() {
        let m = map(vec![dir(1, &[("f", 7), ("g", 2)], 1), file(2, 3, 5, vec![])]);
        assert_eq!(check_invariant(&m), check_invariant(&m));
    }
}
