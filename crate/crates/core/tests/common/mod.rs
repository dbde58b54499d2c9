#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};

use afs_core::model::{
    Action, AfsInode, AfsMap, AfsState, DirEntries, Filename, InodeContent, InodeNum, Timestamp, UpdateRecord,
    S_IFDIR, S_IFREG,
};
use afs_core::nondet::Nondet;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn afs_bin() -> &'static str {
    env!("CARGO_BIN_EXE_afs")
}

pub fn afs<P: AsRef<Path>>(dir: P, args: &[&str]) -> Output {
    Command::new(afs_bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

// ---- random states -------------------------------------------------------

fn random_inode(rng: &mut ChaCha8Rng, ino: u32) -> AfsInode {
    let t = Timestamp(rng.gen_range(0..1000));
    if rng.gen_bool(0.3) {
        let entries: DirEntries = (0..rng.gen_range(0..3))
            .map(|i| (Filename::new(format!("e{i}")).unwrap(), InodeNum(rng.gen_range(1..9))))
            .collect();
        AfsInode {
            i_type: InodeContent::Dir(entries),
            i_ino: InodeNum(ino),
            i_nlink: 2,
            i_size: rng.gen_range(0..100),
            i_mode: S_IFDIR | 0o755,
            i_ctime: t,
            i_mtime: t,
        }
    } else {
        AfsInode {
            i_type: InodeContent::File(Vec::new()),
            i_ino: InodeNum(ino),
            i_nlink: rng.gen_range(0..3),
            i_size: 0,
            i_mode: S_IFREG | 0o644,
            i_ctime: t,
            i_mtime: t,
        }
    }
}

/// A record touching one to three distinct inodes among 1..=8.
pub fn random_record(rng: &mut ChaCha8Rng) -> UpdateRecord {
    let mut keys: Vec<u32> = (1..=8).collect();
    keys.shuffle(rng);
    let n = rng.gen_range(1..=3);
    let bindings = keys[..n]
        .iter()
        .map(|k| {
            let action = if rng.gen_bool(0.2) {
                Action::Remove
            } else {
                Action::Put(random_inode(rng, *k))
            };
            (InodeNum(*k), action)
        })
        .collect();
    UpdateRecord::new(bindings).unwrap()
}

/// Arbitrary states: no well-formedness is assumed.
pub fn random_state(rng: &mut ChaCha8Rng, max_pending: usize) -> AfsState {
    let mut medium = AfsMap::with_root();
    for ino in 2..=rng.gen_range(1..6u32) {
        medium.insert(random_inode(rng, ino));
    }
    AfsState {
        a_is_readonly: false,
        a_current_time: Timestamp(rng.gen_range(0..1000)),
        a_medium_afs: medium,
        a_medium_updates: (0..rng.gen_range(0..=max_pending)).map(|_| random_record(rng)).collect(),
    }
}

// ---- independent update semantics ---------------------------------------

/// Applies bindings to a plain map, independently of the library.
pub fn oracle_apply(m: &BTreeMap<InodeNum, AfsInode>, u: &UpdateRecord) -> BTreeMap<InodeNum, AfsInode> {
    let mut out = m.clone();
    for (k, a) in u.bindings() {
        match a {
            Action::Put(i) => {
                out.insert(*k, i.clone());
            }
            Action::Remove => {
                out.remove(k);
            }
        }
    }
    out
}

pub fn plain(m: &AfsMap) -> BTreeMap<InodeNum, AfsInode> {
    m.iter().map(|(k, v)| (k, v.clone())).collect()
}

pub fn oracle_combined(s: &AfsState) -> BTreeMap<InodeNum, AfsInode> {
    s.a_medium_updates.iter().fold(plain(&s.a_medium_afs), |m, u| oracle_apply(&m, u))
}

/// Medium after applying the first `k` pending records.
pub fn oracle_prefix(s: &AfsState, k: usize) -> BTreeMap<InodeNum, AfsInode> {
    s.a_medium_updates[..k].iter().fold(plain(&s.a_medium_afs), |m, u| oracle_apply(&m, u))
}

// ---- random outcome trees ------------------------------------------------

/// A finite computation over small integers, with its own set semantics.
#[derive(Debug, Clone)]
pub enum Tree {
    Pure(u8),
    Empty,
    Select(Vec<u8>),
    Choice(Box<Tree>, Box<Tree>),
    /// bind with continuation `x -> { x + d, (x * m) mod 32 }`
    Bind(Box<Tree>, u8, u8),
    /// bind with a continuation that discards odd values
    Filter(Box<Tree>),
}

pub fn random_tree(rng: &mut ChaCha8Rng, depth: u32) -> Tree {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        return match rng.gen_range(0..6) {
            0 => Tree::Empty,
            1 | 2 => Tree::Pure(rng.gen_range(0..32)),
            _ => Tree::Select((0..rng.gen_range(1..5)).map(|_| rng.gen_range(0..32)).collect()),
        };
    }
    let kind = rng.gen_range(0..4);
    let a = Box::new(random_tree(rng, depth - 1));
    match kind {
        1 => Tree::Bind(a, rng.gen_range(0..4), rng.gen_range(1..5)),
        2 => Tree::Filter(a),
        _ => Tree::Choice(a, Box::new(random_tree(rng, depth - 1))),
    }
}

pub fn step(x: u8, d: u8, m: u8) -> [u8; 2] {
    [(x + d) % 32, x.wrapping_mul(m) % 32]
}

pub fn denote(t: &Tree) -> BTreeSet<u8> {
    match t {
        Tree::Pure(x) => BTreeSet::from([*x]),
        Tree::Empty => BTreeSet::new(),
        Tree::Select(v) => v.iter().copied().collect(),
        Tree::Choice(a, b) => denote(a).union(&denote(b)).copied().collect(),
        Tree::Bind(a, d, m) => denote(a).into_iter().flat_map(|x| step(x, *d, *m)).collect(),
        Tree::Filter(a) => denote(a).into_iter().filter(|x| x % 2 == 0).collect(),
    }
}

pub fn build(t: &Tree) -> Nondet<u8> {
    match t {
        Tree::Pure(x) => Nondet::pure(*x),
        Tree::Empty => Nondet::empty(),
        Tree::Select(v) => Nondet::select(v.clone()).unwrap(),
        Tree::Choice(a, b) => Nondet::choice(build(a), build(b)),
        Tree::Bind(a, d, m) => {
            let (d, m) = (*d, *m);
            build(a).bind(move |x| Nondet::select(step(x, d, m)).unwrap())
        }
        Tree::Filter(a) => build(a).bind(|x| if x % 2 == 0 { Nondet::pure(x) } else { Nondet::empty() }),
    }
}

pub fn set_of(m: &Nondet<u8>) -> BTreeSet<u8> {
    m.enumerate_exact().unwrap().into_iter().collect()
}
