//! Top-level operations as nondeterministic specifications.
//!
//! `afs_create` and `afs_fsync` are the core pair. `afs_lookup` and
//! `afs_unlink` are smaller companions built in the same style so that scripts
//! can exercise removal and negative lookups.
//!
//! Every operation reads the combined state (medium plus pending updates);
//! mutations go through [`afs_update`], which is where flushing and the
//! buffered-write error cases come from.

use std::sync::Arc;

use crate::model::{
    afs_inode_from_vnode, entry_size, updated_afs, Action, AfsInode, AfsMap, AfsState, ErrorCode,
    Filename, FsResult, InodeNum, Timestamp, UpdateRecord, Vnode, ROOT_INO, S_IFREG,
};
use crate::nondet::Nondet;
use crate::update::{afs_apply_updates_nondet, afs_update};

/// Errors `fsync` may report once some updates remain pending.
pub const FSYNC_ERRORS: [ErrorCode; 4] = [
    ErrorCode::Io,
    ErrorCode::NoMem,
    ErrorCode::NoSpc,
    ErrorCode::Overflow,
];

/// Errors any inode read may report.
pub const READ_ERRORS: [ErrorCode; 2] = [ErrorCode::Io, ErrorCode::NoMem];

/// Outcome of inode initialisation; both arms carry the state and vnode.
pub type InitResult = Result<(AfsState, Vnode), (AfsState, Vnode)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CreateResult {
    pub state: AfsState,
    pub vdir: Vnode,
    pub vnode: Vnode,
    pub result: FsResult<()>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnlinkResult {
    pub state: AfsState,
    pub vdir: Vnode,
    pub result: FsResult<()>,
}

pub type FsyncResult = (AfsState, FsResult<()>);

/// Allocates a fresh inode number and fills in `vnode`, or fails.
///
/// The new number is any value unmapped in the combined state other than 0
/// and the root; failure is always possible.
pub fn afs_init_inode(afs: &AfsState, vdir: &Vnode, vnode: &Vnode, mode: u32) -> Nondet<InitResult> {
    afs_init_inode_within(afs, vdir, vnode, mode, u32::MAX)
}

/// [`afs_init_inode`] over the inode-number space `2..=max_ino`.
pub fn afs_init_inode_within(
    afs: &AfsState,
    _vdir: &Vnode,
    vnode: &Vnode,
    mode: u32,
    max_ino: u32,
) -> Nondet<InitResult> {
    let combined = Arc::new(updated_afs(afs));
    let time = afs.a_current_time;
    let initialised = move |n: u32| Vnode {
        v_ino: InodeNum(n),
        v_nlink: 1,
        v_size: 0,
        v_mode: mode,
        v_ctime: time,
        v_mtime: time,
    };

    let member = {
        let afs = afs.clone();
        let combined = Arc::clone(&combined);
        move |r: &InitResult| match r {
            Ok((s, v)) => {
                *s == afs
                    && v.v_ino.0 >= 2
                    && v.v_ino.0 <= max_ino
                    && !combined.contains(v.v_ino)
                    && *v == initialised(v.v_ino.0)
            }
            Err(_) => false,
        }
    };
    let sampler = {
        let afs = afs.clone();
        move || {
            let afs = afs.clone();
            let combined = Arc::clone(&combined);
            (2..=max_ino)
                .filter(move |n| !combined.contains(InodeNum(*n)))
                .map(move |n| Ok((afs.clone(), initialised(n))))
        }
    };
    let allocated = Nondet::select_where("unused inode number", member, sampler);
    Nondet::choice(allocated, Nondet::pure(Err((afs.clone(), *vnode))))
}

/// Reads an inode from the combined state. Reads may fail with
/// [`READ_ERRORS`] whether or not the inode exists.
pub fn read_afs_inode(afs: &AfsState, ino: InodeNum) -> Nondet<FsResult<AfsInode>> {
    let errors = READ_ERRORS.iter().map(|e| Err(*e));
    let candidates: Vec<FsResult<AfsInode>> = match updated_afs(afs).get(ino) {
        Some(inode) => std::iter::once(Ok(inode.clone())).chain(errors).collect(),
        None => errors.collect(),
    };
    Nondet::select(candidates).expect("read errors are always possible")
}

/// Creates a regular file `name` in directory `vdir`.
pub fn afs_create(
    afs: &AfsState,
    vdir: &Vnode,
    name: &Filename,
    mode: u32,
    vnode: &Vnode,
) -> Nondet<CreateResult> {
    if afs.a_is_readonly {
        return Nondet::pure(CreateResult {
            state: afs.clone(),
            vdir: *vdir,
            vnode: *vnode,
            result: Err(ErrorCode::RoFs),
        });
    }
    let vdir = *vdir;
    let name = name.clone();
    let input = (afs.clone(), *vnode);
    afs_init_inode(afs, &vdir, vnode, mode | S_IFREG).bind_inverted(
        move |r| match r {
            Err((afs, vnode)) => Nondet::pure(CreateResult {
                state: afs,
                vdir,
                vnode,
                result: Err(ErrorCode::NFile),
            }),
            Ok((afs, vnode)) => create_in_dir(afs, vdir, name.clone(), vnode),
        },
        // every outcome after a successful init returns the initialised vnode
        move |x: &CreateResult| vec![Err(input.clone()), Ok((input.0.clone(), x.vnode))],
    )
}

fn create_in_dir(afs: AfsState, vdir: Vnode, name: Filename, vnode: Vnode) -> Nondet<CreateResult> {
    let failed = move |afs: &AfsState, e: ErrorCode| {
        Nondet::pure(CreateResult {
            state: afs.clone(),
            vdir,
            vnode,
            result: Err(e),
        })
    };
    read_afs_inode(&afs, vdir.v_ino).bind(move |r| match r {
        Err(e) => failed(&afs, e),
        Ok(dir) => {
            let Some(dir) = dir.i_dir_update(|mut d| {
                d.insert(name.clone(), vnode.v_ino);
                d
            }) else {
                return Nondet::empty();
            };
            let afs = afs.clone();
            let name = name.clone();
            Nondet::choice(Nondet::pure(Ok(dir)), Nondet::pure(Err(ErrorCode::NameTooLong))).bind(
                move |r| match r {
                    Err(e) => failed(&afs, e),
                    Ok(dir) => create_sized(afs.clone(), vdir, &name, vnode, dir),
                },
            )
        }
    })
}

/// Candidate new directory sizes: every value above `old`, starting with
/// `old + entry_size(name)` and then ascending.
fn size_samples(old: u64, name: &Filename) -> impl Iterator<Item = u64> {
    let preferred = old.checked_add(entry_size(name));
    let rest = old.checked_add(1).map(|lo| lo..=u64::MAX).into_iter().flatten();
    preferred
        .into_iter()
        .chain(rest.filter(move |sz| Some(*sz) != preferred))
}

fn create_sized(
    afs: AfsState,
    vdir: Vnode,
    name: &Filename,
    vnode: Vnode,
    dir: AfsInode,
) -> Nondet<CreateResult> {
    let old = vdir.v_size;
    let sampler_name = name.clone();
    let sizes = Nondet::select_where(
        format!("sz > {old}"),
        move |r: &FsResult<u64>| matches!(r, Ok(sz) if *sz > old),
        move || size_samples(old, &sampler_name).map(Ok),
    );
    let representative = size_samples(old, name).next();
    Nondet::choice(sizes, Nondet::pure(Err(ErrorCode::Overflow))).bind_inverted(
        move |r| match r {
            Err(e) => Nondet::pure(CreateResult {
                state: afs.clone(),
                vdir,
                vnode,
                result: Err(e),
            }),
            Ok(newsz) => {
                let time = vnode.v_ctime;
                let dir = AfsInode {
                    i_ctime: time,
                    i_mtime: time,
                    i_size: newsz,
                    ..dir.clone()
                };
                let Some(inode) = afs_inode_from_vnode(&vnode) else {
                    return Nondet::empty();
                };
                let Ok(upd) = UpdateRecord::puts([inode, dir]) else {
                    return Nondet::empty();
                };
                afs_update(&afs, upd).map(move |(state, r)| match r {
                    Err(e) => CreateResult {
                        state,
                        vdir,
                        vnode,
                        result: Err(e),
                    },
                    Ok(()) => CreateResult {
                        state,
                        vdir: Vnode {
                            v_ctime: time,
                            v_mtime: time,
                            v_size: newsz,
                            ..vdir
                        },
                        vnode,
                        result: Ok(()),
                    },
                })
            }
        },
        // error outcomes after the size choice never retain the update, so
        // any admissible size reproduces them
        move |x: &CreateResult| match x.result {
            Ok(()) => vec![Ok(x.vdir.v_size)],
            Err(_) => std::iter::once(Err(ErrorCode::Overflow))
                .chain(representative.map(Ok))
                .collect(),
        },
    )
}

/// Looks up `name` in the combined-state directory `ino`.
fn entry_of(combined: &AfsMap, dir: InodeNum, name: &Filename) -> Option<InodeNum> {
    combined.get(dir)?.entries()?.get(name).copied()
}

/// `create` as the VFS issues it: a name already present in the parent is
/// rejected with `eExist` before the file system is consulted.
pub fn vfs_create(
    afs: &AfsState,
    vdir: &Vnode,
    name: &Filename,
    mode: u32,
    vnode: &Vnode,
) -> Nondet<CreateResult> {
    if entry_of(&updated_afs(afs), vdir.v_ino, name).is_some() {
        return Nondet::pure(CreateResult {
            state: afs.clone(),
            vdir: *vdir,
            vnode: *vnode,
            result: Err(ErrorCode::Exist),
        });
    }
    afs_create(afs, vdir, name, mode, vnode)
}

/// Propagates all pending updates to the medium.
pub fn afs_fsync(afs: &AfsState) -> Nondet<FsyncResult> {
    if afs.a_is_readonly {
        return Nondet::pure((afs.clone(), Err(ErrorCode::RoFs)));
    }
    afs_apply_updates_nondet(afs).bind(|s: AfsState| {
        if s.a_medium_updates.is_empty() {
            return Nondet::pure((s, Ok(())));
        }
        Nondet::select(FSYNC_ERRORS)
            .expect("non-empty error set")
            .map(move |e| {
                let mut s = s.clone();
                s.a_is_readonly = e == ErrorCode::Io;
                (s, Err(e))
            })
    })
}

pub fn afs_lookup(afs: &AfsState, vdir: &Vnode, name: &Filename) -> Nondet<FsResult<Vnode>> {
    let combined = updated_afs(afs);
    let found = entry_of(&combined, vdir.v_ino, name).and_then(|ino| combined.get(ino));
    match found {
        None => Nondet::pure(Err(ErrorCode::NotFound)),
        Some(inode) => Nondet::select(
            std::iter::once(Ok(Vnode::from_inode(inode))).chain(READ_ERRORS.iter().map(|e| Err(*e))),
        )
        .expect("non-empty"),
    }
}

/// Removes the entry `name` from `vdir`, dropping the target inode with its
/// last link.
pub fn afs_unlink(afs: &AfsState, vdir: &Vnode, name: &Filename) -> Nondet<UnlinkResult> {
    let unchanged = |e| {
        Nondet::pure(UnlinkResult {
            state: afs.clone(),
            vdir: *vdir,
            result: Err(e),
        })
    };
    if afs.a_is_readonly {
        return unchanged(ErrorCode::RoFs);
    }
    let combined = updated_afs(afs);
    let Some(dir) = combined.get(vdir.v_ino) else {
        return unchanged(ErrorCode::NotFound);
    };
    let Some(target) = entry_of(&combined, vdir.v_ino, name).and_then(|ino| combined.get(ino)) else {
        return unchanged(ErrorCode::NotFound);
    };
    if target.is_dir() {
        return unchanged(ErrorCode::IsDir);
    }

    let time = afs.a_current_time;
    let mut new_dir = dir
        .i_dir_update(|mut d| {
            d.remove(name);
            d
        })
        .expect("entry_of only succeeds on directories");
    new_dir.i_size = dir.i_size.saturating_sub(entry_size(name));
    new_dir.i_ctime = time;
    new_dir.i_mtime = time;
    let target_binding = if target.i_nlink <= 1 {
        (target.i_ino, Action::Remove)
    } else {
        (
            target.i_ino,
            Action::Put(AfsInode {
                i_nlink: target.i_nlink - 1,
                i_ctime: time,
                ..target.clone()
            }),
        )
    };
    let new_size = new_dir.i_size;
    let Ok(upd) = UpdateRecord::new(vec![(new_dir.i_ino, Action::Put(new_dir)), target_binding]) else {
        return Nondet::empty();
    };
    let vdir = *vdir;
    afs_update(afs, upd).map(move |(state, r)| match r {
        Err(e) => UnlinkResult {
            state,
            vdir,
            result: Err(e),
        },
        Ok(()) => UnlinkResult {
            state,
            vdir: Vnode {
                v_size: new_size,
                v_ctime: time,
                v_mtime: time,
                ..vdir
            },
            result: Ok(()),
        },
    })
}

/// The vnode the VFS would hold for the root directory of `afs`.
pub fn root_vnode(afs: &AfsState) -> Option<Vnode> {
    updated_afs(afs).get(ROOT_INO).map(Vnode::from_inode)
}

/// Convenience: a blank vnode for `create` to fill in.
pub fn blank_vnode() -> Vnode {
    Vnode {
        v_ino: InodeNum(0),
        v_nlink: 0,
        v_size: 0,
        v_mode: 0,
        v_ctime: Timestamp(0),
        v_mtime: Timestamp(0),
    }
}
