//! Asynchronous writes: nondeterministic propagation of pending updates to the
//! medium, and the generic state-update step every mutating operation uses.

use crate::model::{apply_update_in_place, updated_afs, AfsMap, AfsState, ErrorCode, FsResult, UpdateRecord};
use crate::nondet::{nondet_error, Nondet};

/// Errors a buffered update may report.
pub const UPDATE_ERRORS: [ErrorCode; 3] = [ErrorCode::Io, ErrorCode::NoSpc, ErrorCode::NoMem];

/// Every way of applying a prefix of the pending list to the medium: one
/// outcome per split point, `len + 1` in total.
pub fn afs_apply_updates_nondet(afs: &AfsState) -> Nondet<AfsState> {
    let mut outcomes = Vec::with_capacity(afs.a_medium_updates.len() + 1);
    let mut medium = afs.a_medium_afs.clone();
    for split in 0..=afs.a_medium_updates.len() {
        if split > 0 {
            apply_update_in_place(&afs.a_medium_updates[split - 1], &mut medium);
        }
        outcomes.push(AfsState {
            a_medium_afs: medium.clone(),
            a_medium_updates: afs.a_medium_updates[split..].to_vec(),
            ..afs.clone()
        });
    }
    // distinct by pending-list length
    Nondet::select(outcomes).expect("at least the empty split")
}

/// Appends `upd` to the pending list and flushes nondeterministically.
///
/// Branches whose pending list ends up empty succeed. Others may succeed, or
/// fail with one of [`UPDATE_ERRORS`] after dropping the last pending entry,
/// which is always `upd` because `upd` was appended last and only a prefix
/// was flushed.
pub fn afs_update(afs: &AfsState, upd: UpdateRecord) -> Nondet<(AfsState, FsResult<()>)> {
    let mut queued = afs.clone();
    queued.a_medium_updates.push(upd);
    afs_apply_updates_nondet(&queued).bind(|s: AfsState| {
        if s.a_medium_updates.is_empty() {
            return Nondet::pure((s, Ok(())));
        }
        let mut dropped = s.clone();
        dropped.a_medium_updates.pop();
        let errors = nondet_error(UPDATE_ERRORS, move |e| (dropped.clone(), Err(e)))
            .expect("non-empty error set");
        Nondet::choice(Nondet::pure((s, Ok(()))), errors)
    })
}

/// The hypothetical state with every pending update applied.
pub fn combined_state(afs: &AfsState) -> AfsMap {
    updated_afs(afs)
}
