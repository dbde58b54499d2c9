//! A deterministic buffered file system over a simulated medium.
//!
//! Mutations are queued as [`UpdateRecord`]s in a bounded write buffer and
//! reach the medium in FIFO order. Whatever the specification leaves open
//! (when flushes happen, where they fail, whether allocation fails) is decided
//! by an explicit [`FailureSchedule`], so a run is a pure function of its
//! script, schedule and buffer capacity.
//!
//! Events are consumed only by calls that reach the buffer. Calls rejected up
//! front (existing name, read-only, exhausted inode numbers, long names, size
//! overflow, missing entries) leave the cursor alone, and an exhausted
//! schedule behaves as an endless run of `ok`.

mod schedule;
mod script;
mod trace;

use std::num::NonZeroUsize;

pub use schedule::{FailureEvent, FailureSchedule};
pub use script::{resolve_dir, run_script, Script, ScriptError, ScriptOp, STEP_NANOS};
pub use trace::{OpCall, OpOutcome, Step, Trace, TraceError};

use crate::model::{
    apply_update_in_place, entry_size, Action, AfsInode, AfsMap, AfsState, ErrorCode, Filename,
    FsResult, InodeContent, InodeNum, Timestamp, UpdateRecord, Vnode, NAME_MAX, S_IFREG,
};

/// Default number of records the write buffer holds.
pub const DEFAULT_CAPACITY: usize = 4;

/// Lowest inode number handed out by allocation.
const FIRST_FREE_INO: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Medium {
    pub stored: AfsMap,
    pub flush_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteBuffer {
    entries: Vec<UpdateRecord>,
    capacity: NonZeroUsize,
}

impl WriteBuffer {
    pub fn entries(&self) -> &[UpdateRecord] {
        &self.entries
    }

    pub fn capacity(&self) -> usize {
        self.capacity.get()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ImplState {
    pub medium: Medium,
    pub buffer: WriteBuffer,
    pub readonly: bool,
    pub clock: Timestamp,
    /// Medium with every buffered record applied; what reads see.
    cache: AfsMap,
    schedule: FailureSchedule,
    cursor: usize,
    max_ino: u32,
}

impl ImplState {
    /// A freshly formatted file system holding only the root directory.
    pub fn new(capacity: NonZeroUsize, schedule: FailureSchedule) -> Self {
        let stored = AfsMap::with_root();
        ImplState {
            cache: stored.clone(),
            medium: Medium {
                stored,
                flush_count: 0,
            },
            buffer: WriteBuffer {
                entries: Vec::new(),
                capacity,
            },
            readonly: false,
            clock: Timestamp(0),
            schedule,
            cursor: 0,
            max_ino: u32::MAX,
        }
    }

    /// Restricts allocation to inode numbers up to `max_ino`.
    pub fn with_max_ino(mut self, max_ino: u32) -> Self {
        self.max_ino = max_ino;
        self
    }

    /// Buffer-overlaid view of the medium.
    pub fn combined(&self) -> &AfsMap {
        &self.cache
    }

    pub fn set_clock(&mut self, t: Timestamp) {
        self.clock = t;
    }

    /// Number of schedule events consumed so far.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    fn next_event(&mut self) -> FailureEvent {
        let ev = self.schedule.get(self.cursor).unwrap_or(FailureEvent::FlushOk(0));
        self.cursor += 1;
        ev
    }

    fn peek_event(&self) -> Option<FailureEvent> {
        self.schedule.get(self.cursor)
    }

    /// Writes the `n` oldest buffered records to the medium.
    fn flush(&mut self, n: usize) {
        for rec in self.buffer.entries.drain(..n) {
            apply_update_in_place(&rec, &mut self.medium.stored);
            self.medium.flush_count += 1;
        }
    }

    /// Queues `rec` under the next schedule event. On failure the record is
    /// discarded, although older records may have reached the medium.
    fn submit(&mut self, rec: UpdateRecord) -> FsResult<()> {
        match self.next_event() {
            FailureEvent::AllocFail => Err(ErrorCode::NoMem),
            FailureEvent::FlushFail { code, applied } => {
                // the new record would be last, so at most the old ones land
                let n = applied.min(self.buffer.len());
                self.flush(n);
                Err(code)
            }
            FailureEvent::FlushOk(n) => {
                apply_update_in_place(&rec, &mut self.cache);
                self.buffer.entries.push(rec);
                let len = self.buffer.len();
                let excess = len.saturating_sub(self.buffer.capacity());
                self.flush(n.max(excess).min(len));
                Ok(())
            }
        }
    }

    fn dir(&self, ino: InodeNum) -> Option<&AfsInode> {
        self.cache.get(ino).filter(|i| i.is_dir())
    }

    fn entry(&self, dir: InodeNum, name: &Filename) -> Option<&AfsInode> {
        let target = self.dir(dir)?.entries()?.get(name)?;
        self.cache.get(*target)
    }

    /// Returns the updated `(vdir, vnode, result)`.
    pub fn create(
        &mut self,
        vdir: &Vnode,
        name: &Filename,
        mode: u32,
        vnode: &Vnode,
    ) -> (Vnode, Vnode, FsResult<()>) {
        let Some(dir) = self.dir(vdir.v_ino) else {
            return (*vdir, *vnode, Err(ErrorCode::Io));
        };
        if dir.entries().is_some_and(|e| e.contains_key(name)) {
            return (*vdir, *vnode, Err(ErrorCode::Exist));
        }
        if self.readonly {
            return (*vdir, *vnode, Err(ErrorCode::RoFs));
        }
        let Some(ino) = (FIRST_FREE_INO..=self.max_ino).find(|n| !self.cache.contains(InodeNum(*n))) else {
            return (*vdir, *vnode, Err(ErrorCode::NFile));
        };
        let now = self.clock;
        let new_vnode = Vnode {
            v_ino: InodeNum(ino),
            v_nlink: 1,
            v_size: 0,
            v_mode: mode | S_IFREG,
            v_ctime: now,
            v_mtime: now,
        };
        if name.len() > NAME_MAX {
            return (*vdir, new_vnode, Err(ErrorCode::NameTooLong));
        }
        let Some(new_size) = vdir.v_size.checked_add(entry_size(name)) else {
            return (*vdir, new_vnode, Err(ErrorCode::Overflow));
        };

        let mut dir = dir.clone();
        if let InodeContent::Dir(entries) = &mut dir.i_type {
            entries.insert(name.clone(), new_vnode.v_ino);
        }
        dir.i_size = new_size;
        dir.i_ctime = now;
        dir.i_mtime = now;
        let file = AfsInode {
            i_type: InodeContent::File(Vec::new()),
            i_ino: new_vnode.v_ino,
            i_nlink: 1,
            i_size: 0,
            i_mode: new_vnode.v_mode,
            i_ctime: now,
            i_mtime: now,
        };
        let rec = UpdateRecord::new(vec![
            (file.i_ino, Action::Put(file)),
            (dir.i_ino, Action::Put(dir)),
        ])
        .expect("fresh inode differs from its parent");

        match self.submit(rec) {
            Ok(()) => {
                let vdir = Vnode {
                    v_size: new_size,
                    v_ctime: now,
                    v_mtime: now,
                    ..*vdir
                };
                (vdir, new_vnode, Ok(()))
            }
            Err(e) => (*vdir, new_vnode, Err(e)),
        }
    }

    /// Returns the updated `(vdir, result)`.
    pub fn unlink(&mut self, vdir: &Vnode, name: &Filename) -> (Vnode, FsResult<()>) {
        if self.readonly {
            return (*vdir, Err(ErrorCode::RoFs));
        }
        let Some(target) = self.entry(vdir.v_ino, name).cloned() else {
            return (*vdir, Err(ErrorCode::NotFound));
        };
        if target.is_dir() {
            return (*vdir, Err(ErrorCode::IsDir));
        }
        let now = self.clock;
        let mut dir = self.cache.get(vdir.v_ino).expect("entry implies dir").clone();
        if let InodeContent::Dir(entries) = &mut dir.i_type {
            entries.remove(name);
        }
        dir.i_size = dir.i_size.saturating_sub(entry_size(name));
        dir.i_ctime = now;
        dir.i_mtime = now;
        let new_size = dir.i_size;
        let target_action = if target.i_nlink > 1 {
            Action::Put(AfsInode {
                i_nlink: target.i_nlink - 1,
                i_ctime: now,
                ..target.clone()
            })
        } else {
            Action::Remove
        };
        let rec = UpdateRecord::new(vec![(dir.i_ino, Action::Put(dir)), (target.i_ino, target_action)])
            .expect("a file is never its own parent");
        match self.submit(rec) {
            Ok(()) => {
                let vdir = Vnode {
                    v_size: new_size,
                    v_ctime: now,
                    v_mtime: now,
                    ..*vdir
                };
                (vdir, Ok(()))
            }
            Err(e) => (*vdir, Err(e)),
        }
    }

    /// Reads through the buffer. Consumes the next event only when it is an
    /// allocation failure.
    pub fn lookup(&mut self, vdir: &Vnode, name: &Filename) -> FsResult<Vnode> {
        let Some(target) = self.entry(vdir.v_ino, name) else {
            return Err(ErrorCode::NotFound);
        };
        let found = Vnode::from_inode(target);
        if self.peek_event() == Some(FailureEvent::AllocFail) {
            self.cursor += 1;
            return Err(ErrorCode::NoMem);
        }
        Ok(found)
    }

    /// Writes out the whole buffer. An I/O error latches read-only mode.
    pub fn fsync(&mut self) -> FsResult<()> {
        if self.readonly {
            return Err(ErrorCode::RoFs);
        }
        if self.buffer.is_empty() {
            return Ok(());
        }
        match self.next_event() {
            FailureEvent::FlushOk(_) => {
                self.flush(self.buffer.len());
                Ok(())
            }
            FailureEvent::AllocFail => Err(ErrorCode::NoMem),
            FailureEvent::FlushFail { code, applied } => {
                self.flush(applied.min(self.buffer.len() - 1));
                if code == ErrorCode::Io {
                    self.readonly = true;
                }
                Err(code)
            }
        }
    }
}

/// The abstraction function: a field-wise view of the simulator as a
/// specification state.
pub fn alpha(s: &ImplState) -> AfsState {
    AfsState {
        a_is_readonly: s.readonly,
        a_current_time: s.clock,
        a_medium_afs: s.medium.stored.clone(),
        a_medium_updates: s.buffer.entries.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{invariant_holds, ROOT_INO};
    use crate::update::combined_state;

    fn name(s: &str) -> Filename {
        Filename::new(s).unwrap()
    }

    fn state(capacity: usize, events: Vec<FailureEvent>) -> ImplState {
        ImplState::new(NonZeroUsize::new(capacity).unwrap(), FailureSchedule::new(events).unwrap())
    }

    fn root(s: &ImplState) -> Vnode {
        Vnode::from_inode(s.combined().get(ROOT_INO).unwrap())
    }

    fn create(s: &mut ImplState, n: &str) -> FsResult<()> {
        let r = root(s);
        s.create(&r, &name(n), 0o644, &Vnode::default()).2
    }

    #[test]
    fn alpha_of_fresh_state() {
        let s = state(4, vec![]);
        let a = alpha(&s);
        assert!(a.a_medium_updates.is_empty());
        assert_eq!(a, AfsState::fresh());
    }

    #[test]
    fn cache_tracks_combined_state() {
        let mut s = state(2, vec![]);
        for n in ["a", "b", "c", "d", "e"] {
            assert_eq!(create(&mut s, n), Ok(()));
            assert_eq!(&combined_state(&alpha(&s)), s.combined());
            assert!(s.buffer.len() <= 2);
        }
        assert_eq!(s.medium.flush_count, 3);
    }

    #[test]
    fn create_within_capacity_buffers() {
        let mut s = state(4, vec![]);
        let r = root(&s);
        let (vdir, vnode, res) = s.create(&r, &name("a"), 0o644, &Vnode::default());
        assert_eq!(res, Ok(()));
        assert_eq!(s.buffer.len(), 1);
        assert_eq!(vnode.v_ino, InodeNum(2));
        assert_eq!(vdir.v_size, entry_size(&name("a")));
        assert!(invariant_holds(s.combined()));
        assert_eq!(s.medium.stored, AfsMap::with_root());
    }

    #[test]
    fn create_on_readonly() {
        let mut s = state(4, vec![]);
        s.readonly = true;
        let before = alpha(&s);
        assert_eq!(create(&mut s, "a"), Err(ErrorCode::RoFs));
        assert_eq!(alpha(&s), before);
        assert_eq!(s.cursor(), 0);
    }

    #[test]
    fn alloc_fail_leaves_state() {
        let mut s = state(4, vec![FailureEvent::AllocFail]);
        let before = combined_state(&alpha(&s));
        assert_eq!(create(&mut s, "a"), Err(ErrorCode::NoMem));
        assert_eq!(combined_state(&alpha(&s)), before);
        assert!(s.buffer.is_empty());
    }

    #[test]
    fn flush_fail_drops_new_record() {
        let mut s = state(4, vec![
            FailureEvent::FlushOk(0),
            FailureEvent::FlushOk(0),
            FailureEvent::FlushFail { code: ErrorCode::NoSpc, applied: 9 },
        ]);
        create(&mut s, "a").unwrap();
        create(&mut s, "b").unwrap();
        let before = s.combined().clone();
        assert_eq!(create(&mut s, "c"), Err(ErrorCode::NoSpc));
        assert_eq!(s.combined(), &before);
        assert!(s.buffer.is_empty());
        assert_eq!(s.medium.stored, before);
        assert!(!s.readonly);
    }

    #[test]
    fn name_and_inode_limits() {
        let mut s = state(4, vec![]);
        let long = "x".repeat(NAME_MAX + 1);
        assert_eq!(create(&mut s, &long), Err(ErrorCode::NameTooLong));
        assert_eq!(create(&mut s, &"y".repeat(NAME_MAX)), Ok(()));
        let mut s = state(4, vec![]).with_max_ino(2);
        assert_eq!(create(&mut s, "a"), Ok(()));
        assert_eq!(create(&mut s, "b"), Err(ErrorCode::NFile));
        assert_eq!(create(&mut s, "a"), Err(ErrorCode::Exist));
    }

    #[test]
    fn fsync_partial_eio() {
        let mut s = state(8, vec![
            FailureEvent::FlushOk(0),
            FailureEvent::FlushOk(0),
            FailureEvent::FlushOk(0),
            FailureEvent::FlushFail { code: ErrorCode::Io, applied: 1 },
        ]);
        for n in ["a", "b", "c"] {
            create(&mut s, n).unwrap();
        }
        let u = s.buffer.entries().to_vec();
        assert_eq!(s.fsync(), Err(ErrorCode::Io));
        let mut expected = AfsMap::with_root();
        apply_update_in_place(&u[0], &mut expected);
        assert_eq!(s.medium.stored, expected);
        assert_eq!(s.buffer.entries(), &u[1..]);
        assert!(s.readonly);
        assert_eq!(create(&mut s, "d"), Err(ErrorCode::RoFs));
        assert_eq!(s.fsync(), Err(ErrorCode::RoFs));
    }

    #[test]
    fn fsync_success_empties_buffer() {
        let mut s = state(8, vec![]);
        assert_eq!(s.fsync(), Ok(()));
        assert_eq!(s.cursor(), 0);
        create(&mut s, "a").unwrap();
        create(&mut s, "b").unwrap();
        let combined = combined_state(&alpha(&s));
        assert_eq!(s.fsync(), Ok(()));
        assert!(alpha(&s).a_medium_updates.is_empty());
        assert_eq!(s.medium.stored, combined);
    }

    #[test]
    fn lookup_and_unlink() {
        let mut s = state(8, vec![]);
        create(&mut s, "a").unwrap();
        let r = root(&s);
        assert_eq!(s.lookup(&r, &name("a")).unwrap().v_ino, InodeNum(2));
        let before = alpha(&s);
        assert_eq!(s.unlink(&r, &name("zz")).1, Err(ErrorCode::NotFound));
        assert_eq!(alpha(&s), before);
        assert_eq!(s.unlink(&r, &name("a")).1, Ok(()));
        assert_eq!(s.fsync(), Ok(()));
        let root_inode = s.medium.stored.get(ROOT_INO).unwrap();
        assert!(root_inode.entries().unwrap().is_empty());
        assert_eq!(root_inode.i_size, 0);
        assert!(!s.medium.stored.contains(InodeNum(2)));
    }

    #[test]
    fn lookup_consumes_only_alloc_failures() {
        let mut s = state(8, vec![FailureEvent::AllocFail, FailureEvent::FlushOk(0)]);
        assert_eq!(s.lookup(&root(&s), &name("a")), Err(ErrorCode::NotFound));
        assert_eq!(s.cursor(), 0);
        let mut s = state(8, vec![FailureEvent::FlushOk(0), FailureEvent::AllocFail]);
        create(&mut s, "a").unwrap();
        assert_eq!(s.lookup(&root(&s), &name("a")), Err(ErrorCode::NoMem));
        assert_eq!(s.cursor(), 2);
        assert!(s.lookup(&root(&s), &name("a")).is_ok());
    }
}
