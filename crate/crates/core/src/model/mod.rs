//! Abstract file system state: inodes, the inode map, update records and the
//! combined (medium plus pending updates) view.

mod invariant;
mod serial;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use invariant::{check_invariant, invariant_holds, Clause, InvariantReport, Violation};
pub use serial::{canonical_json, canonical_json_pretty};

pub const PAGE_SIZE: usize = 4096;
pub const NAME_MAX: usize = 255;
pub const DIR_ENTRY_OVERHEAD: u64 = 16;
pub const ROOT_INO: InodeNum = InodeNum(1);

pub const S_IFMT: u32 = 0o170_000;
pub const S_IFDIR: u32 = 0o040_000;
pub const S_IFREG: u32 = 0o100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid file name {0:?}: {1}")]
    InvalidFilename(String, &'static str),
    #[error("page must hold exactly {PAGE_SIZE} bytes, got {0}")]
    PageSize(usize),
    #[error("update record binds inode {0} more than once")]
    DuplicateBinding(InodeNum),
    #[error("update record binds key {key} to inode numbered {ino}")]
    KeyMismatch { key: InodeNum, ino: InodeNum },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InodeNum(pub u32);

impl fmt::Display for InodeNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nanoseconds since the epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

/// A single path component: non-empty, without `/` or NUL.
///
/// The length limit is not part of the type; operations report
/// `eNameTooLong` for names over [`NAME_MAX`].
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Filename(Vec<u8>);

impl Filename {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, ModelError> {
        let bytes = bytes.into();
        let reason = if bytes.is_empty() {
            Some("empty")
        } else if bytes.contains(&b'/') {
            Some("contains '/'")
        } else if bytes.contains(&0) {
            Some("contains NUL")
        } else {
            None
        };
        match reason {
            Some(r) => Err(ModelError::InvalidFilename(
                String::from_utf8_lossy(&bytes).into_owned(),
                r,
            )),
            None => Ok(Filename(bytes)),
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Filename {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", serial::escape_name(&self.0))
    }
}

impl fmt::Display for Filename {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serial::escape_name(&self.0))
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VfsPage(Vec<u8>);

impl VfsPage {
    pub fn new(bytes: Vec<u8>) -> Result<Self, ModelError> {
        if bytes.len() != PAGE_SIZE {
            return Err(ModelError::PageSize(bytes.len()));
        }
        Ok(VfsPage(bytes))
    }

    pub fn zeroed() -> Self {
        VfsPage(vec![0; PAGE_SIZE])
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for VfsPage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = self.0.iter().rposition(|b| *b != 0).map_or(0, |i| i + 1);
        write!(f, "VfsPage({used} significant bytes)")
    }
}

pub type DirEntries = BTreeMap<Filename, InodeNum>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InodeContent {
    Dir(DirEntries),
    File(Vec<VfsPage>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AfsInode {
    pub i_type: InodeContent,
    pub i_ino: InodeNum,
    pub i_nlink: u32,
    pub i_size: u64,
    pub i_mode: u32,
    pub i_ctime: Timestamp,
    pub i_mtime: Timestamp,
}

impl AfsInode {
    pub fn is_dir(&self) -> bool {
        matches!(self.i_type, InodeContent::Dir(_))
    }

    pub fn entries(&self) -> Option<&DirEntries> {
        match &self.i_type {
            InodeContent::Dir(entries) => Some(entries),
            InodeContent::File(_) => None,
        }
    }

    /// Replaces the entry map of a directory inode with `f(entries)`.
    ///
    /// Returns `None` for file inodes.
    pub fn i_dir_update<F>(&self, f: F) -> Option<AfsInode>
    where
        F: FnOnce(DirEntries) -> DirEntries,
    {
        match &self.i_type {
            InodeContent::Dir(entries) => Some(AfsInode {
                i_type: InodeContent::Dir(f(entries.clone())),
                ..self.clone()
            }),
            InodeContent::File(_) => None,
        }
    }
}

/// Builds an empty inode mirroring `v`. `None` unless `v_mode` is a regular
/// file or a directory.
pub fn afs_inode_from_vnode(v: &Vnode) -> Option<AfsInode> {
    let i_type = match v.v_mode & S_IFMT {
        S_IFDIR => InodeContent::Dir(DirEntries::new()),
        S_IFREG => InodeContent::File(Vec::new()),
        _ => return None,
    };
    Some(AfsInode {
        i_type,
        i_ino: v.v_ino,
        i_nlink: v.v_nlink,
        i_size: v.v_size,
        i_mode: v.v_mode,
        i_ctime: v.v_ctime,
        i_mtime: v.v_mtime,
    })
}

/// Abstract directory-size cost of one entry.
pub fn entry_size(name: &Filename) -> u64 {
    name.len() as u64 + DIR_ENTRY_OVERHEAD
}

/// Partial map from inode number to inode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AfsMap(BTreeMap<InodeNum, AfsInode>);

impl AfsMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// The map holding only an empty root directory.
    pub fn with_root() -> Self {
        let mut m = Self::new();
        m.insert(AfsInode {
            i_type: InodeContent::Dir(DirEntries::new()),
            i_ino: ROOT_INO,
            i_nlink: 2,
            i_size: 0,
            i_mode: S_IFDIR | 0o755,
            i_ctime: Timestamp(0),
            i_mtime: Timestamp(0),
        });
        m
    }

    pub fn get(&self, ino: InodeNum) -> Option<&AfsInode> {
        self.0.get(&ino)
    }

    pub fn contains(&self, ino: InodeNum) -> bool {
        self.0.contains_key(&ino)
    }

    /// Inserts `inode` under its own `i_ino`.
    pub fn insert(&mut self, inode: AfsInode) -> Option<AfsInode> {
        self.0.insert(inode.i_ino, inode)
    }

    /// Inserts under an arbitrary key; only useful for building ill-formed maps.
    pub fn insert_at(&mut self, key: InodeNum, inode: AfsInode) -> Option<AfsInode> {
        self.0.insert(key, inode)
    }

    pub fn remove(&mut self, ino: InodeNum) -> Option<AfsInode> {
        self.0.remove(&ino)
    }

    pub fn iter(&self) -> impl Iterator<Item = (InodeNum, &AfsInode)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Keys whose bindings differ between `self` and `other`, in ascending order.
    pub fn changed_keys(&self, other: &AfsMap) -> Vec<InodeNum> {
        let mut keys: Vec<InodeNum> = self.0.keys().chain(other.0.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        keys.retain(|k| self.0.get(k) != other.0.get(k));
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Put(AfsInode),
    Remove,
}

/// Data form of one `afs_map -> afs_map` transformation: bindings applied in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(InodeNum, Action)>", into = "Vec<(InodeNum, Action)>")]
pub struct UpdateRecord {
    bindings: Vec<(InodeNum, Action)>,
}

impl UpdateRecord {
    pub fn new(bindings: Vec<(InodeNum, Action)>) -> Result<Self, ModelError> {
        for (i, (key, action)) in bindings.iter().enumerate() {
            if bindings[..i].iter().any(|(k, _)| k == key) {
                return Err(ModelError::DuplicateBinding(*key));
            }
            if let Action::Put(inode) = action {
                if inode.i_ino != *key {
                    return Err(ModelError::KeyMismatch {
                        key: *key,
                        ino: inode.i_ino,
                    });
                }
            }
        }
        Ok(Self { bindings })
    }

    /// A record of `Put` bindings, each keyed by its inode number.
    pub fn puts(inodes: impl IntoIterator<Item = AfsInode>) -> Result<Self, ModelError> {
        Self::new(
            inodes
                .into_iter()
                .map(|inode| (inode.i_ino, Action::Put(inode)))
                .collect(),
        )
    }

    pub fn bindings(&self) -> &[(InodeNum, Action)] {
        &self.bindings
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

impl TryFrom<Vec<(InodeNum, Action)>> for UpdateRecord {
    type Error = ModelError;

    fn try_from(bindings: Vec<(InodeNum, Action)>) -> Result<Self, Self::Error> {
        Self::new(bindings)
    }
}

impl From<UpdateRecord> for Vec<(InodeNum, Action)> {
    fn from(u: UpdateRecord) -> Self {
        u.bindings
    }
}

pub fn apply_update(u: &UpdateRecord, m: &AfsMap) -> AfsMap {
    let mut out = m.clone();
    apply_update_in_place(u, &mut out);
    out
}

pub fn apply_update_in_place(u: &UpdateRecord, m: &mut AfsMap) {
    for (key, action) in &u.bindings {
        match action {
            Action::Put(inode) => {
                m.0.insert(*key, inode.clone());
            }
            Action::Remove => {
                m.0.remove(key);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AfsState {
    pub a_is_readonly: bool,
    pub a_current_time: Timestamp,
    pub a_medium_afs: AfsMap,
    pub a_medium_updates: Vec<UpdateRecord>,
}

impl AfsState {
    /// Writable state holding only the root directory, nothing pending, at time zero.
    pub fn fresh() -> Self {
        Self {
            a_is_readonly: false,
            a_current_time: Timestamp(0),
            a_medium_afs: AfsMap::with_root(),
            a_medium_updates: Vec::new(),
        }
    }

    pub fn with_time(&self, t: Timestamp) -> Self {
        Self {
            a_current_time: t,
            ..self.clone()
        }
    }
}

/// The medium state with every pending update applied, head first.
pub fn updated_afs(afs: &AfsState) -> AfsMap {
    afs.a_medium_updates
        .iter()
        .fold(afs.a_medium_afs.clone(), |mut m, u| {
            apply_update_in_place(u, &mut m);
            m
        })
}

/// VFS-side mirror of an inode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vnode {
    pub v_ino: InodeNum,
    pub v_nlink: u32,
    pub v_size: u64,
    pub v_mode: u32,
    pub v_ctime: Timestamp,
    pub v_mtime: Timestamp,
}

impl Vnode {
    pub fn from_inode(inode: &AfsInode) -> Self {
        Vnode {
            v_ino: inode.i_ino,
            v_nlink: inode.i_nlink,
            v_size: inode.i_size,
            v_mode: inode.i_mode,
            v_ctime: inode.i_ctime,
            v_mtime: inode.i_mtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "eNoEnt")]
    NotFound,
    #[serde(rename = "eIO")]
    Io,
    #[serde(rename = "eNoMem")]
    NoMem,
    #[serde(rename = "eExist")]
    Exist,
    #[serde(rename = "eIsDir")]
    IsDir,
    #[serde(rename = "eNFile")]
    NFile,
    #[serde(rename = "eNoSpc")]
    NoSpc,
    #[serde(rename = "eRoFs")]
    RoFs,
    #[serde(rename = "eNameTooLong")]
    NameTooLong,
    #[serde(rename = "eOverflow")]
    Overflow,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 10] = [
        ErrorCode::NotFound,
        ErrorCode::Io,
        ErrorCode::NoMem,
        ErrorCode::Exist,
        ErrorCode::IsDir,
        ErrorCode::NFile,
        ErrorCode::NoSpc,
        ErrorCode::RoFs,
        ErrorCode::NameTooLong,
        ErrorCode::Overflow,
    ];

    /// Conventional errno value.
    pub fn errno(self) -> i32 {
        match self {
            ErrorCode::NotFound => 2,
            ErrorCode::Io => 5,
            ErrorCode::NoMem => 12,
            ErrorCode::Exist => 17,
            ErrorCode::IsDir => 21,
            ErrorCode::NFile => 23,
            ErrorCode::NoSpc => 28,
            ErrorCode::RoFs => 30,
            ErrorCode::NameTooLong => 36,
            ErrorCode::Overflow => 75,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "eNoEnt",
            ErrorCode::Io => "eIO",
            ErrorCode::NoMem => "eNoMem",
            ErrorCode::Exist => "eExist",
            ErrorCode::IsDir => "eIsDir",
            ErrorCode::NFile => "eNFile",
            ErrorCode::NoSpc => "eNoSpc",
            ErrorCode::RoFs => "eRoFs",
            ErrorCode::NameTooLong => "eNameTooLong",
            ErrorCode::Overflow => "eOverflow",
        }
    }

    /// Case-insensitive lookup by name (`eIO`, `EIO`, `eio`) or errno number.
    pub fn parse(s: &str) -> Option<ErrorCode> {
        if let Ok(n) = s.parse::<i32>() {
            return Self::ALL.into_iter().find(|e| e.errno() == n);
        }
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type FsResult<T> = Result<T, ErrorCode>;
