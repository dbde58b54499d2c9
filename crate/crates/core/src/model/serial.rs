//! Canonical text form of model values.
//!
//! Everything serializes through serde into JSON. Maps are `BTreeMap`s, so keys
//! come out ordered by inode number and names in byte-lexicographic order, and
//! the output is a pure function of the value. File names are written as
//! strings where every byte outside printable ASCII, plus space and `\`, is
//! escaped as `\xNN`; pages are written as hex.

use std::fmt::Write as _;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Filename, VfsPage};

pub(crate) fn escape_name(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        if b.is_ascii_graphic() && b != b'\\' {
            out.push(b as char);
        } else {
            let _ = write!(out, "\\x{b:02x}");
        }
    }
    out
}

pub(crate) fn unescape_name(s: &str) -> Result<Vec<u8>, String> {
    let raw = s.as_bytes();
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'\\' {
            let hex = raw
                .get(i + 1..i + 4)
                .filter(|h| h[0] == b'x')
                .and_then(|h| std::str::from_utf8(&h[1..]).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| format!("bad escape in {s:?}"))?;
            out.push(hex);
            i += 4;
        } else {
            out.push(raw[i]);
            i += 1;
        }
    }
    Ok(out)
}

impl Filename {
    /// Parses the escaped form produced by `Display`.
    pub fn parse_escaped(s: &str) -> Result<Filename, String> {
        let bytes = unescape_name(s)?;
        Filename::new(bytes).map_err(|e| e.to_string())
    }
}

impl Serialize for Filename {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&escape_name(self.as_bytes()))
    }
}

impl<'de> Deserialize<'de> for Filename {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Filename::parse_escaped(&s).map_err(D::Error::custom)
    }
}

impl Serialize for VfsPage {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.bytes()))
    }
}

impl<'de> Deserialize<'de> for VfsPage {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        VfsPage::new(bytes).map_err(D::Error::custom)
    }
}

/// Single-line canonical form, used as a deduplication key.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("model values always serialize")
}

/// Multi-line canonical form, used in trace and counterexample files.
pub fn canonical_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("model values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AfsState, InodeNum, UpdateRecord};
    use proptest::prelude::*;

    #[test]
    fn escapes_awkward_bytes() {
        assert_eq!(escape_name(b"a b\\c\xff"), "a\\x20b\\x5cc\\xff");
        assert_eq!(unescape_name("a\\x20b").unwrap(), b"a b");
        assert!(unescape_name("a\\q00").is_err());
        assert!(unescape_name("a\\x1").is_err());
    }

    #[test]
    fn state_serialization_is_ordered() {
        let s = canonical_json(&AfsState::fresh());
        assert!(s.starts_with("{\"a_is_readonly\":false,\"a_current_time\":0,\"a_medium_afs\":{\"1\":"));
        let back: AfsState = serde_json::from_str(&s).unwrap();
        assert_eq!(back, AfsState::fresh());
    }

    #[test]
    fn invalid_record_fails_to_parse() {
        let root = crate::model::AfsMap::with_root().get(InodeNum(1)).unwrap().clone();
        let rec = UpdateRecord::puts([root]).unwrap();
        let s = canonical_json(&rec).replacen("[[1,", "[[9,", 1);
        assert!(serde_json::from_str::<UpdateRecord>(&s).is_err());
    }

    proptest! {
        #[test]
        fn filename_escape_round_trips(bytes in prop::collection::vec(1u8..=255, 1..40)) {
            prop_assume!(!bytes.contains(&b'/'));
            let name = Filename::new(bytes).unwrap();
            let text = name.to_string();
            prop_assert!(!text.contains(' '));
            prop_assert_eq!(Filename::parse_escaped(&text).unwrap(), name);
        }
    }
}
