//! Execution-context snapshots.
//!
//! A snapshot is the canonical, ordered description of everything an input
//! is allowed to observe or mutate: working directory, environment, a file
//! map keyed by absolute path, group membership, shell options, resource
//! limits, and firewall rules. All maps are ordered so two snapshots of the
//! same context serialize identically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    File,
    Dir,
}

/// Metadata for one file-system entry. `hash` is the lowercase hex SHA-256
/// of file content and empty for directories.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub owner: String,
    pub group: String,
    pub perms: String,
    pub size: u64,
    pub kind: FileKind,
    pub hash: String,
}

impl FileRecord {
    pub fn dir(owner: &str, group: &str, perms: &str) -> FileRecord {
        FileRecord {
            owner: owner.to_string(),
            group: group.to_string(),
            perms: perms.to_string(),
            size: 0,
            kind: FileKind::Dir,
            hash: String::new(),
        }
    }

    pub fn file(owner: &str, group: &str, perms: &str, content: &str) -> FileRecord {
        FileRecord {
            owner: owner.to_string(),
            group: group.to_string(),
            perms: perms.to_string(),
            size: content.len() as u64,
            kind: FileKind::File,
            hash: content_hash(content.as_bytes()),
        }
    }
}

/// Lowercase hex SHA-256 of raw bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Canonical execution context. Map keys must not contain `/` — except in
/// `fs`, whose keys are whole absolute paths; context-patch paths rely on
/// that convention.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub cwd: String,
    pub env: BTreeMap<String, String>,
    pub fs: BTreeMap<String, FileRecord>,
    pub groups: Vec<String>,
    pub shell_opts: BTreeMap<String, String>,
    pub limits: BTreeMap<String, String>,
    pub firewall: Vec<String>,
}
