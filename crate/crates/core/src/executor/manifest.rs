//! Seed file-system manifests.
//!
//! A manifest is a JSON list of entries describing the tree a backend starts
//! from. The simulated backend interprets it directly as its virtual file
//! system; the sandbox backend materialises it into a disposable directory
//! tree. One bundled manifest ships with the crate so both backends agree on
//! their default world.

use serde::{Deserialize, Serialize};

use super::snapshot::FileKind;
use super::ExecError;

/// Bundled default layout: a small home tree with extension-grouped
/// directories plus the usual system mount points.
pub const BUNDLED_MANIFEST: &str = include_str!("../../assets/seed_fs.json");

fn default_owner() -> String {
    "ubuntu".to_string()
}

fn default_group() -> String {
    "ubuntu".to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Absolute, normalised path (`/home/ubuntu/notes.txt`).
    pub path: String,
    pub kind: FileKind,
    /// File content; must be empty for directories.
    #[serde(default)]
    pub content: String,
    #[serde(default = "default_owner")]
    pub owner: String,
    #[serde(default = "default_group")]
    pub group: String,
    /// `ls -l`-style mode string; defaulted per kind when omitted.
    #[serde(default)]
    pub perms: String,
}

#[derive(Clone, Debug)]
pub struct FsManifest {
    entries: Vec<ManifestEntry>,
}

impl FsManifest {
    /// Parses and validates manifest JSON: paths must be absolute and
    /// normalised, unique, and every parent directory must be present.
    pub fn parse(json: &str) -> Result<FsManifest, ExecError> {
        let mut entries: Vec<ManifestEntry> = serde_json::from_str(json)
            .map_err(|e| ExecError::Manifest(format!("invalid manifest JSON: {e}")))?;
        for entry in &mut entries {
            if entry.perms.is_empty() {
                entry.perms = match entry.kind {
                    FileKind::Dir => "drwxr-xr-x".to_string(),
                    FileKind::File => "-rw-r--r--".to_string(),
                };
            }
        }
        let manifest = FsManifest { entries };
        manifest.validate()?;
        Ok(manifest)
    }

    /// The manifest bundled with the crate.
    pub fn bundled() -> FsManifest {
        FsManifest::parse(BUNDLED_MANIFEST).expect("bundled manifest must be valid")
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    fn validate(&self) -> Result<(), ExecError> {
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.entries {
            let p = &entry.path;
            if !p.starts_with('/') || (p.len() > 1 && p.ends_with('/')) || p.contains("//") {
                return Err(ExecError::Manifest(format!("path {p:?} is not absolute/normalised")));
            }
            if p.split('/').any(|seg| seg == "." || seg == "..") {
                return Err(ExecError::Manifest(format!("path {p:?} contains dot segments")));
            }
            if !seen.insert(p.clone()) {
                return Err(ExecError::Manifest(format!("duplicate path {p:?}")));
            }
            if matches!(entry.kind, FileKind::Dir) && !entry.content.is_empty() {
                return Err(ExecError::Manifest(format!("directory {p:?} carries content")));
            }
        }
        let dirs: std::collections::BTreeSet<&str> = self
            .entries
            .iter()
            .filter(|e| matches!(e.kind, FileKind::Dir))
            .map(|e| e.path.as_str())
            .collect();
        for entry in &self.entries {
            if entry.path == "/" {
                continue;
            }
            let parent = match entry.path.rfind('/') {
                Some(0) => "/",
                Some(i) => &entry.path[..i],
                None => "/",
            };
            if !dirs.contains(parent) {
                return Err(ExecError::Manifest(format!(
                    "parent of {:?} is missing or not a directory",
                    entry.path
                )));
            }
        }
        if !dirs.contains("/") {
            return Err(ExecError::Manifest("manifest must define the root directory".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_manifest_parses() {
        let m = FsManifest::bundled();
        assert!(m.entries().len() > 10);
        assert!(m.entries().iter().any(|e| e.path == "/home/ubuntu"));
        // At least one hidden file so `ls -a` can differ from `ls`.
        assert!(m
            .entries()
            .iter()
            .any(|e| e.path.rsplit('/').next().is_some_and(|n| n.starts_with('.'))));
    }

    #[test]
    fn missing_parent_is_rejected() {
        let err = FsManifest::parse(
            r#"[{"path":"/","kind":"dir"},{"path":"/a/b","kind":"file"}]"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("parent"));
    }

    #[test]
    fn duplicate_paths_are_rejected() {
        let err = FsManifest::parse(
            r#"[{"path":"/","kind":"dir"},{"path":"/a","kind":"dir"},{"path":"/a","kind":"dir"}]"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn relative_paths_are_rejected() {
        let err = FsManifest::parse(r#"[{"path":"a","kind":"dir"}]"#).unwrap_err();
        assert!(err.to_string().contains("absolute"));
    }
}
