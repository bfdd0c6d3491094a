//! Compact context patches.
//!
//! A patch is an ordered list of operations, each serialized as a small
//! JSON array: `["a", path, value]` adds, `["=", path, value]` replaces,
//! `["r", path]` removes, and `["m", from, to]` moves. Paths are
//! slash-prefixed pointers into a [`ContextSnapshot`]: `/cwd`, `/env/KEY`,
//! `/shell_opts/KEY`, `/limits/KEY`, `/groups`, `/firewall`, and
//! `/fs<absolute path>`. Because filesystem keys are whole absolute paths,
//! the `fs` pointer concatenates section and key without a separator
//! (`/fs/home/ubuntu/x`); a trailing `/field` component addresses one field
//! of an existing record. Non-filesystem keys must not contain `/`.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::executor::{ContextSnapshot, FileRecord};

#[derive(Clone, Debug, PartialEq)]
pub enum PatchOp {
    Add { path: String, value: Value },
    Replace { path: String, value: Value },
    Remove { path: String },
    Move { from: String, to: String },
}

impl PatchOp {
    pub fn add(path: impl Into<String>, value: Value) -> PatchOp {
        PatchOp::Add {
            path: path.into(),
            value,
        }
    }

    pub fn replace(path: impl Into<String>, value: Value) -> PatchOp {
        PatchOp::Replace {
            path: path.into(),
            value,
        }
    }

    pub fn remove(path: impl Into<String>) -> PatchOp {
        PatchOp::Remove { path: path.into() }
    }
}

impl Serialize for PatchOp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            PatchOp::Add { path, value } => {
                let mut seq = serializer.serialize_seq(Some(3))?;
                seq.serialize_element("a")?;
                seq.serialize_element(path)?;
                seq.serialize_element(value)?;
                seq.end()
            }
            PatchOp::Replace { path, value } => {
                let mut seq = serializer.serialize_seq(Some(3))?;
                seq.serialize_element("=")?;
                seq.serialize_element(path)?;
                seq.serialize_element(value)?;
                seq.end()
            }
            PatchOp::Remove { path } => {
                let mut seq = serializer.serialize_seq(Some(2))?;
                seq.serialize_element("r")?;
                seq.serialize_element(path)?;
                seq.end()
            }
            PatchOp::Move { from, to } => {
                let mut seq = serializer.serialize_seq(Some(3))?;
                seq.serialize_element("m")?;
                seq.serialize_element(from)?;
                seq.serialize_element(to)?;
                seq.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for PatchOp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<PatchOp, D::Error> {
        struct OpVisitor;

        impl<'de> Visitor<'de> for OpVisitor {
            type Value = PatchOp;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a patch operation array")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<PatchOp, A::Error> {
                let tag: String = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &"an operation tag"))?;
                let op = match tag.as_str() {
                    "a" | "=" => {
                        let path: String = seq
                            .next_element()?
                            .ok_or_else(|| de::Error::invalid_length(1, &"a path"))?;
                        let value: Value = seq
                            .next_element()?
                            .ok_or_else(|| de::Error::invalid_length(2, &"a value"))?;
                        if tag == "a" {
                            PatchOp::Add { path, value }
                        } else {
                            PatchOp::Replace { path, value }
                        }
                    }
                    "r" => {
                        let path: String = seq
                            .next_element()?
                            .ok_or_else(|| de::Error::invalid_length(1, &"a path"))?;
                        PatchOp::Remove { path }
                    }
                    "m" => {
                        let from: String = seq
                            .next_element()?
                            .ok_or_else(|| de::Error::invalid_length(1, &"a source path"))?;
                        let to: String = seq
                            .next_element()?
                            .ok_or_else(|| de::Error::invalid_length(2, &"a target path"))?;
                        PatchOp::Move { from, to }
                    }
                    other => {
                        return Err(de::Error::custom(format!(
                            "unknown patch operation tag `{other}`"
                        )))
                    }
                };
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::custom("trailing elements in patch operation"));
                }
                Ok(op)
            }
        }

        deserializer.deserialize_seq(OpVisitor)
    }
}

/// An ordered list of patch operations; serializes as a bare JSON array.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextPatch {
    pub ops: Vec<PatchOp>,
}

impl ContextPatch {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("cannot add at `{0}`: path already exists")]
    AddExisting(String),
    #[error("path `{0}` does not exist")]
    PathNotFound(String),
    #[error("pointer `{0}` is not valid here")]
    BadPointer(String),
    #[error("value at `{pointer}` is invalid: {reason}")]
    BadValue { pointer: String, reason: String },
}

const FS_FIELDS: &[&str] = &["group", "hash", "kind", "owner", "perms", "size"];

// ---------------------------------------------------------------------------
// Diff
// ---------------------------------------------------------------------------

/// Minimal patch turning `before` into `after`. Operations are emitted in a
/// canonical order — sections alphabetically (`cwd`, `env`, `firewall`,
/// `fs`, `groups`, `limits`, `shell_opts`), keys ascending within each, and
/// changed record fields alphabetically — so equal context changes always
/// produce byte-identical patches. List-valued sections (`groups`,
/// `firewall`) are replaced wholesale.
pub fn diff_context(before: &ContextSnapshot, after: &ContextSnapshot) -> ContextPatch {
    let mut ops = Vec::new();
    if before.cwd != after.cwd {
        ops.push(PatchOp::replace("/cwd", Value::String(after.cwd.clone())));
    }
    diff_string_map(&mut ops, "/env/", &before.env, &after.env);
    if before.firewall != after.firewall {
        ops.push(PatchOp::replace(
            "/firewall",
            serde_json::to_value(&after.firewall).unwrap(),
        ));
    }
    diff_fs(&mut ops, &before.fs, &after.fs);
    if before.groups != after.groups {
        ops.push(PatchOp::replace(
            "/groups",
            serde_json::to_value(&after.groups).unwrap(),
        ));
    }
    diff_string_map(&mut ops, "/limits/", &before.limits, &after.limits);
    diff_string_map(
        &mut ops,
        "/shell_opts/",
        &before.shell_opts,
        &after.shell_opts,
    );
    ContextPatch { ops }
}

fn diff_string_map(
    ops: &mut Vec<PatchOp>,
    prefix: &str,
    before: &BTreeMap<String, String>,
    after: &BTreeMap<String, String>,
) {
    let keys: std::collections::BTreeSet<&String> = before.keys().chain(after.keys()).collect();
    for key in keys {
        let path = format!("{prefix}{key}");
        match (before.get(key), after.get(key)) {
            (Some(_), None) => ops.push(PatchOp::remove(path)),
            (None, Some(v)) => ops.push(PatchOp::add(path, Value::String(v.clone()))),
            (Some(old), Some(v)) if old != v => {
                ops.push(PatchOp::replace(path, Value::String(v.clone())))
            }
            _ => {}
        }
    }
}

fn diff_fs(
    ops: &mut Vec<PatchOp>,
    before: &BTreeMap<String, FileRecord>,
    after: &BTreeMap<String, FileRecord>,
) {
    let keys: std::collections::BTreeSet<&String> = before.keys().chain(after.keys()).collect();
    for key in keys {
        let path = format!("/fs{key}");
        match (before.get(key), after.get(key)) {
            (Some(_), None) => ops.push(PatchOp::remove(path)),
            (None, Some(rec)) => {
                ops.push(PatchOp::add(path, serde_json::to_value(rec).unwrap()))
            }
            (Some(old), Some(new)) if old != new => {
                for field in FS_FIELDS {
                    let (a, b) = (field_value(old, field), field_value(new, field));
                    if a != b {
                        ops.push(PatchOp::replace(format!("{path}/{field}"), b));
                    }
                }
            }
            _ => {}
        }
    }
}

fn field_value(record: &FileRecord, field: &str) -> Value {
    match field {
        "group" => Value::String(record.group.clone()),
        "hash" => Value::String(record.hash.clone()),
        "kind" => serde_json::to_value(record.kind).unwrap(),
        "owner" => Value::String(record.owner.clone()),
        "perms" => Value::String(record.perms.clone()),
        "size" => Value::from(record.size),
        _ => unreachable!("unknown record field"),
    }
}

// ---------------------------------------------------------------------------
// Apply
// ---------------------------------------------------------------------------

enum Route<'p> {
    Cwd,
    Groups,
    Firewall,
    Env(&'p str),
    ShellOpts(&'p str),
    Limits(&'p str),
    Fs(&'p str),
}

fn route(pointer: &str) -> Result<Route<'_>, PatchError> {
    if pointer == "/cwd" {
        return Ok(Route::Cwd);
    }
    if pointer == "/groups" {
        return Ok(Route::Groups);
    }
    if pointer == "/firewall" {
        return Ok(Route::Firewall);
    }
    if let Some(rest) = pointer.strip_prefix("/fs/") {
        if rest.is_empty() {
            return Err(PatchError::BadPointer(pointer.to_string()));
        }
        // Keep the leading slash: fs keys are whole absolute paths.
        return Ok(Route::Fs(&pointer[3..]));
    }
    for prefix in ["/env/", "/shell_opts/", "/limits/"] {
        if let Some(key) = pointer.strip_prefix(prefix) {
            if key.is_empty() || key.contains('/') {
                return Err(PatchError::BadPointer(pointer.to_string()));
            }
            return Ok(match prefix {
                "/env/" => Route::Env(key),
                "/shell_opts/" => Route::ShellOpts(key),
                _ => Route::Limits(key),
            });
        }
    }
    Err(PatchError::BadPointer(pointer.to_string()))
}

fn string_value(pointer: &str, value: &Value) -> Result<String, PatchError> {
    value
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| PatchError::BadValue {
            pointer: pointer.to_string(),
            reason: "expected a string".to_string(),
        })
}

fn list_value(pointer: &str, value: &Value) -> Result<Vec<String>, PatchError> {
    serde_json::from_value(value.clone()).map_err(|e| PatchError::BadValue {
        pointer: pointer.to_string(),
        reason: e.to_string(),
    })
}

fn record_value(pointer: &str, value: &Value) -> Result<FileRecord, PatchError> {
    serde_json::from_value(value.clone()).map_err(|e| PatchError::BadValue {
        pointer: pointer.to_string(),
        reason: e.to_string(),
    })
}

fn set_record_field(
    record: &mut FileRecord,
    pointer: &str,
    field: &str,
    value: &Value,
) -> Result<(), PatchError> {
    match field {
        "owner" => record.owner = string_value(pointer, value)?,
        "group" => record.group = string_value(pointer, value)?,
        "perms" => record.perms = string_value(pointer, value)?,
        "hash" => record.hash = string_value(pointer, value)?,
        "size" => {
            record.size = value.as_u64().ok_or_else(|| PatchError::BadValue {
                pointer: pointer.to_string(),
                reason: "expected an unsigned integer".to_string(),
            })?
        }
        "kind" => {
            record.kind = serde_json::from_value(value.clone()).map_err(|e| {
                PatchError::BadValue {
                    pointer: pointer.to_string(),
                    reason: e.to_string(),
                }
            })?
        }
        _ => return Err(PatchError::PathNotFound(pointer.to_string())),
    }
    Ok(())
}

/// Applies `patch` to a copy of `before`. Adds are strict (an existing path
/// is an error), replaces and removes require the path to exist, and the
/// result satisfies `apply_patch(before, diff_context(before, after)) ==
/// after` for any two snapshots.
pub fn apply_patch(
    before: &ContextSnapshot,
    patch: &ContextPatch,
) -> Result<ContextSnapshot, PatchError> {
    let mut snap = before.clone();
    for op in &patch.ops {
        apply_op(&mut snap, op)?;
    }
    Ok(snap)
}

fn apply_op(snap: &mut ContextSnapshot, op: &PatchOp) -> Result<(), PatchError> {
    match op {
        PatchOp::Add { path, value } => match route(path)? {
            Route::Cwd | Route::Groups | Route::Firewall => {
                Err(PatchError::AddExisting(path.clone()))
            }
            Route::Env(key) => strict_insert(&mut snap.env, path, key, value),
            Route::ShellOpts(key) => strict_insert(&mut snap.shell_opts, path, key, value),
            Route::Limits(key) => strict_insert(&mut snap.limits, path, key, value),
            Route::Fs(key) => {
                if snap.fs.contains_key(key) {
                    return Err(PatchError::AddExisting(path.clone()));
                }
                let record = record_value(path, value)?;
                snap.fs.insert(key.to_string(), record);
                Ok(())
            }
        },
        PatchOp::Replace { path, value } => match route(path)? {
            Route::Cwd => {
                snap.cwd = string_value(path, value)?;
                Ok(())
            }
            Route::Groups => {
                snap.groups = list_value(path, value)?;
                Ok(())
            }
            Route::Firewall => {
                snap.firewall = list_value(path, value)?;
                Ok(())
            }
            Route::Env(key) => replace_existing(&mut snap.env, path, key, value),
            Route::ShellOpts(key) => replace_existing(&mut snap.shell_opts, path, key, value),
            Route::Limits(key) => replace_existing(&mut snap.limits, path, key, value),
            Route::Fs(key) => {
                if snap.fs.contains_key(key) {
                    let record = record_value(path, value)?;
                    snap.fs.insert(key.to_string(), record);
                    return Ok(());
                }
                // `/fs/<existing key>/<field>` replaces one record field.
                if let Some((head, field)) = key.rsplit_once('/') {
                    if let Some(record) = snap.fs.get_mut(head) {
                        return set_record_field(record, path, field, value);
                    }
                }
                Err(PatchError::PathNotFound(path.clone()))
            }
        },
        PatchOp::Remove { path } => match route(path)? {
            Route::Cwd | Route::Groups | Route::Firewall => {
                Err(PatchError::BadPointer(path.clone()))
            }
            Route::Env(key) => remove_existing(&mut snap.env, path, key),
            Route::ShellOpts(key) => remove_existing(&mut snap.shell_opts, path, key),
            Route::Limits(key) => remove_existing(&mut snap.limits, path, key),
            Route::Fs(key) => {
                if snap.fs.remove(key).is_none() {
                    return Err(PatchError::PathNotFound(path.clone()));
                }
                Ok(())
            }
        },
        PatchOp::Move { from, to } => {
            let value = match route(from)? {
                Route::Env(key) => snap
                    .env
                    .remove(key)
                    .map(Value::String)
                    .ok_or_else(|| PatchError::PathNotFound(from.clone()))?,
                Route::ShellOpts(key) => snap
                    .shell_opts
                    .remove(key)
                    .map(Value::String)
                    .ok_or_else(|| PatchError::PathNotFound(from.clone()))?,
                Route::Limits(key) => snap
                    .limits
                    .remove(key)
                    .map(Value::String)
                    .ok_or_else(|| PatchError::PathNotFound(from.clone()))?,
                Route::Fs(key) => {
                    let record = snap
                        .fs
                        .remove(key)
                        .ok_or_else(|| PatchError::PathNotFound(from.clone()))?;
                    serde_json::to_value(record).unwrap()
                }
                Route::Cwd | Route::Groups | Route::Firewall => {
                    return Err(PatchError::BadPointer(from.clone()))
                }
            };
            apply_op(snap, &PatchOp::add(to.clone(), value))
        }
    }
}

fn strict_insert(
    map: &mut BTreeMap<String, String>,
    path: &str,
    key: &str,
    value: &Value,
) -> Result<(), PatchError> {
    if map.contains_key(key) {
        return Err(PatchError::AddExisting(path.to_string()));
    }
    map.insert(key.to_string(), string_value(path, value)?);
    Ok(())
}

fn replace_existing(
    map: &mut BTreeMap<String, String>,
    path: &str,
    key: &str,
    value: &Value,
) -> Result<(), PatchError> {
    if !map.contains_key(key) {
        return Err(PatchError::PathNotFound(path.to_string()));
    }
    map.insert(key.to_string(), string_value(path, value)?);
    Ok(())
}

fn remove_existing(
    map: &mut BTreeMap<String, String>,
    path: &str,
    key: &str,
) -> Result<(), PatchError> {
    if map.remove(key).is_none() {
        return Err(PatchError::PathNotFound(path.to_string()));
    }
    Ok(())
}
