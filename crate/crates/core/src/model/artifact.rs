//! Canonical on-disk form shared by every stage artifact.
//!
//! Artifacts are UTF-8 JSON, pretty-printed with two-space indentation, object
//! keys sorted, and a single trailing newline. Decoding rejects unknown fields
//! (each artifact type is `deny_unknown_fields`) and then runs the type's own
//! invariant checks, so a file that decodes is a file downstream stages may trust.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// One violated constraint, located by a dotted/indexed field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{kind}: schema violation: {}", join_errors(.errors))]
    Invalid {
        kind: &'static str,
        errors: Vec<FieldError>,
    },
    #[error("{kind}: not valid JSON: {source}")]
    Syntax {
        kind: &'static str,
        source: serde_json::Error,
    },
    #[error("{kind}: {path}: {source}")]
    Io {
        kind: &'static str,
        path: String,
        source: io::Error,
    },
}

impl ArtifactError {
    /// Field paths of every reported violation (empty for syntax and I/O errors).
    pub fn field_paths(&self) -> Vec<&str> {
        match self {
            ArtifactError::Invalid { errors, .. } => {
                errors.iter().map(|e| e.path.as_str()).collect()
            }
            _ => Vec::new(),
        }
    }
}

fn join_errors(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A stage artifact with a canonical serialization and checkable invariants.
pub trait Artifact: Serialize + DeserializeOwned {
    /// Schema name; for the kinds under `schemas/`, also the file stem.
    const KIND: &'static str;

    /// Invariant violations; empty when the value is valid.
    fn validate(&self) -> Vec<FieldError>;
}

/// Encode an artifact in canonical form. Invalid values are refused.
pub fn serialize_artifact<A: Artifact>(artifact: &A) -> Result<Vec<u8>, ArtifactError> {
    let errors = artifact.validate();
    if !errors.is_empty() {
        return Err(ArtifactError::Invalid {
            kind: A::KIND,
            errors,
        });
    }
    to_canonical_json(artifact).map_err(|source| ArtifactError::Syntax {
        kind: A::KIND,
        source,
    })
}

/// Decode and validate an artifact. Unknown or missing fields and invariant
/// violations are all reported as [`ArtifactError::Invalid`] with field paths.
pub fn deserialize_artifact<A: Artifact>(bytes: &[u8]) -> Result<A, ArtifactError> {
    let artifact: A = decode_structure(bytes)?;
    let errors = artifact.validate();
    if errors.is_empty() {
        Ok(artifact)
    } else {
        Err(ArtifactError::Invalid {
            kind: A::KIND,
            errors,
        })
    }
}

/// Decode the JSON structure only (types, required and unknown fields) without
/// running invariant checks. Intake uses this for manifests, whose content
/// problems are reported as a BLOCKED validation rather than a decode failure.
pub fn decode_structure<A: Artifact>(bytes: &[u8]) -> Result<A, ArtifactError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let artifact: A = match serde_path_to_error::deserialize(&mut de) {
        Ok(a) => a,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            if inner.is_syntax() || inner.is_eof() || inner.is_io() {
                return Err(ArtifactError::Syntax {
                    kind: A::KIND,
                    source: inner,
                });
            }
            return Err(ArtifactError::Invalid {
                kind: A::KIND,
                errors: vec![FieldError::new(path, strip_position(&inner.to_string()))],
            });
        }
    };
    de.end().map_err(|source| ArtifactError::Syntax {
        kind: A::KIND,
        source,
    })?;
    Ok(artifact)
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(idx) => message[..idx].to_string(),
        None => message.to_string(),
    }
}

/// Serialize any value in the canonical JSON form (sorted keys, trailing newline).
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_vec_pretty(&Sorted(&value))?;
    out.push(b'\n');
    Ok(out)
}

/// Serializes a JSON value with object keys in byte order, independent of
/// whether `serde_json` was built with `preserve_order`.
struct Sorted<'a>(&'a Value);

impl Serialize for Sorted<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Value::Object(map) => {
                let sorted: BTreeMap<&String, Sorted<'_>> =
                    map.iter().map(|(k, v)| (k, Sorted(v))).collect();
                sorted.serialize(serializer)
            }
            Value::Array(items) => {
                let items: Vec<Sorted<'_>> = items.iter().map(Sorted).collect();
                items.serialize(serializer)
            }
            other => other.serialize(serializer),
        }
    }
}

/// Write bytes through a sibling temp file and rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = parent.join(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_artifact<A: Artifact>(path: &Path, artifact: &A) -> Result<Vec<u8>, ArtifactError> {
    let bytes = serialize_artifact(artifact)?;
    write_atomic(path, &bytes).map_err(|source| ArtifactError::Io {
        kind: A::KIND,
        path: path.display().to_string(),
        source,
    })?;
    Ok(bytes)
}

pub fn read_artifact<A: Artifact>(path: &Path) -> Result<A, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::Io {
        kind: A::KIND,
        path: path.display().to_string(),
        source,
    })?;
    deserialize_artifact(&bytes)
}

/// Accumulates [`FieldError`]s while walking a value.
#[derive(Debug, Default)]
pub struct Violations(Vec<FieldError>);

impl Violations {
    pub fn new() -> Self {
        Violations(Vec::new())
    }

    pub fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.0.push(FieldError::new(path, message));
        }
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError::new(path, message));
    }

    pub fn extend_prefixed(&mut self, prefix: &str, errors: Vec<FieldError>) {
        self.0.extend(
            errors
                .into_iter()
                .map(|e| FieldError::new(format!("{prefix}.{}", e.path), e.message)),
        );
    }

    pub fn into_vec(self) -> Vec<FieldError> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Probe {
        zeta: u32,
        alpha: Vec<Inner>,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        b: String,
        a: f64,
    }

    impl Artifact for Probe {
        const KIND: &'static str = "probe";

        fn validate(&self) -> Vec<FieldError> {
            let mut v = Violations::new();
            v.check(self.zeta > 0, "zeta", "must be positive");
            v.into_vec()
        }
    }

    #[test]
    fn canonical_form_sorts_keys_and_ends_with_newline() {
        let p = Probe {
            zeta: 1,
            alpha: vec![Inner {
                b: "x".into(),
                a: 0.98,
            }],
        };
        let text = String::from_utf8(serialize_artifact(&p).unwrap()).unwrap();
        assert!(text.ends_with("}\n"));
        assert!(text.find("\"alpha\"").unwrap() < text.find("\"zeta\"").unwrap());
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert_eq!(deserialize_artifact::<Probe>(text.as_bytes()).unwrap(), p);
    }

    #[test]
    fn unknown_field_is_reported_with_its_path() {
        let err = deserialize_artifact::<Probe>(
            br#"{"zeta": 1, "alpha": [{"a": 1.0, "b": "x", "c": 2}]}"#,
        )
        .unwrap_err();
        assert_eq!(err.field_paths(), vec!["alpha[0].c"]);
        assert!(err.to_string().contains("unknown field `c`"), "{err}");
    }

    #[test]
    fn invariant_violation_lists_field() {
        let err = deserialize_artifact::<Probe>(br#"{"zeta": 0, "alpha": []}"#).unwrap_err();
        assert_eq!(err.field_paths(), vec!["zeta"]);
        assert!(serialize_artifact(&Probe {
            zeta: 0,
            alpha: vec![]
        })
        .is_err());
    }

    #[test]
    fn syntax_errors_are_distinct() {
        assert!(matches!(
            deserialize_artifact::<Probe>(b"{\"zeta\": 1,"),
            Err(ArtifactError::Syntax { .. })
        ));
        assert!(matches!(
            deserialize_artifact::<Probe>(b"{\"zeta\": 1, \"alpha\": []} trailing"),
            Err(ArtifactError::Syntax { .. })
        ));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/a.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
