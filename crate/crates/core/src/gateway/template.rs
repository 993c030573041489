//! Instruction templates: TOML front matter between `+++` lines, then a body
//! with `{{name}}` placeholders.
//!
//! ```text
//! +++
//! name = "classify_slide_type"
//! schema = "slide_analysis"
//! vars = ["slide_index", "deck_context"]
//! +++
//! Classify slide {{slide_index}} ...
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    Unknown(String),
    #[error("template {name}: missing variables: {}", .missing.join(", "))]
    MissingVars { name: String, missing: Vec<String> },
    #[error("template {name}: placeholder {{{{{placeholder}}}}} is not a declared variable")]
    UndeclaredPlaceholder { name: String, placeholder: String },
    #[error("template {source_name}: {message}")]
    Malformed {
        source_name: String,
        message: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrontMatter {
    name: String,
    schema: String,
    #[serde(default)]
    vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub name: String,
    pub body: String,
    pub required_vars: BTreeSet<String>,
    /// Name of the response schema the model output must satisfy.
    pub expected_schema: String,
    pieces: Vec<Piece>,
}

impl InstructionTemplate {
    /// Parse a template file. `source_name` is used in error messages only.
    pub fn parse(source_name: &str, text: &str) -> Result<Self, TemplateError> {
        let malformed = |message: String| TemplateError::Malformed {
            source_name: source_name.to_string(),
            message,
        };
        let rest = text
            .strip_prefix("+++\n")
            .ok_or_else(|| malformed("must start with a +++ front matter line".into()))?;
        let end = rest
            .find("\n+++\n")
            .ok_or_else(|| malformed("front matter is not closed by +++".into()))?;
        let front: FrontMatter =
            toml::from_str(&rest[..end]).map_err(|e| malformed(e.to_string()))?;
        let body = rest[end + 5..].to_string();
        let required_vars: BTreeSet<String> = front.vars.into_iter().collect();
        let pieces = split_placeholders(&body).map_err(malformed)?;
        for piece in &pieces {
            if let Piece::Var(var) = piece {
                if !required_vars.contains(var) {
                    return Err(TemplateError::UndeclaredPlaceholder {
                        name: front.name.clone(),
                        placeholder: var.clone(),
                    });
                }
            }
        }
        Ok(InstructionTemplate {
            name: front.name,
            body,
            required_vars,
            expected_schema: front.schema,
            pieces,
        })
    }

    /// Substitute every placeholder. Variables beyond the declared set are ignored.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let missing: Vec<String> = self
            .required_vars
            .iter()
            .filter(|v| !vars.contains_key(*v))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(TemplateError::MissingVars {
                name: self.name.clone(),
                missing,
            });
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Var(v) => out.push_str(&vars[v]),
            }
        }
        Ok(out)
    }
}

fn split_placeholders(body: &str) -> Result<Vec<Piece>, String> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        if open > 0 {
            pieces.push(Piece::Text(rest[..open].to_string()));
        }
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or("unterminated {{ placeholder")?;
        let name = after[..close].trim();
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
            return Err(format!("invalid placeholder name {name:?}"));
        }
        pieces.push(Piece::Var(name.to_string()));
        rest = &after[close + 2..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    Ok(pieces)
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "classify_slide_type.tmpl",
        include_str!("../../templates/classify_slide_type.tmpl"),
    ),
    (
        "transcribe_video.tmpl",
        include_str!("../../templates/transcribe_video.tmpl"),
    ),
    (
        "generate_content_report.tmpl",
        include_str!("../../templates/generate_content_report.tmpl"),
    ),
];

#[derive(Debug, Clone, Default)]
pub struct TemplateLibrary {
    templates: BTreeMap<String, InstructionTemplate>,
}

impl TemplateLibrary {
    /// The templates shipped in the crate's `templates/` directory.
    pub fn builtin() -> Self {
        let mut lib = TemplateLibrary::default();
        for (file, text) in BUILTIN {
            let t = InstructionTemplate::parse(file, text).expect("shipped templates parse");
            lib.templates.insert(t.name.clone(), t);
        }
        lib
    }

    /// Built-in templates, overridden by any `*.tmpl` file in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut lib = Self::builtin();
        let entries = fs::read_dir(dir).map_err(|e| TemplateError::Malformed {
            source_name: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<_> = entries
            .flatten()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "tmpl"))
            .collect();
        paths.sort();
        for path in paths {
            let source_name = path.display().to_string();
            let text = fs::read_to_string(&path).map_err(|e| TemplateError::Malformed {
                source_name: source_name.clone(),
                message: e.to_string(),
            })?;
            let t = InstructionTemplate::parse(&source_name, &text)?;
            lib.templates.insert(t.name.clone(), t);
        }
        Ok(lib)
    }

    pub fn get(&self, name: &str) -> Result<&InstructionTemplate, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    pub fn render(
        &self,
        name: &str,
        vars: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        self.get(name)?.render(vars)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Build a variable map from string pairs.
pub fn vars<K: ToString, V: ToString>(
    pairs: impl IntoIterator<Item = (K, V)>,
) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
