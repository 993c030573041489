//! Domain types shared by every stage and the canonical artifact encoding.

mod artifact;
mod digest;
mod timestamp;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use artifact::{
    decode_structure, deserialize_artifact, read_artifact, serialize_artifact, to_canonical_json,
    write_artifact, write_atomic, Artifact, ArtifactError, FieldError, Violations,
};
pub use digest::Digest;
pub use timestamp::{Timestamp, TimestampError};

/// Returns true when `id` matches `[A-Za-z0-9_-]+`.
pub fn is_filesystem_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Identity and file inventory for one talk, read from `manifest.json`.
///
/// Paths are resolved relative to the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresentationManifest {
    pub presentation_id: String,
    pub title: String,
    pub author: String,
    pub affiliation: String,
    pub pdf_path: PathBuf,
    pub video_path: PathBuf,
    pub event_tag: String,
}

impl PresentationManifest {
    pub fn resolve(&self, base: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        }
    }

    /// Canonical slide image file name, e.g. `ai-nepi_003_slide_03.png`.
    pub fn slide_file_name(&self, index: u32) -> String {
        slide_file_name(&self.event_tag, &self.presentation_id, index)
    }
}

pub fn slide_file_name(event_tag: &str, presentation_id: &str, index: u32) -> String {
    format!("{event_tag}_{presentation_id}_slide_{index:02}.png")
}

impl Artifact for PresentationManifest {
    const KIND: &'static str = "manifest";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            is_filesystem_safe_id(&self.presentation_id),
            "presentation_id",
            "must match [A-Za-z0-9_-]+",
        );
        for (name, value) in [
            ("title", &self.title),
            ("author", &self.author),
            ("affiliation", &self.affiliation),
            ("event_tag", &self.event_tag),
        ] {
            v.check(!value.trim().is_empty(), name, "must not be empty");
        }
        v.check(
            self.event_tag.is_empty() || is_filesystem_safe_id(&self.event_tag),
            "event_tag",
            "must match [A-Za-z0-9_-]+",
        );
        v.check(
            self.pdf_path != self.video_path,
            "video_path",
            "must differ from pdf_path",
        );
        v.into_vec()
    }
}

/// One rasterized slide. `path` is relative to the presentation work directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideImage {
    pub index: u32,
    pub path: String,
    pub width_px: u32,
    pub height_px: u32,
    pub dpi: u32,
    pub digest: Digest,
}

impl SlideImage {
    pub fn file_name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Low,
    Medium,
    High,
}

/// Judged quality of a finished publication. Every metric is optional: without
/// a configured evaluator all of them are `null`, never a made-up number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityMetricsReport {
    pub content_completeness: Option<f64>,
    pub academic_rigor: Option<Rating>,
    pub technical_precision: Option<f64>,
    pub narrative_coherence: Option<f64>,
    pub evaluator_id: String,
}

impl QualityMetricsReport {
    pub fn absent() -> Self {
        QualityMetricsReport {
            content_completeness: None,
            academic_rigor: None,
            technical_precision: None,
            narrative_coherence: None,
            evaluator_id: "none".to_string(),
        }
    }
}

impl Artifact for QualityMetricsReport {
    const KIND: &'static str = "quality_metrics";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        for (name, value) in [
            ("content_completeness", self.content_completeness),
            ("technical_precision", self.technical_precision),
            ("narrative_coherence", self.narrative_coherence),
        ] {
            if let Some(x) = value {
                v.check(
                    (0.0..=1.0).contains(&x),
                    name,
                    "must be a fraction in [0, 1]",
                );
            }
        }
        v.check(
            !self.evaluator_id.is_empty(),
            "evaluator_id",
            "must not be empty",
        );
        v.into_vec()
    }
}
