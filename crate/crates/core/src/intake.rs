//! Source material checks that gate the pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::pdf_page_count;
use crate::model::{
    decode_structure, is_filesystem_safe_id, Artifact, ArtifactError, FieldError,
    PresentationManifest, Violations,
};
use crate::video;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdfIntegrity {
    Verified,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoQuality {
    Sufficient,
    Insufficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataCompleteness {
    Confirmed,
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorInformation {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProcessingStatus {
    Ready,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckFailure {
    pub check: String,
    pub detail: String,
}

/// `00_validation.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationReport {
    pub presentation_id: String,
    pub pdf_integrity: PdfIntegrity,
    pub video_quality: VideoQuality,
    pub metadata_completeness: MetadataCompleteness,
    pub author_information: AuthorInformation,
    pub processing_status: ProcessingStatus,
    pub failures: Vec<CheckFailure>,
}

impl ValidationReport {
    pub fn is_ready(&self) -> bool {
        self.processing_status == ProcessingStatus::Ready
    }
}

impl Artifact for ValidationReport {
    const KIND: &'static str = "validation_report";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        let all_pass = self.pdf_integrity == PdfIntegrity::Verified
            && self.video_quality == VideoQuality::Sufficient
            && self.metadata_completeness == MetadataCompleteness::Confirmed
            && self.author_information == AuthorInformation::Complete;
        v.check(
            all_pass == self.is_ready(),
            "processing_status",
            "must be READY exactly when every check passes",
        );
        v.check(
            self.failures.is_empty() == self.is_ready(),
            "failures",
            "must be empty exactly when READY",
        );
        v.into_vec()
    }
}

/// Thresholds for the checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntakeConfig {
    pub min_width: u32,
    pub min_height: u32,
}

impl Default for IntakeConfig {
    fn default() -> Self {
        IntakeConfig {
            min_width: 640,
            min_height: 360,
        }
    }
}

#[derive(Debug, Error)]
pub enum IntakeError {
    #[error("cannot read manifest {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest {path} is malformed: {source}")]
    Malformed {
        path: PathBuf,
        source: ArtifactError,
    },
}

/// Read `manifest.json` without judging its content; that is the report's job.
pub fn load_manifest(path: &Path) -> Result<PresentationManifest, IntakeError> {
    let bytes = fs::read(path).map_err(|source| IntakeError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode_structure(&bytes).map_err(|source| IntakeError::Malformed {
        path: path.to_path_buf(),
        source,
    })
}

fn check_pdf(path: &Path) -> Result<(), String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    pdf_page_count(&bytes).map(|_| ())
}

fn check_video(path: &Path, config: &IntakeConfig) -> Result<(), String> {
    let info = video::probe(path).map_err(|e| e.to_string())?;
    if info.video_streams == 0 {
        return Err("no video stream".into());
    }
    if info.duration.millis() == 0 {
        return Err("duration is zero".into());
    }
    if info.width < config.min_width || info.height < config.min_height {
        return Err(format!(
            "resolution {}x{} is below the minimum {}x{}",
            info.width, info.height, config.min_width, config.min_height
        ));
    }
    Ok(())
}

/// Run every check. Paths in the manifest are resolved against `base_dir`.
pub fn validate_inputs(
    manifest: &PresentationManifest,
    base_dir: &Path,
    config: &IntakeConfig,
) -> ValidationReport {
    let mut failures = Vec::new();
    let mut fail = |check: &str, detail: String| {
        failures.push(CheckFailure {
            check: check.to_string(),
            detail,
        })
    };

    let pdf = check_pdf(&manifest.resolve(base_dir, &manifest.pdf_path));
    if let Err(detail) = &pdf {
        fail("pdf_integrity", detail.clone());
    }
    let video = check_video(&manifest.resolve(base_dir, &manifest.video_path), config);
    if let Err(detail) = &video {
        fail("video_quality", detail.clone());
    }

    let mut missing = Vec::new();
    if !is_filesystem_safe_id(&manifest.presentation_id) {
        missing.push("presentation_id must match [A-Za-z0-9_-]+".to_string());
    }
    if manifest.title.trim().is_empty() {
        missing.push("title is empty".to_string());
    }
    if !is_filesystem_safe_id(&manifest.event_tag) {
        missing.push("event_tag must match [A-Za-z0-9_-]+".to_string());
    }
    if manifest.pdf_path == manifest.video_path {
        missing.push("pdf_path and video_path are the same file".to_string());
    }
    if !missing.is_empty() {
        fail("metadata_completeness", missing.join("; "));
    }

    let mut author = Vec::new();
    if manifest.author.trim().is_empty() {
        author.push("author is empty");
    }
    if manifest.affiliation.trim().is_empty() {
        author.push("affiliation is empty");
    }
    if !author.is_empty() {
        fail("author_information", author.join("; "));
    }

    let status = if failures.is_empty() {
        ProcessingStatus::Ready
    } else {
        ProcessingStatus::Blocked
    };
    ValidationReport {
        presentation_id: manifest.presentation_id.clone(),
        pdf_integrity: if pdf.is_ok() {
            PdfIntegrity::Verified
        } else {
            PdfIntegrity::Failed
        },
        video_quality: if video.is_ok() {
            VideoQuality::Sufficient
        } else {
            VideoQuality::Insufficient
        },
        metadata_completeness: if missing.is_empty() {
            MetadataCompleteness::Confirmed
        } else {
            MetadataCompleteness::Incomplete
        },
        author_information: if author.is_empty() {
            AuthorInformation::Complete
        } else {
            AuthorInformation::Incomplete
        },
        processing_status: status,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::deck::{write_pdf, DeckBuilder};
    use crate::fixtures::video::{write_gif, write_y4m, GifFrame};
    use crate::model::serialize_artifact;
    use image::GrayImage;

    fn setup(width: u32, height: u32) -> (tempfile::TempDir, PresentationManifest) {
        let dir = tempfile::tempdir().unwrap();
        let mut deck = DeckBuilder::new(1);
        fs::write(
            dir.path().join("talk.pdf"),
            write_pdf(&deck.content_slides(2)),
        )
        .unwrap();
        let frame = GifFrame {
            image: GrayImage::from_pixel(width, height, image::Luma([200])),
            delay_ms: 2000,
        };
        write_gif(&dir.path().join("talk.gif"), &[frame]).unwrap();
        let manifest = PresentationManifest {
            presentation_id: "003".into(),
            title: "Talk".into(),
            author: "A. Speaker".into(),
            affiliation: "Lab".into(),
            pdf_path: "talk.pdf".into(),
            video_path: "talk.gif".into(),
            event_tag: "ai-nepi".into(),
        };
        (dir, manifest)
    }

    #[test]
    fn complete_inputs_are_ready() {
        let (dir, m) = setup(640, 360);
        let r = validate_inputs(&m, dir.path(), &IntakeConfig::default());
        assert!(r.is_ready(), "{:?}", r.failures);
        assert_eq!(r.metadata_completeness, MetadataCompleteness::Confirmed);
        assert!(r.validate().is_empty());
        let again = validate_inputs(&m, dir.path(), &IntakeConfig::default());
        assert_eq!(
            serialize_artifact(&r).unwrap(),
            serialize_artifact(&again).unwrap()
        );
    }

    #[test]
    fn empty_author_blocks() {
        let (dir, mut m) = setup(640, 360);
        m.author = " ".into();
        let r = validate_inputs(&m, dir.path(), &IntakeConfig::default());
        assert_eq!(r.author_information, AuthorInformation::Incomplete);
        assert_eq!(r.processing_status, ProcessingStatus::Blocked);
        assert_eq!(
            r.failures
                .iter()
                .map(|f| f.check.as_str())
                .collect::<Vec<_>>(),
            vec!["author_information"]
        );
        assert!(r.validate().is_empty());
    }

    #[test]
    fn truncated_pdf_fails_integrity() {
        let (dir, m) = setup(640, 360);
        let bytes = fs::read(dir.path().join("talk.pdf")).unwrap();
        fs::write(dir.path().join("talk.pdf"), &bytes[..100]).unwrap();
        let r = validate_inputs(&m, dir.path(), &IntakeConfig::default());
        assert_eq!(r.pdf_integrity, PdfIntegrity::Failed);
        assert_eq!(r.processing_status, ProcessingStatus::Blocked);
    }

    #[test]
    fn low_resolution_or_missing_video_is_insufficient() {
        let (dir, m) = setup(320, 180);
        assert_eq!(
            validate_inputs(&m, dir.path(), &IntakeConfig::default()).video_quality,
            VideoQuality::Insufficient
        );
        let (dir, mut m) = setup(640, 360);
        m.video_path = "missing.y4m".into();
        let r = validate_inputs(&m, dir.path(), &IntakeConfig::default());
        assert_eq!(r.video_quality, VideoQuality::Insufficient);
        let y4m = dir.path().join("still.y4m");
        write_y4m(&y4m, &[GrayImage::new(640, 360)], 1).unwrap();
        m.video_path = "still.y4m".into();
        assert!(validate_inputs(&m, dir.path(), &IntakeConfig::default()).is_ready());
    }

    #[test]
    fn status_invariant_is_enforced() {
        let (dir, m) = setup(640, 360);
        let mut r = validate_inputs(&m, dir.path(), &IntakeConfig::default());
        r.author_information = AuthorInformation::Incomplete;
        assert_eq!(r.validate().len(), 1);
    }

    #[test]
    fn unreadable_manifest_is_an_error_not_a_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        assert!(matches!(
            load_manifest(&path),
            Err(IntakeError::Read { .. })
        ));
        fs::write(&path, "{\"presentation_id\": 3}").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(IntakeError::Malformed { .. })
        ));
    }
}
