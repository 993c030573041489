//! Thematic content report generated from the storyboard, and its coverage audit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analysis::SlideAnalyses;
use crate::gateway::{vars, Gateway, GatewayError, ResponseSchema};
use crate::model::{Artifact, FieldError, PresentationManifest, Violations};
use crate::storyboard::Storyboard;

pub const REPORT_TEMPLATE: &str = "generate_content_report";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformationType {
    Synthesis,
    Combination,
    Reorganization,
    Expansion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentSection {
    pub number: u32,
    pub title: String,
    pub outline: Vec<String>,
    pub text: String,
    pub source_blocks: Vec<u32>,
    pub transformation_type: TransformationType,
}

/// Where a storyboard block ended up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Coverage {
    Sections(Vec<u32>),
    Dropped(String),
}

/// The model's answer; [`ContentReport`] adds the presentation id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBody {
    pub overview: String,
    pub sections: Vec<ContentSection>,
    pub block_coverage: BTreeMap<u32, Coverage>,
}

fn check_body(overview: &str, sections: &[ContentSection]) -> Vec<FieldError> {
    let mut v = Violations::new();
    v.check(!overview.trim().is_empty(), "overview", "must not be empty");
    v.check(!sections.is_empty(), "sections", "must not be empty");
    for (i, s) in sections.iter().enumerate() {
        v.check(
            s.number as usize == i + 1,
            format!("sections[{i}].number"),
            format!("must be {}", i + 1),
        );
        v.check(
            !s.title.trim().is_empty(),
            format!("sections[{i}].title"),
            "must not be empty",
        );
        v.check(
            !s.text.trim().is_empty(),
            format!("sections[{i}].text"),
            "must not be empty",
        );
    }
    v.into_vec()
}

impl ResponseSchema for ReportBody {
    const NAME: &'static str = "content_report";

    fn check(&self) -> Vec<FieldError> {
        check_body(&self.overview, &self.sections)
    }
}

/// `08_content_report.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentReport {
    pub presentation_id: String,
    pub overview: String,
    pub sections: Vec<ContentSection>,
    pub block_coverage: BTreeMap<u32, Coverage>,
}

impl ContentReport {
    pub fn from_body(presentation_id: &str, body: ReportBody) -> Self {
        ContentReport {
            presentation_id: presentation_id.to_string(),
            overview: body.overview,
            sections: body.sections,
            block_coverage: body.block_coverage,
        }
    }
}

impl Artifact for ContentReport {
    const KIND: &'static str = "content_report";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        let mut errors = v.into_vec();
        errors.extend(check_body(&self.overview, &self.sections));
        errors
    }
}

/// Result of auditing a report against its storyboard. Passes iff every list is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageVerdict {
    pub uncovered_blocks: Vec<u32>,
    pub unknown_blocks: Vec<u32>,
    pub empty_sections: Vec<u32>,
    /// Section numbers at positions where the sequence 1, 2, 3, ... breaks.
    pub non_contiguous_sections: Vec<u32>,
    /// Section numbers named in the coverage map that do not exist.
    pub dangling_sections: Vec<u32>,
    /// Blocks whose coverage entry disagrees with the sections' `source_blocks`.
    pub inconsistent_blocks: Vec<u32>,
}

impl CoverageVerdict {
    pub fn pass(&self) -> bool {
        self.uncovered_blocks.is_empty()
            && self.unknown_blocks.is_empty()
            && self.empty_sections.is_empty()
            && self.non_contiguous_sections.is_empty()
            && self.dangling_sections.is_empty()
            && self.inconsistent_blocks.is_empty()
    }

    pub fn to_field_errors(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        let list = |xs: &[u32]| xs.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
        for (path, xs, message) in [
            ("block_coverage", &self.uncovered_blocks, "missing blocks"),
            (
                "block_coverage",
                &self.unknown_blocks,
                "blocks not in the storyboard",
            ),
            ("sections", &self.empty_sections, "sections without text"),
            (
                "sections",
                &self.non_contiguous_sections,
                "section numbering is not 1, 2, 3, ...; at",
            ),
            (
                "block_coverage",
                &self.dangling_sections,
                "refers to missing sections",
            ),
            (
                "block_coverage",
                &self.inconsistent_blocks,
                "disagrees with source_blocks for blocks",
            ),
        ] {
            if !xs.is_empty() {
                v.push(path, format!("{message} {}", list(xs)));
            }
        }
        v.into_vec()
    }
}

/// Audit coverage, text and numbering of `report` against `storyboard`.
pub fn validate_report(report: &ContentReport, storyboard: &Storyboard) -> CoverageVerdict {
    let blocks: BTreeSet<u32> = storyboard.blocks.iter().map(|b| b.block).collect();
    let numbers: BTreeSet<u32> = report.sections.iter().map(|s| s.number).collect();
    let mut verdict = CoverageVerdict {
        uncovered_blocks: blocks
            .iter()
            .filter(|b| !report.block_coverage.contains_key(b))
            .copied()
            .collect(),
        unknown_blocks: report
            .block_coverage
            .keys()
            .filter(|b| !blocks.contains(b))
            .copied()
            .collect(),
        empty_sections: report
            .sections
            .iter()
            .filter(|s| s.text.trim().is_empty())
            .map(|s| s.number)
            .collect(),
        non_contiguous_sections: report
            .sections
            .iter()
            .enumerate()
            .filter(|(i, s)| s.number as usize != i + 1)
            .map(|(_, s)| s.number)
            .collect(),
        ..CoverageVerdict::default()
    };
    let mut dangling = BTreeSet::new();
    let mut inconsistent = BTreeSet::new();
    for (&block, coverage) in &report.block_coverage {
        let using: BTreeSet<u32> = report
            .sections
            .iter()
            .filter(|s| s.source_blocks.contains(&block))
            .map(|s| s.number)
            .collect();
        match coverage {
            Coverage::Sections(listed) => {
                dangling.extend(listed.iter().filter(|n| !numbers.contains(n)));
                if listed.is_empty() || listed.iter().copied().collect::<BTreeSet<_>>() != using {
                    inconsistent.insert(block);
                }
            }
            Coverage::Dropped(reason) => {
                if reason.trim().is_empty() || !using.is_empty() {
                    inconsistent.insert(block);
                }
            }
        }
    }
    for s in &report.sections {
        for b in &s.source_blocks {
            if !report.block_coverage.contains_key(b) && blocks.contains(b) {
                inconsistent.insert(*b);
            }
        }
    }
    verdict.dangling_sections = dangling.into_iter().collect();
    verdict.inconsistent_blocks = inconsistent.into_iter().collect();
    verdict
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{artifact} belongs to presentation {found:?}, expected {expected:?}")]
    PresentationMismatch {
        artifact: &'static str,
        expected: String,
        found: String,
    },
}

/// Storyboard blocks as the prompt presents them.
pub fn storyboard_json(storyboard: &Storyboard) -> String {
    let blocks: Vec<_> = storyboard
        .blocks
        .iter()
        .map(|b| {
            json!({
                "block": b.block,
                "slide": {"file": b.slide.file, "index": b.slide.index, "timestamp": b.slide.timestamp},
                "speech": b.speech,
                "included_in_publication": b.included_in_publication,
            })
        })
        .collect();
    serde_json::to_string_pretty(&blocks).expect("json values serialize")
}

fn analyses_json(analyses: &SlideAnalyses) -> String {
    let items: Vec<_> = analyses
        .analyses
        .iter()
        .map(|a| {
            json!({
                "slide_index": a.slide_index,
                "slide_type": a.slide_type,
                "content_summary": a.content_summary,
                "academic_significance": a.academic_significance,
            })
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("json values serialize")
}

/// One request for the whole storyboard. Coverage problems are sent back to
/// the model as repair feedback; an answer that still fails is an error.
pub fn generate_content_report(
    gateway: &Gateway,
    manifest: &PresentationManifest,
    storyboard: &Storyboard,
    analyses: &SlideAnalyses,
) -> Result<ContentReport, SynthesisError> {
    if analyses.presentation_id != storyboard.presentation_id {
        return Err(SynthesisError::PresentationMismatch {
            artifact: "slide analyses",
            expected: storyboard.presentation_id.clone(),
            found: analyses.presentation_id.clone(),
        });
    }
    let pid = storyboard.presentation_id.clone();
    let request_vars = vars([
        ("title", manifest.title.clone()),
        ("author", manifest.author.clone()),
        ("block_count", storyboard.blocks.len().to_string()),
        ("storyboard_json", storyboard_json(storyboard)),
        ("analyses_json", analyses_json(analyses)),
    ]);
    let body: ReportBody =
        gateway.request(REPORT_TEMPLATE, request_vars, &[], |body: &ReportBody| {
            validate_report(&ContentReport::from_body(&pid, body.clone()), storyboard)
                .to_field_errors()
        })?;
    Ok(ContentReport::from_body(&pid, body))
}
