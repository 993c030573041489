//! Final checks over the staged bundle and every upstream artifact.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Artifact, Digest, FieldError, QualityMetricsReport, Violations};
use crate::render::{
    place_figures, referenced_figures, RenderInputs, RenderRecord, DOCUMENT_FILE, FIGURES_DIR,
};
use crate::storyboard::Storyboard;
use crate::sync::TransitionMap;
use crate::synthesis::{validate_report, ContentReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// `10_quality.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityReport {
    pub presentation_id: String,
    pub passed: bool,
    pub checks: Vec<QaCheck>,
    pub metrics: QualityMetricsReport,
}

impl Artifact for QualityReport {
    const KIND: &'static str = "quality_report";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        v.check(!self.checks.is_empty(), "checks", "must not be empty");
        v.check(
            self.passed == self.checks.iter().all(|c| c.passed),
            "passed",
            "must agree with the individual checks",
        );
        v.extend_prefixed("metrics", self.metrics.validate());
        v.into_vec()
    }
}

fn check(name: &str, result: Result<String, String>) -> QaCheck {
    match result {
        Ok(detail) => QaCheck {
            name: name.to_string(),
            passed: true,
            detail,
        },
        Err(detail) => QaCheck {
            name: name.to_string(),
            passed: false,
            detail,
        },
    }
}

fn names(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(", ")
}

/// Inspect the bundle in `bundle_dir` against the artifacts that produced it.
/// `upstream` lists (file name, validation outcome) for artifacts 00..09.
pub fn run_qa(
    inputs: &RenderInputs<'_>,
    map: &TransitionMap,
    record: &RenderRecord,
    bundle_dir: &Path,
    upstream: &[(String, Result<(), String>)],
) -> QualityReport {
    let mut checks = Vec::new();

    let failed: Vec<String> = upstream
        .iter()
        .filter_map(|(file, r)| r.as_ref().err().map(|e| format!("{file}: {e}")))
        .collect();
    checks.push(check(
        "artifacts_validate",
        if failed.is_empty() {
            Ok(format!(
                "{} artifacts re-read and validated",
                upstream.len()
            ))
        } else {
            Err(failed.join("; "))
        },
    ));

    let document = fs::read(bundle_dir.join(DOCUMENT_FILE));
    checks.push(check(
        "document_digest",
        match &document {
            Ok(bytes) if Digest::of_bytes(bytes) == record.document_digest => {
                Ok(format!("{DOCUMENT_FILE} matches its record"))
            }
            Ok(_) => Err(format!("{DOCUMENT_FILE} differs from the render record")),
            Err(e) => Err(format!("{DOCUMENT_FILE}: {e}")),
        },
    ));

    let referenced = document
        .as_ref()
        .map(|b| referenced_figures(&String::from_utf8_lossy(b)))
        .unwrap_or_default();
    let recorded: BTreeSet<String> = record
        .figures
        .iter()
        .map(|f| {
            f.path
                .trim_start_matches(&format!("{FIGURES_DIR}/"))
                .to_string()
        })
        .collect();
    let expected: Result<BTreeSet<String>, String> = place_figures(inputs)
        .map(|figs| figs.into_iter().map(|f| f.file_name).collect())
        .map_err(|e| e.to_string());
    checks.push(check(
        "figure_closure",
        match expected {
            Ok(expected) if expected == referenced && expected == recorded => Ok(format!(
                "{} figures, all included and cited",
                expected.len()
            )),
            Ok(expected) => Err(format!(
                "expected [{}], document references [{}], record lists [{}]",
                names(&expected),
                names(&referenced),
                names(&recorded)
            )),
            Err(e) => Err(e),
        },
    ));

    let bad_files: Vec<String> = record
        .figures
        .iter()
        .filter(|f| {
            fs::read(bundle_dir.join(&f.path))
                .map(|b| Digest::of_bytes(&b) != f.digest)
                .unwrap_or(true)
        })
        .map(|f| f.path.clone())
        .collect();
    let on_disk: BTreeSet<String> = fs::read_dir(bundle_dir.join(FIGURES_DIR))
        .map(|rd| {
            rd.flatten()
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    checks.push(check(
        "figure_files",
        if !bad_files.is_empty() {
            Err(format!("missing or altered: {}", bad_files.join(", ")))
        } else if on_disk != recorded {
            Err(format!(
                "figures/ holds [{}] but the record lists [{}]",
                names(&on_disk),
                names(&recorded)
            ))
        } else {
            Ok(format!(
                "{} figure files match their digests",
                recorded.len()
            ))
        },
    ));

    checks.push(check(
        "report_coverage",
        coverage(inputs.report, inputs.storyboard),
    ));

    checks.push(check(
        "storyboard_cardinality",
        if inputs.storyboard.blocks.len() == map.entries.len() {
            Ok(format!(
                "{} blocks for {} presented entries",
                inputs.storyboard.blocks.len(),
                map.entries.len()
            ))
        } else {
            Err(format!(
                "{} blocks but {} presented entries",
                inputs.storyboard.blocks.len(),
                map.entries.len()
            ))
        },
    ));

    checks.push(check(
        "section_count",
        if record.section_count as usize == inputs.report.sections.len() {
            Ok(format!("{} sections", record.section_count))
        } else {
            Err("render record section count differs from the report".into())
        },
    ));

    QualityReport {
        presentation_id: inputs.report.presentation_id.clone(),
        passed: checks.iter().all(|c| c.passed),
        checks,
        metrics: QualityMetricsReport::absent(),
    }
}

fn coverage(report: &ContentReport, storyboard: &Storyboard) -> Result<String, String> {
    let verdict = validate_report(report, storyboard);
    if verdict.pass() {
        Ok(format!(
            "all {} blocks accounted for",
            storyboard.blocks.len()
        ))
    } else {
        Err(verdict
            .to_field_errors()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; "))
    }
}
