//! Per-slide semantic analysis through the model gateway.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::extract::SlideSet;
use crate::gateway::{vars, Gateway, GatewayError, ResponseSchema};
use crate::model::{Artifact, FieldError, PresentationManifest, Rating, SlideImage, Violations};

pub const CLASSIFY_TEMPLATE: &str = "classify_slide_type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlideType {
    TechnicalArchitecture,
    Conceptual,
    Data,
    Title,
    Agenda,
    Interactive,
    Transition,
    References,
    Other,
}

impl SlideType {
    pub const ALL: [SlideType; 9] = [
        SlideType::TechnicalArchitecture,
        SlideType::Conceptual,
        SlideType::Data,
        SlideType::Title,
        SlideType::Agenda,
        SlideType::Interactive,
        SlideType::Transition,
        SlideType::References,
        SlideType::Other,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideAnalysis {
    pub slide_index: u32,
    pub slide_type: SlideType,
    pub content_summary: String,
    pub comprehensive_analysis: String,
    pub academic_significance: Rating,
}

impl ResponseSchema for SlideAnalysis {
    const NAME: &'static str = "slide_analysis";

    fn check(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(self.slide_index >= 1, "slide_index", "must be at least 1");
        v.check(
            !self.content_summary.trim().is_empty(),
            "content_summary",
            "must not be empty",
        );
        v.check(
            !self.comprehensive_analysis.trim().is_empty(),
            "comprehensive_analysis",
            "must not be empty",
        );
        v.into_vec()
    }
}

/// `03_slide_analyses.json`: one analysis per slide, in slide order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideAnalyses {
    pub presentation_id: String,
    pub analyses: Vec<SlideAnalysis>,
}

impl SlideAnalyses {
    pub fn get(&self, index: u32) -> Option<&SlideAnalysis> {
        index
            .checked_sub(1)
            .and_then(|i| self.analyses.get(i as usize))
            .filter(|a| a.slide_index == index)
    }
}

impl Artifact for SlideAnalyses {
    const KIND: &'static str = "slide_analyses";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        for (i, a) in self.analyses.iter().enumerate() {
            let path = format!("analyses[{i}]");
            v.check(
                a.slide_index as usize == i + 1,
                format!("{path}.slide_index"),
                format!("must be {}", i + 1),
            );
            v.extend_prefixed(&path, a.check());
        }
        v.into_vec()
    }
}

/// Context shared by every slide's prompt.
pub fn deck_context(manifest: &PresentationManifest, slide_count: usize) -> String {
    format!(
        "Title: {}\nAuthor: {} ({})\nEvent: {}\nSlides: {}",
        manifest.title, manifest.author, manifest.affiliation, manifest.event_tag, slide_count
    )
}

/// Analyse one slide. The answer must refer to the slide that was asked about.
pub fn analyze_slide(
    gateway: &Gateway,
    work_dir: &Path,
    slide: &SlideImage,
    slide_count: usize,
    deck_context: &str,
) -> Result<SlideAnalysis, GatewayError> {
    let neighbours = match (slide.index > 1, (slide.index as usize) < slide_count) {
        (true, true) => format!("between slides {} and {}", slide.index - 1, slide.index + 1),
        (false, true) => "the first slide".to_string(),
        (true, false) => "the last slide".to_string(),
        (false, false) => "the only slide".to_string(),
    };
    let context = format!("{deck_context}\nThis is {neighbours}.");
    let request_vars = vars([
        ("slide_index", slide.index.to_string()),
        ("slide_count", slide_count.to_string()),
        ("deck_context", context),
    ]);
    let expected = slide.index;
    gateway.request(
        CLASSIFY_TEMPLATE,
        request_vars,
        &[work_dir.join(&slide.path)],
        |a: &SlideAnalysis| {
            if a.slide_index == expected {
                vec![]
            } else {
                vec![FieldError::new(
                    "slide_index",
                    format!("must be {expected}"),
                )]
            }
        },
    )
}

/// Analyse every slide with at most `gateway.concurrency()` requests in flight.
/// Fails as a whole if any slide fails.
pub fn analyze_slides(
    gateway: &Gateway,
    manifest: &PresentationManifest,
    slide_set: &SlideSet,
    work_dir: &Path,
    exec: Exec,
) -> Result<SlideAnalyses, GatewayError> {
    let context = deck_context(manifest, slide_set.slides.len());
    let analyses = exec.try_map_bounded(&slide_set.slides, gateway.concurrency(), |slide| {
        analyze_slide(gateway, work_dir, slide, slide_set.slides.len(), &context)
    })?;
    Ok(SlideAnalyses {
        presentation_id: slide_set.presentation_id.clone(),
        analyses,
    })
}
