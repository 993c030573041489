use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Pipeline stages in execution order. Slide/video synchronization is a
/// single stage; its map carries both the appearance table and the
/// millisecond timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Intake,
    Extract,
    Sync,
    Analyze,
    Curate,
    Transcribe,
    Storyboard,
    Synthesize,
    Render,
    Qa,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Intake,
        Stage::Extract,
        Stage::Sync,
        Stage::Analyze,
        Stage::Curate,
        Stage::Transcribe,
        Stage::Storyboard,
        Stage::Synthesize,
        Stage::Render,
        Stage::Qa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Intake => "intake",
            Stage::Extract => "extract",
            Stage::Sync => "sync",
            Stage::Analyze => "analyze",
            Stage::Curate => "curate",
            Stage::Transcribe => "transcribe",
            Stage::Storyboard => "storyboard",
            Stage::Synthesize => "synthesize",
            Stage::Render => "render",
            Stage::Qa => "qa",
        }
    }

    /// File name of the stage's artifact under `artifacts/`.
    pub fn artifact_file(self) -> &'static str {
        match self {
            Stage::Intake => "00_validation.json",
            Stage::Extract => "01_slide_set.json",
            Stage::Sync => "02_transition_map.json",
            Stage::Analyze => "03_slide_analyses.json",
            Stage::Curate => "04_curation_plan.json",
            Stage::Transcribe => "06_transcript.json",
            Stage::Storyboard => "07_storyboard.json",
            Stage::Synthesize => "08_content_report.json",
            Stage::Render => "09_render.json",
            Stage::Qa => "10_quality.json",
        }
    }

    pub fn position(self) -> usize {
        Stage::ALL
            .iter()
            .position(|&s| s == self)
            .expect("every stage is listed")
    }

    /// Stages whose output is never reused by `--resume`: they write the bundle.
    pub fn always_reruns(self) -> bool {
        matches!(self, Stage::Render | Stage::Qa)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
                format!("unknown stage {s:?}; expected one of {}", names.join(", "))
            })
    }
}
