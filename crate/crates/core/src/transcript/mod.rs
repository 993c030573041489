//! Timestamped transcript, filler removal and per-entry speech assignment.

pub mod assign;
pub mod disfluency;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::{
    assign_speech, AssignError, EntrySpeech, SpeechSpan, Timed, DEFAULT_SPLIT_MIN_MS,
};
pub use disfluency::{collapse_repetitions, remove_fillers, strip_disfluencies, FillerLexicon};

use crate::gateway::{vars, Gateway, GatewayError, ResponseSchema};
use crate::model::{Artifact, FieldError, PresentationManifest, Timestamp, Violations};
use crate::sync::TransitionMap;

pub const TRANSCRIBE_TEMPLATE: &str = "transcribe_video";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptSegment {
    pub start: Timestamp,
    pub end: Timestamp,
    pub raw_text: String,
    pub clean_text: String,
}

/// One segment as returned by the transcription model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSegment {
    pub start: Timestamp,
    pub end: Timestamp,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptionResponse {
    pub segments: Vec<RawSegment>,
}

impl TranscriptionResponse {
    /// Segments in time order.
    pub fn sorted(mut self) -> Vec<RawSegment> {
        self.segments.sort_by_key(|s| (s.start, s.end));
        self.segments
    }
}

impl ResponseSchema for TranscriptionResponse {
    const NAME: &'static str = "transcript_segments";

    fn check(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        for (i, s) in self.segments.iter().enumerate() {
            v.check(
                s.start < s.end,
                format!("segments[{i}].end"),
                "must be after start",
            );
        }
        let sorted = self.clone().sorted();
        for (i, w) in sorted.windows(2).enumerate() {
            v.check(
                w[0].end <= w[1].start,
                "segments",
                format!(
                    "segments overlap after sorting by start (positions {i} and {})",
                    i + 1
                ),
            );
        }
        v.into_vec()
    }
}

/// `06_transcript.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    pub presentation_id: String,
    pub segments: Vec<TranscriptSegment>,
    pub assignments: Vec<EntrySpeech>,
}

impl Transcript {
    pub fn speech_for_entry(&self, entry: u32) -> Option<String> {
        self.assignments
            .iter()
            .find(|a| a.entry == entry)
            .map(EntrySpeech::text)
    }
}

impl Artifact for Transcript {
    const KIND: &'static str = "transcript";

    fn validate(&self) -> Vec<FieldError> {
        let lexicon = FillerLexicon::default();
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        for (i, s) in self.segments.iter().enumerate() {
            v.check(
                s.start < s.end,
                format!("segments[{i}].end"),
                "must be after start",
            );
            v.check(
                !s.clean_text.split_whitespace().any(|w| {
                    let core = w.trim_matches(|c: char| !c.is_alphanumeric());
                    lexicon.is_filler_word(core)
                }),
                format!("segments[{i}].clean_text"),
                "contains a filler word",
            );
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            v.check(
                w[0].end <= w[1].start,
                format!("segments[{}].start", i + 1),
                "segments must be time-ordered and disjoint",
            );
        }
        for (i, a) in self.assignments.iter().enumerate() {
            v.check(
                a.entry as usize == i + 1,
                format!("assignments[{i}].entry"),
                format!("must be {}", i + 1),
            );
            for (k, span) in a.spans.iter().enumerate() {
                let path = format!("assignments[{i}].spans[{k}]");
                v.check(
                    span.start < span.end,
                    format!("{path}.end"),
                    "must be after start",
                );
                v.check(
                    (span.segment as usize) < self.segments.len(),
                    format!("{path}.segment"),
                    "refers to a missing segment",
                );
            }
        }
        v.into_vec()
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Assign(#[from] AssignError),
}

/// Ask the provider for a transcript of the talk video.
pub fn transcribe(
    gateway: &Gateway,
    manifest: &PresentationManifest,
    video_path: &Path,
    duration: Timestamp,
) -> Result<Vec<RawSegment>, GatewayError> {
    let request_vars = vars([
        ("title", manifest.title.clone()),
        ("duration", duration.to_string()),
    ]);
    let response: TranscriptionResponse = gateway.request(
        TRANSCRIBE_TEMPLATE,
        request_vars,
        &[video_path.to_path_buf()],
        |_| vec![],
    )?;
    Ok(response.sorted())
}

/// Clean every segment and assign the result to transition entries.
pub fn build_transcript(
    presentation_id: &str,
    raw: Vec<RawSegment>,
    map: &TransitionMap,
    lexicon: &FillerLexicon,
    split_min_ms: u64,
) -> Result<Transcript, AssignError> {
    let mut raw = raw;
    raw.sort_by_key(|s| (s.start, s.end));
    let segments: Vec<TranscriptSegment> = raw
        .into_iter()
        .map(|s| TranscriptSegment {
            clean_text: strip_disfluencies(&s.text, lexicon),
            start: s.start,
            end: s.end,
            raw_text: s.text,
        })
        .collect();
    let timed: Vec<Timed> = segments
        .iter()
        .map(|s| Timed {
            start: s.start,
            end: s.end,
            text: &s.clean_text,
        })
        .collect();
    let assignments = assign_speech(&timed, map, split_min_ms)?;
    Ok(Transcript {
        presentation_id: presentation_id.to_string(),
        segments,
        assignments,
    })
}
