//! Chronological narrative blocks: one per presented transition entry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curator::CurationPlan;
use crate::extract::SlideSet;
use crate::model::{Artifact, FieldError, Timestamp, Violations};
use crate::sync::TransitionMap;
use crate::transcript::Transcript;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSlide {
    pub file: String,
    pub index: u32,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoryboardBlock {
    pub block: u32,
    pub slide: BlockSlide,
    pub speech: String,
    pub included_in_publication: bool,
}

/// `07_storyboard.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Storyboard {
    pub presentation_id: String,
    pub blocks: Vec<StoryboardBlock>,
}

impl Storyboard {
    pub fn block(&self, number: u32) -> Option<&StoryboardBlock> {
        number
            .checked_sub(1)
            .and_then(|i| self.blocks.get(i as usize))
    }
}

impl Artifact for Storyboard {
    const KIND: &'static str = "storyboard";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        for (i, b) in self.blocks.iter().enumerate() {
            v.check(
                b.block as usize == i + 1,
                format!("blocks[{i}].block"),
                format!("must be {}", i + 1),
            );
            v.check(
                b.slide.index >= 1,
                format!("blocks[{i}].slide.index"),
                "must be at least 1",
            );
            v.check(
                !b.slide.file.is_empty(),
                format!("blocks[{i}].slide.file"),
                "must not be empty",
            );
        }
        for (i, w) in self.blocks.windows(2).enumerate() {
            v.check(
                w[0].slide.timestamp < w[1].slide.timestamp,
                format!("blocks[{}].slide.timestamp", i + 1),
                "blocks must be in strictly increasing time order",
            );
        }
        v.into_vec()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoryboardError {
    #[error("{artifact} belongs to presentation {found:?}, expected {expected:?}")]
    PresentationMismatch {
        artifact: &'static str,
        expected: String,
        found: String,
    },
    #[error("no curation decision for slide {0}")]
    MissingDecision(u32),
    #[error("no slide image for slide {0}")]
    MissingSlide(u32),
    #[error("transcript assigns speech to {found} entries but the transition map has {expected}")]
    EntryCountMismatch { expected: usize, found: usize },
}

pub fn build_storyboard(
    map: &TransitionMap,
    plan: &CurationPlan,
    transcript: &Transcript,
    slides: &SlideSet,
) -> Result<Storyboard, StoryboardError> {
    let pid = &map.presentation_id;
    for (artifact, found) in [
        ("curation plan", &plan.presentation_id),
        ("transcript", &transcript.presentation_id),
        ("slide set", &slides.presentation_id),
    ] {
        if found != pid {
            return Err(StoryboardError::PresentationMismatch {
                artifact,
                expected: pid.clone(),
                found: found.clone(),
            });
        }
    }
    if transcript.assignments.len() != map.entries.len() {
        return Err(StoryboardError::EntryCountMismatch {
            expected: map.entries.len(),
            found: transcript.assignments.len(),
        });
    }
    let blocks = map
        .entries
        .iter()
        .zip(&transcript.assignments)
        .enumerate()
        .map(|(i, (entry, speech))| {
            let index = entry.slide_index;
            let decision = plan
                .decision(index)
                .ok_or(StoryboardError::MissingDecision(index))?;
            let slide = slides
                .slide(index)
                .ok_or(StoryboardError::MissingSlide(index))?;
            Ok(StoryboardBlock {
                block: i as u32 + 1,
                slide: BlockSlide {
                    file: slide.file_name().to_string(),
                    index,
                    timestamp: entry.timestamp,
                },
                speech: speech.text(),
                included_in_publication: decision.include,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Storyboard {
        presentation_id: pid.clone(),
        blocks,
    })
}
