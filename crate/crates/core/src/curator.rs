//! Slide roles, progressive-reveal detection and the include/exclude plan.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{SlideAnalyses, SlideType};
use crate::exec::Exec;
use crate::extract::SlideSet;
use crate::fingerprint::{fingerprint_image, Fingerprint, FingerprintError};
use crate::model::{Artifact, FieldError, Violations};

/// Editorial override file, read from the presentation work directory.
pub const OVERRIDES_FILE: &str = "slides_for_production.json";
pub const DEFAULT_SUBSET_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlideRole {
    Content,
    OverlayStep,
    OverlayFinal,
    Transition,
    SpecialTitle,
    SpecialAgenda,
    SpecialThanks,
    SpecialInteractive,
}

impl SlideRole {
    pub fn included_by_default(self) -> bool {
        matches!(
            self,
            SlideRole::Content | SlideRole::OverlayFinal | SlideRole::SpecialTitle
        )
    }

    fn default_reason(self) -> &'static str {
        match self {
            SlideRole::Content => "content slide",
            SlideRole::OverlayStep => "intermediate step of a progressive reveal",
            SlideRole::OverlayFinal => "final state of a progressive reveal",
            SlideRole::Transition => "transition slide",
            SlideRole::SpecialTitle => "title slide",
            SlideRole::SpecialAgenda => "agenda slide",
            SlideRole::SpecialThanks => "closing slide",
            SlideRole::SpecialInteractive => "interactive prompt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Auto,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationDecision {
    pub slide_index: u32,
    pub role: SlideRole,
    pub include: bool,
    pub reason: String,
    pub source: DecisionSource,
}

/// `04_curation_plan.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationPlan {
    pub presentation_id: String,
    pub decisions: Vec<CurationDecision>,
    pub overlay_chains: Vec<Vec<u32>>,
}

impl CurationPlan {
    pub fn decision(&self, index: u32) -> Option<&CurationDecision> {
        self.decisions.iter().find(|d| d.slide_index == index)
    }

    pub fn is_included(&self, index: u32) -> bool {
        self.decision(index).is_some_and(|d| d.include)
    }

    pub fn included(&self) -> Vec<u32> {
        self.decisions
            .iter()
            .filter(|d| d.include)
            .map(|d| d.slide_index)
            .collect()
    }
}

impl Artifact for CurationPlan {
    const KIND: &'static str = "curation_plan";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            !self.presentation_id.is_empty(),
            "presentation_id",
            "must not be empty",
        );
        for (i, d) in self.decisions.iter().enumerate() {
            v.check(
                d.slide_index as usize == i + 1,
                format!("decisions[{i}].slide_index"),
                format!("must be {}", i + 1),
            );
            v.check(
                !d.reason.is_empty(),
                format!("decisions[{i}].reason"),
                "must not be empty",
            );
        }
        let mut seen = BTreeSet::new();
        for (c, chain) in self.overlay_chains.iter().enumerate() {
            let path = format!("overlay_chains[{c}]");
            v.check(chain.len() >= 2, &path, "must have at least two slides");
            v.check(
                chain.windows(2).all(|w| w[1] == w[0] + 1),
                &path,
                "must list consecutive slide indices",
            );
            for (k, &s) in chain.iter().enumerate() {
                v.check(
                    seen.insert(s),
                    format!("{path}[{k}]"),
                    "slide belongs to more than one chain",
                );
                let Some(d) = self.decision(s) else {
                    v.push(format!("{path}[{k}]"), "unknown slide");
                    continue;
                };
                let last = k + 1 == chain.len();
                let role = if last {
                    SlideRole::OverlayFinal
                } else {
                    SlideRole::OverlayStep
                };
                v.check(
                    d.role == role,
                    format!("{path}[{k}]"),
                    format!("slide {s} must have role {role:?}"),
                );
                if d.source == DecisionSource::Auto {
                    v.check(
                        d.include == last,
                        format!("{path}[{k}]"),
                        "only the last chain member is included",
                    );
                }
            }
        }
        for (i, d) in self.decisions.iter().enumerate() {
            let in_chain = seen.contains(&d.slide_index);
            let overlay = matches!(d.role, SlideRole::OverlayStep | SlideRole::OverlayFinal);
            v.check(
                in_chain == overlay,
                format!("decisions[{i}].role"),
                "overlay roles are exactly the chain members",
            );
        }
        v.into_vec()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationOverrides {
    #[serde(default)]
    pub include: Vec<u32>,
    #[serde(default)]
    pub exclude: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("no analysis for slide {0}")]
    MissingAnalysis(u32),
    #[error("override refers to unknown slide {0}")]
    UnknownOverrideSlide(u32),
    #[error("override both includes and excludes slide {0}")]
    ConflictingOverride(u32),
    #[error("cannot read overrides {path}: {message}")]
    Overrides { path: String, message: String },
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

/// Fraction of `a`'s non-blank grid cells that are unchanged in `b`.
/// Zero when `a` has no content.
pub fn subset_score(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let nonblank = a.nonblank_cells();
    if nonblank == 0 {
        return 0.0;
    }
    let kept = a
        .grid_cells
        .iter()
        .zip(&b.grid_cells)
        .filter(|(x, y)| **x != crate::fingerprint::BLANK_CELL && x == y)
        .count();
    kept as f64 / nonblank as f64
}

/// Maximal runs of consecutive slides where each one keeps (at least
/// `threshold` of) the previous slide's content and adds more. Indices are
/// 1-based; `fingerprints[i]` belongs to slide `i + 1`.
pub fn detect_overlay_chains(fingerprints: &[Fingerprint], threshold: f64) -> Vec<Vec<u32>> {
    let mut chains = Vec::new();
    let mut current: Vec<u32> = Vec::new();
    for (i, pair) in fingerprints.windows(2).enumerate() {
        let linked = subset_score(&pair[0], &pair[1]) >= threshold
            && pair[1].nonblank_cells() > pair[0].nonblank_cells();
        if linked {
            if current.is_empty() {
                current.push(i as u32 + 1);
            }
            current.push(i as u32 + 2);
        } else if !current.is_empty() {
            chains.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        chains.push(current);
    }
    chains
}

/// Role from the slide's analysis and its position in the deck.
pub fn role_for(index: u32, slide_count: u32, slide_type: SlideType) -> SlideRole {
    match slide_type {
        SlideType::Title => SlideRole::SpecialTitle,
        SlideType::Agenda => SlideRole::SpecialAgenda,
        SlideType::Interactive => SlideRole::SpecialInteractive,
        SlideType::Transition => SlideRole::Transition,
        SlideType::Other if index == 1 => SlideRole::SpecialTitle,
        SlideType::Other if index == slide_count => SlideRole::SpecialThanks,
        SlideType::Other => SlideRole::Transition,
        SlideType::TechnicalArchitecture
        | SlideType::Conceptual
        | SlideType::Data
        | SlideType::References => SlideRole::Content,
    }
}

pub fn classify_roles(
    slide_count: u32,
    analyses: &SlideAnalyses,
) -> Result<Vec<SlideRole>, CurateError> {
    (1..=slide_count)
        .map(|i| {
            let a = analyses.get(i).ok_or(CurateError::MissingAnalysis(i))?;
            Ok(role_for(i, slide_count, a.slide_type))
        })
        .collect()
}

/// Auto decisions from roles and chains, then overrides applied on top.
pub fn build_curation_plan(
    presentation_id: &str,
    roles: &[SlideRole],
    chains: &[Vec<u32>],
    overrides: &CurationOverrides,
) -> Result<CurationPlan, CurateError> {
    let count = roles.len() as u32;
    for &s in overrides.include.iter().chain(&overrides.exclude) {
        if s == 0 || s > count {
            return Err(CurateError::UnknownOverrideSlide(s));
        }
    }
    if let Some(&s) = overrides
        .include
        .iter()
        .find(|s| overrides.exclude.contains(s))
    {
        return Err(CurateError::ConflictingOverride(s));
    }
    let mut chain_role: BTreeMap<u32, SlideRole> = BTreeMap::new();
    for chain in chains {
        for (k, &s) in chain.iter().enumerate() {
            let role = if k + 1 == chain.len() {
                SlideRole::OverlayFinal
            } else {
                SlideRole::OverlayStep
            };
            chain_role.insert(s, role);
        }
    }
    let decisions = roles
        .iter()
        .enumerate()
        .map(|(i, &analysed)| {
            let index = i as u32 + 1;
            let role = chain_role.get(&index).copied().unwrap_or(analysed);
            let mut d = CurationDecision {
                slide_index: index,
                role,
                include: role.included_by_default(),
                reason: role.default_reason().to_string(),
                source: DecisionSource::Auto,
            };
            if overrides.include.contains(&index) {
                d.include = true;
                d.reason = "included by editorial override".to_string();
                d.source = DecisionSource::Override;
            } else if overrides.exclude.contains(&index) {
                d.include = false;
                d.reason = "excluded by editorial override".to_string();
                d.source = DecisionSource::Override;
            }
            d
        })
        .collect();
    Ok(CurationPlan {
        presentation_id: presentation_id.to_string(),
        decisions,
        overlay_chains: chains.to_vec(),
    })
}

/// Overrides from `path`; a missing file means no overrides.
pub fn load_overrides(path: &Path) -> Result<CurationOverrides, CurateError> {
    let err = |message: String| CurateError::Overrides {
        path: path.display().to_string(),
        message,
    };
    match fs::read(path) {
        Ok(bytes) => {
            let mut de = serde_json::Deserializer::from_slice(&bytes);
            serde_path_to_error::deserialize(&mut de).map_err(|e| err(e.to_string()))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(CurationOverrides::default()),
        Err(e) => Err(err(e.to_string())),
    }
}

/// Full curation stage: fingerprint slide images, find chains, classify and decide.
pub fn curate(
    slide_set: &SlideSet,
    work_dir: &Path,
    analyses: &SlideAnalyses,
    overrides: &CurationOverrides,
    threshold: f64,
    exec: Exec,
) -> Result<CurationPlan, CurateError> {
    let fingerprints = exec.try_map(&slide_set.slides, |s| {
        fingerprint_image(&work_dir.join(&s.path))
    })?;
    let chains = detect_overlay_chains(&fingerprints, threshold);
    let roles = classify_roles(slide_set.slides.len() as u32, analyses)?;
    build_curation_plan(&slide_set.presentation_id, &roles, &chains, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::GRID_CELLS;
    use crate::model::{deserialize_artifact, serialize_artifact};
    use proptest::prelude::*;

    fn fp(cells: &[u64]) -> Fingerprint {
        let mut grid_cells = [0u64; GRID_CELLS];
        grid_cells[..cells.len()].copy_from_slice(cells);
        Fingerprint {
            bits: crate::fingerprint::HashBits::default(),
            grid_cells,
        }
    }

    #[test]
    fn subset_score_counts_preserved_content_cells() {
        let a = fp(&[1, 2, 0, 4]);
        assert_eq!(subset_score(&a, &fp(&[1, 2, 9, 4])), 1.0);
        assert!((subset_score(&a, &fp(&[1, 7, 0, 4])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(subset_score(&fp(&[]), &a), 0.0);
    }

    #[test]
    fn chains_are_maximal_growing_runs() {
        let deck = [
            fp(&[5]),
            fp(&[1]),
            fp(&[1, 2]),
            fp(&[1, 2, 3]),
            fp(&[9, 9]),
            fp(&[9, 9]),
        ];
        assert_eq!(detect_overlay_chains(&deck, 0.9), vec![vec![2, 3, 4]]);
        assert!(detect_overlay_chains(&[fp(&[1]), fp(&[2]), fp(&[3])], 0.9).is_empty());
        assert!(detect_overlay_chains(&[], 0.9).is_empty());
    }

    #[test]
    fn role_mapping_uses_position_for_untyped_slides() {
        assert_eq!(role_for(1, 5, SlideType::Title), SlideRole::SpecialTitle);
        assert_eq!(
            role_for(3, 5, SlideType::TechnicalArchitecture),
            SlideRole::Content
        );
        assert_eq!(
            role_for(5, 5, SlideType::Interactive),
            SlideRole::SpecialInteractive
        );
        assert_eq!(role_for(5, 5, SlideType::Other), SlideRole::SpecialThanks);
        assert_eq!(role_for(3, 5, SlideType::Other), SlideRole::Transition);
        assert!(!SlideRole::SpecialInteractive.included_by_default());
    }

    fn seventeen_roles() -> Vec<SlideRole> {
        let mut roles = vec![SlideRole::Content; 17];
        roles[0] = SlideRole::SpecialTitle;
        roles[6] = SlideRole::Transition;
        roles
    }

    #[test]
    fn five_chain_excludes_four_steps() {
        let plan = build_curation_plan(
            "003",
            &seventeen_roles(),
            &[vec![13, 14, 15, 16, 17]],
            &CurationOverrides::default(),
        )
        .unwrap();
        let excluded: Vec<u32> = plan
            .decisions
            .iter()
            .filter(|d| !d.include)
            .map(|d| d.slide_index)
            .collect();
        assert_eq!(excluded, vec![7, 13, 14, 15, 16]);
        assert_eq!(plan.decision(17).unwrap().role, SlideRole::OverlayFinal);
        assert!(plan.validate().is_empty(), "{:?}", plan.validate());
    }

    #[test]
    fn overrides_apply_last_and_are_marked() {
        let overrides = CurationOverrides {
            include: vec![7, 14],
            exclude: vec![1],
        };
        let plan = build_curation_plan(
            "003",
            &seventeen_roles(),
            &[vec![13, 14, 15, 16, 17]],
            &overrides,
        )
        .unwrap();
        for (s, include) in [(7, true), (14, true), (1, false)] {
            let d = plan.decision(s).unwrap();
            assert_eq!((d.include, d.source), (include, DecisionSource::Override));
        }
        assert!(plan.validate().is_empty());
        let again = build_curation_plan(
            "003",
            &seventeen_roles(),
            &[vec![13, 14, 15, 16, 17]],
            &overrides,
        )
        .unwrap();
        assert_eq!(
            serialize_artifact(&plan).unwrap(),
            serialize_artifact(&again).unwrap()
        );
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let roles = seventeen_roles();
        let unknown = CurationOverrides {
            include: vec![18],
            exclude: vec![],
        };
        assert!(matches!(
            build_curation_plan("p", &roles, &[], &unknown),
            Err(CurateError::UnknownOverrideSlide(18))
        ));
        let both = CurationOverrides {
            include: vec![3],
            exclude: vec![3],
        };
        assert!(matches!(
            build_curation_plan("p", &roles, &[], &both),
            Err(CurateError::ConflictingOverride(3))
        ));
    }

    #[test]
    fn override_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(OVERRIDES_FILE);
        assert_eq!(load_overrides(&path).unwrap(), CurationOverrides::default());
        fs::write(&path, r#"{"include": [7]}"#).unwrap();
        assert_eq!(load_overrides(&path).unwrap().include, vec![7]);
        fs::write(&path, r#"{"include": [7], "maybe": [2]}"#).unwrap();
        assert!(load_overrides(&path).is_err());
    }

    #[test]
    fn empty_deck_gives_empty_plan_that_round_trips() {
        let plan = build_curation_plan("p", &[], &[], &CurationOverrides::default()).unwrap();
        assert!(plan.decisions.is_empty());
        let bytes = serialize_artifact(&plan).unwrap();
        assert_eq!(deserialize_artifact::<CurationPlan>(&bytes).unwrap(), plan);
    }

    #[test]
    fn validation_catches_inconsistent_chain_roles() {
        let mut plan = build_curation_plan(
            "p",
            &seventeen_roles(),
            &[vec![13, 14, 15]],
            &CurationOverrides::default(),
        )
        .unwrap();
        plan.decisions[12].include = true;
        let paths: Vec<String> = plan.validate().into_iter().map(|e| e.path).collect();
        assert_eq!(paths, vec!["overlay_chains[0][0]"]);
    }

    fn arb_fingerprints() -> impl Strategy<Value = Vec<Fingerprint>> {
        prop::collection::vec(prop::collection::vec(0u64..3, 0..8), 0..12)
            .prop_map(|decks| decks.iter().map(|cells| fp(cells)).collect())
    }

    proptest! {
        #[test]
        fn chains_are_disjoint_consecutive_and_valid(fps in arb_fingerprints(), include in prop::collection::vec(1u32..13, 0..3)) {
            let chains = detect_overlay_chains(&fps, DEFAULT_SUBSET_THRESHOLD);
            let mut seen = BTreeSet::new();
            for chain in &chains {
                prop_assert!(chain.len() >= 2);
                prop_assert!(chain.windows(2).all(|w| w[1] == w[0] + 1));
                for s in chain {
                    prop_assert!(seen.insert(*s));
                }
            }
            let roles = vec![SlideRole::Content; fps.len()];
            let overrides = CurationOverrides {
                include: include.into_iter().filter(|&s| s as usize <= fps.len()).collect(),
                exclude: vec![],
            };
            let plan = build_curation_plan("p", &roles, &chains, &overrides).unwrap();
            prop_assert!(plan.validate().is_empty());
            let twice = build_curation_plan("p", &roles, &chains, &overrides).unwrap();
            prop_assert_eq!(plan, twice);
        }
    }
}
