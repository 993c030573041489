//! Slide/video alignment: sample the talk video, match each frame against the
//! slide fingerprints and fold the match sequence into a transition map.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::fingerprint::{frame_hash, HashBits};
use crate::model::{is_filesystem_safe_id, Artifact, FieldError, Timestamp, Violations};
use crate::video::{self, SampledFrame, VideoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub rate_hz: f64,
    pub min_similarity: f64,
    pub debounce_frames: u32,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            rate_hz: 2.0,
            min_similarity: 0.85,
            debounce_frames: 3,
        }
    }
}

impl SyncConfig {
    pub fn check(&self) -> Result<(), SyncError> {
        let ok = self.rate_hz.is_finite()
            && self.rate_hz > 0.0
            && (0.0..=1.0).contains(&self.min_similarity)
            && self.debounce_frames >= 1;
        if ok {
            Ok(())
        } else {
            Err(SyncError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Best slide for one sampled frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMatch {
    pub timestamp: Timestamp,
    pub best_slide: u32,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub slide_index: u32,
    pub timestamp: Timestamp,
    pub confidence: f64,
    pub duration_until_next: Timestamp,
}

/// Per-slide summary keyed by `slide_NN`; reports the first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideTransition {
    pub timestamp: Timestamp,
    pub confidence: f64,
    pub duration_until_next: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionMap {
    pub presentation_id: String,
    pub slide_count: u32,
    pub video_duration: Timestamp,
    pub entries: Vec<TransitionEntry>,
    pub unpresented: Vec<u32>,
    pub slide_transitions: BTreeMap<String, SlideTransition>,
}

pub fn slide_key(index: u32) -> String {
    format!("slide_{index:02}")
}

impl TransitionMap {
    /// Assemble a map from tiled entries, deriving `unpresented` and the
    /// per-slide summary.
    pub fn new(
        presentation_id: &str,
        slide_count: u32,
        video_duration: Timestamp,
        entries: Vec<TransitionEntry>,
    ) -> Self {
        let presented: BTreeSet<u32> = entries.iter().map(|e| e.slide_index).collect();
        let unpresented = (1..=slide_count)
            .filter(|i| !presented.contains(i))
            .collect();
        let slide_transitions = first_appearances(&entries);
        TransitionMap {
            presentation_id: presentation_id.to_string(),
            slide_count,
            video_duration,
            entries,
            unpresented,
            slide_transitions,
        }
    }

    pub fn presented(&self) -> BTreeSet<u32> {
        self.entries.iter().map(|e| e.slide_index).collect()
    }

    /// End of entry `i`'s interval.
    pub fn entry_end(&self, i: usize) -> Timestamp {
        let e = &self.entries[i];
        e.timestamp + e.duration_until_next
    }
}

fn first_appearances(entries: &[TransitionEntry]) -> BTreeMap<String, SlideTransition> {
    let mut out = BTreeMap::new();
    for e in entries {
        out.entry(slide_key(e.slide_index))
            .or_insert(SlideTransition {
                timestamp: e.timestamp,
                confidence: e.confidence,
                duration_until_next: e.duration_until_next,
            });
    }
    out
}

impl Artifact for TransitionMap {
    const KIND: &'static str = "transition_map";

    fn validate(&self) -> Vec<FieldError> {
        let mut v = Violations::new();
        v.check(
            is_filesystem_safe_id(&self.presentation_id),
            "presentation_id",
            "must match [A-Za-z0-9_-]+",
        );
        v.check(!self.entries.is_empty(), "entries", "must not be empty");
        for (i, e) in self.entries.iter().enumerate() {
            let at = format!("entries[{i}]");
            v.check(
                (1..=self.slide_count).contains(&e.slide_index),
                format!("{at}.slide_index"),
                "must be a slide of the deck",
            );
            v.check(
                (0.0..=1.0).contains(&e.confidence),
                format!("{at}.confidence"),
                "must be a fraction in [0, 1]",
            );
            if let Some(next) = self.entries.get(i + 1) {
                v.check(
                    e.timestamp < next.timestamp,
                    format!("{at}.timestamp"),
                    "timestamps must be strictly increasing",
                );
                v.check(
                    next.timestamp.checked_sub(e.timestamp) == Some(e.duration_until_next),
                    format!("{at}.duration_until_next"),
                    "must equal the gap to the next entry",
                );
            }
        }
        if let (Some(first), Some(_)) = (self.entries.first(), self.entries.last()) {
            let total: u64 = self
                .entries
                .iter()
                .map(|e| e.duration_until_next.millis())
                .sum();
            v.check(
                first.timestamp.millis() + total == self.video_duration.millis(),
                "video_duration",
                "first timestamp plus all durations must equal the video duration",
            );
        }
        let presented = self.presented();
        let mut expected_unpresented: Vec<u32> = (1..=self.slide_count)
            .filter(|i| !presented.contains(i))
            .collect();
        expected_unpresented.dedup();
        v.check(
            self.unpresented == expected_unpresented,
            "unpresented",
            "must list exactly the slides without an entry, ascending",
        );
        v.check(
            self.slide_transitions == first_appearances(&self.entries),
            "slide_transitions",
            "must equal the first appearance of each presented slide",
        );
        v.into_vec()
    }
}

#[derive(Debug, Error)]
pub enum SyncError {
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error("no slide detected: no run of {debounce} frames matched any slide at similarity >= {min_similarity}")]
    NoSlideDetected { min_similarity: f64, debounce: u32 },
    #[error("no slide fingerprints to match against")]
    NoSlides,
    #[error("entries not sorted by timestamp at position {0}")]
    Unsorted(usize),
    #[error("entry at {at} is not before the end of the video ({duration})")]
    PastEnd { at: Timestamp, duration: Timestamp },
    #[error("invalid sync configuration: {0}")]
    InvalidConfig(String),
}

/// Hash every sampled frame. Frames sharing a `source_index` are hashed once.
pub fn hash_frames<I>(frames: I, exec: Exec) -> Result<Vec<(Timestamp, HashBits)>, VideoError>
where
    I: IntoIterator<Item = Result<SampledFrame, VideoError>>,
{
    const CHUNK: usize = 64;
    let mut out = Vec::new();
    let mut memo: HashMap<u64, HashBits> = HashMap::new();
    let mut pending: Vec<SampledFrame> = Vec::with_capacity(CHUNK);
    let mut flush = |pending: &mut Vec<SampledFrame>, out: &mut Vec<(Timestamp, HashBits)>| {
        let mut fresh: Vec<&SampledFrame> = Vec::new();
        for f in pending.iter() {
            if !memo.contains_key(&f.source_index)
                && !fresh.iter().any(|g| g.source_index == f.source_index)
            {
                fresh.push(f);
            }
        }
        let hashes = exec.map(&fresh, |f| frame_hash(&f.image));
        for (f, h) in fresh.iter().zip(hashes) {
            memo.insert(f.source_index, h);
        }
        out.extend(pending.iter().map(|f| (f.timestamp, memo[&f.source_index])));
        // Frames are sampled forward in time; older sources are never revisited.
        if let Some(last) = pending.last() {
            let keep = last.source_index;
            memo.retain(|&k, _| k >= keep);
        }
        pending.clear();
    };
    for frame in frames {
        pending.push(frame?);
        if pending.len() == CHUNK {
            let mut batch = std::mem::take(&mut pending);
            flush(&mut batch, &mut out);
            pending = batch;
        }
    }
    flush(&mut pending, &mut out);
    Ok(out)
}

/// Best slide per frame; ties go to the lower slide index.
pub fn match_frames(
    frames: &[(Timestamp, HashBits)],
    slides: &[HashBits],
    exec: Exec,
) -> Result<Vec<RawMatch>, SyncError> {
    if slides.is_empty() {
        return Err(SyncError::NoSlides);
    }
    Ok(exec.map(frames, |(timestamp, hash)| {
        let (best, distance) = slides
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.hamming(hash)))
            .min_by_key(|&(i, d)| (d, i))
            .expect("non-empty slides");
        RawMatch {
            timestamp: *timestamp,
            best_slide: best as u32 + 1,
            similarity: 1.0 - distance as f64 / crate::fingerprint::HASH_BITS as f64,
        }
    }))
}

/// An accepted slide appearance before durations are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Appearance {
    pub slide_index: u32,
    pub timestamp: Timestamp,
    pub confidence: f64,
}

/// Fold the time-ordered matches into slide appearances.
///
/// A run is a maximal sequence of consecutive frames with the same best slide
/// and similarity at or above `min_similarity`. Runs of at least `debounce`
/// frames are accepted; an accepted run for the slide already on screen
/// extends it, any other starts a new appearance (including returns to an
/// earlier slide).
pub fn detect_appearances(
    matches: &[RawMatch],
    min_similarity: f64,
    debounce: u32,
) -> Result<Vec<Appearance>, SyncError> {
    let debounce = debounce.max(1) as usize;
    let mut out: Vec<Appearance> = Vec::new();
    let mut i = 0;
    while i < matches.len() {
        if matches[i].similarity < min_similarity {
            i += 1;
            continue;
        }
        let slide = matches[i].best_slide;
        let mut j = i;
        while j < matches.len()
            && matches[j].best_slide == slide
            && matches[j].similarity >= min_similarity
        {
            j += 1;
        }
        if j - i >= debounce && out.last().map(|a| a.slide_index) != Some(slide) {
            let window = &matches[i..i + debounce];
            let mean = window.iter().map(|m| m.similarity).sum::<f64>() / debounce as f64;
            out.push(Appearance {
                slide_index: slide,
                timestamp: matches[i].timestamp,
                confidence: round4(mean),
            });
        }
        i = j;
    }
    if out.is_empty() {
        return Err(SyncError::NoSlideDetected {
            min_similarity,
            debounce: debounce as u32,
        });
    }
    Ok(out)
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

/// Attach `duration_until_next` so the entries tile `[first, video_duration)`.
pub fn compute_durations(
    appearances: &[Appearance],
    video_duration: Timestamp,
) -> Result<Vec<TransitionEntry>, SyncError> {
    for (i, pair) in appearances.windows(2).enumerate() {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(SyncError::Unsorted(i + 1));
        }
    }
    if let Some(last) = appearances.last() {
        if last.timestamp >= video_duration {
            return Err(SyncError::PastEnd {
                at: last.timestamp,
                duration: video_duration,
            });
        }
    }
    Ok(appearances
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let end = appearances
                .get(i + 1)
                .map_or(video_duration, |n| n.timestamp);
            TransitionEntry {
                slide_index: a.slide_index,
                timestamp: a.timestamp,
                confidence: a.confidence,
                duration_until_next: end - a.timestamp,
            }
        })
        .collect())
}

/// Full sync stage for one presentation.
pub fn synchronize(
    presentation_id: &str,
    video_path: &Path,
    slides: &[HashBits],
    config: &SyncConfig,
    exec: Exec,
) -> Result<TransitionMap, SyncError> {
    config.check()?;
    if slides.is_empty() {
        return Err(SyncError::NoSlides);
    }
    let info = video::probe(video_path)?;
    let frames = hash_frames(video::sample_frames(video_path, config.rate_hz)?, exec)?;
    log::info!(
        "sync: {} frames sampled at {} Hz",
        frames.len(),
        config.rate_hz
    );
    let matches = match_frames(&frames, slides, exec)?;
    let appearances = detect_appearances(&matches, config.min_similarity, config.debounce_frames)?;
    let entries = compute_durations(&appearances, info.duration)?;
    Ok(TransitionMap::new(
        presentation_id,
        slides.len() as u32,
        info.duration,
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(t: u64, slide: u32, sim: f64) -> RawMatch {
        RawMatch {
            timestamp: Timestamp::from_millis(t),
            best_slide: slide,
            similarity: sim,
        }
    }

    fn seq(slides: &[(u32, f64)]) -> Vec<RawMatch> {
        slides
            .iter()
            .enumerate()
            .map(|(i, &(s, sim))| m(i as u64 * 500, s, sim))
            .collect()
    }

    #[test]
    fn hash_frames_shares_sources_across_chunks() {
        use crate::fingerprint::frame_hash;
        use crate::video::SampledFrame;
        use image::{GrayImage, Luma};
        use std::sync::Arc;

        let images: Vec<Arc<GrayImage>> = (0..50u32)
            .map(|k| {
                Arc::new(GrayImage::from_fn(64, 36, |x, y| {
                    Luma([((x * 7 + y * k) % 256) as u8])
                }))
            })
            .collect();
        let frames: Vec<SampledFrame> = (0..150u64)
            .map(|i| SampledFrame {
                timestamp: Timestamp::from_millis(i * 500),
                source_index: i / 3,
                image: images[(i / 3) as usize].clone(),
            })
            .collect();
        let hashed = hash_frames(frames.iter().cloned().map(Ok), Exec::Sequential).unwrap();
        assert_eq!(hashed.len(), frames.len());
        for (f, (t, h)) in frames.iter().zip(&hashed) {
            assert_eq!(*t, f.timestamp);
            assert_eq!(*h, frame_hash(&f.image));
        }
    }

    #[test]
    fn durations_follow_gaps() {
        let apps = [
            Appearance {
                slide_index: 1,
                timestamp: Timestamp::ZERO,
                confidence: 0.98,
            },
            Appearance {
                slide_index: 2,
                timestamp: Timestamp::from_secs(8),
                confidence: 0.95,
            },
        ];
        let entries = compute_durations(&apps, Timestamp::from_secs(41)).unwrap();
        let d: Vec<u64> = entries
            .iter()
            .map(|e| e.duration_until_next.millis())
            .collect();
        assert_eq!(d, vec![8000, 33000]);
        let single = compute_durations(&apps[..1], Timestamp::from_secs(41)).unwrap();
        assert_eq!(single[0].duration_until_next, Timestamp::from_secs(41));
        let mut reversed = apps;
        reversed.reverse();
        assert!(matches!(
            compute_durations(&reversed, Timestamp::from_secs(41)),
            Err(SyncError::Unsorted(1))
        ));
    }

    #[test]
    fn debounce_rejects_short_runs() {
        let matches = seq(&[
            (1, 0.9),
            (1, 0.9),
            (1, 0.9),
            (2, 0.9),
            (2, 0.9),
            (1, 0.9),
            (3, 0.9),
            (3, 0.95),
            (3, 1.0),
        ]);
        let apps = detect_appearances(&matches, 0.85, 3).unwrap();
        let got: Vec<(u32, u64)> = apps
            .iter()
            .map(|a| (a.slide_index, a.timestamp.millis()))
            .collect();
        assert_eq!(got, vec![(1, 0), (3, 3000)]);
        assert!((apps[1].confidence - 0.95).abs() < 1e-12);
    }

    #[test]
    fn low_similarity_breaks_runs_and_interrupted_slide_merges() {
        let matches = seq(&[
            (1, 0.9),
            (1, 0.9),
            (1, 0.9),
            (1, 0.5),
            (1, 0.9),
            (1, 0.9),
            (1, 0.9),
            (2, 0.9),
            (2, 0.9),
            (2, 0.9),
        ]);
        let apps = detect_appearances(&matches, 0.85, 3).unwrap();
        assert_eq!(
            apps.iter().map(|a| a.slide_index).collect::<Vec<_>>(),
            vec![1, 2]
        );
    }

    #[test]
    fn revisits_create_new_entries_and_summary_keeps_first() {
        let matches = seq(&[
            (1, 1.0),
            (1, 1.0),
            (1, 1.0),
            (2, 1.0),
            (2, 1.0),
            (2, 1.0),
            (1, 0.9),
            (1, 0.9),
            (1, 0.9),
        ]);
        let apps = detect_appearances(&matches, 0.85, 3).unwrap();
        let entries = compute_durations(&apps, Timestamp::from_millis(4500)).unwrap();
        let map = TransitionMap::new("p", 3, Timestamp::from_millis(4500), entries);
        assert_eq!(map.entries.len(), 3);
        assert_eq!(map.unpresented, vec![3]);
        assert_eq!(map.slide_transitions["slide_01"].timestamp, Timestamp::ZERO);
        assert_eq!(map.slide_transitions["slide_01"].confidence, 1.0);
        assert!(map.validate().is_empty(), "{:?}", map.validate());
    }

    #[test]
    fn nothing_qualifies_is_an_error() {
        let matches = seq(&[(1, 0.5), (2, 0.99), (2, 0.99), (3, 0.99)]);
        assert!(matches!(
            detect_appearances(&matches, 0.85, 3),
            Err(SyncError::NoSlideDetected { .. })
        ));
    }

    #[test]
    fn ties_go_to_lower_index() {
        let h = HashBits([1, 2, 3, 4]);
        let frames = vec![(Timestamp::ZERO, h)];
        let got = match_frames(&frames, &[HashBits([9, 9, 9, 9]), h, h], Exec::Sequential).unwrap();
        assert_eq!(got[0].best_slide, 2);
        assert_eq!(got[0].similarity, 1.0);
        assert!(matches!(
            match_frames(&frames, &[], Exec::Sequential),
            Err(SyncError::NoSlides)
        ));
    }

    #[test]
    fn validation_reports_broken_tiling() {
        let apps = [Appearance {
            slide_index: 1,
            timestamp: Timestamp::from_secs(1),
            confidence: 0.9,
        }];
        let mut map = TransitionMap::new(
            "p",
            1,
            Timestamp::from_secs(10),
            compute_durations(&apps, Timestamp::from_secs(10)).unwrap(),
        );
        assert!(map.validate().is_empty());
        map.video_duration = Timestamp::from_secs(11);
        map.unpresented = vec![1];
        let paths: Vec<String> = map.validate().into_iter().map(|e| e.path).collect();
        assert_eq!(paths, vec!["video_duration", "unpresented"]);
    }

    proptest! {
        #[test]
        fn durations_tile_the_video(mut stamps in proptest::collection::btree_set(0u64..1_000_000, 1..40), extra in 1u64..100_000) {
            let stamps: Vec<u64> = std::mem::take(&mut stamps).into_iter().collect();
            let duration = Timestamp::from_millis(stamps.last().unwrap() + extra);
            let apps: Vec<Appearance> = stamps
                .iter()
                .enumerate()
                .map(|(i, &t)| Appearance { slide_index: (i % 5) as u32 + 1, timestamp: Timestamp::from_millis(t), confidence: 1.0 })
                .collect();
            let entries = compute_durations(&apps, duration).unwrap();
            let total: u64 = entries.iter().map(|e| e.duration_until_next.millis()).sum();
            prop_assert_eq!(stamps[0] + total, duration.millis());
        }

        #[test]
        fn accepted_appearances_never_repeat_consecutively(
            raw in proptest::collection::vec((1u32..4, 0.7f64..1.0), 0..80),
            debounce in 1u32..5,
        ) {
            let matches = seq(&raw);
            if let Ok(apps) = detect_appearances(&matches, 0.85, debounce) {
                for w in apps.windows(2) {
                    prop_assert!(w[0].slide_index != w[1].slide_index);
                    prop_assert!(w[0].timestamp < w[1].timestamp);
                }
                for a in &apps {
                    prop_assert!(a.confidence >= 0.85 && a.confidence <= 1.0);
                }
            }
        }
    }
}
