//! Assignment of transcript segments to transition-map entries.
//!
//! Entry `i` owns `[timestamp_i, timestamp_i + duration_i)`; anything spoken
//! before the first entry belongs to the first entry. A segment that lies in
//! one interval goes there. A segment that crosses boundaries is split at each
//! boundary where both sides hold at least `split_min` of speech, with words
//! distributed in proportion to time; if no boundary qualifies, the whole
//! segment goes to the interval containing its midpoint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Timestamp;
use crate::sync::TransitionMap;

pub const DEFAULT_SPLIT_MIN_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechSpan {
    /// Position of the source segment in the transcript.
    pub segment: u32,
    pub start: Timestamp,
    pub end: Timestamp,
    pub text: String,
}

/// Speech delivered while one transition entry was on screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpeech {
    /// 1-based position of the entry in the transition map.
    pub entry: u32,
    pub slide_index: u32,
    pub spans: Vec<SpeechSpan>,
}

impl EntrySpeech {
    pub fn text(&self) -> String {
        self.spans
            .iter()
            .map(|s| s.text.as_str())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignError {
    #[error("segment {segment} ends at {end}, after the end of the video ({duration})")]
    PastEnd {
        segment: usize,
        end: Timestamp,
        duration: Timestamp,
    },
    #[error("segment {segment} is empty or reversed ({start} to {end})")]
    EmptySegment {
        segment: usize,
        start: Timestamp,
        end: Timestamp,
    },
    #[error("transition map has no entries")]
    NoEntries,
}

/// Minimal view of a segment for assignment.
#[derive(Debug, Clone, Copy)]
pub struct Timed<'a> {
    pub start: Timestamp,
    pub end: Timestamp,
    pub text: &'a str,
}

fn intervals(map: &TransitionMap) -> Vec<(u64, u64)> {
    (0..map.entries.len())
        .map(|i| {
            let start = if i == 0 {
                0
            } else {
                map.entries[i].timestamp.millis()
            };
            (start, map.entry_end(i).millis())
        })
        .collect()
}

/// Split `text` into consecutive word groups in proportion to `lens`, which
/// sum to `total`. Rounding is cumulative so no word is lost or repeated.
fn split_words(text: &str, lens: &[u64], total: u64) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let n = words.len() as u64;
    let mut out = Vec::with_capacity(lens.len());
    let mut from = 0usize;
    let mut elapsed = 0u64;
    for &len in lens {
        elapsed += len;
        let to = ((n * elapsed + total / 2) / total) as usize;
        out.push(words[from..to.max(from)].join(" "));
        from = to.max(from);
    }
    out
}

pub fn assign_speech(
    segments: &[Timed<'_>],
    map: &TransitionMap,
    split_min_ms: u64,
) -> Result<Vec<EntrySpeech>, AssignError> {
    if map.entries.is_empty() {
        return Err(AssignError::NoEntries);
    }
    let bounds = intervals(map);
    let mut out: Vec<EntrySpeech> = map
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| EntrySpeech {
            entry: i as u32 + 1,
            slide_index: e.slide_index,
            spans: Vec::new(),
        })
        .collect();
    for (k, seg) in segments.iter().enumerate() {
        let (s, e) = (seg.start.millis(), seg.end.millis());
        if s >= e {
            return Err(AssignError::EmptySegment {
                segment: k,
                start: seg.start,
                end: seg.end,
            });
        }
        if e > map.video_duration.millis() {
            return Err(AssignError::PastEnd {
                segment: k,
                end: seg.end,
                duration: map.video_duration,
            });
        }
        let overlaps: Vec<(usize, u64)> = bounds
            .iter()
            .enumerate()
            .filter_map(|(i, &(a, b))| {
                let ov = e.min(b).saturating_sub(s.max(a));
                (ov > 0).then_some((i, ov))
            })
            .collect();
        let major: Vec<usize> = overlaps
            .iter()
            .filter(|(_, ov)| *ov >= split_min_ms)
            .map(|(i, _)| *i)
            .collect();
        let pieces: Vec<(usize, u64, u64)> = if major.len() >= 2 {
            let starts: Vec<u64> = major
                .iter()
                .enumerate()
                .map(|(j, &i)| if j == 0 { s } else { bounds[i].0 })
                .collect();
            major
                .iter()
                .enumerate()
                .map(|(j, &i)| (i, starts[j], starts.get(j + 1).copied().unwrap_or(e)))
                .collect()
        } else {
            let mid = s + (e - s) / 2;
            let i = bounds
                .iter()
                .position(|&(a, b)| a <= mid && mid < b)
                .unwrap_or(bounds.len() - 1);
            vec![(i, s, e)]
        };
        let lens: Vec<u64> = pieces.iter().map(|&(_, a, b)| b - a).collect();
        let texts = split_words(seg.text, &lens, e - s);
        for ((i, a, b), text) in pieces.into_iter().zip(texts) {
            out[i].spans.push(SpeechSpan {
                segment: k as u32,
                start: Timestamp::from_millis(a),
                end: Timestamp::from_millis(b),
                text,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::TransitionEntry;
    use proptest::prelude::*;

    fn map(starts_s: &[u64], duration_s: u64) -> TransitionMap {
        let entries = starts_s
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let end = starts_s.get(i + 1).copied().unwrap_or(duration_s);
                TransitionEntry {
                    slide_index: i as u32 + 1,
                    timestamp: Timestamp::from_secs(t),
                    confidence: 1.0,
                    duration_until_next: Timestamp::from_secs(end - t),
                }
            })
            .collect();
        TransitionMap::new(
            "p",
            starts_s.len() as u32,
            Timestamp::from_secs(duration_s),
            entries,
        )
    }

    fn seg(start_ms: u64, end_ms: u64, text: &str) -> Timed<'_> {
        Timed {
            start: Timestamp::from_millis(start_ms),
            end: Timestamp::from_millis(end_ms),
            text,
        }
    }

    #[test]
    fn segment_inside_an_interval_goes_to_it() {
        let m = map(&[0, 8, 41, 156], 200);
        let out = assign_speech(
            &[seg(45_000, 50_000, "attention heads")],
            &m,
            DEFAULT_SPLIT_MIN_MS,
        )
        .unwrap();
        assert_eq!(out[2].slide_index, 3);
        assert_eq!(out[2].text(), "attention heads");
        assert!(out
            .iter()
            .enumerate()
            .all(|(i, e)| i == 2 || e.spans.is_empty()));
    }

    #[test]
    fn straddling_segment_splits_at_the_boundary() {
        let m = map(&[0, 8, 41], 60);
        let out = assign_speech(
            &[seg(40_000, 42_000, "one two three four")],
            &m,
            DEFAULT_SPLIT_MIN_MS,
        )
        .unwrap();
        assert_eq!(out[1].text(), "one two");
        assert_eq!(out[2].text(), "three four");
        assert_eq!(out[2].spans[0].start, Timestamp::from_secs(41));
    }

    #[test]
    fn short_overhang_uses_midpoint() {
        let m = map(&[0, 8, 41], 60);
        let out = assign_speech(
            &[seg(40_500, 45_000, "mostly on three")],
            &m,
            DEFAULT_SPLIT_MIN_MS,
        )
        .unwrap();
        assert!(out[1].spans.is_empty());
        assert_eq!(out[2].text(), "mostly on three");
    }

    #[test]
    fn speech_before_first_entry_belongs_to_it() {
        let m = map(&[5, 10], 20);
        let out = assign_speech(&[seg(0, 2_000, "hello")], &m, DEFAULT_SPLIT_MIN_MS).unwrap();
        assert_eq!(out[0].text(), "hello");
    }

    #[test]
    fn segment_past_the_end_is_rejected() {
        let m = map(&[0], 20);
        assert!(matches!(
            assign_speech(&[seg(19_000, 21_000, "late")], &m, DEFAULT_SPLIT_MIN_MS),
            Err(AssignError::PastEnd { segment: 0, .. })
        ));
        assert!(matches!(
            assign_speech(&[seg(5_000, 5_000, "x")], &m, DEFAULT_SPLIT_MIN_MS),
            Err(AssignError::EmptySegment { .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u64>, u64, Vec<(u64, u64, usize)>)> {
        (prop::collection::btree_set(1u64..100, 0..8), 100u64..130).prop_flat_map(
            |(cuts, duration)| {
                let mut starts = vec![0u64];
                starts.extend(cuts);
                let segs = prop::collection::vec(
                    (0u64..duration * 1000 - 1, 1u64..20_000, 0usize..12),
                    0..15,
                );
                (Just(starts), Just(duration), segs)
            },
        )
    }

    proptest! {
        #[test]
        fn words_are_conserved((starts, duration, raw) in arb_case()) {
            let m = map(&starts, duration);
            let texts: Vec<String> = raw.iter().enumerate()
                .map(|(k, &(_, _, n))| (0..n).map(|w| format!("w{k}_{w}")).collect::<Vec<_>>().join(" "))
                .collect();
            let segments: Vec<Timed> = raw.iter().zip(&texts)
                .map(|(&(s, len, _), t)| seg(s, (s + len).min(duration * 1000), t))
                .collect();
            let out = assign_speech(&segments, &m, DEFAULT_SPLIT_MIN_MS).unwrap();
            let again = assign_speech(&segments, &m, DEFAULT_SPLIT_MIN_MS).unwrap();
            prop_assert_eq!(&out, &again);
            // Per segment, spans in entry order reassemble the original text.
            for (k, text) in texts.iter().enumerate() {
                let pieces: Vec<&str> = out.iter()
                    .flat_map(|e| e.spans.iter())
                    .filter(|s| s.segment as usize == k)
                    .map(|s| s.text.as_str())
                    .filter(|t| !t.is_empty())
                    .collect();
                prop_assert_eq!(pieces.join(" "), text.clone());
            }
            for e in &out {
                let i = e.entry as usize - 1;
                let a = if i == 0 { 0 } else { m.entries[i].timestamp.millis() };
                let b = m.entry_end(i).millis();
                for s in &e.spans {
                    prop_assert!(s.start < s.end);
                    prop_assert!(s.start.millis() < b && s.end.millis() > a, "span outside its entry");
                }
            }
        }
    }
}
