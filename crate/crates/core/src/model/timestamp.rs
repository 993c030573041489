use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A position on the video timeline, in integer milliseconds since the first frame.
///
/// Renders as `HH:MM:SS` when the value is a whole second and as `HH:MM:SS.mmm`
/// otherwise, so the textual form is lossless. Parsing accepts `MM:SS`,
/// `HH:MM:SS` and either with a `.f`, `.ff` or `.fff` fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(u64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed timestamp {text:?}: {reason}")]
pub struct TimestampError {
    pub text: String,
    pub reason: &'static str,
}

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_millis(millis: u64) -> Self {
        Timestamp(millis)
    }

    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1000)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn checked_sub(self, rhs: Timestamp) -> Option<Timestamp> {
        self.0.checked_sub(rhs.0).map(Timestamp)
    }

    pub fn saturating_sub(self, rhs: Timestamp) -> Timestamp {
        Timestamp(self.0.saturating_sub(rhs.0))
    }

    /// Parse `MM:SS` / `HH:MM:SS` with an optional millisecond fraction.
    pub fn parse(text: &str) -> Result<Self, TimestampError> {
        let err = |reason| TimestampError {
            text: text.to_string(),
            reason,
        };
        let (clock, fraction) = match text.split_once('.') {
            Some((clock, fraction)) => (clock, Some(fraction)),
            None => (text, None),
        };
        let fields: Vec<&str> = clock.split(':').collect();
        let numbers = fields
            .iter()
            .map(|f| {
                if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
                    Err(err("fields must be non-empty decimal digits"))
                } else {
                    f.parse::<u64>().map_err(|_| err("field out of range"))
                }
            })
            .collect::<Result<Vec<u64>, _>>()?;
        let (hours, minutes, seconds) = match numbers.as_slice() {
            [m, s] => (0, *m, *s),
            [h, m, s] => {
                if *m >= 60 {
                    return Err(err("minutes must be below 60"));
                }
                if fields[1].len() != 2 {
                    return Err(err("minutes must have two digits"));
                }
                (*h, *m, *s)
            }
            _ => return Err(err("expected MM:SS or HH:MM:SS")),
        };
        if seconds >= 60 {
            return Err(err("seconds must be below 60"));
        }
        if fields[fields.len() - 1].len() != 2 {
            return Err(err("seconds must have two digits"));
        }
        let millis = match fraction {
            None => 0,
            Some(f) if (1..=3).contains(&f.len()) && f.bytes().all(|b| b.is_ascii_digit()) => {
                let scale = 10u64.pow(3 - f.len() as u32);
                f.parse::<u64>().map_err(|_| err("bad fraction"))? * scale
            }
            Some(_) => return Err(err("fraction must have one to three digits")),
        };
        hours
            .checked_mul(3600)
            .and_then(|h| h.checked_add(minutes * 60 + seconds))
            .and_then(|s| s.checked_mul(1000))
            .and_then(|ms| ms.checked_add(millis))
            .map(Timestamp)
            .ok_or_else(|| err("value overflows"))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total_secs = self.0 / 1000;
        let millis = self.0 % 1000;
        let (h, m, s) = (total_secs / 3600, (total_secs / 60) % 60, total_secs % 60);
        if millis == 0 {
            write!(f, "{h:02}:{m:02}:{s:02}")
        } else {
            write!(f, "{h:02}:{m:02}:{s:02}.{millis:03}")
        }
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Add for Timestamp {
    type Output = Timestamp;

    fn add(self, rhs: Timestamp) -> Timestamp {
        Timestamp(self.0 + rhs.0)
    }
}

impl Sub for Timestamp {
    type Output = Timestamp;

    /// Panics on underflow; use [`Timestamp::checked_sub`] when order is not known.
    fn sub(self, rhs: Timestamp) -> Timestamp {
        Timestamp(self.0.checked_sub(rhs.0).expect("timestamp underflow"))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Timestamp::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_both_notations() {
        assert_eq!(Timestamp::parse("00:41").unwrap().millis(), 41_000);
        assert_eq!(Timestamp::parse("00:00:00").unwrap().millis(), 0);
        assert_eq!(Timestamp::parse("01:55").unwrap().millis(), 115_000);
        assert_eq!(Timestamp::parse("00:00:41").unwrap().millis(), 41_000);
        assert_eq!(Timestamp::parse("1:55").unwrap().millis(), 115_000);
        assert_eq!(Timestamp::parse("02:03:04.5").unwrap().millis(), 7_384_500);
        assert_eq!(Timestamp::parse("00:00:01.007").unwrap().millis(), 1_007);
    }

    #[test]
    fn rejects_malformed_text_and_names_it() {
        for bad in [
            "",
            "41",
            "00:60",
            "00:61:00",
            "aa:bb",
            "00:4",
            "00:00:00.1234",
            "1:2:3:4",
            "-1:00",
        ] {
            let err = Timestamp::parse(bad).unwrap_err();
            assert_eq!(err.text, bad);
            assert!(err.to_string().contains(&format!("{bad:?}")));
        }
    }

    #[test]
    fn renders_canonical_form() {
        assert_eq!(Timestamp::from_secs(41).to_string(), "00:00:41");
        assert_eq!(Timestamp::from_secs(3600 + 62).to_string(), "01:01:02");
        assert_eq!(Timestamp::from_millis(8_250).to_string(), "00:00:08.250");
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(ms in 0u64..400_000_000) {
            let t = Timestamp::from_millis(ms);
            prop_assert_eq!(Timestamp::parse(&t.to_string()).unwrap(), t);
        }

        #[test]
        fn whole_second_text_round_trips_exactly(h in 0u64..100, m in 0u64..60, s in 0u64..60) {
            let text = format!("{h:02}:{m:02}:{s:02}");
            prop_assert_eq!(Timestamp::parse(&text).unwrap().to_string(), text);
        }

        #[test]
        fn ordering_agrees_with_millis(a in 0u64..10_000_000, b in 0u64..10_000_000) {
            let (ta, tb) = (Timestamp::from_millis(a), Timestamp::from_millis(b));
            prop_assert_eq!(ta.cmp(&tb), a.cmp(&b));
            // textual order agrees too while hours stay two digits
            prop_assert_eq!(ta.to_string().cmp(&tb.to_string()), a.cmp(&b));
        }
    }
}
