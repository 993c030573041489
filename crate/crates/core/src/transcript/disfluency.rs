//! Deterministic removal of spoken fillers and immediate word repetitions.
//!
//! Text is processed as whitespace-separated tokens, each split into leading
//! punctuation, a word core and trailing punctuation. Fillers are matched on
//! the lowercased core only, so "Um," and "uh." are standalone fillers while
//! "umbrella" is not.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Longest repeated phrase that counts as a false start ("we have, we have").
const MAX_REPEAT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FillerLexicon {
    /// Removed wherever they stand alone.
    pub words: BTreeSet<String>,
    /// Removed only when set off by commas ("it was, like, huge").
    pub comma_words: BTreeSet<String>,
    /// Two-word fillers, removed only when set off by commas.
    pub bigrams: BTreeSet<(String, String)>,
}

impl Default for FillerLexicon {
    fn default() -> Self {
        FillerLexicon {
            words: ["um", "uh", "er", "ah"]
                .into_iter()
                .map(String::from)
                .collect(),
            comma_words: ["like"].into_iter().map(String::from).collect(),
            bigrams: [("you".to_string(), "know".to_string())]
                .into_iter()
                .collect(),
        }
    }
}

impl FillerLexicon {
    /// True if `word` (any case) is an unconditional filler.
    pub fn is_filler_word(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    lead: String,
    core: String,
    trail: String,
}

impl Token {
    fn parse(raw: &str) -> Token {
        let is_word = |c: char| c.is_alphanumeric();
        match (raw.find(is_word), raw.rfind(is_word)) {
            (Some(start), Some(end)) => {
                let end = end + raw[end..].chars().next().map_or(1, char::len_utf8);
                Token {
                    lead: raw[..start].to_string(),
                    core: raw[start..end].to_string(),
                    trail: raw[end..].to_string(),
                }
            }
            _ => Token {
                lead: String::new(),
                core: String::new(),
                trail: raw.to_string(),
            },
        }
    }

    fn key(&self) -> String {
        self.core.to_lowercase()
    }

    fn render(&self) -> String {
        format!("{}{}{}", self.lead, self.core, self.trail)
    }

    fn ends_with_comma(&self) -> bool {
        self.trail.ends_with(',')
    }

    fn ends_sentence(&self) -> bool {
        self.trail.contains(['.', '?', '!'])
    }

    fn starts_upper(&self) -> bool {
        self.core.chars().next().is_some_and(char::is_uppercase)
    }

    fn capitalize(&mut self) {
        let mut chars = self.core.chars();
        if let Some(first) = chars.next() {
            self.core = first.to_uppercase().chain(chars).collect();
        }
    }

    fn strip_trailing_comma(&mut self) {
        if let Some(stripped) = self.trail.strip_suffix(',') {
            self.trail = stripped.to_string();
        }
    }
}

fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace().map(Token::parse).collect()
}

fn join(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(Token::render)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A token starts a sentence if nothing precedes it or the previous token ends one.
fn sentence_initial(tokens: &[Token], i: usize) -> bool {
    i == 0 || tokens[i - 1].ends_sentence()
}

/// Length in tokens of the filler starting at `i`, if any.
fn filler_at(tokens: &[Token], i: usize, lexicon: &FillerLexicon) -> usize {
    let t = &tokens[i];
    let key = t.key();
    if key.is_empty() {
        return 0;
    }
    if lexicon.words.contains(&key) {
        return 1;
    }
    let opened = i == 0 || tokens[i - 1].ends_with_comma() || tokens[i - 1].ends_sentence();
    if !opened {
        return 0;
    }
    let closed = |t: &Token| t.ends_with_comma() || t.ends_sentence();
    if lexicon.comma_words.contains(&key) && closed(t) {
        return 1;
    }
    if let Some(next) = tokens.get(i + 1) {
        if t.trail.is_empty()
            && next.lead.is_empty()
            && closed(next)
            && lexicon.bigrams.contains(&(key, next.key()))
        {
            return 2;
        }
    }
    0
}

/// True if the words at the start of `rest` repeat the last words of `kept`.
fn restarts(kept: &[Token], rest: &[Token]) -> bool {
    (1..=MAX_REPEAT).any(|n| {
        n <= kept.len()
            && n <= rest.len()
            && kept[kept.len() - n..]
                .iter()
                .zip(&rest[..n])
                .all(|(a, b)| !a.core.is_empty() && a.key() == b.key())
    })
}

/// Remove filler words, repairing the punctuation around them.
pub fn remove_fillers(text: &str, lexicon: &FillerLexicon) -> String {
    let tokens = tokenize(text);
    let mut kept: Vec<Token> = Vec::with_capacity(tokens.len());
    let mut capitalize_next = false;
    let mut i = 0;
    while i < tokens.len() {
        let first = filler_at(&tokens, i, lexicon);
        if first == 0 {
            let mut t = tokens[i].clone();
            if std::mem::take(&mut capitalize_next) {
                t.capitalize();
            }
            kept.push(t);
            i += 1;
            continue;
        }
        let run_start = i;
        let mut run_end = i + first;
        while run_end < tokens.len() && !tokens[run_end - 1].ends_sentence() {
            match filler_at(&tokens, run_end, lexicon) {
                0 => break,
                n => run_end += n,
            }
        }
        let terminal: String = tokens[run_end - 1]
            .trail
            .chars()
            .filter(|c| matches!(c, '.' | '?' | '!'))
            .collect();
        let prev_initial =
            kept.len() == 1 || kept.len() >= 2 && kept[kept.len() - 2].ends_sentence();
        let restart = restarts(&kept, &tokens[run_end..]);
        match kept.last_mut() {
            Some(prev) if !terminal.is_empty() && !prev.ends_sentence() => {
                prev.strip_trailing_comma();
                prev.trail.push_str(&terminal);
            }
            Some(prev) if prev.ends_with_comma() && !prev_initial && !restart => {
                prev.strip_trailing_comma()
            }
            _ => {}
        }
        if sentence_initial(&tokens, run_start) && tokens[run_start].starts_upper() {
            capitalize_next = true;
        }
        i = run_end;
    }
    join(&kept)
}

/// Collapse immediate repetitions of up to four words, keeping the later
/// occurrence ("we have, we have come" becomes "we have come").
pub fn collapse_repetitions(text: &str) -> String {
    let mut tokens = tokenize(text);
    let mut i = 0;
    while i < tokens.len() {
        let repeat = (1..=MAX_REPEAT).rev().find(|&n| {
            i + 2 * n <= tokens.len()
                && tokens[i..i + n]
                    .iter()
                    .all(|t| !t.core.is_empty() && t.lead.is_empty())
                && tokens[i..i + n - 1].iter().all(|t| t.trail.is_empty())
                && !tokens[i + n - 1].ends_sentence()
                && tokens[i..i + n]
                    .iter()
                    .zip(&tokens[i + n..i + 2 * n])
                    .all(|(a, b)| a.key() == b.key())
        });
        match repeat {
            Some(n) => {
                let capital = sentence_initial(&tokens, i) && tokens[i].starts_upper();
                tokens.drain(i..i + n);
                if capital {
                    tokens[i].capitalize();
                }
            }
            None => i += 1,
        }
    }
    join(&tokens)
}

/// Filler removal followed by repetition collapse.
pub fn strip_disfluencies(text: &str, lexicon: &FillerLexicon) -> String {
    collapse_repetitions(&remove_fillers(text, lexicon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strip(text: &str) -> String {
        strip_disfluencies(text, &FillerLexicon::default())
    }

    #[test]
    fn filler_example_sentence() {
        assert_eq!(
            strip("So, um, this is the famous, uh, Transformer architecture."),
            "So, this is the famous Transformer architecture."
        );
    }

    #[test]
    fn false_start_keeps_comma_then_collapses() {
        let lex = FillerLexicon::default();
        let raw = "we have, um, uh, we have come up with four bins";
        assert_eq!(
            remove_fillers(raw, &lex),
            "we have, we have come up with four bins"
        );
        assert_eq!(strip(raw), "we have come up with four bins");
    }

    #[test]
    fn empty_and_clean_text_pass_through() {
        assert_eq!(strip(""), "");
        assert_eq!(strip("   "), "");
        assert_eq!(
            strip("Attention is computed per head."),
            "Attention is computed per head."
        );
    }

    #[test]
    fn sentence_initial_filler_capitalizes_next_word() {
        assert_eq!(
            strip("Um, the encoder reads the input."),
            "The encoder reads the input."
        );
        assert_eq!(
            strip("That is all. Uh, next slide."),
            "That is all. Next slide."
        );
    }

    #[test]
    fn terminal_punctuation_moves_to_previous_word() {
        assert_eq!(
            strip("and that is it, um. Next we look at data."),
            "and that is it. Next we look at data."
        );
    }

    #[test]
    fn like_and_you_know_only_when_set_off() {
        assert_eq!(strip("it was, like, huge"), "it was huge");
        assert_eq!(strip("I like this model"), "I like this model");
        assert_eq!(strip("the loss was, you know, flat"), "the loss was flat");
        assert_eq!(strip("do you know the answer"), "do you know the answer");
    }

    #[test]
    fn fillers_are_case_insensitive_and_whole_word() {
        assert_eq!(strip("the UH umbrella term"), "the umbrella term");
        assert_eq!(strip("er ah um"), "");
    }

    #[test]
    fn repetitions_collapse_but_sentences_do_not_merge() {
        assert_eq!(collapse_repetitions("the the model"), "the model");
        assert_eq!(collapse_repetitions("We we use it"), "We use it");
        assert_eq!(
            collapse_repetitions("It works. It works."),
            "It works. It works."
        );
        assert_eq!(collapse_repetitions("a b c d a b c d e"), "a b c d e");
    }

    proptest! {
        #[test]
        fn non_filler_words_survive_in_order(words in prop::collection::vec(prop::sample::select(vec!["model", "data", "um", "uh", "the", "layer", "er", "attention"]), 0..30)) {
            let lex = FillerLexicon::default();
            let text = words.join(" ");
            let cleaned = remove_fillers(&text, &lex);
            let expected: Vec<&str> = words.iter().copied().filter(|w| !lex.is_filler_word(w)).collect();
            prop_assert_eq!(cleaned.split_whitespace().collect::<Vec<_>>(), expected);
        }

        #[test]
        fn output_has_no_standalone_fillers(text in "[a-zA-Z ,.]{0,80}") {
            let lex = FillerLexicon::default();
            let cleaned = strip_disfluencies(&text, &lex);
            for token in tokenize(&cleaned) {
                prop_assert!(!lex.is_filler_word(&token.core), "{cleaned:?}");
            }
        }

        #[test]
        fn stripping_is_idempotent_on_filler_free_text(words in prop::collection::vec(prop::sample::select(vec!["model", "data", "layer", "attention"]), 0..20)) {
            let text = words.join(" ");
            let once = remove_fillers(&text, &FillerLexicon::default());
            prop_assert_eq!(&once, &text);
        }
    }
}
