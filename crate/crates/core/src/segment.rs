//! Rule-based sentence segmentation.
//!
//! Input is split on whitespace into tokens; a sentence closes after a token
//! whose last character (ignoring trailing closing quotes and brackets) is
//! `.`, `!` or `?`, unless the token is a listed abbreviation or a single
//! capital initial such as `J.`. Sentences are re-joined from their tokens
//! with single spaces, so joining the output with spaces gives back the input
//! with whitespace collapsed.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

const TERMINATORS: [char; 3] = ['.', '!', '?'];

fn is_closer(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}' | '\u{00BB}'
    )
}

fn is_opener(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | '(' | '[' | '{' | '\u{201C}' | '\u{2018}' | '\u{00AB}'
    )
}

/// Number of Unicode scalar values in `s`. Budgets are counted this way.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Collapses every run of whitespace to one space and trims both ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, thiserror::Error)]
pub enum AbbreviationError {
    #[error("cannot read abbreviation list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("abbreviation list line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Case-folded tokens that never close a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbbreviationList {
    tokens: HashSet<String>,
}

impl AbbreviationList {
    pub fn parse(text: &str) -> Result<Self, AbbreviationError> {
        let mut tokens = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.chars().any(char::is_whitespace) {
                return Err(AbbreviationError::Parse {
                    line: i + 1,
                    reason: format!("entry {line:?} contains whitespace"),
                });
            }
            tokens.insert(line.to_lowercase());
        }
        Ok(Self { tokens })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AbbreviationError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| AbbreviationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl Default for AbbreviationList {
    fn default() -> Self {
        Self::parse(DEFAULT_ABBREVIATIONS).expect("bundled abbreviation list is well-formed")
    }
}

/// Sentence splitter configured with an abbreviation list.
#[derive(Debug, Clone, Default)]
pub struct Segmenter {
    abbreviations: AbbreviationList,
}

impl Segmenter {
    pub fn new(abbreviations: AbbreviationList) -> Self {
        Self { abbreviations }
    }

    /// Shared instance using the bundled abbreviation list.
    pub fn shared() -> &'static Segmenter {
        static SHARED: OnceLock<Segmenter> = OnceLock::new();
        SHARED.get_or_init(Segmenter::default)
    }

    fn core_token(token: &str) -> &str {
        token.trim_start_matches(is_opener).trim_end_matches(is_closer)
    }

    fn ends_with_terminator(token: &str) -> bool {
        token
            .trim_end_matches(is_closer)
            .ends_with(TERMINATORS.as_slice())
    }

    fn is_initial(core: &str) -> bool {
        let mut chars = core.chars();
        matches!(
            (chars.next(), chars.next(), chars.next()),
            (Some(c), Some('.'), None) if c.is_uppercase()
        )
    }

    fn closes_sentence(&self, token: &str, at_end: bool) -> bool {
        if !Self::ends_with_terminator(token) {
            return false;
        }
        let core = Self::core_token(token);
        if self.abbreviations.contains(core) {
            return false;
        }
        at_end || !Self::is_initial(core)
    }

    pub fn segment(&self, text: &str) -> Vec<String> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut sentences = Vec::new();
        let mut start = 0;
        for (i, token) in tokens.iter().enumerate() {
            let at_end = i + 1 == tokens.len();
            if self.closes_sentence(token, at_end) {
                sentences.push(tokens[start..=i].join(" "));
                start = i + 1;
            }
        }
        if start < tokens.len() {
            sentences.push(tokens[start..].join(" "));
        }
        sentences
    }

    /// Whether `sentence` ends at a real terminator rather than running out
    /// of input.
    pub fn is_terminated(&self, sentence: &str) -> bool {
        sentence
            .split_whitespace()
            .last()
            .is_some_and(|last| self.closes_sentence(last, true))
    }
}

/// Segments `text` with the bundled abbreviation list.
pub fn segment_sentences(text: &str) -> Vec<String> {
    Segmenter::shared().segment(text)
}

/// Terminator check with the bundled abbreviation list.
pub fn is_terminated(sentence: &str) -> bool {
    Segmenter::shared().is_terminated(sentence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("  \n\t ").is_empty());
    }

    #[test]
    fn transcript_pair() {
        assert_eq!(
            segment_sentences(
                "Sally searched for pastries. The husband and the wife asked for vodka."
            ),
            vec![
                "Sally searched for pastries.",
                "The husband and the wife asked for vodka."
            ]
        );
    }

    #[test]
    fn unterminated_fragment() {
        let s = segment_sentences("He said hi");
        assert_eq!(s, vec!["He said hi"]);
        assert!(!is_terminated(&s[0]));
    }

    // Each case was worked out by hand before the splitter was written.
    #[test]
    fn abbreviation_cases() {
        let cases: [(&str, &[&str]); 20] = [
            ("Mr. Smith arrived.", &["Mr. Smith arrived."]),
            ("Mrs. Hughes baked bread.", &["Mrs. Hughes baked bread."]),
            ("Dr. Who opened the door. He smiled.", &["Dr. Who opened the door.", "He smiled."]),
            ("Ms. Davies sang. Prof. Little clapped.", &["Ms. Davies sang.", "Prof. Little clapped."]),
            ("They met on St. Mark's square.", &["They met on St. Mark's square."]),
            ("It was Brian vs. the boss.", &["It was Brian vs. the boss."]),
            ("Bring food, e.g. pizza. Then leave.", &["Bring food, e.g. pizza.", "Then leave."]),
            ("One thing, i.e. dough, mattered.", &["One thing, i.e. dough, mattered."]),
            ("J. R. Hartley wrote it.", &["J. R. Hartley wrote it."]),
            ("Capt. Hook sailed! Sgt. Pepper waved?", &["Capt. Hook sailed!", "Sgt. Pepper waved?"]),
            ("Rev. Green prayed. Lt. Dan ran.", &["Rev. Green prayed.", "Lt. Dan ran."]),
            ("He said \"Go home.\" She left.", &["He said \"Go home.\"", "She left."]),
            ("(Dr. Lee nodded.) The end.", &["(Dr. Lee nodded.)", "The end."]),
            ("MR. BROWN shouted.", &["MR. BROWN shouted."]),
            ("Mt. Etna erupted. Everyone ran.", &["Mt. Etna erupted.", "Everyone ran."]),
            ("Sr. Garcia and Jr. Garcia ate.", &["Sr. Garcia and Jr. Garcia ate."]),
            ("Baguettes, patisserie... Sally asked Brian for help.", &["Baguettes, patisserie...", "Sally asked Brian for help."]),
            ("See fig. 3 for the map.", &["See fig. 3 for the map."]),
            ("Approx. ten people came. It rained.", &["Approx. ten people came.", "It rained."]),
            ("Gov. Smith resigned? Pres. Jones refused!", &["Gov. Smith resigned?", "Pres. Jones refused!"]),
        ];
        for (input, expected) in cases {
            assert_eq!(segment_sentences(input), expected, "input: {input}");
        }
    }

    #[test]
    fn trailing_abbreviation_is_not_terminated() {
        let s = segment_sentences("The door opened for Mr.");
        assert_eq!(s.len(), 1);
        assert!(!is_terminated(&s[0]));
        assert!(is_terminated("He chose plan B."));
        assert!(is_terminated("Can you come back, he asked."));
        assert!(is_terminated("\"Stop!\""));
    }

    #[test]
    fn whitespace_is_collapsed_inside_sentences() {
        assert_eq!(
            segment_sentences("  Brian \n apologized.\n\nHe   agreed. "),
            vec!["Brian apologized.", "He agreed."]
        );
    }

    #[test]
    fn custom_list_parsing() {
        let list = AbbreviationList::parse("# comment\n\nAbc.\nabc.\n").unwrap();
        assert_eq!(list.len(), 1);
        assert!(list.contains("ABC."));
        let err = AbbreviationList::parse("ok.\nnot ok.\n").unwrap_err();
        assert!(matches!(err, AbbreviationError::Parse { line: 2, .. }));
        let seg = Segmenter::new(AbbreviationList::parse("abc.").unwrap());
        assert_eq!(seg.segment("Abc. def. ghi"), vec!["Abc. def.", "ghi"]);
    }

    #[test]
    fn unicode_lengths() {
        assert_eq!(char_len("café."), 5);
        assert_eq!(char_len("Ünïcödé"), 7);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn join_round_trips(text in "[ a-zA-Z.!?\"'()\n\t]{0,200}") {
                let joined = segment_sentences(&text).join(" ");
                prop_assert_eq!(collapse_whitespace(&joined), collapse_whitespace(&text));
            }

            #[test]
            fn only_last_sentence_may_be_unterminated(text in "[ a-zA-Z.!?]{0,200}") {
                let sentences = segment_sentences(&text);
                for s in sentences.iter().rev().skip(1) {
                    prop_assert!(is_terminated(s), "{:?}", s);
                }
            }
        }
    }
}
