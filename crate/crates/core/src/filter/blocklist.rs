use std::collections::BTreeSet;
use std::path::Path;

use sha2::{Digest, Sha256};

const BUNDLED_BLOCKLIST: &str = include_str!("../../data/blocklist.txt");

#[derive(Debug, thiserror::Error)]
pub enum BlocklistError {
    #[error("blocklist file not found: {0}")]
    FileMissing(String),
    #[error("blocklist {path} is not valid UTF-8")]
    EncodingError { path: String },
    #[error("blocklist line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("reading blocklist {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Splits on every non-alphanumeric character and case-folds the pieces.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocklist {
    tokens: BTreeSet<String>,
    source_digest: String,
}

impl Blocklist {
    pub fn parse(text: &str) -> Result<Self, BlocklistError> {
        let mut tokens = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.chars().any(char::is_whitespace) {
                return Err(BlocklistError::ParseError {
                    line: i + 1,
                    reason: format!("entry {line:?} contains whitespace"),
                });
            }
            if !line.chars().all(char::is_alphanumeric) {
                return Err(BlocklistError::ParseError {
                    line: i + 1,
                    reason: format!("entry {line:?} can never match a whole token"),
                });
            }
            tokens.insert(line.to_lowercase());
        }
        Ok(Self {
            tokens,
            source_digest: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BlocklistError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let bytes = std::fs::read(path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => BlocklistError::FileMissing(shown.clone()),
            _ => BlocklistError::Io {
                path: shown.clone(),
                source,
            },
        })?;
        let text = String::from_utf8(bytes).map_err(|_| BlocklistError::EncodingError { path: shown })?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_BLOCKLIST).expect("bundled blocklist is well-formed")
    }

    pub fn empty() -> Self {
        Self::parse("").expect("empty blocklist")
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(&token.to_lowercase())
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// Blocklisted tokens present in `sentence`, in order of first
    /// appearance. Whole tokens only.
    pub fn check(&self, sentence: &str) -> Vec<String> {
        let mut matched: Vec<String> = Vec::new();
        for token in tokenize(sentence) {
            if self.tokens.contains(&token) && !matched.contains(&token) {
                matched.push(token);
            }
        }
        matched
    }
}
