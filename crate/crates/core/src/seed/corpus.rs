use std::path::Path;

use sha2::{Digest, Sha256};

use super::SeedError;

/// First-lines corpus. Entry ids are dense positions `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedCorpus {
    entries: Vec<String>,
    source_digest: String,
}

impl SeedCorpus {
    /// Builds a corpus from sentences, dropping blank ones.
    pub fn from_sentences<I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<String> = sentences
            .into_iter()
            .map(Into::into)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let mut hasher = Sha256::new();
        for entry in &entries {
            hasher.update(entry.as_bytes());
            hasher.update(b"\n");
        }
        Self {
            entries,
            source_digest: hex::encode(hasher.finalize()),
        }
    }

    /// One sentence per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::from_sentences(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SeedError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SeedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    pub fn demo() -> Self {
        Self::parse(include_str!("../../data/first_lines_sample.txt"))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }
}
