//! JSON dump of a built index: corpus lines, vectors and hashing parameters.
//! Hash tables are rebuilt from the stored seed on load.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ApproxParams, Embedder, IndexMode, SeedCorpus, SeedError, SeedIndex};
use crate::exec::Exec;

pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCache {
    pub version: u32,
    pub embedder_id: String,
    pub dim: usize,
    pub corpus_digest: String,
    pub mode: IndexMode,
    pub params: ApproxParams,
    pub entries: Vec<String>,
    pub vectors: Vec<f32>,
}

impl IndexCache {
    pub fn from_index(index: &SeedIndex) -> Self {
        Self {
            version: CACHE_VERSION,
            embedder_id: index.embedder().id().to_string(),
            dim: index.embedder().dim(),
            corpus_digest: index.corpus().source_digest().to_string(),
            mode: index.mode(),
            params: *index.params(),
            entries: index.corpus().entries().to_vec(),
            vectors: index.raw_vectors().to_vec(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SeedError> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| SeedError::Cache(e.to_string()))?;
        std::fs::write(path, json).map_err(|source| SeedError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SeedError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SeedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cache: Self = serde_json::from_str(&text).map_err(|e| SeedError::Cache(e.to_string()))?;
        if cache.version != CACHE_VERSION {
            return Err(SeedError::Cache(format!(
                "unsupported cache version {} (expected {CACHE_VERSION})",
                cache.version
            )));
        }
        Ok(cache)
    }

    /// Rebuilds the index. When `current` is given, its digest must match the
    /// cached one.
    pub fn into_index(
        self,
        embedder: Arc<dyn Embedder>,
        current: Option<&SeedCorpus>,
    ) -> Result<SeedIndex, SeedError> {
        if embedder.id() != self.embedder_id || embedder.dim() != self.dim {
            return Err(SeedError::Cache(format!(
                "cache built with embedder {} (dim {}), not {} (dim {})",
                self.embedder_id,
                self.dim,
                embedder.id(),
                embedder.dim()
            )));
        }
        if let Some(corpus) = current {
            if corpus.source_digest() != self.corpus_digest {
                return Err(SeedError::StaleCache {
                    cached: self.corpus_digest,
                    current: corpus.source_digest().to_string(),
                });
            }
        }
        let corpus = SeedCorpus::from_sentences(self.entries);
        if corpus.source_digest() != self.corpus_digest {
            return Err(SeedError::Cache("cached entries do not match their digest".into()));
        }
        SeedIndex::from_vectors(corpus, embedder, self.vectors, self.mode, self.params, Exec::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::HashedTrigramEmbedder;

    #[test]
    fn round_trip_and_staleness() {
        let embedder: Arc<dyn Embedder> = Arc::new(HashedTrigramEmbedder::default());
        let corpus = SeedCorpus::demo();
        let index = SeedIndex::build(
            corpus.clone(),
            embedder.clone(),
            IndexMode::Approximate,
            ApproxParams::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        IndexCache::from_index(&index).save(&path).unwrap();
        let loaded = IndexCache::load(&path)
            .unwrap()
            .into_index(embedder.clone(), Some(&corpus))
            .unwrap();
        for q in ["Pizza Hut", "a long voyage", "my father"] {
            assert_eq!(loaded.query(q, 5), index.query(q, 5));
        }
        let changed = SeedCorpus::from_sentences(["A different corpus."]);
        let err = IndexCache::load(&path)
            .unwrap()
            .into_index(embedder, Some(&changed))
            .unwrap_err();
        assert!(matches!(err, SeedError::StaleCache { .. }));
    }
}
