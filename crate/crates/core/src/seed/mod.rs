//! Story seeding: match an audience suggestion against a corpus of opening
//! lines by embedding similarity, exactly or through a hyperplane-hash index.

mod cache;
mod corpus;
mod embed;
mod lsh;

pub use cache::IndexCache;
pub use corpus::SeedCorpus;
pub use embed::{dot, Embedder, EmbeddingVector, HashedTrigramEmbedder, DEFAULT_DIM};

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use lsh::HyperplaneTables;

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("seed corpus is empty")]
    EmptyCorpus,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("index cache: {0}")]
    Cache(String),
    #[error("index cache is stale: built from corpus {cached}, current corpus is {current}")]
    StaleCache { cached: String, current: String },
    #[error("unknown seed entry {0}")]
    UnknownEntry(usize),
    #[error("invalid index parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    #[default]
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxParams {
    pub num_hyperplane_tables: usize,
    pub hashes_per_table: usize,
    pub seed: u64,
    /// Buckets within this Hamming distance of the query key are probed too.
    pub probe_radius: u32,
}

impl Default for ApproxParams {
    fn default() -> Self {
        Self {
            num_hyperplane_tables: 16,
            hashes_per_table: 12,
            seed: 0x5eed_1d3a,
            probe_radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMatch {
    pub entry_id: usize,
    pub sentence: String,
    pub similarity: f64,
}

/// Descending similarity, ties by ascending id.
fn rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

fn top_k(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    scored.sort_by(rank);
    scored
}

pub struct SeedIndex {
    corpus: SeedCorpus,
    embedder: Arc<dyn Embedder>,
    dim: usize,
    vectors: Vec<f32>,
    mode: IndexMode,
    params: ApproxParams,
    tables: Option<HyperplaneTables>,
    exec: Exec,
}

impl std::fmt::Debug for SeedIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeedIndex")
            .field("entries", &self.corpus.len())
            .field("embedder", &self.embedder.id())
            .field("mode", &self.mode)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SeedIndex {
    pub fn build(
        corpus: SeedCorpus,
        embedder: Arc<dyn Embedder>,
        mode: IndexMode,
        params: ApproxParams,
    ) -> Result<Self, SeedError> {
        Self::build_with(corpus, embedder, mode, params, Exec::default())
    }

    pub fn build_with(
        corpus: SeedCorpus,
        embedder: Arc<dyn Embedder>,
        mode: IndexMode,
        params: ApproxParams,
        exec: Exec,
    ) -> Result<Self, SeedError> {
        if corpus.is_empty() {
            return Err(SeedError::EmptyCorpus);
        }
        let rows = exec.map(corpus.entries(), |s| embedder.embed(s));
        let vectors: Vec<f32> = rows.iter().flat_map(|v| v.values().iter().copied()).collect();
        Self::from_vectors(corpus, embedder, vectors, mode, params, exec)
    }

    pub(crate) fn from_vectors(
        corpus: SeedCorpus,
        embedder: Arc<dyn Embedder>,
        vectors: Vec<f32>,
        mode: IndexMode,
        params: ApproxParams,
        exec: Exec,
    ) -> Result<Self, SeedError> {
        if corpus.is_empty() {
            return Err(SeedError::EmptyCorpus);
        }
        let dim = embedder.dim();
        if vectors.len() != corpus.len() * dim {
            return Err(SeedError::Cache(format!(
                "expected {} x {dim} vector values, found {}",
                corpus.len(),
                vectors.len()
            )));
        }
        if params.hashes_per_table == 0 || params.hashes_per_table > 64 {
            return Err(SeedError::InvalidParams("hashes_per_table must be in 1..=64".into()));
        }
        if params.num_hyperplane_tables == 0 {
            return Err(SeedError::InvalidParams("num_hyperplane_tables must be >= 1".into()));
        }
        let tables = match mode {
            IndexMode::Exact => None,
            IndexMode::Approximate => Some(HyperplaneTables::build(&vectors, dim, &params, exec)),
        };
        Ok(Self {
            corpus,
            embedder,
            dim,
            vectors,
            mode,
            params,
            tables,
            exec,
        })
    }

    pub fn corpus(&self) -> &SeedCorpus {
        &self.corpus
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn mode(&self) -> IndexMode {
        self.mode
    }

    pub fn params(&self) -> &ApproxParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn vector(&self, id: usize) -> &[f32] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }

    pub(crate) fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    fn matches(&self, ranked: Vec<(usize, f64)>) -> Vec<SeedMatch> {
        ranked
            .into_iter()
            .map(|(entry_id, similarity)| SeedMatch {
                entry_id,
                sentence: self.corpus.entries()[entry_id].clone(),
                similarity,
            })
            .collect()
    }

    /// Top `k` entries for `suggestion`. Exact mode scans every row;
    /// approximate mode rescores only rows sharing a probed bucket.
    pub fn query(&self, suggestion: &str, k: usize) -> Vec<SeedMatch> {
        let k = k.max(1);
        let query = self.embedder.embed(suggestion);
        let q = query.values();
        let scored: Vec<(usize, f64)> = match (&self.tables, self.mode) {
            (Some(tables), IndexMode::Approximate) => {
                let candidates = tables.candidates(q, self.len(), k);
                self.exec
                    .map(&candidates, |&id| (id as usize, dot(self.vector(id as usize), q)))
            }
            _ => self.exec.map_range(self.len(), |id| (id, dot(self.vector(id), q))),
        };
        self.matches(top_k(scored, k))
    }

    /// The corpus sentence for an accepted seed.
    pub fn entry(&self, id: usize) -> Result<&str, SeedError> {
        self.corpus.get(id).ok_or(SeedError::UnknownEntry(id))
    }
}

/// Reference scan: embeds every corpus entry afresh and ranks all of them.
pub fn brute_force_query(
    corpus: &SeedCorpus,
    embedder: &dyn Embedder,
    suggestion: &str,
    k: usize,
) -> Vec<SeedMatch> {
    brute_force_query_with(corpus, embedder, suggestion, k, Exec::default())
}

pub fn brute_force_query_with(
    corpus: &SeedCorpus,
    embedder: &dyn Embedder,
    suggestion: &str,
    k: usize,
    exec: Exec,
) -> Vec<SeedMatch> {
    let query = embedder.embed(suggestion);
    let mut scored: Vec<(usize, f64)> = exec.map_range(corpus.len(), |id| {
        let row = embedder.embed(&corpus.entries()[id]);
        let mut acc = 0.0f64;
        for (a, b) in row.values().iter().zip(query.values()) {
            acc += *a as f64 * *b as f64;
        }
        (id, acc)
    });
    scored.sort_by(rank);
    scored.truncate(k.max(1));
    scored
        .into_iter()
        .map(|(entry_id, similarity)| SeedMatch {
            entry_id,
            sentence: corpus.entries()[entry_id].clone(),
            similarity,
        })
        .collect()
}
