//! Backend, filter and seed index built from the service config.

use std::sync::Arc;

use anyhow::Context;
use narrator_core::backend::{FixtureStore, MockBackend, ModelBackend, RemoteBackend, ReplayBackend};
use narrator_core::engine::NarrationEngine;
use narrator_core::filter::{
    Blocklist, FilterPipeline, MockLexiconScorer, RemoteScorer, ToxicityScorer,
};
use narrator_core::seed::{
    HashedTrigramEmbedder, IndexCache, SeedCorpus, SeedError, SeedIndex,
};
use narrator_core::segment::Segmenter;
use narrator_core::session::Services;

use crate::config::{BackendConfig, ScorerConfig, SeedConfig, ServiceConfig};

pub struct Runtime {
    pub engine: NarrationEngine,
    pub backend: Arc<dyn ModelBackend>,
    pub filter: FilterPipeline,
    pub seeds: Option<Arc<SeedIndex>>,
    /// Whether the backend serves recorded fixtures.
    pub replays: bool,
}

impl Runtime {
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        let (backend, replays): (Arc<dyn ModelBackend>, bool) = match &config.backend {
            BackendConfig::Mock => (Arc::new(MockBackend::new()), false),
            BackendConfig::Remote(remote) => (
                Arc::new(RemoteBackend::new(remote.clone()).context("remote backend")?),
                false,
            ),
            BackendConfig::Replay { fixtures } => {
                let store = FixtureStore::load(fixtures).context("loading fixtures")?;
                (Arc::new(ReplayBackend::new(Arc::new(store))), true)
            }
        };
        let blocklist = match &config.filter.blocklist {
            Some(path) => Blocklist::load(path).context("loading blocklist")?,
            None => Blocklist::bundled(),
        };
        let scorer: Arc<dyn ToxicityScorer> = match &config.filter.scorer {
            ScorerConfig::Mock { lexicon_dir: None } => Arc::new(MockLexiconScorer::bundled()),
            ScorerConfig::Mock {
                lexicon_dir: Some(dir),
            } => Arc::new(MockLexiconScorer::load_dir(dir).context("loading lexicons")?),
            ScorerConfig::Remote(remote) => {
                Arc::new(RemoteScorer::new(remote.clone()).context("remote scorer")?)
            }
        };
        let filter = FilterPipeline::new(Arc::new(blocklist), scorer, config.filter.policy.clone());
        let seeds = if config.seed.enabled {
            Some(Arc::new(load_seed_index(&config.seed, config)?))
        } else {
            None
        };
        Ok(Self {
            engine: NarrationEngine::new(Segmenter::default(), config.exec),
            backend,
            filter,
            seeds,
            replays,
        })
    }

    pub fn services(&self) -> Services<'_> {
        Services {
            engine: &self.engine,
            backend: self.backend.as_ref(),
            filter: &self.filter,
            seeds: self.seeds.as_deref(),
        }
    }
}

fn load_seed_index(seed: &SeedConfig, config: &ServiceConfig) -> anyhow::Result<SeedIndex> {
    let corpus = match &seed.corpus {
        Some(path) => SeedCorpus::load(path).context("loading seed corpus")?,
        None => SeedCorpus::demo(),
    };
    let embedder = Arc::new(HashedTrigramEmbedder::default());
    if let Some(path) = seed.index_cache.as_ref().filter(|p| p.exists()) {
        let cached = IndexCache::load(path)
            .and_then(|cache| cache.into_index(embedder.clone(), Some(&corpus)));
        match cached {
            Ok(index) if index.mode() == seed.mode && *index.params() == seed.params => {
                return Ok(index)
            }
            Ok(_) => tracing::warn!(path = %path.display(), "index cache built with other settings; rebuilding"),
            Err(SeedError::StaleCache { .. }) => {
                tracing::warn!(path = %path.display(), "index cache is stale; rebuilding")
            }
            Err(e) => return Err(e).context("loading index cache"),
        }
    }
    Ok(SeedIndex::build_with(
        corpus,
        embedder,
        seed.mode,
        seed.params,
        config.exec,
    )?)
}
