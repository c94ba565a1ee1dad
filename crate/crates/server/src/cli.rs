//! `narrator` subcommands.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use narrator_core::backend::{
    FixtureStore, ModelBackend, RecordingBackend, RemoteBackendConfig,
};
use narrator_core::clock::SystemClock;
use narrator_core::engine::LineSource;
use narrator_core::filter::{Blocklist, FilterPipeline, FilterPolicy, MockLexiconScorer};
use narrator_core::seed::{
    HashedTrigramEmbedder, IndexCache, IndexMode, SeedCorpus, SeedIndex,
};
use narrator_core::session::{
    read_transcript, replay, OperatorAction, Services, Session, SessionConfig, SessionError,
    TranscriptWriter,
};
use serde_json::json;

use crate::config::{BackendConfig, ServiceConfig};
use crate::runtime::Runtime;

#[derive(Debug, Parser)]
#[command(name = "narrator", version, about = "Human-in-the-loop narration service")]
pub struct Cli {
    /// Emit JSON lines only.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rebuild a session from its transcript.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
        /// Regenerate every event against the fixtures and compare.
        #[arg(long)]
        verify: bool,
        /// Filter and seed settings. Defaults to the bundled ones.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a seed index cache from a corpus file.
    SeedIndex {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
    },
    /// Nearest seed sentences for a suggestion.
    SeedQuery {
        /// Index cache from `seed-index`. Defaults to the demo corpus.
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        suggestion: String,
        #[arg(short = 'k', default_value_t = 5)]
        k: usize,
    },
    /// Filter stdin line by line; one JSON verdict per line.
    FilterCheck {
        #[arg(long)]
        blocklist: Option<PathBuf>,
        /// TOML file with a filter policy.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        lexicon_dir: Option<PathBuf>,
    },
    /// Run a session from stdin and record its transcript and fixtures.
    ///
    /// Each line is an action as JSON; any other line types context.
    Record {
        /// Service config supplying backend, filter and session defaults.
        #[arg(long, conflicts_with_all = ["backend", "base_url", "model", "api_key_env"])]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        api_key_env: Option<String>,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Exact,
    Approx,
}

impl From<ModeArg> for IndexMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => IndexMode::Exact,
            ModeArg::Approx => IndexMode::Approximate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Remote,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Operational(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Operational(e)
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let json = cli.json;
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            report(json, "usage", &message);
            ExitCode::from(2)
        }
        Err(Failure::Operational(e)) => {
            report(json, "error", &format!("{e:#}"));
            ExitCode::from(1)
        }
    }
}

fn report(json: bool, kind: &str, message: &str) {
    if json {
        println!("{}", json!({ kind: message }));
    } else {
        eprintln!("narrator: {message}");
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let json = cli.json;
    match cli.command {
        Command::Serve { config } => serve(&config),
        Command::Replay {
            transcript,
            fixtures,
            verify,
            config,
        } => replay_cmd(json, &transcript, &fixtures, verify, config.as_deref()),
        Command::SeedIndex { corpus, out, mode } => seed_index(json, &corpus, &out, mode.into()),
        Command::SeedQuery {
            index,
            suggestion,
            k,
        } => seed_query(index.as_deref(), &suggestion, k),
        Command::FilterCheck {
            blocklist,
            policy,
            lexicon_dir,
        } => filter_check(blocklist.as_deref(), policy.as_deref(), lexicon_dir.as_deref()),
        Command::Record {
            config,
            backend,
            base_url,
            model,
            api_key_env,
            transcript,
            fixtures,
        } => {
            let config = match config {
                Some(path) => ServiceConfig::load(&path).map_err(anyhow::Error::from)?,
                None => ServiceConfig {
                    backend: backend_from_flags(backend, base_url, model, api_key_env)?,
                    ..Default::default()
                },
            };
            record(json, &config, &transcript, &fixtures)
        }
    }
}

fn backend_from_flags(
    backend: Option<BackendArg>,
    base_url: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
) -> Result<BackendConfig, Failure> {
    let remote_flags = base_url.is_some() || model.is_some() || api_key_env.is_some();
    match backend.unwrap_or(BackendArg::Mock) {
        BackendArg::Mock if remote_flags => Err(Failure::Usage(
            "--base-url, --model and --api-key-env need --backend remote".into(),
        )),
        BackendArg::Mock => Ok(BackendConfig::Mock),
        BackendArg::Remote => {
            let Some(base_url) = base_url else {
                return Err(Failure::Usage("--backend remote needs --base-url".into()));
            };
            let mut remote = RemoteBackendConfig::new(base_url);
            remote.model = model.unwrap_or_default();
            remote.api_key_env = api_key_env;
            Ok(BackendConfig::Remote(remote))
        }
    }
}

fn serve(path: &Path) -> Result<(), Failure> {
    let config = ServiceConfig::load(path).map_err(anyhow::Error::from)?;
    init_tracing(&config.log_level);
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(crate::app::serve(&config))?;
    Ok(())
}

pub fn init_tracing(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn replay_cmd(
    json: bool,
    transcript: &Path,
    fixtures: &Path,
    verify: bool,
    config: Option<&Path>,
) -> Result<(), Failure> {
    let mut config = match config {
        Some(path) => ServiceConfig::load(path).map_err(anyhow::Error::from)?,
        None => ServiceConfig::default(),
    };
    if !fixtures.exists() {
        return Err(anyhow::anyhow!("fixture file {} does not exist", fixtures.display()).into());
    }
    config.backend = BackendConfig::Replay {
        fixtures: fixtures.to_path_buf(),
    };
    let events = read_transcript(transcript)
        .with_context(|| format!("reading {}", transcript.display()))?;
    let session = if verify {
        let runtime = Runtime::from_config(&config)?;
        replay(&events, &runtime.services()).context("replay failed")?
    } else {
        Session::from_events(&events).context("folding transcript")?
    };
    let stats = session.stats();
    let published: Vec<&str> = session
        .context()
        .lines()
        .iter()
        .filter(|l| l.source == LineSource::AiPublished)
        .map(|l| l.text.as_str())
        .collect();
    let summary = json!({
        "session_id": session.session_id(),
        "state": session.state(),
        "events": events.len(),
        "verified": verify,
        "published": published.len(),
        "generated_sentences": stats.generated_sentence_count,
        "generation_requests": stats.generation_request_count,
        "elapsed_ms": stats.elapsed_ms,
    });
    let mut out = std::io::stdout().lock();
    for line in &published {
        if json {
            writeln!(out, "{}", json!({ "published": line })).ok();
        } else {
            writeln!(out, "{line}").ok();
        }
    }
    if json {
        writeln!(out, "{}", json!({ "summary": summary })).ok();
    } else {
        eprintln!(
            "{} events, {} published, {} generated sentences{}",
            events.len(),
            published.len(),
            stats.generated_sentence_count,
            if verify { ", verified" } else { "" }
        );
    }
    Ok(())
}

fn seed_index(json: bool, corpus: &Path, out: &Path, mode: IndexMode) -> Result<(), Failure> {
    let corpus = SeedCorpus::load(corpus).context("loading corpus")?;
    let index = SeedIndex::build(
        corpus,
        Arc::new(HashedTrigramEmbedder::default()),
        mode,
        Default::default(),
    )
    .context("building index")?;
    IndexCache::from_index(&index)
        .save(out)
        .context("writing index cache")?;
    if json {
        println!("{}", json!({ "entries": index.len(), "mode": mode, "out": out }));
    } else {
        eprintln!("indexed {} entries into {}", index.len(), out.display());
    }
    Ok(())
}

fn seed_query(index: Option<&Path>, suggestion: &str, k: usize) -> Result<(), Failure> {
    if k == 0 {
        return Err(Failure::Usage("-k must be at least 1".into()));
    }
    let embedder = Arc::new(HashedTrigramEmbedder::default());
    let index = match index {
        Some(path) => IndexCache::load(path)
            .and_then(|cache| cache.into_index(embedder, None))
            .context("loading index cache")?,
        None => SeedIndex::build(SeedCorpus::demo(), embedder, IndexMode::Exact, Default::default())
            .context("building demo index")?,
    };
    let mut out = std::io::stdout().lock();
    for m in index.query(suggestion, k) {
        writeln!(out, "{}", serde_json::to_string(&m).expect("match serializes")).ok();
    }
    Ok(())
}

fn filter_check(
    blocklist: Option<&Path>,
    policy: Option<&Path>,
    lexicon_dir: Option<&Path>,
) -> Result<(), Failure> {
    let blocklist = match blocklist {
        Some(path) => Blocklist::load(path).context("loading blocklist")?,
        None => Blocklist::bundled(),
    };
    let policy = match policy {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let policy: FilterPolicy = toml::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            policy.validate().map_err(anyhow::Error::msg)?;
            policy
        }
        None => FilterPolicy::default(),
    };
    let scorer = match lexicon_dir {
        Some(dir) => MockLexiconScorer::load_dir(dir).context("loading lexicons")?,
        None => MockLexiconScorer::bundled(),
    };
    let pipeline = FilterPipeline::new(Arc::new(blocklist), Arc::new(scorer), policy);
    let mut out = std::io::stdout().lock();
    for line in std::io::stdin().lock().lines() {
        let line = line.context("reading stdin")?;
        let verdict = pipeline.check(&line);
        writeln!(out, "{}", json!({ "sentence": line, "verdict": verdict })).ok();
    }
    Ok(())
}

fn record(
    json: bool,
    config: &ServiceConfig,
    transcript: &Path,
    fixtures: &Path,
) -> Result<(), Failure> {
    if transcript.exists() {
        bail_usage(format!("{} already exists", transcript.display()))?;
    }
    let runtime = Runtime::from_config(config)?;
    if runtime.replays {
        bail_usage("record needs a live backend, not replay".to_string())?;
    }
    let store = if fixtures.exists() {
        FixtureStore::load(fixtures).context("loading existing fixtures")?
    } else {
        FixtureStore::default()
    };
    let clock = Arc::new(SystemClock);
    let backend: Arc<dyn ModelBackend> = runtime.backend.clone();
    let recorder = RecordingBackend::new(backend, store, clock.clone());
    let services = Services {
        engine: &runtime.engine,
        backend: &recorder,
        filter: &runtime.filter,
        seeds: runtime.seeds.as_deref(),
    };
    let session_config = SessionConfig {
        generation: config.generation.clone(),
        policy: config.filter.policy.clone(),
    };
    let mut session = Session::create(session_config, clock.as_ref()).context("creating session")?;
    let mut writer = TranscriptWriter::open(transcript).context("opening transcript")?;
    writer.append(session.events(), true).context("writing transcript")?;

    let mut out = std::io::stdout().lock();
    for line in std::io::stdin().lock().lines() {
        let line = line.context("reading stdin")?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let action = if trimmed.starts_with('{') {
            match serde_json::from_str::<OperatorAction>(trimmed) {
                Ok(action) => action,
                Err(e) => {
                    report(json, "error", &format!("bad action: {e}"));
                    continue;
                }
            }
        } else {
            OperatorAction::type_context(trimmed)
        };
        match session.apply(action, clock.as_ref(), &services) {
            Ok(events) => {
                writer.append(&events, true).context("writing transcript")?;
                for event in &events {
                    if json {
                        writeln!(out, "{}", event.to_json_line()).ok();
                    } else {
                        writeln!(out, "#{} {}", event.sequence, event.event.kind()).ok();
                    }
                }
            }
            Err(e @ SessionError::InvalidLog(_)) => return Err(anyhow::Error::from(e).into()),
            Err(e) => report(json, "error", &e.to_string()),
        }
    }
    let mut store = recorder.into_store();
    if store.metadata.backend.is_none() {
        store.metadata.backend = Some(runtime.backend.id().to_string());
    }
    store.save(fixtures).context("writing fixtures")?;
    if !json {
        eprintln!(
            "recorded {} events and {} fixtures",
            session.last_sequence(),
            store.len()
        );
    }
    Ok(())
}

fn bail_usage(message: String) -> Result<(), Failure> {
    Err(Failure::Usage(message))
}
