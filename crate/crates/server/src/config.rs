//! Service configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every referenced file must exist when the config is loaded.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use narrator_core::backend::RemoteBackendConfig;
use narrator_core::engine::GenerationParams;
use narrator_core::exec::Exec;
use narrator_core::filter::{FilterPolicy, RemoteScorerConfig};
use narrator_core::seed::{ApproxParams, IndexMode};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{what} {path} does not exist")]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Invalid(String),
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_log_level() -> String {
    "info".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Static bearer token. Without one (and without `auth_token_env`) the
    /// API is open.
    #[serde(default)]
    pub auth_token: Option<String>,
    /// Environment variable to read the bearer token from.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_log_level")]
    pub log_level: String,
    /// Where session transcripts are written and restored from. Unset keeps
    /// sessions in memory only.
    #[serde(default)]
    pub transcripts_dir: Option<PathBuf>,
    #[serde(default)]
    pub exec: Exec,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub seed: SeedConfig,
    /// Defaults for new sessions; a create request may override them.
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub stage: StageConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    #[default]
    Mock,
    Remote(RemoteBackendConfig),
    Replay {
        fixtures: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// One token per line. Unset uses the bundled list.
    #[serde(default)]
    pub blocklist: Option<PathBuf>,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub policy: FilterPolicy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    /// Word-list scorer. `lexicon_dir` replaces the bundled lists.
    Mock {
        #[serde(default)]
        lexicon_dir: Option<PathBuf>,
    },
    Remote(RemoteScorerConfig),
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self::Mock { lexicon_dir: None }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// One first line per row. Unset uses the bundled demo corpus.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Index cache written by `narrator seed-index`. Used when it matches the
    /// corpus, otherwise the index is rebuilt.
    #[serde(default)]
    pub index_cache: Option<PathBuf>,
    #[serde(default)]
    pub mode: IndexMode,
    #[serde(default)]
    pub params: ApproxParams,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            corpus: None,
            index_cache: None,
            mode: IndexMode::default(),
            params: ApproxParams::default(),
        }
    }
}

fn default_dwell() -> u64 {
    4_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    /// How long the avatar stays Speaking after a publication.
    #[serde(default = "default_dwell")]
    pub speaking_dwell_ms: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            speaking_dwell_ms: default_dwell(),
        }
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            ConfigError::Invalid(message) => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.message().to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.transcripts_dir {
            fix(p);
        }
        if let BackendConfig::Replay { fixtures } = &mut self.backend {
            fix(fixtures);
        }
        if let Some(p) = &mut self.filter.blocklist {
            fix(p);
        }
        if let ScorerConfig::Mock {
            lexicon_dir: Some(dir),
        } = &mut self.filter.scorer
        {
            fix(dir);
        }
        if let Some(p) = &mut self.seed.corpus {
            fix(p);
        }
        if let Some(p) = &mut self.seed.index_cache {
            fix(p);
        }
    }

    /// Checks values and that referenced files exist. The index cache may be
    /// missing; it is only a shortcut.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let must_exist = |what: &'static str, path: &Path| {
            if path.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingFile {
                    what,
                    path: path.to_path_buf(),
                })
            }
        };
        if let BackendConfig::Replay { fixtures } = &self.backend {
            must_exist("fixture file", fixtures)?;
        }
        if let Some(p) = &self.filter.blocklist {
            must_exist("blocklist", p)?;
        }
        if let ScorerConfig::Mock {
            lexicon_dir: Some(dir),
        } = &self.filter.scorer
        {
            must_exist("lexicon directory", dir)?;
        }
        if let Some(p) = &self.seed.corpus {
            must_exist("seed corpus", p)?;
        }
        self.filter.policy.validate().map_err(ConfigError::Invalid)?;
        self.generation.validate().map_err(ConfigError::Invalid)?;
        if let (Some(_), Some(_)) = (&self.auth_token, &self.auth_token_env) {
            return Err(ConfigError::Invalid(
                "set auth_token or auth_token_env, not both".into(),
            ));
        }
        Ok(())
    }

    /// The bearer token, if one is configured.
    pub fn resolve_auth_token(&self) -> Result<Option<String>, ConfigError> {
        match (&self.auth_token, &self.auth_token_env) {
            (Some(token), _) => Ok(Some(token.clone())),
            (None, Some(var)) => std::env::var(var).map(Some).map_err(|_| {
                ConfigError::Invalid(format!("auth token variable {var} is not set"))
            }),
            (None, None) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = ServiceConfig::parse("").unwrap();
        assert_eq!(c.listen, default_listen());
        assert!(matches!(c.backend, BackendConfig::Mock));
        assert!(matches!(c.filter.scorer, ScorerConfig::Mock { lexicon_dir: None }));
        assert_eq!(c.generation.runs_k, 3);
        assert_eq!(c.generation.budget_chars, 100);
        assert!(c.seed.enabled);
        assert_eq!(c.stage.speaking_dwell_ms, 4000);
    }

    #[test]
    fn full_config_parses() {
        let c = ServiceConfig::parse(
            r#"
            listen = "0.0.0.0:9000"
            auth_token = "backstage"
            log_level = "debug"
            transcripts_dir = "shows"
            exec = "sequential"

            [backend]
            kind = "remote"
            base_url = "https://api.example.com/v1"
            model = "davinci"
            api_key_env = "COMPLETION_API_KEY"
            temperature = 0.9

            [filter]
            blocklist = "blocklist.txt"
            [filter.scorer]
            kind = "remote"
            url = "https://scores.example.com/analyze"
            adapter = "perspective"
            api_key_env = "SCORER_KEY"
            [filter.policy]
            on_scoring_error = "FailOpen"
            [filter.policy.thresholds]
            toxicity = 0.7

            [seed]
            mode = "approximate"
            [seed.params]
            probe_radius = 1

            [generation]
            runs_k = 5

            [stage]
            speaking_dwell_ms = 2500
            "#,
        )
        .unwrap();
        assert_eq!(c.exec, Exec::Sequential);
        let BackendConfig::Remote(remote) = &c.backend else {
            panic!("remote backend expected");
        };
        assert_eq!(remote.model, "davinci");
        assert_eq!(remote.timeout_ms, 10_000);
        assert_eq!(c.filter.policy.thresholds.len(), 1);
        assert_eq!(c.seed.params.probe_radius, 1);
        assert_eq!(c.seed.params.num_hyperplane_tables, 16);
        assert_eq!(c.generation.runs_k, 5);
        assert_eq!(c.generation.budget_chars, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ServiceConfig::parse("listne = \"x\"").is_err());
    }

    #[test]
    fn missing_files_fail_fast() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("narrator.toml");
        std::fs::write(&path, "[filter]\nblocklist = \"nope.txt\"\n").unwrap();
        match ServiceConfig::load(&path) {
            Err(ConfigError::MissingFile { what, path }) => {
                assert_eq!(what, "blocklist");
                assert!(path.ends_with("nope.txt"));
            }
            other => panic!("expected missing file, got {other:?}"),
        }
        std::fs::write(dir.path().join("nope.txt"), "heck\n").unwrap();
        let c = ServiceConfig::load(&path).unwrap();
        assert_eq!(c.filter.blocklist.unwrap(), dir.path().join("nope.txt"));
    }

    #[test]
    fn bad_policy_is_invalid() {
        let c = ServiceConfig::parse("[filter.policy.thresholds]\ntoxicity = 1.5\n").unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
    }
}
