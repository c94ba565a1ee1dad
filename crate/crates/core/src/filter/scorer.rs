use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{tokenize, Attribute, ScoreProvider, ToxicityScores};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("scoring unavailable: {0}")]
    Unavailable(String),
    #[error("malformed score: {0}")]
    MalformedScore(String),
}

pub trait ToxicityScorer: Send + Sync {
    fn score(&self, sentence: &str, attributes: &[Attribute])
        -> Result<ToxicityScores, ScoringError>;
}

const HIT_WEIGHT: f64 = 0.5;
const FLAG_WEIGHT: f64 = 0.3;

#[derive(Debug, Default, Clone)]
struct Lexicon {
    hits: HashSet<String>,
    flags: HashSet<String>,
}

/// Offline scorer: per attribute,
/// `min(1, 0.5 * lexicon hits + 0.3 * [any flag word present])`.
#[derive(Debug, Default)]
pub struct MockLexiconScorer {
    lexicons: BTreeMap<Attribute, Lexicon>,
    calls: AtomicUsize,
}

fn parse_words(text: &str, origin: &str) -> Result<HashSet<String>, ScoringError> {
    let words: Vec<String> = serde_json::from_str(text)
        .map_err(|e| ScoringError::MalformedScore(format!("lexicon {origin}: {e}")))?;
    Ok(words.into_iter().map(|w| w.to_lowercase()).collect())
}

macro_rules! bundled {
    ($name:literal) => {
        include_str!(concat!("../../data/lexicons/", $name))
    };
}

impl MockLexiconScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_lexicon(
        mut self,
        attribute: Attribute,
        hits: impl IntoIterator<Item = impl Into<String>>,
        flags: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        self.lexicons.insert(
            attribute,
            Lexicon {
                hits: hits.into_iter().map(|w| w.into().to_lowercase()).collect(),
                flags: flags.into_iter().map(|w| w.into().to_lowercase()).collect(),
            },
        );
        self
    }

    /// Lexicons shipped with the crate (`data/lexicons`).
    pub fn bundled() -> Self {
        let sources: [(Attribute, &str, Option<&str>); 5] = [
            (Attribute::Toxicity, bundled!("toxicity.json"), Some(bundled!("toxicity.flags.json"))),
            (Attribute::SevereToxicity, bundled!("severe_toxicity.json"), None),
            (Attribute::Insult, bundled!("insult.json"), Some(bundled!("insult.flags.json"))),
            (Attribute::IdentityAttack, bundled!("identity_attack.json"), None),
            (
                Attribute::SexuallyExplicit,
                bundled!("sexually_explicit.json"),
                Some(bundled!("sexually_explicit.flags.json")),
            ),
        ];
        let mut scorer = Self::new();
        for (attribute, hits, flags) in sources {
            let lexicon = Lexicon {
                hits: parse_words(hits, attribute.as_str()).expect("bundled lexicon"),
                flags: flags
                    .map(|f| parse_words(f, attribute.as_str()).expect("bundled flags"))
                    .unwrap_or_default(),
            };
            scorer.lexicons.insert(attribute, lexicon);
        }
        scorer
    }

    /// Reads `<attribute>.json` (array of strings) and optional
    /// `<attribute>.flags.json` from `dir`. Missing files mean an empty list.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ScoringError> {
        let dir = dir.as_ref();
        let read = |name: String| -> Result<Option<HashSet<String>>, ScoringError> {
            let path = dir.join(&name);
            if !path.exists() {
                return Ok(None);
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ScoringError::MalformedScore(format!("{}: {e}", path.display())))?;
            parse_words(&text, &name).map(Some)
        };
        let mut scorer = Self::new();
        for attribute in Attribute::ALL {
            let hits = read(format!("{}.json", attribute.as_str()))?.unwrap_or_default();
            let flags = read(format!("{}.flags.json", attribute.as_str()))?.unwrap_or_default();
            scorer.lexicons.insert(attribute, Lexicon { hits, flags });
        }
        Ok(scorer)
    }

    /// Number of times [`ToxicityScorer::score`] has been called.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ToxicityScorer for MockLexiconScorer {
    fn score(
        &self,
        sentence: &str,
        attributes: &[Attribute],
    ) -> Result<ToxicityScores, ScoringError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let tokens: Vec<String> = tokenize(sentence).collect();
        let empty = Lexicon::default();
        let mut wanted: Vec<Attribute> = Attribute::ALL.to_vec();
        wanted.extend_from_slice(attributes);
        let scores = wanted
            .into_iter()
            .map(|attribute| {
                let lexicon = self.lexicons.get(&attribute).unwrap_or(&empty);
                let hits = tokens.iter().filter(|t| lexicon.hits.contains(*t)).count();
                let flagged = tokens.iter().any(|t| lexicon.flags.contains(t));
                let raw = HIT_WEIGHT * hits as f64 + if flagged { FLAG_WEIGHT } else { 0.0 };
                (attribute, raw.min(1.0))
            })
            .collect();
        Ok(ToxicityScores {
            scores,
            provider: ScoreProvider::MockLexicon,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerAdapter {
    /// `{"text", "attributes"}` → `{"scores": {attr: value}}`.
    #[default]
    Generic,
    /// Perspective-style `comments:analyze` request and
    /// `attributeScores.<ATTR>.summaryScore.value` response.
    Perspective,
}

fn default_scorer_timeout_ms() -> u64 {
    5_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteScorerConfig {
    pub url: String,
    #[serde(default)]
    pub adapter: ScorerAdapter,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_scorer_timeout_ms")]
    pub timeout_ms: u64,
}

impl RemoteScorerConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            adapter: ScorerAdapter::default(),
            api_key_env: None,
            timeout_ms: default_scorer_timeout_ms(),
        }
    }
}

pub struct RemoteScorer {
    config: RemoteScorerConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

fn perspective_name(attribute: Attribute) -> String {
    attribute.as_str().to_uppercase()
}

impl RemoteScorer {
    pub fn new(config: RemoteScorerConfig) -> Result<Self, ScoringError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ScoringError::Unavailable(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
        })
    }

    fn request_body(&self, sentence: &str, attributes: &[Attribute]) -> Value {
        match self.config.adapter {
            ScorerAdapter::Generic => json!({
                "text": sentence,
                "attributes": attributes.iter().map(|a| a.as_str()).collect::<Vec<_>>(),
            }),
            ScorerAdapter::Perspective => {
                let requested: serde_json::Map<String, Value> = attributes
                    .iter()
                    .map(|a| (perspective_name(*a), json!({})))
                    .collect();
                json!({
                    "comment": {"text": sentence},
                    "languages": ["en"],
                    "requestedAttributes": requested,
                })
            }
        }
    }

    fn parse_scores(
        &self,
        body: &Value,
        attributes: &[Attribute],
    ) -> Result<BTreeMap<Attribute, f64>, ScoringError> {
        let mut scores = BTreeMap::new();
        for &attribute in attributes {
            let value = match self.config.adapter {
                ScorerAdapter::Generic => body.get("scores").and_then(|s| s.get(attribute.as_str())),
                ScorerAdapter::Perspective => body
                    .get("attributeScores")
                    .and_then(|s| s.get(perspective_name(attribute)))
                    .and_then(|s| s.get("summaryScore"))
                    .and_then(|s| s.get("value")),
            };
            let value = value.and_then(Value::as_f64).ok_or_else(|| {
                ScoringError::MalformedScore(format!("missing attribute {}", attribute.as_str()))
            })?;
            scores.insert(attribute, value);
        }
        Ok(scores)
    }
}

impl ToxicityScorer for RemoteScorer {
    fn score(
        &self,
        sentence: &str,
        attributes: &[Attribute],
    ) -> Result<ToxicityScores, ScoringError> {
        let mut url = self.config.url.clone();
        let mut call_auth = None;
        if let Some(key) = &self.api_key {
            match self.config.adapter {
                ScorerAdapter::Perspective => {
                    url.push(if url.contains('?') { '&' } else { '?' });
                    url.push_str("key=");
                    url.push_str(key);
                }
                ScorerAdapter::Generic => call_auth = Some(format!("Bearer {key}")),
            }
        }
        let mut call = self.agent.post(&url);
        if let Some(auth) = call_auth {
            call = call.header("Authorization", auth);
        }
        crate::net::note_outbound();
        let mut response = call
            .send_json(self.request_body(sentence, attributes))
            .map_err(|e| ScoringError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ScoringError::Unavailable(format!("HTTP {status}")));
        }
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ScoringError::MalformedScore(e.to_string()))?;
        let scores = ToxicityScores {
            scores: self.parse_scores(&body, attributes)?,
            provider: ScoreProvider::Remote,
        };
        scores.validate(attributes)?;
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_sentence_scores_zero() {
        let s = MockLexiconScorer::bundled()
            .score("The sky is blue.", &Attribute::ALL)
            .unwrap();
        assert_eq!(s.scores.len(), 5);
        assert!(s.scores.values().all(|v| *v == 0.0));
        assert_eq!(s.provider, ScoreProvider::MockLexicon);
    }

    #[test]
    fn one_explicit_hit() {
        let s = MockLexiconScorer::bundled()
            .score("They were naked in the kitchen.", &Attribute::ALL)
            .unwrap();
        assert_eq!(s.get(Attribute::SexuallyExplicit), Some(0.5));
        for a in Attribute::ALL {
            if a != Attribute::SexuallyExplicit {
                assert_eq!(s.get(a), Some(0.0), "{a:?}");
            }
        }
    }

    #[test]
    fn formula_saturates_and_flags_add() {
        let scorer = MockLexiconScorer::new().with_lexicon(Attribute::Insult, ["fool"], ["sneered"]);
        let s = scorer.score("Fool, fool, fool!", &[Attribute::Insult]).unwrap();
        assert_eq!(s.get(Attribute::Insult), Some(1.0));
        let s = scorer.score("She sneered at the fool.", &[Attribute::Insult]).unwrap();
        assert!((s.get(Attribute::Insult).unwrap() - 0.8).abs() < 1e-12);
        let s = scorer.score("She sneered, sneered.", &[Attribute::Insult]).unwrap();
        assert!((s.get(Attribute::Insult).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(scorer.calls(), 3);
    }

    #[test]
    fn load_dir_matches_bundled() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/data/lexicons");
        let loaded = MockLexiconScorer::load_dir(dir).unwrap();
        let bundled = MockLexiconScorer::bundled();
        for sentence in ["You stupid idiot.", "They undressed.", "A calm night."] {
            assert_eq!(
                loaded.score(sentence, &Attribute::ALL).unwrap(),
                bundled.score(sentence, &Attribute::ALL).unwrap()
            );
        }
    }
}
