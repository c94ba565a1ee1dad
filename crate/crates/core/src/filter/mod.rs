//! Two-stage safety filter.
//!
//! Stage one is an exact whole-token blocklist scan. Only sentences that clear
//! it are sent to the toxicity scorer; a sentence is blocked if any attribute
//! scores at or above its threshold. Scorer outages are resolved by
//! [`ScoringErrorPolicy`].

mod blocklist;
mod scorer;

pub use blocklist::{tokenize, Blocklist, BlocklistError};
pub use scorer::{
    MockLexiconScorer, RemoteScorer, RemoteScorerConfig, ScorerAdapter, ScoringError,
    ToxicityScorer,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Toxicity,
    SevereToxicity,
    Insult,
    IdentityAttack,
    SexuallyExplicit,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Toxicity,
        Attribute::SevereToxicity,
        Attribute::Insult,
        Attribute::IdentityAttack,
        Attribute::SexuallyExplicit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Toxicity => "toxicity",
            Attribute::SevereToxicity => "severe_toxicity",
            Attribute::Insult => "insult",
            Attribute::IdentityAttack => "identity_attack",
            Attribute::SexuallyExplicit => "sexually_explicit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreProvider {
    Remote,
    MockLexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScores {
    pub scores: BTreeMap<Attribute, f64>,
    pub provider: ScoreProvider,
}

impl ToxicityScores {
    pub fn get(&self, attribute: Attribute) -> Option<f64> {
        self.scores.get(&attribute).copied()
    }

    /// Every requested attribute present and every value finite in [0, 1].
    pub fn validate(&self, required: &[Attribute]) -> Result<(), ScoringError> {
        for attribute in required {
            if !self.scores.contains_key(attribute) {
                return Err(ScoringError::MalformedScore(format!(
                    "missing attribute {}",
                    attribute.as_str()
                )));
            }
        }
        for (attribute, value) in &self.scores {
            if !(0.0..=1.0).contains(value) {
                return Err(ScoringError::MalformedScore(format!(
                    "{} = {value} outside [0, 1]",
                    attribute.as_str()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScoringErrorPolicy {
    #[default]
    FailClosed,
    FailOpen,
}

pub const DEFAULT_THRESHOLD: f64 = 0.8;

fn default_thresholds() -> BTreeMap<Attribute, f64> {
    Attribute::ALL
        .into_iter()
        .map(|a| (a, DEFAULT_THRESHOLD))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    #[serde(default = "default_thresholds")]
    pub thresholds: BTreeMap<Attribute, f64>,
    #[serde(default)]
    pub on_scoring_error: ScoringErrorPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocklist_path: Option<String>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            on_scoring_error: ScoringErrorPolicy::default(),
            blocklist_path: None,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.thresholds.is_empty() {
            return Err("at least one attribute threshold is required".into());
        }
        for (attribute, t) in &self.thresholds {
            if !(0.0..=1.0).contains(t) {
                return Err(format!("threshold {} = {t} outside [0, 1]", attribute.as_str()));
            }
        }
        Ok(())
    }

    pub fn attributes(&self) -> Vec<Attribute> {
        self.thresholds.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Pass,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterStage {
    None,
    Blocklist,
    Toxicity,
    ScoringUnavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub decision: Decision,
    pub stage: FilterStage,
    pub matched_tokens: Vec<String>,
    pub scores: Option<ToxicityScores>,
    pub threshold_used: BTreeMap<Attribute, f64>,
}

impl FilterVerdict {
    pub fn is_blocked(&self) -> bool {
        self.decision == Decision::Blocked
    }
}

/// Verdict from already-gathered evidence. `scores` is `None` when the scorer
/// was not consulted (blocklist hit).
pub fn decide(
    matched_tokens: Vec<String>,
    scores: Option<Result<ToxicityScores, ScoringError>>,
    policy: &FilterPolicy,
) -> FilterVerdict {
    let threshold_used = policy.thresholds.clone();
    if !matched_tokens.is_empty() {
        return FilterVerdict {
            decision: Decision::Blocked,
            stage: FilterStage::Blocklist,
            matched_tokens,
            scores: None,
            threshold_used,
        };
    }
    match scores {
        None => FilterVerdict {
            decision: Decision::Pass,
            stage: FilterStage::None,
            matched_tokens,
            scores: None,
            threshold_used,
        },
        Some(Ok(scores)) => {
            let over = policy
                .thresholds
                .iter()
                .any(|(attribute, t)| scores.get(*attribute).is_some_and(|s| s >= *t));
            FilterVerdict {
                decision: if over { Decision::Blocked } else { Decision::Pass },
                stage: if over { FilterStage::Toxicity } else { FilterStage::None },
                matched_tokens,
                scores: Some(scores),
                threshold_used,
            }
        }
        Some(Err(_)) => FilterVerdict {
            decision: match policy.on_scoring_error {
                ScoringErrorPolicy::FailClosed => Decision::Blocked,
                ScoringErrorPolicy::FailOpen => Decision::Pass,
            },
            stage: FilterStage::ScoringUnavailable,
            matched_tokens,
            scores: None,
            threshold_used,
        },
    }
}

/// Blocklist first, scorer only if the blocklist is clean.
pub fn filter_sentence(
    sentence: &str,
    blocklist: &Blocklist,
    scorer: &dyn ToxicityScorer,
    policy: &FilterPolicy,
) -> FilterVerdict {
    let matched = blocklist.check(sentence);
    if !matched.is_empty() {
        return decide(matched, None, policy);
    }
    let attributes = policy.attributes();
    let scores = scorer
        .score(sentence, &attributes)
        .and_then(|s| s.validate(&attributes).map(|_| s));
    if let Err(e) = &scores {
        tracing::warn!(error = %e, "toxicity scoring failed");
    }
    decide(matched, Some(scores), policy)
}

/// Blocklist + scorer + policy bundled for repeated use.
#[derive(Clone)]
pub struct FilterPipeline {
    pub blocklist: Arc<Blocklist>,
    pub scorer: Arc<dyn ToxicityScorer>,
    pub policy: FilterPolicy,
}

impl std::fmt::Debug for FilterPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilterPipeline")
            .field("blocklist", &self.blocklist.len())
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

impl FilterPipeline {
    pub fn new(
        blocklist: Arc<Blocklist>,
        scorer: Arc<dyn ToxicityScorer>,
        policy: FilterPolicy,
    ) -> Self {
        Self {
            blocklist,
            scorer,
            policy,
        }
    }

    /// Bundled blocklist and lexicon scorer with the default policy.
    pub fn bundled() -> Self {
        Self::new(
            Arc::new(Blocklist::bundled()),
            Arc::new(MockLexiconScorer::bundled()),
            FilterPolicy::default(),
        )
    }

    pub fn with_policy(&self, policy: FilterPolicy) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }

    pub fn check(&self, sentence: &str) -> FilterVerdict {
        filter_sentence(sentence, &self.blocklist, self.scorer.as_ref(), &self.policy)
    }

    pub fn check_all(&self, sentences: &[String], exec: Exec) -> Vec<FilterVerdict> {
        exec.map(sentences, |s| self.check(s))
    }
}
