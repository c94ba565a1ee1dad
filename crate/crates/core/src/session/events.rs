use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{CandidateSet, GenerationParams};
use crate::filter::{FilterPolicy, FilterVerdict};
use crate::seed::SeedMatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SessionConfig {
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub policy: FilterPolicy,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.generation.validate()?;
        self.policy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionItem {
    pub set_id: String,
    pub index: usize,
}

impl SelectionItem {
    pub fn new(set_id: impl Into<String>, index: usize) -> Self {
        Self {
            set_id: set_id.into(),
            index,
        }
    }
}

/// Everything the operator can do during a show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum OperatorAction {
    /// Narration typed by the operator; split into sentences before it
    /// enters the context.
    TypeContext { text: String },
    RequestGeneration,
    /// Publishes the chosen sentences in the given order. `edits` is keyed by
    /// position in `items`.
    SelectAndPublish {
        items: Vec<SelectionItem>,
        #[serde(
            default,
            skip_serializing_if = "BTreeMap::is_empty",
            deserialize_with = "edits_from_json"
        )]
        edits: BTreeMap<usize, String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        override_block: bool,
    },
    /// Discards the pending candidate sets.
    SkipGeneration,
    SeedQuery { suggestion: String, k: usize },
    SeedAccept { entry_id: usize },
    /// Stage direction. Logged, never shown to the model.
    SceneNote { text: String },
    EndSession,
}

/// JSON object keys are strings; tagged-enum buffering will not coerce them
/// to integers on its own.
fn edits_from_json<'de, D>(deserializer: D) -> Result<BTreeMap<usize, String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw = BTreeMap::<String, String>::deserialize(deserializer)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<usize>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("edit key {k:?} is not an item position")))
        })
        .collect()
}

impl OperatorAction {
    pub fn type_context(text: impl Into<String>) -> Self {
        Self::TypeContext { text: text.into() }
    }

    pub fn publish(items: Vec<SelectionItem>) -> Self {
        Self::SelectAndPublish {
            items,
            edits: BTreeMap::new(),
            override_block: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::TypeContext { .. } => "TypeContext",
            Self::RequestGeneration => "RequestGeneration",
            Self::SelectAndPublish { .. } => "SelectAndPublish",
            Self::SkipGeneration => "SkipGeneration",
            Self::SeedQuery { .. } => "SeedQuery",
            Self::SeedAccept { .. } => "SeedAccept",
            Self::SceneNote { .. } => "SceneNote",
            Self::EndSession => "EndSession",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedLine {
    pub set_id: String,
    pub index: usize,
    pub text: String,
    pub edited: bool,
    pub overridden: bool,
    pub verdict: FilterVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    Operator,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EventBody {
    SessionCreated {
        session_id: String,
        config: SessionConfig,
    },
    Action {
        action: OperatorAction,
    },
    ContextAppended {
        lines: Vec<String>,
    },
    GenerationCompleted {
        generation: u64,
        sets: Vec<CandidateSet>,
    },
    PublicationCompleted {
        lines: Vec<PublishedLine>,
    },
    SeedMatches {
        suggestion: String,
        matches: Vec<SeedMatch>,
    },
    SeedApplied {
        entry_id: usize,
        sentence: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SessionCreated { .. } => "SessionCreated",
            Self::Action { .. } => "Action",
            Self::ContextAppended { .. } => "ContextAppended",
            Self::GenerationCompleted { .. } => "GenerationCompleted",
            Self::PublicationCompleted { .. } => "PublicationCompleted",
            Self::SeedMatches { .. } => "SeedMatches",
            Self::SeedApplied { .. } => "SeedApplied",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub sequence: u64,
    pub timestamp: String,
    pub actor: Actor,
    pub event: EventBody,
}

impl SessionEvent {
    pub fn operator_action(&self) -> Option<&OperatorAction> {
        match (&self.actor, &self.event) {
            (Actor::Operator, EventBody::Action { action }) => Some(action),
            _ => None,
        }
    }

    /// Canonical single-line JSON.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("session events serialize")
    }
}
