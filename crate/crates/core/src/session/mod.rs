//! Show sessions as an append-only event log.
//!
//! Every accepted operator action becomes an `Action` event followed by any
//! system events it caused. Session state is a fold over that log, so the
//! log alone is enough to restore or replay a show.

mod events;
mod replay;
mod transcript;

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::clock::{format_timestamp, parse_timestamp, Clock};
use crate::engine::{CandidateSet, GenerationError, LineSource, NarrationEngine, SceneContext};
use crate::filter::FilterPipeline;
use crate::seed::SeedIndex;

pub use events::{
    Actor, EventBody, OperatorAction, PublishedLine, SelectionItem, SessionConfig, SessionEvent,
};
pub use replay::{replay, ReplayError};
pub use transcript::{parse_transcript, read_transcript, to_jsonl, TranscriptError, TranscriptWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SessionState {
    #[default]
    Created,
    Seeded,
    Running,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionStats {
    pub generated_sentence_count: u64,
    pub published_sentence_count: u64,
    pub generation_request_count: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("item {item} is blocked by the filter and override_block is not set")]
    BlockedWithoutOverride { item: usize },
    #[error("session has ended")]
    SessionEnded,
    #[error("{action} is not allowed while the session is {state:?}")]
    InvalidTransition {
        state: SessionState,
        action: &'static str,
    },
    #[error("no seed corpus is loaded")]
    SeedUnavailable,
    #[error("unknown seed entry {0}")]
    UnknownSeedEntry(usize),
    #[error("every completion run failed: {0}")]
    BackendUnavailable(String),
    #[error("invalid event log: {0}")]
    InvalidLog(String),
}

/// What an action may call out to.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub engine: &'a NarrationEngine,
    pub backend: &'a dyn ModelBackend,
    pub filter: &'a FilterPipeline,
    pub seeds: Option<&'a SeedIndex>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Session {
    session_id: String,
    state: SessionState,
    config: SessionConfig,
    context: SceneContext,
    pending_sets: Vec<CandidateSet>,
    stats: SessionStats,
    #[serde(skip)]
    events: Vec<SessionEvent>,
    #[serde(skip)]
    created_at: Option<DateTime<Utc>>,
}

impl Session {
    pub fn create(config: SessionConfig, clock: &dyn Clock) -> Result<Self, SessionError> {
        let id = uuid::Uuid::new_v4().to_string();
        Self::create_with_id(id, config, &format_timestamp(clock.now()))
    }

    pub fn create_with_id(
        session_id: impl Into<String>,
        config: SessionConfig,
        timestamp: &str,
    ) -> Result<Self, SessionError> {
        config.validate().map_err(SessionError::InvalidConfig)?;
        let mut session = Self::default();
        session.commit(
            timestamp,
            vec![(
                Actor::System,
                EventBody::SessionCreated {
                    session_id: session_id.into(),
                    config,
                },
            )],
        )?;
        Ok(session)
    }

    /// Rebuilds a session from its log, pending candidate sets included.
    pub fn from_events(events: &[SessionEvent]) -> Result<Self, SessionError> {
        let mut session = Self::default();
        for (i, event) in events.iter().enumerate() {
            if event.sequence != i as u64 + 1 {
                return Err(SessionError::InvalidLog(format!(
                    "event {} has sequence {}",
                    i + 1,
                    event.sequence
                )));
            }
            if i == 0 && !matches!(event.event, EventBody::SessionCreated { .. }) {
                return Err(SessionError::InvalidLog("log must start with SessionCreated".into()));
            }
            session.fold(event)?;
            session.events.push(event.clone());
        }
        Ok(session)
    }

    /// Like [`from_events`](Self::from_events) but without the pending
    /// candidate sets: a restored session waits for a fresh generation.
    pub fn restore(events: &[SessionEvent]) -> Result<Self, SessionError> {
        let mut session = Self::from_events(events)?;
        session.pending_sets.clear();
        Ok(session)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn context(&self) -> &SceneContext {
        &self.context
    }

    pub fn pending_sets(&self) -> &[CandidateSet] {
        &self.pending_sets
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn last_sequence(&self) -> u64 {
        self.events.len() as u64
    }

    /// Applies one operator action, stamped with the clock's current time.
    /// On error the session is unchanged.
    pub fn apply(
        &mut self,
        action: OperatorAction,
        clock: &dyn Clock,
        services: &Services<'_>,
    ) -> Result<Vec<SessionEvent>, SessionError> {
        self.apply_at(action, &format_timestamp(clock.now()), services)
    }

    pub fn apply_at(
        &mut self,
        action: OperatorAction,
        timestamp: &str,
        services: &Services<'_>,
    ) -> Result<Vec<SessionEvent>, SessionError> {
        if parse_timestamp(timestamp).is_none() {
            return Err(SessionError::InvalidAction(format!("bad timestamp {timestamp:?}")));
        }
        if self.state == SessionState::Ended {
            return match action {
                OperatorAction::EndSession => Ok(Vec::new()),
                _ => Err(SessionError::SessionEnded),
            };
        }
        let planned = self.plan(action, services)?;
        let first = self.events.len();
        self.commit(timestamp, planned)?;
        Ok(self.events[first..].to_vec())
    }

    fn plan(
        &self,
        action: OperatorAction,
        services: &Services<'_>,
    ) -> Result<Vec<(Actor, EventBody)>, SessionError> {
        let mut system = Vec::new();
        match &action {
            OperatorAction::TypeContext { text } => {
                let lines = services.engine.segmenter.segment(text);
                if lines.is_empty() {
                    return Err(SessionError::InvalidAction("context text is empty".into()));
                }
                system.push(EventBody::ContextAppended { lines });
            }
            OperatorAction::RequestGeneration => {
                let generation = self.stats.generation_request_count + 1;
                let filter = services.filter.with_policy(self.config.policy.clone());
                let sets = match services.engine.generate(
                    &self.context,
                    &self.config.generation,
                    services.backend,
                    &filter,
                    generation,
                ) {
                    Ok(sets) => sets,
                    Err(GenerationError::PartialBackendFailure { sets, .. }) => sets,
                    Err(GenerationError::InvalidParams(reason)) => {
                        return Err(SessionError::InvalidConfig(reason))
                    }
                    Err(GenerationError::BackendUnavailable { failures }) => {
                        let detail = failures
                            .iter()
                            .map(|(run, e)| format!("run {run}: {e}"))
                            .collect::<Vec<_>>()
                            .join("; ");
                        return Err(SessionError::BackendUnavailable(detail));
                    }
                };
                system.push(EventBody::GenerationCompleted { generation, sets });
            }
            OperatorAction::SelectAndPublish {
                items,
                edits,
                override_block,
            } => {
                let lines = self.plan_publication(items, edits, *override_block, services)?;
                system.push(EventBody::PublicationCompleted { lines });
            }
            OperatorAction::SkipGeneration | OperatorAction::EndSession => {}
            OperatorAction::SeedQuery { suggestion, k } => {
                let seeds = services.seeds.ok_or(SessionError::SeedUnavailable)?;
                if *k == 0 {
                    return Err(SessionError::InvalidAction("k must be >= 1".into()));
                }
                if suggestion.trim().is_empty() {
                    return Err(SessionError::InvalidAction("suggestion is empty".into()));
                }
                system.push(EventBody::SeedMatches {
                    suggestion: suggestion.clone(),
                    matches: seeds.query(suggestion, *k),
                });
            }
            OperatorAction::SeedAccept { entry_id } => {
                if self.state == SessionState::Running {
                    return Err(SessionError::InvalidTransition {
                        state: self.state,
                        action: action.name(),
                    });
                }
                let seeds = services.seeds.ok_or(SessionError::SeedUnavailable)?;
                let sentence = seeds
                    .entry(*entry_id)
                    .map_err(|_| SessionError::UnknownSeedEntry(*entry_id))?;
                SceneContext::validate_line(sentence)
                    .map_err(|e| SessionError::InvalidAction(e.to_string()))?;
                system.push(EventBody::SeedApplied {
                    entry_id: *entry_id,
                    sentence: sentence.to_string(),
                });
            }
            OperatorAction::SceneNote { text } => {
                if text.trim().is_empty() {
                    return Err(SessionError::InvalidAction("scene note is empty".into()));
                }
            }
        }
        let mut planned = vec![(Actor::Operator, EventBody::Action { action })];
        planned.extend(system.into_iter().map(|body| (Actor::System, body)));
        Ok(planned)
    }

    fn plan_publication(
        &self,
        items: &[SelectionItem],
        edits: &std::collections::BTreeMap<usize, String>,
        override_block: bool,
        services: &Services<'_>,
    ) -> Result<Vec<PublishedLine>, SessionError> {
        if let Some(&position) = edits.keys().find(|&&p| p >= items.len()) {
            return Err(SessionError::InvalidSelection(format!(
                "edit for position {position} but only {} items selected",
                items.len()
            )));
        }
        let mut seen = HashSet::new();
        let filter = services.filter.with_policy(self.config.policy.clone());
        let mut lines = Vec::with_capacity(items.len());
        for (position, item) in items.iter().enumerate() {
            if !seen.insert(item) {
                return Err(SessionError::InvalidSelection(format!(
                    "{}[{}] selected twice",
                    item.set_id, item.index
                )));
            }
            let candidate = self
                .pending_sets
                .iter()
                .find(|set| set.set_id == item.set_id)
                .and_then(|set| set.sentences.get(item.index))
                .ok_or_else(|| {
                    SessionError::InvalidSelection(format!(
                        "{}[{}] is not a pending candidate",
                        item.set_id, item.index
                    ))
                })?;
            let (text, verdict, edited) = match edits.get(&position) {
                Some(edit) if *edit != candidate.text => {
                    SceneContext::validate_line(edit)
                        .map_err(|e| SessionError::InvalidSelection(e.to_string()))?;
                    (edit.clone(), filter.check(edit), true)
                }
                _ => (candidate.text.clone(), candidate.verdict.clone(), false),
            };
            let blocked = verdict.is_blocked();
            if blocked && !override_block {
                return Err(SessionError::BlockedWithoutOverride { item: position });
            }
            lines.push(PublishedLine {
                set_id: item.set_id.clone(),
                index: item.index,
                text,
                edited,
                overridden: blocked,
                verdict,
            });
        }
        Ok(lines)
    }

    fn commit(&mut self, timestamp: &str, planned: Vec<(Actor, EventBody)>) -> Result<(), SessionError> {
        for (actor, event) in planned {
            let event = SessionEvent {
                sequence: self.events.len() as u64 + 1,
                timestamp: timestamp.to_string(),
                actor,
                event,
            };
            self.fold(&event)?;
            self.events.push(event);
        }
        Ok(())
    }

    fn fold(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        let at = parse_timestamp(&event.timestamp)
            .ok_or_else(|| SessionError::InvalidLog(format!("bad timestamp {:?}", event.timestamp)))?;
        let bad_line = |e: crate::engine::ContextError| SessionError::InvalidLog(e.to_string());
        match &event.event {
            EventBody::SessionCreated { session_id, config } => {
                if !self.events.is_empty() {
                    return Err(SessionError::InvalidLog("SessionCreated after the first event".into()));
                }
                self.session_id = session_id.clone();
                self.config = config.clone();
                self.created_at = Some(at);
            }
            EventBody::Action { action } => match action {
                OperatorAction::TypeContext { .. } => {
                    self.pending_sets.clear();
                    self.state = SessionState::Running;
                }
                OperatorAction::RequestGeneration | OperatorAction::SelectAndPublish { .. } => {
                    self.state = SessionState::Running;
                }
                OperatorAction::SkipGeneration => self.pending_sets.clear(),
                OperatorAction::EndSession => {
                    self.pending_sets.clear();
                    self.state = SessionState::Ended;
                }
                OperatorAction::SeedQuery { .. }
                | OperatorAction::SeedAccept { .. }
                | OperatorAction::SceneNote { .. } => {}
            },
            EventBody::ContextAppended { lines } => {
                for line in lines {
                    self.context.push(line.clone(), LineSource::OperatorTyped).map_err(bad_line)?;
                }
            }
            EventBody::GenerationCompleted { generation, sets } => {
                self.stats.generation_request_count = *generation;
                self.stats.generated_sentence_count +=
                    sets.iter().map(|s| s.sentences.len() as u64).sum::<u64>();
                self.pending_sets = sets.clone();
            }
            EventBody::PublicationCompleted { lines } => {
                for line in lines {
                    self.context.push(line.text.clone(), LineSource::AiPublished).map_err(bad_line)?;
                }
                self.stats.published_sentence_count += lines.len() as u64;
                self.pending_sets.clear();
            }
            EventBody::SeedMatches { .. } => {}
            EventBody::SeedApplied { sentence, .. } => {
                self.context.push(sentence.clone(), LineSource::OperatorTyped).map_err(bad_line)?;
                self.pending_sets.clear();
                if self.state == SessionState::Created {
                    self.state = SessionState::Seeded;
                }
            }
        }
        if let Some(start) = self.created_at {
            self.stats.elapsed_ms = (at - start).num_milliseconds().max(0) as u64;
        }
        Ok(())
    }
}
