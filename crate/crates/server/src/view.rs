//! Read-side projections of a session.

use chrono::{DateTime, Utc};
use narrator_core::clock::parse_timestamp;
use narrator_core::engine::{CandidateSet, ContextLine, LineSource};
use narrator_core::session::{EventBody, Session, SessionConfig, SessionState, SessionStats};
use serde::Serialize;

/// Everything the operator console shows, pending candidates included.
#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: SessionState,
    pub config: SessionConfig,
    pub context: Vec<ContextLine>,
    pub pending_sets: Vec<CandidateSet>,
    pub stats: SessionStats,
    pub last_sequence: u64,
    /// Restored from a transcript without replaying it.
    pub restored: bool,
    #[serde(skip)]
    pub last_publication: Option<DateTime<Utc>>,
}

impl SessionView {
    pub fn of(session: &Session, restored: bool) -> Self {
        let last_publication = session
            .events()
            .iter()
            .rev()
            .find(|e| matches!(e.event, EventBody::PublicationCompleted { .. }))
            .and_then(|e| parse_timestamp(&e.timestamp));
        Self {
            session_id: session.session_id().to_string(),
            state: session.state(),
            config: session.config().clone(),
            context: session.context().lines().to_vec(),
            pending_sets: session.pending_sets().to_vec(),
            stats: session.stats(),
            last_sequence: session.last_sequence(),
            restored,
            last_publication,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AvatarState {
    Idle,
    Speaking,
    Listening,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageLine {
    /// Position in the scene context.
    pub index: u64,
    pub text: String,
}

/// What the audience display may see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageView {
    pub session_id: String,
    pub state: SessionState,
    pub avatar_state: AvatarState,
    pub lines: Vec<StageLine>,
}

/// Published lines only. The avatar is Speaking for `dwell_ms` after a
/// publication, Listening otherwise while the scene runs, Idle before and
/// after.
pub fn stage(view: &SessionView, now: DateTime<Utc>, dwell_ms: u64) -> StageView {
    let lines = view
        .context
        .iter()
        .filter(|l| l.source == LineSource::AiPublished)
        .map(|l| StageLine {
            index: l.sequence,
            text: l.text.clone(),
        })
        .collect();
    let speaking = view
        .last_publication
        .is_some_and(|at| now >= at && (now - at).num_milliseconds() < dwell_ms as i64);
    let avatar_state = match view.state {
        SessionState::Ended => AvatarState::Idle,
        _ if speaking => AvatarState::Speaking,
        SessionState::Running => AvatarState::Listening,
        SessionState::Created | SessionState::Seeded => AvatarState::Idle,
    };
    StageView {
        session_id: view.session_id.clone(),
        state: view.state,
        avatar_state,
        lines,
    }
}
