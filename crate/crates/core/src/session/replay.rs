use std::sync::Mutex;

use crate::backend::{BackendError, CompletionRequest, CompletionResponse, ModelBackend};

use super::{EventBody, Services, Session, SessionEvent};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("invalid event log: {0}")]
    InvalidLog(String),
    #[error("replay diverged at event {sequence}: {detail}")]
    DivergenceDetected { sequence: u64, detail: String },
    #[error("no fixture for prompt {prompt_sha256} run {run_index} (event {sequence})")]
    FixtureMiss {
        sequence: u64,
        prompt_sha256: String,
        run_index: u32,
    },
}

/// Remembers the first fixture miss so a divergence caused by missing
/// fixtures is reported as such.
struct MissWatch<'a> {
    inner: &'a dyn ModelBackend,
    first_miss: Mutex<Option<(String, u32)>>,
}

impl ModelBackend for MissWatch<'_> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let result = self.inner.complete(request);
        if let Err(BackendError::FixtureMiss {
            prompt_sha256,
            run_index,
        }) = &result
        {
            let mut slot = self.first_miss.lock().expect("miss slot");
            if slot.is_none() {
                *slot = Some((prompt_sha256.clone(), *run_index));
            }
        }
        result
    }
}

/// Re-applies every operator action in `events` at its recorded time and
/// checks that the regenerated log matches the recorded one exactly.
pub fn replay(events: &[SessionEvent], services: &Services<'_>) -> Result<Session, ReplayError> {
    let Some(first) = events.first() else {
        return Ok(Session::default());
    };
    if let Some((i, e)) = events
        .iter()
        .enumerate()
        .find(|(i, e)| e.sequence != *i as u64 + 1)
    {
        return Err(ReplayError::InvalidLog(format!(
            "event {} has sequence {}",
            i + 1,
            e.sequence
        )));
    }
    let EventBody::SessionCreated { session_id, config } = &first.event else {
        return Err(ReplayError::InvalidLog("log must start with SessionCreated".into()));
    };
    let mut session = Session::create_with_id(session_id.clone(), config.clone(), &first.timestamp)
        .map_err(|e| ReplayError::InvalidLog(e.to_string()))?;
    if session.events()[0] != *first {
        return Err(ReplayError::DivergenceDetected {
            sequence: first.sequence,
            detail: "SessionCreated differs".into(),
        });
    }

    let watch = MissWatch {
        inner: services.backend,
        first_miss: Mutex::new(None),
    };
    let services = Services {
        backend: &watch,
        ..*services
    };
    let diverged = |sequence: u64, detail: String| -> ReplayError {
        match watch.first_miss.lock().expect("miss slot").clone() {
            Some((prompt_sha256, run_index)) => ReplayError::FixtureMiss {
                sequence,
                prompt_sha256,
                run_index,
            },
            None => ReplayError::DivergenceDetected { sequence, detail },
        }
    };

    let mut i = 1;
    while i < events.len() {
        let recorded = &events[i];
        let Some(action) = recorded.operator_action() else {
            return Err(diverged(
                recorded.sequence,
                format!("unexpected {} event", recorded.event.kind()),
            ));
        };
        let emitted = session
            .apply_at(action.clone(), &recorded.timestamp, &services)
            .map_err(|e| diverged(recorded.sequence, e.to_string()))?;
        if emitted.is_empty() {
            return Err(diverged(recorded.sequence, "action produced no events".into()));
        }
        for event in &emitted {
            let matches = events
                .get(event.sequence as usize - 1)
                .is_some_and(|r| r.to_json_line() == event.to_json_line());
            if !matches {
                return Err(diverged(
                    event.sequence,
                    format!("regenerated {} event differs", event.event.kind()),
                ));
            }
        }
        i += emitted.len();
    }
    Ok(session)
}
