//! Scene context and candidate generation.
//!
//! The prompt is the scene context joined with single spaces, nothing more.
//! Each generation issues `runs_k` completions of that same prompt; every
//! completion is segmented, cut to the longest prefix of complete sentences
//! that fits the character budget, and each surviving sentence is filtered.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionRequest, ModelBackend, DEFAULT_MAX_COMPLETION_CHARS};
use crate::exec::Exec;
use crate::filter::{FilterPipeline, FilterVerdict};
use crate::segment::{char_len, Segmenter};

pub const DEFAULT_RUNS: u32 = 3;
pub const DEFAULT_BUDGET_CHARS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineSource {
    OperatorTyped,
    AiPublished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLine {
    pub text: String,
    pub source: LineSource,
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("context lines must not be empty")]
    Empty,
    #[error("context lines must not contain line breaks")]
    LineBreak,
}

/// Append-only ordered narration context.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneContext {
    lines: Vec<ContextLine>,
}

impl SceneContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn validate_line(text: &str) -> Result<(), ContextError> {
        if text.trim().is_empty() {
            return Err(ContextError::Empty);
        }
        if text.contains(['\n', '\r', '\u{2028}', '\u{2029}']) {
            return Err(ContextError::LineBreak);
        }
        Ok(())
    }

    pub fn push(&mut self, text: impl Into<String>, source: LineSource) -> Result<u64, ContextError> {
        let text = text.into();
        Self::validate_line(&text)?;
        let sequence = self.lines.len() as u64;
        self.lines.push(ContextLine {
            text,
            source,
            sequence,
        });
        Ok(sequence)
    }

    pub fn lines(&self) -> &[ContextLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Characters in the rendered prompt: line lengths plus one joining space
    /// between consecutive lines.
    pub fn char_length(&self) -> usize {
        let text: usize = self.lines.iter().map(|l| char_len(&l.text)).sum();
        text + self.lines.len().saturating_sub(1)
    }
}

pub fn render_prompt(context: &SceneContext) -> String {
    context
        .lines()
        .iter()
        .map(|l| l.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSentence {
    pub text: String,
    pub verdict: FilterVerdict,
    pub selectable: bool,
}

impl CandidateSentence {
    pub fn new(text: String, verdict: FilterVerdict) -> Self {
        let selectable = !verdict.is_blocked();
        Self {
            text,
            verdict,
            selectable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub set_id: String,
    pub run_index: u32,
    pub sentences: Vec<CandidateSentence>,
    pub raw_completion: String,
    pub total_chars: usize,
    #[serde(default)]
    pub backend_failed: bool,
}

impl CandidateSet {
    pub fn set_id(generation: u64, run_index: u32) -> String {
        format!("g{generation}-r{run_index}")
    }

    fn failed(generation: u64, run_index: u32) -> Self {
        Self {
            set_id: Self::set_id(generation, run_index),
            run_index,
            sentences: Vec::new(),
            raw_completion: String::new(),
            total_chars: 0,
            backend_failed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default = "default_runs")]
    pub runs_k: u32,
    #[serde(default = "default_budget")]
    pub budget_chars: usize,
    #[serde(default = "default_max_completion")]
    pub max_completion_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_seed: Option<u64>,
    #[serde(default)]
    pub backend_id: String,
}

fn default_runs() -> u32 {
    DEFAULT_RUNS
}
fn default_budget() -> usize {
    DEFAULT_BUDGET_CHARS
}
fn default_max_completion() -> usize {
    DEFAULT_MAX_COMPLETION_CHARS
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            runs_k: DEFAULT_RUNS,
            budget_chars: DEFAULT_BUDGET_CHARS,
            max_completion_chars: DEFAULT_MAX_COMPLETION_CHARS,
            sampling_seed: None,
            backend_id: String::new(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.runs_k == 0 {
            return Err("runs_k must be >= 1".into());
        }
        if self.budget_chars == 0 {
            return Err("budget_chars must be >= 1".into());
        }
        if self.max_completion_chars == 0 {
            return Err("max_completion_chars must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("every completion run failed")]
    BackendUnavailable { failures: Vec<(u32, BackendError)> },
    #[error("{} of {} completion runs failed", failures.len(), sets.len())]
    PartialBackendFailure {
        sets: Vec<CandidateSet>,
        failures: Vec<(u32, BackendError)>,
    },
}

/// Segmenter plus execution mode; stateless otherwise.
#[derive(Debug, Clone, Default)]
pub struct NarrationEngine {
    pub segmenter: Segmenter,
    pub exec: Exec,
}

impl NarrationEngine {
    pub fn new(segmenter: Segmenter, exec: Exec) -> Self {
        Self { segmenter, exec }
    }

    pub fn truncate_to_budget(&self, sentences: &[String], budget_chars: usize) -> Vec<String> {
        let mut kept = Vec::new();
        let mut used = 0;
        for sentence in sentences {
            if !self.segmenter.is_terminated(sentence) {
                break;
            }
            let len = char_len(sentence);
            if used + len > budget_chars {
                break;
            }
            used += len;
            kept.push(sentence.clone());
        }
        kept
    }

    /// Builds one candidate set from a raw completion.
    pub fn candidate_set(
        &self,
        set_id: String,
        run_index: u32,
        raw_completion: String,
        budget_chars: usize,
        filter: &FilterPipeline,
    ) -> CandidateSet {
        let segmented = self.segmenter.segment(&raw_completion);
        let kept = self.truncate_to_budget(&segmented, budget_chars);
        let total_chars = kept.iter().map(|s| char_len(s)).sum();
        let sentences = kept
            .into_iter()
            .map(|text| {
                let verdict = filter.check(&text);
                CandidateSentence::new(text, verdict)
            })
            .collect();
        CandidateSet {
            set_id,
            run_index,
            sentences,
            raw_completion,
            total_chars,
            backend_failed: false,
        }
    }

    /// Runs `params.runs_k` completions of the rendered context. Sets come
    /// back in run order whatever order the calls finish in. The context is
    /// only read.
    pub fn generate(
        &self,
        context: &SceneContext,
        params: &GenerationParams,
        backend: &dyn ModelBackend,
        filter: &FilterPipeline,
        generation: u64,
    ) -> Result<Vec<CandidateSet>, GenerationError> {
        params.validate().map_err(GenerationError::InvalidParams)?;
        let prompt = render_prompt(context);
        let outcomes = self.exec.map_range(params.runs_k as usize, |run| {
            let run = run as u32;
            let request = CompletionRequest::new(prompt.clone(), params.max_completion_chars, run)
                .with_seed(params.sampling_seed);
            backend.complete(&request).map(|response| {
                self.candidate_set(
                    CandidateSet::set_id(generation, run),
                    run,
                    response.text,
                    params.budget_chars,
                    filter,
                )
            })
        });
        let mut sets = Vec::with_capacity(outcomes.len());
        let mut failures = Vec::new();
        for (run, outcome) in outcomes.into_iter().enumerate() {
            let run = run as u32;
            match outcome {
                Ok(set) => sets.push(set),
                Err(e) => {
                    tracing::warn!(run, error = %e, "completion run failed");
                    failures.push((run, e));
                    sets.push(CandidateSet::failed(generation, run));
                }
            }
        }
        if failures.is_empty() {
            Ok(sets)
        } else if failures.len() == sets.len() {
            Err(GenerationError::BackendUnavailable { failures })
        } else {
            Err(GenerationError::PartialBackendFailure { sets, failures })
        }
    }
}

/// [`truncate_to_budget`](NarrationEngine::truncate_to_budget) with the bundled
/// abbreviation list.
pub fn truncate_to_budget(sentences: &[String], budget_chars: usize) -> Vec<String> {
    NarrationEngine::default().truncate_to_budget(sentences, budget_chars)
}

pub fn generate_candidate_sets(
    context: &SceneContext,
    params: &GenerationParams,
    backend: &dyn ModelBackend,
    filter: &FilterPipeline,
    generation: u64,
) -> Result<Vec<CandidateSet>, GenerationError> {
    NarrationEngine::default().generate(context, params, backend, filter, generation)
}
