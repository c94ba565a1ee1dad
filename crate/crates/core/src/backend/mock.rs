use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    sanitize_completion, validate_request, BackendError, CompletionRequest, CompletionResponse,
    ModelBackend,
};

const MOCK_CORPUS: &str = include_str!("../../data/mock_corpus.txt");

/// Probability that a completion stops mid-sentence.
const FRAGMENT_PROBABILITY: f64 = 0.3;
const MAX_SENTENCE_WORDS: usize = 24;

struct Chain {
    starters: Vec<&'static str>,
    transitions: HashMap<&'static str, Vec<&'static str>>,
}

fn ends_sentence(word: &str) -> bool {
    word.ends_with(['.', '!', '?'])
}

fn chain() -> &'static Chain {
    static CHAIN: OnceLock<Chain> = OnceLock::new();
    CHAIN.get_or_init(|| {
        let mut starters = Vec::new();
        let mut transitions: HashMap<&'static str, Vec<&'static str>> = HashMap::new();
        for line in MOCK_CORPUS.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words: Vec<&'static str> = line.split_whitespace().collect();
            starters.push(words[0]);
            for pair in words.windows(2) {
                transitions.entry(pair[0]).or_default().push(pair[1]);
            }
        }
        Chain {
            starters,
            transitions,
        }
    })
}

fn seeded_rng(prompt: &str, seed: u64, run_index: u32) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"mock-completion/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update(run_index.to_le_bytes());
    hasher.update(prompt.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn sentence(chain: &Chain, rng: &mut ChaCha8Rng) -> String {
    let mut words = vec![chain.starters[rng.random_range(0..chain.starters.len())]];
    loop {
        let last = *words.last().unwrap();
        if ends_sentence(last) {
            return words.join(" ");
        }
        if words.len() >= MAX_SENTENCE_WORDS {
            return format!("{}.", words.join(" "));
        }
        match chain.transitions.get(last) {
            Some(next) => words.push(next[rng.random_range(0..next.len())]),
            None => return format!("{}.", words.join(" ")),
        }
    }
}

fn fragment(chain: &Chain, rng: &mut ChaCha8Rng) -> String {
    let mut words = vec![chain.starters[rng.random_range(0..chain.starters.len())]];
    let extra = rng.random_range(0..4);
    for _ in 0..extra {
        let last = *words.last().unwrap();
        let Some(next) = chain.transitions.get(last) else { break };
        let candidate = next[rng.random_range(0..next.len())];
        if ends_sentence(candidate) {
            break;
        }
        words.push(candidate);
    }
    words.join(" ")
}

/// Deterministic stand-in for a language model: a word-level Markov chain over
/// a small bundled corpus, seeded from a hash of `(prompt, seed, run_index)`.
/// About 30% of outputs end in an unterminated fragment.
pub fn mock_complete(prompt: &str, seed: u64, run_index: u32) -> String {
    let chain = chain();
    let mut rng = seeded_rng(prompt, seed, run_index);
    let target_chars = rng.random_range(100..=300);
    let mut parts: Vec<String> = Vec::new();
    let mut len = 0;
    while len < target_chars {
        let s = sentence(chain, &mut rng);
        len += s.chars().count() + 1;
        parts.push(s);
    }
    if rng.random_bool(FRAGMENT_PROBABILITY) {
        parts.push(fragment(chain, &mut rng));
    }
    parts.join(" ")
}

/// Backend wrapper around [`mock_complete`]. Requests without a seed use 0.
#[derive(Debug, Clone)]
pub struct MockBackend {
    id: String,
}

impl MockBackend {
    pub fn new() -> Self {
        Self {
            id: "mock-markov-v1".to_string(),
        }
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        validate_request(request)?;
        let started = Instant::now();
        let raw = mock_complete(
            &request.prompt,
            request.sampling_seed.unwrap_or(0),
            request.run_index,
        );
        Ok(CompletionResponse {
            text: sanitize_completion(&raw, request.max_chars),
            backend_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            fixture_hit: false,
        })
    }
}
