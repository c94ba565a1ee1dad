//! Synthetic corpora, contexts and operator behaviour for property tests and
//! benchmarks.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::engine::{LineSource, SceneContext};
use crate::session::{OperatorAction, SelectionItem, Session, SessionState};

pub fn word<R: Rng + ?Sized>(rng: &mut R) -> String {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    let len = rng.random_range(3..=9);
    (0..len)
        .map(|_| *LETTERS.choose(rng).expect("letters") as char)
        .collect()
}

pub fn vocabulary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n).map(|_| word(rng)).collect()
}

/// Replaces `edits` random words of `sentence` with vocabulary words.
pub fn perturb<R: Rng + ?Sized>(rng: &mut R, sentence: &str, vocab: &[String], edits: usize) -> String {
    let mut words: Vec<String> = sentence.split(' ').map(str::to_string).collect();
    for _ in 0..edits {
        let i = rng.random_range(0..words.len());
        words[i] = vocab.choose(rng).expect("vocabulary").clone();
    }
    words.join(" ")
}

/// `n` sentences of 8 to 14 words from a 3,000-word vocabulary, in themes of
/// `family` variants that each differ from the theme in one or two words.
/// Returns the corpus and its vocabulary.
pub fn themed_corpus<R: Rng + ?Sized>(rng: &mut R, n: usize, family: usize) -> (Vec<String>, Vec<String>) {
    let vocab = vocabulary(rng, 3000);
    let mut corpus = Vec::with_capacity(n);
    while corpus.len() < n {
        let len = rng.random_range(8..=14);
        let theme: Vec<&str> = (0..len)
            .map(|_| vocab.choose(rng).expect("vocabulary").as_str())
            .collect();
        let theme = theme.join(" ");
        for _ in 0..family.max(1) {
            if corpus.len() == n {
                break;
            }
            let edits = rng.random_range(1..=2);
            corpus.push(perturb(rng, &theme, &vocab, edits));
        }
    }
    (corpus, vocab)
}

/// Independent random word strings, no shared structure.
pub fn random_corpus<R: Rng + ?Sized>(rng: &mut R, n: usize, vocab: &[String]) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len)
                .map(|_| vocab.choose(rng).expect("vocabulary").as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// A short capitalised sentence ending in a period, sometimes with a title
/// abbreviation inside.
pub fn sentence<R: Rng + ?Sized>(rng: &mut R, vocab: &[String]) -> String {
    let len = rng.random_range(2..=9);
    let mut words: Vec<String> = (0..len)
        .map(|_| vocab.choose(rng).expect("vocabulary").clone())
        .collect();
    if len > 2 && rng.random_bool(0.1) {
        words.insert(1, "Dr.".to_string());
    }
    let mut first = words[0].chars();
    if let Some(c) = first.next() {
        words[0] = c.to_uppercase().chain(first).collect();
    }
    let end = *[".", ".", ".", "!", "?"].choose(rng).expect("endings");
    format!("{}{end}", words.join(" "))
}

pub fn random_context<R: Rng + ?Sized>(rng: &mut R, vocab: &[String], max_lines: usize) -> SceneContext {
    let mut context = SceneContext::new();
    for _ in 0..rng.random_range(0..=max_lines) {
        let source = if rng.random_bool(0.5) {
            LineSource::OperatorTyped
        } else {
            LineSource::AiPublished
        };
        context.push(sentence(rng, vocab), source).expect("valid line");
    }
    context
}

/// Picks a plausible next operator action for `session`. Most selections are
/// valid; a few are stale or edited so error paths get exercised too.
pub fn random_action<R: Rng + ?Sized>(
    rng: &mut R,
    session: &Session,
    vocab: &[String],
    seed_entries: usize,
) -> OperatorAction {
    let roll = rng.random_range(0..100);
    match roll {
        0..=21 => {
            let n = rng.random_range(1..=3);
            let text = (0..n).map(|_| sentence(rng, vocab)).collect::<Vec<_>>().join(" ");
            OperatorAction::TypeContext { text }
        }
        22..=46 => OperatorAction::RequestGeneration,
        47..=76 => random_selection(rng, session, vocab),
        77..=81 => OperatorAction::SkipGeneration,
        82..=91 => OperatorAction::SceneNote {
            text: format!("({})", sentence(rng, vocab)),
        },
        92..=95 if seed_entries > 0 => OperatorAction::SeedQuery {
            suggestion: vocab.choose(rng).expect("vocabulary").clone(),
            k: rng.random_range(1..=5),
        },
        96..=98 if seed_entries > 0 && session.state() != SessionState::Running => {
            OperatorAction::SeedAccept {
                entry_id: rng.random_range(0..seed_entries),
            }
        }
        99 => OperatorAction::EndSession,
        _ => OperatorAction::RequestGeneration,
    }
}

fn random_selection<R: Rng + ?Sized>(rng: &mut R, session: &Session, vocab: &[String]) -> OperatorAction {
    let mut available: Vec<SelectionItem> = session
        .pending_sets()
        .iter()
        .flat_map(|set| {
            (0..set.sentences.len()).map(move |i| SelectionItem::new(set.set_id.clone(), i))
        })
        .collect();
    available.shuffle(rng);
    let take = rng.random_range(0..=available.len().min(3));
    let mut items: Vec<SelectionItem> = available.into_iter().take(take).collect();
    if rng.random_bool(0.05) {
        items.push(SelectionItem::new("g0-r9", 0));
    }
    let mut edits = BTreeMap::new();
    if !items.is_empty() && rng.random_bool(0.2) {
        edits.insert(rng.random_range(0..items.len()), sentence(rng, vocab));
    }
    OperatorAction::SelectAndPublish {
        items,
        edits,
        override_block: rng.random_bool(0.3),
    }
}
