use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use narrator_core::backend::MockBackend;
use narrator_core::engine::{CandidateSet, GenerationParams, NarrationEngine};
use narrator_core::filter::{
    decide, filter_sentence, Attribute, Blocklist, Decision, FilterPipeline, FilterPolicy,
    FilterStage, MockLexiconScorer, ScoreProvider, ScoringErrorPolicy, ToxicityScores,
};
use narrator_core::seed::{
    brute_force_query, ApproxParams, HashedTrigramEmbedder, IndexMode, SeedCorpus, SeedIndex,
};
use narrator_core::segment::char_len;
use narrator_core::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn budget_violation(engine: &NarrationEngine, set: &CandidateSet, budget: usize) -> Option<String> {
    let segmented = engine.segmenter.segment(&set.raw_completion);
    let kept: Vec<&str> = set.sentences.iter().map(|s| s.text.as_str()).collect();
    let total: usize = kept.iter().map(|s| char_len(s)).sum();
    if total != set.total_chars || total > budget {
        return Some(format!("{}: {total} chars over budget {budget}", set.set_id));
    }
    if kept.len() > segmented.len() || kept != segmented[..kept.len()] {
        return Some(format!("{}: not a prefix of the segmentation", set.set_id));
    }
    if let Some(s) = kept.iter().find(|s| !engine.segmenter.is_terminated(s)) {
        return Some(format!("{}: unterminated {s:?}", set.set_id));
    }
    if let Some(next) = segmented.get(kept.len()) {
        if engine.segmenter.is_terminated(next) && total + char_len(next) <= budget {
            return Some(format!("{}: stopped before {next:?} which fits", set.set_id));
        }
    }
    None
}

proptest! {
    #[test]
    fn candidate_sets_respect_the_budget(case in any::<u64>(), budget in 1usize..160) {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let vocab = synth::vocabulary(&mut rng, 300);
        let context = synth::random_context(&mut rng, &vocab, 6);
        let params = GenerationParams {
            budget_chars: budget,
            sampling_seed: Some(rng.random()),
            ..Default::default()
        };
        let engine = NarrationEngine::default();
        let sets = engine
            .generate(&context, &params, &MockBackend::new(), &FilterPipeline::bundled(), 1)
            .unwrap();
        prop_assert_eq!(sets.len(), 3);
        for set in &sets {
            prop_assert_eq!(budget_violation(&engine, set, budget), None);
        }
    }

    #[test]
    fn blocklist_hits_never_pass(case in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let vocab = synth::vocabulary(&mut rng, 40);
        let blocked: Vec<&String> = vocab.iter().filter(|_| rng.random_bool(0.1)).collect();
        let blocklist = Blocklist::parse(
            &blocked.iter().map(|w| format!("{w}\n")).collect::<String>(),
        ).unwrap();
        let hit_words: Vec<String> = vocab.iter().filter(|_| rng.random_bool(0.2)).cloned().collect();
        let flag_words: Vec<String> = vocab.iter().filter(|_| rng.random_bool(0.1)).cloned().collect();
        let scorer = MockLexiconScorer::new().with_lexicon(Attribute::Toxicity, hit_words, flag_words);
        let policy = FilterPolicy {
            thresholds: [(Attribute::Toxicity, rng.random_range(0.0..=1.0))].into(),
            on_scoring_error: ScoringErrorPolicy::FailOpen,
            blocklist_path: None,
        };
        let mut sentence = synth::sentence(&mut rng, &vocab);
        if rng.random_bool(0.5) {
            sentence = sentence.to_uppercase();
        }
        let before = scorer.calls();
        let verdict = filter_sentence(&sentence, &blocklist, &scorer, &policy);
        let hits = blocklist.check(&sentence);
        if hits.is_empty() {
            prop_assert_eq!(scorer.calls(), before + 1);
            prop_assert_ne!(verdict.stage, FilterStage::Blocklist);
        } else {
            prop_assert_eq!(verdict.decision, Decision::Blocked);
            prop_assert_eq!(verdict.stage, FilterStage::Blocklist);
            prop_assert_eq!(verdict.matched_tokens, hits);
            prop_assert_eq!(scorer.calls(), before);
        }
    }

    #[test]
    fn lower_thresholds_block_at_least_as_much(
        values in prop::collection::vec(0.0f64..=1.0, 5),
        thresholds in prop::collection::vec(0.0f64..=1.0, 5),
        cuts in prop::collection::vec(0.0f64..=1.0, 5),
    ) {
        let scores = ToxicityScores {
            scores: Attribute::ALL.into_iter().zip(values).collect(),
            provider: ScoreProvider::MockLexicon,
        };
        let high: BTreeMap<_, _> = Attribute::ALL.into_iter().zip(thresholds.iter().copied()).collect();
        let low: BTreeMap<_, _> = high.iter().zip(&cuts).map(|((a, t), c)| (*a, t * c)).collect();
        let verdict = |thresholds: BTreeMap<Attribute, f64>| {
            let policy = FilterPolicy { thresholds, ..Default::default() };
            decide(Vec::new(), Some(Ok(scores.clone())), &policy).decision
        };
        if verdict(high) == Decision::Blocked {
            prop_assert_eq!(verdict(low), Decision::Blocked);
        }
    }

    #[test]
    fn exact_index_equals_brute_force(case in any::<u64>(), n in 1usize..300, k in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let vocab = synth::vocabulary(&mut rng, 500);
        let corpus = SeedCorpus::from_sentences(synth::random_corpus(&mut rng, n, &vocab));
        let embedder = HashedTrigramEmbedder::default();
        let index = SeedIndex::build(
            corpus.clone(),
            Arc::new(embedder.clone()),
            IndexMode::Exact,
            ApproxParams::default(),
        ).unwrap();
        let query = synth::sentence(&mut rng, &vocab);
        prop_assert_eq!(index.query(&query, k), brute_force_query(&corpus, &embedder, &query, k));
    }
}

#[test]
fn approximate_recall_on_themed_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (sentences, vocab) = synth::themed_corpus(&mut rng, 1000, 12);
    let corpus = SeedCorpus::from_sentences(sentences);
    let embedder = HashedTrigramEmbedder::default();
    let index = SeedIndex::build(
        corpus.clone(),
        Arc::new(embedder.clone()),
        IndexMode::Approximate,
        ApproxParams::default(),
    )
    .unwrap();
    let (mut at1, mut at10) = (0.0, 0.0);
    let queries = 40;
    for _ in 0..queries {
        let base = &corpus.entries()[rng.random_range(0..corpus.len())];
        let query = synth::perturb(&mut rng, base, &vocab, 1);
        let oracle = brute_force_query(&corpus, &embedder, &query, 10);
        let got = index.query(&query, 10);
        if got[0].entry_id == oracle[0].entry_id {
            at1 += 1.0;
        }
        let truth: HashSet<usize> = oracle.iter().map(|m| m.entry_id).collect();
        at10 += got.iter().filter(|m| truth.contains(&m.entry_id)).count() as f64 / 10.0;
    }
    assert!(at1 / queries as f64 >= 0.95, "recall@1 {}", at1 / queries as f64);
    assert!(at10 / queries as f64 >= 0.90, "recall@10 {}", at10 / queries as f64);
}
