//! Regenerates `fixtures/pizza_hut/`: the operator's typed lines, stage
//! notes and published narration of the "Pizza Hut" show, with unpublished
//! candidates filled in by the mock backend.
//!
//! The filler seed is the smallest one for which the show's generations
//! produce 455 candidate sentences in total.
//!
//!     cargo run -p narrator-core --example build_pizza_hut_fixture [out_dir]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use narrator_core::backend::{
    mock_complete, BackendError, CompletionRequest, CompletionResponse, FixtureMetadata,
    FixtureStore, MockBackend, ModelBackend, RecordingBackend,
};
use narrator_core::clock::SteppingClock;
use narrator_core::engine::{NarrationEngine, DEFAULT_RUNS};
use narrator_core::exec::Exec;
use narrator_core::filter::FilterPipeline;
use narrator_core::segment::Segmenter;
use narrator_core::session::{
    to_jsonl, EventBody, OperatorAction, SelectionItem, Services, Session, SessionConfig,
};

const TARGET_GENERATED: u64 = 455;
const START: &str = "2021-01-01T20:00:00.000Z";
const STEP_MS: i64 = 7_200;

enum Step {
    Type(&'static str),
    Note(&'static str),
    /// Sentences to publish, grouped by the run that produced them.
    Publish(Vec<(u32, Vec<&'static str>)>),
}

use Step::*;

fn one(run: u32, line: &'static str) -> Step {
    Publish(vec![(run, vec![line])])
}

fn script() -> Vec<Step> {
    vec![
        Type("At the Pizza Hut."),
        Type("Brian and his date lost patience."),
        Note("(The operator misunderstood the relationship between the two protagonists.)"),
        Type("There was always a reason for them to admire each other."),
        Type("Brian was an expert at making pizza."),
        Type("Sally found her vocation, making pizza like Brian."),
        Type("Brian started listing all the products..."),
        Type("Baguettes, patisserie..."),
        Type("Sally asked Brian for help."),
        Note("(The operator made a confusion in the name, as it was Sandra, not Sally.)"),
        one(1, "The door opened and a burly man entered, followed by his wife."),
        Note("(A couple entered the pizzeria, the man spoke with a heavy voice.)"),
        Type("The husband and the wife entered the pizzeria."),
        Type("They asked for supremes, with garlic bread."),
        one(0, "Both women had crushes on Brian."),
        Note("(The unnamed wife briefly approached Brian.)"),
        Type("Sally searched for pastries."),
        one(2, "The husband and the wife asked for vodka."),
        Note("(Unused suggestion.)"),
        Type("They got creme patissiere..."),
        one(1, "Brian apologized."),
        Note("(Sally/Sandra was rolling pizza on the floor.)"),
        Type("Sally was dreaming about becoming a master patissier."),
        one(0, "She continued to look for pastries."),
        Note(
            "(Sally/Sandra said she was done working at Pizza Hut and wanted to resign. \
             Scene transition, with an angry boss entering the stage.)",
        ),
        Type("Brian's boss told him he would let her go."),
        Type("Sally gave her notice."),
        Type("The boss refused."),
        Type("The boss was cruel."),
        Publish(vec![(
            2,
            vec!["Brian asked the boss for her resignation.", "The boss made a mistake."],
        )]),
        Note(
            "(A confrontation took place between Brian and the boss, \
             the boss later started behaving apologetically.)",
        ),
        one(1, "Brian and Sally left the pizzeria."),
        Note("(A male actor stepped in to play the newly introduced Sally.)"),
        Note("(Scene transition to Sandra at a restaurant owned by the burly man and his wife.)"),
        Type("Sandra pursued her dream of being a pastry chef."),
        Type("Sandra was serving the old burly couple."),
        Publish(vec![(
            0,
            vec![
                "The burly man was impressed.",
                "The burly man and his wife complimented Sandra.",
            ],
        )]),
        Type("Even though Sandra was violating safety regulations."),
        Publish(vec![(
            2,
            vec!["Sandra was getting tired.", "Sandra's dream would soon come true."],
        )]),
        Type("They loved it!"),
        Type("With her sweat, she impressed them."),
        one(1, "Sandra was now a great pastry chef."),
        Note("(Scene transition to the boss joining the group.)"),
        Type("The boss came to apologise to Sandra."),
        Type("Sandra said that she remembered him."),
        Type("He was diminished."),
        Type("He was wondering if it was safe to do it on the floor..."),
        Type("She heard about Brian."),
        Type("Can you come back, he asked."),
        Type("The boss was apologetic."),
        Publish(vec![
            (
                0,
                vec!["Sandra thanked the boss, who helped her.", "Brian and Sandra were both happy."],
            ),
            (
                2,
                vec!["Sandra was proud.", "The boss was really clear.", "The boss was jealous."],
            ),
        ]),
        Note("(Group scene.)"),
        one(0, "He agreed."),
        Note("(End scene.)"),
    ]
}

/// Mock completions, except for runs whose opening sentences were scripted
/// for the next generation.
struct Scripted {
    seed: u64,
    next: Mutex<HashMap<u32, String>>,
}

impl ModelBackend for Scripted {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let filler = mock_complete(&request.prompt, self.seed, request.run_index);
        match self.next.lock().unwrap().remove(&request.run_index) {
            Some(lead) => Ok(CompletionResponse {
                text: format!("{lead} {filler}"),
                backend_id: "scripted+mock-markov-v1".into(),
                latency_ms: 0,
                fixture_hit: false,
            }),
            None => MockBackend::new().complete(&CompletionRequest {
                sampling_seed: Some(self.seed),
                ..request.clone()
            }),
        }
    }
}

fn build(seed: u64) -> (Session, FixtureStore) {
    let clock = SteppingClock::from_rfc3339(START, STEP_MS);
    let scripted = Scripted {
        seed,
        next: Mutex::new(HashMap::new()),
    };
    let recorder = RecordingBackend::new(
        scripted,
        FixtureStore::new(FixtureMetadata {
            show: Some("Pizza Hut".into()),
            date: None,
            backend: Some("scripted+mock-markov-v1".into()),
        }),
        Arc::new(SteppingClock::from_rfc3339(START, STEP_MS)),
    );
    // Sequential so the fixture file is written in run order.
    let engine = NarrationEngine::new(Segmenter::default(), Exec::Sequential);
    let filter = FilterPipeline::bundled();
    let services = Services {
        engine: &engine,
        backend: &recorder,
        filter: &filter,
        seeds: None,
    };
    let mut config = SessionConfig::default();
    config.generation.sampling_seed = Some(seed);
    config.generation.backend_id = "mock-markov-v1".into();
    let mut session = Session::create_with_id("pizza-hut", config, START).unwrap();

    let steps = script();
    let apply = |session: &mut Session, action: OperatorAction| {
        session
            .apply(action, &clock, &services)
            .unwrap_or_else(|e| panic!("fixture step failed: {e}"))
    };
    for (i, step) in steps.iter().enumerate() {
        let action = match step {
            Type(text) => OperatorAction::type_context(*text),
            Note(text) => OperatorAction::SceneNote {
                text: text.to_string(),
            },
            Publish(groups) => {
                let generation = session.stats().generation_request_count;
                let items = groups
                    .iter()
                    .flat_map(|(run, lines)| {
                        let set_id = format!("g{generation}-r{run}");
                        (0..lines.len()).map(move |j| SelectionItem::new(set_id.clone(), j))
                    })
                    .collect();
                OperatorAction::publish(items)
            }
        };
        let events = apply(&mut session, action);
        if let Publish(groups) = step {
            let EventBody::PublicationCompleted { lines } = &events[1].event else {
                unreachable!("publication emits PublicationCompleted");
            };
            let expected: Vec<&str> = groups.iter().flat_map(|(_, l)| l.iter().copied()).collect();
            let got: Vec<&str> = lines.iter().map(|l| l.text.as_str()).collect();
            assert_eq!(got, expected, "scripted lines did not survive the budget");
            assert!(lines.iter().all(|l| !l.verdict.is_blocked()));
        }
        if matches!(step, Note(_)) {
            continue;
        }
        // Generate after every context change, priming the runs the next
        // publication draws from.
        if let Some(Publish(groups)) = steps[i + 1..].iter().find(|s| !matches!(s, Note(_))) {
            let mut next = recorder.inner().next.lock().unwrap();
            for (run, lines) in groups {
                assert!(*run < DEFAULT_RUNS);
                next.insert(*run, lines.join(" "));
            }
        }
        apply(&mut session, OperatorAction::RequestGeneration);
    }
    apply(&mut session, OperatorAction::EndSession);
    (session, recorder.into_store())
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pizza_hut"));
    let (seed, session, store) = (0..10_000)
        .find_map(|seed| {
            let (session, store) = build(seed);
            (session.stats().generated_sentence_count == TARGET_GENERATED)
                .then_some((seed, session, store))
        })
        .expect("no filler seed reaches the target");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("transcript.jsonl"), to_jsonl(session.events())).unwrap();
    store.save(out.join("completions.jsonl")).unwrap();
    let stats = session.stats();
    println!(
        "seed {seed}: {} events, {} generations, {} generated, {} published, {} fixtures",
        session.events().len(),
        stats.generation_request_count,
        stats.generated_sentence_count,
        stats.published_sentence_count,
        store.len()
    );
}
