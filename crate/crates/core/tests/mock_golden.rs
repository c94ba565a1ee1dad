//! Frozen digests of mock completions. Regenerate with
//! `NARRATOR_BLESS=1 cargo test -p narrator-core --test mock_golden` only
//! when the mock generator is changed on purpose.

use narrator_core::backend::{mock_complete, prompt_digest};
use serde::{Deserialize, Serialize};

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Golden {
    prompt: String,
    seed: u64,
    run_index: u32,
    sha256: String,
}

const PROMPTS: &[&str] = &[
    "",
    "At the Pizza Hut.",
    "At the Pizza Hut. Brian and his date lost patience.",
    "Sandra was proud. The boss was jealous.",
    "Ünïcödé café — 東京 🍕.",
    "x",
    "The door opened",
    "   spaced   out   ",
    "Line one.\nLine two.",
    "Dr. Smith arrived at 5 p.m. sharp.",
];

fn cases() -> Vec<Golden> {
    let mut out = Vec::new();
    for (i, prompt) in PROMPTS.iter().enumerate() {
        for j in 0..5u64 {
            let seed = (i as u64) * 7919 + j * 104_729;
            let run_index = (j % 3) as u32;
            out.push(Golden {
                prompt: prompt.to_string(),
                seed,
                run_index,
                sha256: prompt_digest(&mock_complete(prompt, seed, run_index)),
            });
        }
    }
    out
}

#[test]
fn mock_output_matches_golden_digests() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock_golden.jsonl");
    let current = cases();
    assert_eq!(current.len(), 50);
    if std::env::var_os("NARRATOR_BLESS").is_some() {
        let text: String = current
            .iter()
            .map(|g| serde_json::to_string(g).unwrap() + "\n")
            .collect();
        std::fs::write(&path, text).unwrap();
    }
    let frozen: Vec<Golden> = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(current, frozen);
}
