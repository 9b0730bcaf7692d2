//! Seeded synthetic corpora for tests and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::json;

use crate::seed;

const NOUNS: &[&str] = &[
    "river", "engine", "garden", "teacher", "market", "signal", "village", "window", "harbor",
    "letter", "forest", "captain", "bridge", "storm", "library", "farmer", "station", "mirror",
    "valley", "lantern", "council", "orchard",
];
const VERBS: &[&str] = &[
    "watched",
    "carried",
    "opened",
    "followed",
    "repaired",
    "painted",
    "crossed",
    "found",
    "left",
    "measured",
    "visited",
    "described",
    "joined",
    "ignored",
    "counted",
    "borrowed",
];
const ADJECTIVES: &[&str] = &[
    "old", "quiet", "narrow", "bright", "distant", "heavy", "small", "broken", "early", "green",
    "cold", "famous",
];
const LINKS: &[&str] = &[
    "to", "into", "from", "with", "under", "before", "after", "within", "about", "during",
];
const ADVERBS: &[&str] = &["slowly", "again", "carefully", "today", "twice", "quickly"];

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let pick = |rng: &mut R, list: &[&'static str]| *list.choose(rng).expect("non-empty list");
    let mut words = vec![
        capitalize(pick(rng, &["the", "a", "one", "every", "that"])),
        pick(rng, ADJECTIVES).to_string(),
        pick(rng, NOUNS).to_string(),
        pick(rng, VERBS).to_string(),
    ];
    for _ in 0..rng.random_range(0..3) {
        words.push(pick(rng, ADVERBS).to_string());
    }
    match rng.random_range(0..3) {
        0 => {
            words.push("the".into());
            words.push(pick(rng, NOUNS).into());
        }
        1 => {
            words.push(pick(rng, NOUNS).into());
            words.push(pick(rng, LINKS).into());
            words.push("the".into());
            words.push(pick(rng, ADJECTIVES).into());
            words.push(pick(rng, NOUNS).into());
        }
        _ => {
            words.push(pick(rng, ADVERBS).into());
            words.push(pick(rng, ADVERBS).into());
        }
    }
    let last = words.pop().expect("sentence has words");
    words.push(format!("{last}."));
    words.join(" ")
}

/// Text of one document with `sentences` sentences.
pub fn document_text<R: Rng + ?Sized>(sentences: usize, rng: &mut R) -> String {
    (0..sentences)
        .map(|_| sentence(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n` JSONL records `{id, domain, text}` spread over `domains`, with
/// 3 to 40 sentences each.
pub fn corpus_jsonl(n: usize, domains: &[&str], global_seed: u64) -> String {
    let mut out = String::new();
    for i in 0..n {
        let id = format!("doc{i:06}");
        let mut rng = seed::unit_rng(global_seed, &["synth", &id]);
        let sentences = rng.random_range(3..=40);
        let domain = domains[i % domains.len()];
        let line = json!({"id": id, "domain": domain, "text": document_text(sentences, &mut rng)});
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}
