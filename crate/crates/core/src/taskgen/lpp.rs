//! Last phrase prediction, generative and classification variants.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Example, LabelScheme, TaskKind};
use crate::corpus::{join_sentences, Sentence, SentenceWindow};
use crate::lexicon::FunctionWords;

pub const QUESTION_MARKER: &str = "Question:";
pub const ANSWER_MARKER: &str = "Answer:";
pub const PLACEHOLDER: &str = "?";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseExtraction {
    pub sentence_tokens: Vec<String>,
    /// Tokens left after dropping terminal punctuation. The phrase ends here.
    pub content_len: usize,
    pub function_word_index: usize,
    /// Lowercased function word.
    pub function_word: String,
    pub phrase: String,
}

fn is_trailing_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '\u{201d}' | '\u{2019}' | '\u{bb}' | '\u{2026}')
}

/// Sentence tokens with terminal punctuation removed: trailing tokens made
/// only of punctuation are dropped and the last remaining token loses its
/// trailing punctuation.
pub(crate) fn content_tokens(tokens: &[String]) -> Vec<&str> {
    let mut out: Vec<&str> = tokens.iter().map(String::as_str).collect();
    while let Some(last) = out.pop() {
        let trimmed = last.trim_end_matches(is_trailing_punct);
        if !trimmed.is_empty() {
            out.push(trimmed);
            break;
        }
    }
    out
}

/// Locate the last function word of the sentence. Succeeds only when that
/// word sits in the second half (index >= ceil(len / 2), where len counts
/// content tokens).
pub fn extract_last_phrase(
    sentence: &Sentence,
    function_words: &FunctionWords,
) -> Option<PhraseExtraction> {
    let content = content_tokens(&sentence.tokens);
    let len = content.len();
    let index = content.iter().rposition(|t| function_words.contains(t))?;
    if index < len.div_ceil(2) {
        return None;
    }
    let phrase = content[index..].join(" ");
    if phrase.is_empty() {
        return None;
    }
    Some(PhraseExtraction {
        sentence_tokens: sentence.tokens.clone(),
        content_len: len,
        function_word_index: index,
        function_word: content[index].to_lowercase(),
        phrase,
    })
}

/// Context sentences, the question marker and the final sentence with its
/// last phrase replaced by the placeholder.
fn question_input(window: &SentenceWindow, extraction: &PhraseExtraction) -> String {
    let n = window.len();
    let context = join_sentences(&window.sentences[..n.saturating_sub(1)]);
    let stem = extraction.sentence_tokens[..extraction.function_word_index].join(" ");
    let mut input = String::new();
    if !context.is_empty() {
        input.push_str(&context);
        input.push(' ');
    }
    input.push_str(QUESTION_MARKER);
    input.push(' ');
    input.push_str(&stem);
    input.push(' ');
    input.push_str(PLACEHOLDER);
    input
}

fn last_extraction(
    window: &SentenceWindow,
    function_words: &FunctionWords,
) -> Option<PhraseExtraction> {
    extract_last_phrase(window.sentences.last()?, function_words)
}

pub fn gen_lpp_gen(window: &SentenceWindow, function_words: &FunctionWords) -> Option<Example> {
    let extraction = last_extraction(window, function_words)?;
    let input = question_input(window, &extraction);
    Some(
        Example::new(TaskKind::LppGen, input, extraction.phrase.clone())
            .with_window(window)
            .with_meta("function_word", extraction.function_word),
    )
}

/// Phrases grouped by their leading function word, sorted and deduplicated
/// so sampling is reproducible.
#[derive(Debug, Clone, Default)]
pub struct PhrasePool {
    by_word: BTreeMap<String, Vec<String>>,
}

impl PhrasePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, extraction: &PhraseExtraction) {
        self.by_word
            .entry(extraction.function_word.clone())
            .or_default()
            .push(extraction.phrase.clone());
    }

    pub fn add_sentences<'a>(
        &mut self,
        sentences: impl IntoIterator<Item = &'a Sentence>,
        function_words: &FunctionWords,
    ) {
        for s in sentences {
            if let Some(e) = extract_last_phrase(s, function_words) {
                self.add(&e);
            }
        }
    }

    /// Sort and deduplicate. Must be called before sampling.
    pub fn finish(mut self) -> Self {
        for phrases in self.by_word.values_mut() {
            phrases.sort();
            phrases.dedup();
        }
        self
    }

    pub fn phrases(&self, function_word: &str) -> &[String] {
        self.by_word
            .get(function_word)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Uniform draw among phrases for `function_word` other than `gold`.
    pub fn sample_negative<R: Rng + ?Sized>(
        &self,
        function_word: &str,
        gold: &str,
        rng: &mut R,
    ) -> Option<&str> {
        let phrases = self.phrases(function_word);
        match phrases.binary_search_by(|p| p.as_str().cmp(gold)) {
            Ok(gold_pos) => {
                if phrases.len() < 2 {
                    return None;
                }
                let mut i = rng.random_range(0..phrases.len() - 1);
                if i >= gold_pos {
                    i += 1;
                }
                Some(&phrases[i])
            }
            Err(_) if phrases.is_empty() => None,
            Err(_) => Some(&phrases[rng.random_range(0..phrases.len())]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LppClass {
    Positive,
    Negative,
}

impl LppClass {
    pub const TAGS: [&'static str; 2] = ["positive", "negative"];

    pub fn as_str(self) -> &'static str {
        match self {
            LppClass::Positive => "positive",
            LppClass::Negative => "negative",
        }
    }
}

/// With probability 1/2 the gold phrase follows the answer marker and the
/// output is the scheme's positive label; otherwise a different phrase with
/// the same function word is used and the output is the negative label.
/// `None` when extraction fails or no negative is available.
pub fn gen_lpp_cls<R: Rng + ?Sized>(
    window: &SentenceWindow,
    pool: &PhrasePool,
    scheme: &LabelScheme,
    function_words: &FunctionWords,
    rng: &mut R,
) -> Option<Example> {
    let extraction = last_extraction(window, function_words)?;
    let (class, candidate) = if rng.random_bool(0.5) {
        (LppClass::Positive, extraction.phrase.clone())
    } else {
        let negative = pool.sample_negative(&extraction.function_word, &extraction.phrase, rng)?;
        (LppClass::Negative, negative.to_string())
    };
    let label_index = match class {
        LppClass::Positive => 0,
        LppClass::Negative => 1,
    };
    let input = format!(
        "{} {ANSWER_MARKER} {candidate}",
        question_input(window, &extraction)
    );
    Some(
        Example::new(
            TaskKind::LppCls,
            input,
            scheme.class_labels[label_index].clone(),
        )
        .with_window(window)
        .with_meta("class", class.as_str())
        .with_meta("function_word", extraction.function_word)
        .with_meta("gold_phrase", extraction.phrase)
        .with_meta("candidate", candidate)
        .with_meta("label_scheme", scheme.scheme_id.as_str()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::test_util::window;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fw() -> FunctionWords {
        FunctionWords::builtin()
    }

    #[test]
    fn picks_last_function_word() {
        let e = extract_last_phrase(&Sentence::from_text("she walked to the old mill ."), &fw())
            .unwrap();
        assert_eq!(e.function_word, "the");
        assert_eq!(e.function_word_index, 3);
        assert_eq!(e.phrase, "the old mill");
    }

    #[test]
    fn attached_punctuation_is_stripped() {
        let e = extract_last_phrase(&Sentence::from_text("she walked to the old mill."), &fw())
            .unwrap();
        assert_eq!(e.phrase, "the old mill");
    }

    #[test]
    fn no_function_word() {
        assert!(extract_last_phrase(&Sentence::from_text("run fast now"), &fw()).is_none());
    }

    #[test]
    fn first_half_rejected() {
        assert!(extract_last_phrase(&Sentence::from_text("the dog barked loud"), &fw()).is_none());
    }

    #[test]
    fn midpoint_is_eligible() {
        // len 4, ceil(4/2) = 2
        let e = extract_last_phrase(&Sentence::from_text("dogs bark at night"), &fw()).unwrap();
        assert_eq!(e.phrase, "at night");
        // len 5, ceil(5/2) = 3; "at" at 2 fails
        assert!(
            extract_last_phrase(&Sentence::from_text("dogs bark at night outside"), &fw())
                .is_none()
        );
    }

    #[test]
    fn lpp_gen_hand_trace() {
        let w = window(&[
            "It was cold.",
            "Nobody came.",
            "she walked to the old mill .",
        ]);
        let ex = gen_lpp_gen(&w, &fw()).unwrap();
        assert_eq!(
            ex.input_text,
            "It was cold. Nobody came. Question: she walked to ?"
        );
        assert!(ex.input_text.ends_with("Question: she walked to ?"));
        assert_eq!(ex.output_text, "the old mill");
        assert!(!ex.output_text.contains('?'));
    }

    #[test]
    fn lpp_gen_none_on_failed_extraction() {
        assert!(gen_lpp_gen(&window(&["A b.", "C d.", "run fast now"]), &fw()).is_none());
    }

    fn pool(phrases: &[&str]) -> PhrasePool {
        let mut p = PhrasePool::new();
        for s in phrases {
            p.add_sentences([&Sentence::from_text(s)], &fw());
        }
        p.finish()
    }

    #[test]
    fn negative_excludes_gold() {
        let p = pool(&[
            "we all saw the old mill",
            "we all saw the red barn",
            "we all saw the old mill",
        ]);
        assert_eq!(p.phrases("the").len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(
                p.sample_negative("the", "the old mill", &mut rng),
                Some("the red barn")
            );
        }
        let single = pool(&["we all saw the old mill"]);
        assert_eq!(
            single.sample_negative("the", "the old mill", &mut rng),
            None
        );
        assert_eq!(single.sample_negative("of", "of it", &mut rng), None);
    }

    #[test]
    fn positive_branch_uses_positive_label() {
        let w = window(&[
            "It was cold.",
            "Nobody came.",
            "she walked to the old mill .",
        ]);
        let p = pool(&["we all saw the red barn"]);
        let scheme = LabelScheme::binary(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [false, false];
        for _ in 0..200 {
            let ex = gen_lpp_cls(&w, &p, &scheme, &fw(), &mut rng).unwrap();
            match ex.class().unwrap() {
                "positive" => {
                    assert_eq!(ex.output_text, "Yes");
                    assert!(ex
                        .input_text
                        .ends_with("Question: she walked to ? Answer: the old mill"));
                    seen[0] = true;
                }
                "negative" => {
                    assert_eq!(ex.output_text, "No");
                    assert!(ex.input_text.ends_with("Answer: the red barn"));
                    seen[1] = true;
                }
                other => panic!("unexpected class {other}"),
            }
        }
        assert_eq!(seen, [true, true]);
    }
}
