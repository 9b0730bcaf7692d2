//! Document ingestion, sentence segmentation and sentence windows.

use std::collections::HashMap;
use std::io::BufRead;

use rand::Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::lexicon::Abbreviations;
use crate::seed;

pub const DEFAULT_DOMAIN: &str = "default";

/// NFC-normalize and collapse every whitespace run to a single space.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        Self {
            text: tokens.join(" "),
            tokens,
        }
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(text.split_whitespace().map(str::to_string).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub domain: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Whitespace-joined text of sentences `[start, start + len)`.
    pub fn slice_text(&self, start: usize, len: usize) -> String {
        join_sentences(&self.sentences[start..start + len])
    }
}

pub fn join_sentences(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Consecutive sentences taken from one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceWindow {
    pub doc_id: String,
    pub domain: String,
    pub start_index: usize,
    pub sentences: Vec<Sentence>,
}

impl SentenceWindow {
    pub fn from_document(doc: &Document, start_index: usize, len: usize) -> Self {
        Self {
            doc_id: doc.doc_id.clone(),
            domain: doc.domain.clone(),
            start_index,
            sentences: doc.sentences[start_index..start_index + len].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn text(&self) -> String {
        join_sentences(&self.sentences)
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str))
            .collect()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '\u{bb}'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '[', '\u{ab}'];

/// Rule-based splitter: a sentence ends at a token whose last non-closing
/// character is `.`, `!` or `?` when the next token starts with an uppercase
/// letter, a digit or an opening quote, unless the token is a listed
/// abbreviation. A fragment of fewer than two tokens with no alphanumeric
/// character is merged into its neighbour.
#[derive(Debug, Clone, Default)]
pub struct Segmenter {
    abbreviations: Abbreviations,
}

impl Segmenter {
    pub fn new(abbreviations: Abbreviations) -> Self {
        Self { abbreviations }
    }

    fn ends_sentence(&self, token: &str) -> bool {
        let core = token.trim_end_matches(CLOSERS);
        if !core.ends_with(['.', '!', '?']) {
            return false;
        }
        !(core.ends_with('.') && self.abbreviations.matches(core))
    }

    fn starts_sentence(token: &str) -> bool {
        token
            .chars()
            .next()
            .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit() || OPENERS.contains(&c))
    }

    pub fn segment(&self, text: &str) -> Vec<Sentence> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.is_empty() {
            return Vec::new();
        }

        let mut fragments: Vec<Vec<&str>> = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for (i, token) in tokens.iter().enumerate() {
            current.push(token);
            let boundary = tokens
                .get(i + 1)
                .is_some_and(|next| self.ends_sentence(token) && Self::starts_sentence(next));
            if boundary {
                fragments.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            fragments.push(current);
        }

        let mut merged: Vec<Vec<&str>> = Vec::with_capacity(fragments.len());
        let mut carry: Vec<&str> = Vec::new();
        for fragment in fragments {
            if is_stray(&fragment) {
                match merged.last_mut() {
                    Some(prev) => prev.extend(fragment),
                    None => carry.extend(fragment),
                }
            } else if carry.is_empty() {
                merged.push(fragment);
            } else {
                let mut joined = std::mem::take(&mut carry);
                joined.extend(fragment);
                merged.push(joined);
            }
        }
        if !carry.is_empty() {
            merged.push(carry);
        }

        merged
            .into_iter()
            .map(|f| Sentence::from_tokens(f.into_iter().map(str::to_string).collect()))
            .collect()
    }
}

fn is_stray(fragment: &[&str]) -> bool {
    fragment.len() < 2
        && !fragment
            .iter()
            .any(|t| t.chars().any(char::is_alphanumeric))
}

/// Segment with the built-in abbreviation list.
pub fn segment(text: &str) -> Vec<Sentence> {
    Segmenter::default().segment(text)
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One JSON object per line with `text` and optional `id` / `domain`.
    #[default]
    Jsonl,
    /// Blank-line separated blocks of plain text.
    Text,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    text: String,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    domain: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub documents: u64,
    pub malformed: u64,
    pub empty: u64,
    pub renamed: u64,
}

impl IngestStats {
    pub fn warnings(&self) -> u64 {
        self.malformed + self.empty
    }
}

/// Turns raw records into documents. Keeps the id registry so that ids stay
/// unique across every source fed through one instance.
#[derive(Debug, Default)]
pub struct Ingester {
    segmenter: Segmenter,
    default_domain: Option<String>,
    seen: HashMap<String, u64>,
    stats: IngestStats,
}

impl Ingester {
    pub fn new(segmenter: Segmenter) -> Self {
        Self {
            segmenter,
            ..Self::default()
        }
    }

    /// Domain applied to records that carry none.
    pub fn with_default_domain(mut self, domain: impl Into<String>) -> Self {
        self.default_domain = Some(domain.into());
        self
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    fn unique_id(&mut self, base: String) -> String {
        let count = self.seen.entry(base.clone()).or_insert(0);
        let id = if *count == 0 {
            base
        } else {
            self.stats.renamed += 1;
            format!("{base}#{count}")
        };
        *count += 1;
        id
    }

    /// Build a document from one record; `None` (and a counted warning)
    /// when the text is empty after normalization.
    pub fn document(
        &mut self,
        text: &str,
        id: Option<String>,
        domain: Option<String>,
    ) -> Option<Document> {
        let normalized = normalize_text(text);
        if normalized.is_empty() {
            self.stats.empty += 1;
            log::warn!(
                "skipping empty document {}",
                id.as_deref().unwrap_or("<no id>")
            );
            return None;
        }
        let base = id.unwrap_or_else(|| seed::hash64_hex(normalized.as_bytes()));
        let doc_id = self.unique_id(base);
        let domain = domain
            .or_else(|| self.default_domain.clone())
            .unwrap_or_else(|| DEFAULT_DOMAIN.to_string());
        self.stats.documents += 1;
        Some(Document {
            doc_id,
            domain,
            sentences: self.segmenter.segment(&normalized),
        })
    }

    pub fn record(&mut self, line: &str) -> Option<Document> {
        if line.trim().is_empty() {
            return None;
        }
        match serde_json::from_str::<RawRecord>(line) {
            Ok(rec) => self.document(&rec.text, rec.id, rec.domain),
            Err(err) => {
                self.stats.malformed += 1;
                log::warn!("skipping malformed record: {err}");
                None
            }
        }
    }

    /// Read every document from `reader`.
    pub fn read_all<R: BufRead>(
        &mut self,
        reader: R,
        format: InputFormat,
    ) -> Result<Vec<Document>> {
        let mut docs = Vec::new();
        match format {
            InputFormat::Jsonl => {
                for line in reader.lines() {
                    docs.extend(self.record(&line?));
                }
            }
            InputFormat::Text => {
                let mut block = String::new();
                for line in reader.lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        if !block.is_empty() {
                            docs.extend(self.document(&block, None, None));
                            block.clear();
                        }
                    } else {
                        block.push_str(&line);
                        block.push('\n');
                    }
                }
                if !block.is_empty() {
                    docs.extend(self.document(&block, None, None));
                }
            }
        }
        Ok(docs)
    }
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub min_window: usize,
    pub max_window: usize,
    /// Distance between window starts. `None` means non-overlapping windows.
    #[serde(default)]
    pub stride: Option<usize>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            min_window: 3,
            max_window: 5,
            stride: None,
        }
    }
}

impl WindowConfig {
    pub fn fixed(len: usize) -> Self {
        Self {
            min_window: len,
            max_window: len,
            stride: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_window < 3 {
            return Err(Error::config(format!(
                "min_window must be >= 3, got {}",
                self.min_window
            )));
        }
        if self.max_window < self.min_window {
            return Err(Error::config(format!(
                "max_window ({}) must be >= min_window ({})",
                self.max_window, self.min_window
            )));
        }
        if self.stride == Some(0) {
            return Err(Error::config("stride must be positive"));
        }
        Ok(())
    }
}

/// Iterator over windows of one document, see [`windows`].
pub struct Windows<'a, R> {
    doc: &'a Document,
    cfg: WindowConfig,
    rng: &'a mut R,
    offset: usize,
}

impl<R: Rng> Iterator for Windows<'_, R> {
    type Item = SentenceWindow;

    fn next(&mut self) -> Option<SentenceWindow> {
        let total = self.doc.sentences.len();
        let remaining = total.checked_sub(self.offset)?;
        if remaining < self.cfg.min_window {
            return None;
        }
        let drawn = self
            .rng
            .random_range(self.cfg.min_window..=self.cfg.max_window);
        let len = drawn.min(remaining);
        let window = SentenceWindow::from_document(self.doc, self.offset, len);
        self.offset += self.cfg.stride.unwrap_or(len);
        Some(window)
    }
}

/// Consecutive windows with lengths drawn uniformly from
/// `[min_window, max_window]`, clamped to what is left of the document.
/// A tail shorter than `min_window` is dropped.
pub fn windows<'a, R: Rng>(doc: &'a Document, cfg: WindowConfig, rng: &'a mut R) -> Windows<'a, R> {
    Windows {
        doc,
        cfg,
        rng,
        offset: 0,
    }
}

// ---------------------------------------------------------------------------
// Subsampling
// ---------------------------------------------------------------------------

pub const DUPLICATE_SUFFIX: &str = "#dup";

/// Keep each document with probability `min(ratio, 1)`; for `ratio > 1`,
/// keep every document and add a duplicate with probability `ratio - 1`.
/// Decisions use a per-document generator, so the result does not depend on
/// input partitioning.
pub fn subsample(docs: Vec<Document>, ratio: f64, global_seed: u64) -> Result<Vec<Document>> {
    if !(ratio > 0.0 && ratio <= 2.0) {
        return Err(Error::config(format!(
            "ratio must be in (0, 2], got {ratio}"
        )));
    }
    if ratio == 1.0 {
        return Ok(docs);
    }
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut rng = seed::doc_rng(global_seed, &doc.doc_id, "subsample");
        if ratio < 1.0 {
            if rng.random_bool(ratio) {
                out.push(doc);
            }
        } else {
            let duplicate = rng.random_bool(ratio - 1.0);
            if duplicate {
                let mut dup = doc.clone();
                dup.doc_id.push_str(DUPLICATE_SUFFIX);
                out.push(doc);
                out.push(dup);
            } else {
                out.push(doc);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn texts(sentences: &[Sentence]) -> Vec<&str> {
        sentences.iter().map(|s| s.text.as_str()).collect()
    }

    fn doc_with(n: usize) -> Document {
        Document {
            doc_id: "d".into(),
            domain: DEFAULT_DOMAIN.into(),
            sentences: (0..n)
                .map(|i| Sentence::from_text(&format!("Sentence number {i}.")))
                .collect(),
        }
    }

    #[test]
    fn segments_simple() {
        assert_eq!(
            texts(&segment("It rains. We stay.")),
            ["It rains.", "We stay."]
        );
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            texts(&segment("Dr. Smith left. He ran.")),
            ["Dr. Smith left.", "He ran."]
        );
    }

    #[test]
    fn single_fragment() {
        assert_eq!(texts(&segment("hello")), ["hello"]);
    }

    #[test]
    fn no_split_before_lowercase() {
        assert_eq!(
            texts(&segment("It was 3 p.m. and late. Then dawn.")),
            ["It was 3 p.m. and late.", "Then dawn."]
        );
    }

    #[test]
    fn quotes_and_digits_start_sentences() {
        assert_eq!(
            texts(&segment(
                "He said \"stop.\" \"Why?\" she asked. 42 people came."
            )),
            [
                "He said \"stop.\"",
                "\"Why?\" she asked.",
                "42 people came."
            ]
        );
    }

    #[test]
    fn stray_punctuation_is_merged() {
        assert_eq!(
            texts(&segment("... Then it ended. ! Next one.")),
            ["... Then it ended. !", "Next one."]
        );
        assert_eq!(texts(&segment("Wait! ? Fine.")), ["Wait! ?", "Fine."]);
    }

    #[test]
    fn single_letter_sentences_survive() {
        assert_eq!(texts(&segment("A. B. C.")), ["A.", "B.", "C."]);
    }

    #[test]
    fn ingest_record_segments() {
        let mut ing = Ingester::default();
        let doc = ing.record(r#"{"text":"A. B. C."}"#).unwrap();
        assert_eq!(doc.sentences.len(), 3);
        assert_eq!(doc.domain, DEFAULT_DOMAIN);
        assert_eq!(doc.doc_id.len(), 16);
    }

    #[test]
    fn ingest_skips_empty_and_malformed() {
        let mut ing = Ingester::default();
        assert!(ing.record(r#"{"text":""}"#).is_none());
        assert!(ing.record(r#"{"text":"   "}"#).is_none());
        assert!(ing.record(r#"{"txt":"x"}"#).is_none());
        assert!(ing.record("not json").is_none());
        assert_eq!(ing.stats().empty, 2);
        assert_eq!(ing.stats().malformed, 2);
        assert_eq!(ing.stats().warnings(), 4);
    }

    #[test]
    fn duplicate_text_gets_ordinal_suffix() {
        let mut ing = Ingester::default();
        let a = ing.record(r#"{"text":"Same text here."}"#).unwrap();
        let b = ing.record(r#"{"text":"Same  text here."}"#).unwrap();
        let c = ing
            .record(r#"{"text":"Same text here.","domain":"news"}"#)
            .unwrap();
        assert_eq!(b.doc_id, format!("{}#1", a.doc_id));
        assert_eq!(c.doc_id, format!("{}#2", a.doc_id));
        assert_eq!(c.domain, "news");
    }

    #[test]
    fn supplied_id_and_text_mode() {
        let mut ing = Ingester::default().with_default_domain("books");
        let input = "First block. Still first.\nmore lines\n\n\nSecond block here.\n";
        let docs = ing.read_all(input.as_bytes(), InputFormat::Text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].domain, "books");
        assert_eq!(
            texts(&docs[0].sentences),
            ["First block.", "Still first. more lines"]
        );

        let doc = ing.record(r#"{"text":"x y","id":"abc"}"#).unwrap();
        assert_eq!(doc.doc_id, "abc");
    }

    #[test]
    fn exact_tiling() {
        let doc = doc_with(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let starts: Vec<usize> = windows(&doc, WindowConfig::fixed(5), &mut rng)
            .map(|w| w.start_index)
            .collect();
        assert_eq!(starts, [0, 5]);
    }

    #[test]
    fn short_document_yields_nothing() {
        let doc = doc_with(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(windows(&doc, WindowConfig::fixed(5), &mut rng).count(), 0);
    }

    #[test]
    fn pinned_rng_window_lengths() {
        // An all-ones generator makes random_range pick the top of the range: 4, 4.
        struct Saturated;
        impl rand::RngCore for Saturated {
            fn next_u32(&mut self) -> u32 {
                u32::MAX
            }
            fn next_u64(&mut self) -> u64 {
                u64::MAX
            }
            fn fill_bytes(&mut self, dst: &mut [u8]) {
                dst.fill(0xff);
            }
        }
        let doc = doc_with(8);
        let mut rng = Saturated;
        let cfg = WindowConfig {
            min_window: 3,
            max_window: 4,
            stride: None,
        };
        let ws: Vec<(usize, usize)> = windows(&doc, cfg, &mut rng)
            .map(|w| (w.start_index, w.len()))
            .collect();
        assert_eq!(ws, [(0, 4), (4, 4)]);
    }

    #[test]
    fn stride_override_allows_overlap() {
        let doc = doc_with(7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let cfg = WindowConfig {
            min_window: 3,
            max_window: 3,
            stride: Some(2),
        };
        let starts: Vec<usize> = windows(&doc, cfg, &mut rng)
            .map(|w| w.start_index)
            .collect();
        assert_eq!(starts, [0, 2, 4]);
    }

    #[test]
    fn window_config_validation() {
        assert!(WindowConfig::fixed(2).validate().is_err());
        assert!(WindowConfig {
            min_window: 4,
            max_window: 3,
            stride: None
        }
        .validate()
        .is_err());
        assert!(WindowConfig::default().validate().is_ok());
    }

    #[test]
    fn subsample_rejects_bad_ratio() {
        assert!(subsample(vec![], 0.0, 1).is_err());
        assert!(subsample(vec![], -0.5, 1).is_err());
        assert!(subsample(vec![], 2.5, 1).is_err());
    }

    #[test]
    fn subsample_identity_at_one() {
        let docs: Vec<Document> = (0..20)
            .map(|i| Document {
                doc_id: format!("d{i}"),
                ..doc_with(1)
            })
            .collect();
        assert_eq!(subsample(docs.clone(), 1.0, 9).unwrap(), docs);
    }

    #[test]
    fn subsample_binomial_oracle() {
        // keep count ~ Binomial(10000, 0.1): mean 1000, sd sqrt(900) = 30
        let docs: Vec<Document> = (0..10_000)
            .map(|i| Document {
                doc_id: format!("d{i}"),
                ..doc_with(1)
            })
            .collect();
        let kept = subsample(docs, 0.1, 42).unwrap().len() as f64;
        assert!((kept - 1000.0).abs() <= 3.0 * 30.0, "kept {kept}");
    }

    #[test]
    fn subsample_duplicates_above_one() {
        let docs: Vec<Document> = (0..4000)
            .map(|i| Document {
                doc_id: format!("d{i}"),
                ..doc_with(1)
            })
            .collect();
        let out = subsample(docs, 1.5, 5).unwrap();
        let dups = out
            .iter()
            .filter(|d| d.doc_id.ends_with(DUPLICATE_SUFFIX))
            .count() as f64;
        // Binomial(4000, 0.5): sd ~ 31.6
        assert!((dups - 2000.0).abs() < 3.0 * 31.7, "dups {dups}");
        assert_eq!(out.len() - dups as usize, 4000);
    }

    #[test]
    fn subsample_is_partition_invariant() {
        let docs: Vec<Document> = (0..500)
            .map(|i| Document {
                doc_id: format!("d{i}"),
                ..doc_with(1)
            })
            .collect();
        let whole = subsample(docs.clone(), 0.3, 11).unwrap();
        let mut parts = subsample(docs[..200].to_vec(), 0.3, 11).unwrap();
        parts.extend(subsample(docs[200..].to_vec(), 0.3, 11).unwrap());
        assert_eq!(whole, parts);
    }

    proptest! {
        #[test]
        fn segmentation_is_idempotent(words in prop::collection::vec("[A-Za-z0-9]{1,6}[.!?,]?", 1..40)) {
            let text = words.join(" ");
            let first = segment(&text);
            let rejoined = join_sentences(&first);
            prop_assert_eq!(&rejoined, &text);
            prop_assert_eq!(segment(&rejoined), first);
        }

        #[test]
        fn windows_match_source_slices(n in 0usize..40, min in 3usize..6, extra in 0usize..4, seed: u64) {
            let doc = doc_with(n);
            let cfg = WindowConfig { min_window: min, max_window: min + extra, stride: None };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut next_start = 0;
            for w in windows(&doc, cfg, &mut rng) {
                prop_assert_eq!(w.start_index, next_start);
                prop_assert!(w.len() >= min);
                prop_assert_eq!(&w.sentences[..], &doc.sentences[w.start_index..w.start_index + w.len()]);
                next_start = w.start_index + w.len();
            }
            prop_assert!(n - next_start < min || n < min);
        }
    }
}
