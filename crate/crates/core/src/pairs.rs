//! Segment pairs for sentence-order and next-sentence prediction, and
//! n-gram mask plans for masked language modelling.
//!
//! Segments are lists of whole-word tokens. A pair is formatted as
//! `[CLS] a [SEP] b [SEP]`; the three markers count against `max_len`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::taskgen::{Example, Meta, OtherDocuments, TaskKind};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
/// `[CLS]` and two `[SEP]`.
pub const MARKER_TOKENS: usize = 3;

// ---------------------------------------------------------------------------
// n-gram masking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramMaskConfig {
    pub max_n: usize,
    pub mask_budget: f64,
}

impl Default for NgramMaskConfig {
    fn default() -> Self {
        Self {
            max_n: 3,
            mask_budget: 0.15,
        }
    }
}

impl NgramMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_n < 1 {
            return Err(Error::config("max_n must be >= 1"));
        }
        if !(self.mask_budget > 0.0 && self.mask_budget < 0.5) {
            return Err(Error::config(format!(
                "mask_budget must be in (0, 0.5), got {}",
                self.mask_budget
            )));
        }
        Ok(())
    }

    /// Largest number of tokens a plan over `len` tokens may mask.
    pub fn budget(&self, len: usize) -> usize {
        // guard against 0.15 * 100 = 15.000000000000002
        (self.mask_budget * len as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

/// `p(n) = (1/n) / sum_{k=1..max_n} 1/k` for `n = 1..=max_n`.
pub fn ngram_length_probabilities(max_n: usize) -> Vec<f64> {
    let weights: Vec<f64> = (1..=max_n).map(|n| 1.0 / n as f64).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draw a span length from the harmonic law above.
pub fn sample_ngram_length<R: Rng + ?Sized>(cfg: &NgramMaskConfig, rng: &mut R) -> usize {
    let probs = ngram_length_probabilities(cfg.max_n);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    cfg.max_n
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    /// `(start, length)` pairs sorted by start.
    pub spans: Vec<(usize, usize)>,
}

impl MaskPlan {
    pub fn masked_count(&self) -> usize {
        self.spans.iter().map(|&(_, n)| n).sum()
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.spans.iter().any(|&(s, n)| pos >= s && pos < s + n)
    }
}

/// Plan masked spans over `len` tokens.
///
/// Lengths follow [`sample_ngram_length`]; each start is uniform over the
/// positions where the span neither overlaps nor touches an existing span
/// and does not straddle `boundary` (the first token of the second segment).
/// Planning stops once the remaining budget is smaller than `max_n`, so no
/// span is ever truncated or rejected for its length; a plan whose whole
/// budget is below `max_n` gets a single attempt.
pub fn plan_masks<R: Rng + ?Sized>(
    len: usize,
    boundary: Option<usize>,
    cfg: &NgramMaskConfig,
    rng: &mut R,
) -> MaskPlan {
    let budget = cfg.budget(len);
    let mut used = vec![false; len];
    let mut spans = Vec::new();
    let mut total = 0;
    loop {
        let room = budget - total;
        if room == 0 || (!spans.is_empty() && room < cfg.max_n) {
            break;
        }
        let n = sample_ngram_length(cfg, rng);
        if n > room || n > len {
            break;
        }
        let free = |s: usize| {
            let lo = s.saturating_sub(1);
            let hi = (s + n + 1).min(len);
            let crosses = boundary.is_some_and(|b| s < b && b < s + n);
            !crosses && !used[lo..hi].iter().any(|&u| u)
        };
        let starts: Vec<usize> = (0..=len - n).filter(|&s| free(s)).collect();
        if starts.is_empty() {
            break;
        }
        let start = starts[rng.random_range(0..starts.len())];
        used[start..start + n].iter_mut().for_each(|u| *u = true);
        spans.push((start, n));
        total += n;
    }
    spans.sort_unstable();
    MaskPlan { spans }
}

// ---------------------------------------------------------------------------
// Segment pairs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Positive,
    Negative,
}

impl PairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Positive => "positive",
            PairLabel::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairVariant {
    #[serde(rename = "SOP")]
    Sop,
    #[serde(rename = "NSP")]
    Nsp,
}

impl PairVariant {
    pub fn task(self) -> TaskKind {
        match self {
            PairVariant::Sop => TaskKind::Sop,
            PairVariant::Nsp => TaskKind::Nsp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub max_len: usize,
    /// Probability of drawing a target length below `max_len`.
    pub short_seq_prob: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            max_len: 512,
            short_seq_prob: 0.1,
        }
    }
}

impl PairConfig {
    fn token_budget(&self) -> usize {
        self.max_len.saturating_sub(MARKER_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPairExample {
    pub seg_a: Vec<String>,
    pub seg_b: Vec<String>,
    pub label: PairLabel,
    pub variant: PairVariant,
    pub meta: Meta,
}

impl SegmentPairExample {
    pub fn total_len(&self) -> usize {
        self.seg_a.len() + self.seg_b.len() + MARKER_TOKENS
    }

    pub fn is_short(&self) -> bool {
        self.meta
            .get("short")
            .and_then(|v| v.as_bool())
            .unwrap_or(false)
    }

    pub fn swapped(&self) -> Self {
        Self {
            seg_a: self.seg_b.clone(),
            seg_b: self.seg_a.clone(),
            ..self.clone()
        }
    }

    pub fn formatted(&self) -> String {
        format!(
            "{CLS} {} {SEP} {} {SEP}",
            self.seg_a.join(" "),
            self.seg_b.join(" ")
        )
    }

    pub fn to_example(&self) -> Example {
        let mut ex = Example::new(
            self.variant.task(),
            self.formatted(),
            self.label.as_str().to_string(),
        );
        ex.meta = self.meta.clone();
        ex
    }
}

/// Two adjacent segments cut from one document, before labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCut {
    pub doc_id: String,
    pub seg_a: Vec<String>,
    pub seg_b: Vec<String>,
    /// Sentence index where the stretch starts and where `seg_b` starts.
    pub start_sentence: usize,
    pub cut_sentence: usize,
    pub target_len: usize,
    pub short: bool,
}

fn sentence_tokens(doc: &Document, range: std::ops::Range<usize>) -> Vec<String> {
    doc.sentences[range]
        .iter()
        .flat_map(|s| s.tokens.iter().cloned())
        .collect()
}

/// Trim the pair to `target` tokens, from the front of `a` and the back of
/// `b`, so the two stay adjacent at the cut.
fn truncate_pair(a: &mut Vec<String>, b: &mut Vec<String>, target: usize) {
    while a.len() + b.len() > target {
        if a.len() > b.len() {
            a.remove(0);
        } else {
            b.pop();
        }
    }
}

/// Choose a target length and cut a stretch of consecutive sentences into
/// two adjacent segments at a uniformly chosen sentence boundary.
pub fn cut_pair<R: Rng + ?Sized>(doc: &Document, cfg: &PairConfig, rng: &mut R) -> Option<PairCut> {
    let budget = cfg.token_budget();
    let short = rng.random_bool(cfg.short_seq_prob);
    let target = if short && budget > 2 {
        rng.random_range(2..budget)
    } else {
        budget
    };

    let n = doc.sentences.len();
    if n < 2 || target < 2 {
        return None;
    }
    let start = rng.random_range(0..n - 1);
    let mut end = start;
    let mut tokens = 0;
    while end < n && (tokens < target || end - start < 2) {
        tokens += doc.sentences[end].len();
        end += 1;
    }
    let cut = rng.random_range(start + 1..end);
    let mut seg_a = sentence_tokens(doc, start..cut);
    let mut seg_b = sentence_tokens(doc, cut..end);
    truncate_pair(&mut seg_a, &mut seg_b, target);
    if seg_a.is_empty() || seg_b.is_empty() {
        return None;
    }
    Some(PairCut {
        doc_id: doc.doc_id.clone(),
        seg_a,
        seg_b,
        start_sentence: start,
        cut_sentence: cut,
        target_len: target,
        short,
    })
}

/// Label a cut. SOP negatives swap the segments; NSP negatives replace the
/// second segment with text from another document.
pub fn finish_pair<O: OtherDocuments, R: Rng + ?Sized>(
    cut: PairCut,
    variant: PairVariant,
    label: PairLabel,
    others: &O,
    rng: &mut R,
) -> Option<SegmentPairExample> {
    let mut meta = Meta::new();
    meta.insert("doc_id".into(), json!(cut.doc_id));
    meta.insert("short".into(), json!(cut.short));
    meta.insert("target_len".into(), json!(cut.target_len));
    meta.insert("start_sentence".into(), json!(cut.start_sentence));
    meta.insert("cut_sentence".into(), json!(cut.cut_sentence));

    let (seg_a, seg_b) = match (variant, label) {
        (_, PairLabel::Positive) => (cut.seg_a, cut.seg_b),
        (PairVariant::Sop, PairLabel::Negative) => (cut.seg_b, cut.seg_a),
        (PairVariant::Nsp, PairLabel::Negative) => {
            let other = others.sample_other(&cut.doc_id, 1, rng)?;
            let want = cut.target_len - cut.seg_a.len();
            let m = other.sentences.len();
            let start = rng.random_range(0..m);
            let mut end = start;
            let mut taken = 0;
            while end < m && taken < want {
                taken += other.sentences[end].len();
                end += 1;
            }
            let mut seg_a = cut.seg_a;
            let mut seg_b = sentence_tokens(other, start..end);
            truncate_pair(&mut seg_a, &mut seg_b, cut.target_len);
            if seg_b.is_empty() {
                return None;
            }
            meta.insert("doc_id_b".into(), json!(other.doc_id));
            meta.insert("start_sentence_b".into(), json!(start));
            (seg_a, seg_b)
        }
    };
    meta.entry("doc_id_b".to_string())
        .or_insert_with(|| json!(cut.doc_id));
    Some(SegmentPairExample {
        seg_a,
        seg_b,
        label,
        variant,
        meta,
    })
}

/// Cut a pair and label it positive or negative with equal probability.
/// `None` when the document (or, for NSP negatives, the pool) cannot
/// supply two non-empty segments.
pub fn make_pair<O: OtherDocuments, R: Rng + ?Sized>(
    doc: &Document,
    variant: PairVariant,
    others: &O,
    cfg: &PairConfig,
    rng: &mut R,
) -> Option<SegmentPairExample> {
    let cut = cut_pair(doc, cfg, rng)?;
    let label = if rng.random_bool(0.5) {
        PairLabel::Positive
    } else {
        PairLabel::Negative
    };
    finish_pair(cut, variant, label, others, rng)
}

/// Masked-LM example from a pair: masked tokens become `[MASK]`, the output
/// lists them in order, and `meta["mask_spans"]` holds `(start, len)` over
/// the concatenated segment tokens.
pub fn mlm_example<R: Rng + ?Sized>(
    pair: &SegmentPairExample,
    cfg: &NgramMaskConfig,
    rng: &mut R,
) -> Option<Example> {
    let tokens: Vec<&str> = pair
        .seg_a
        .iter()
        .chain(&pair.seg_b)
        .map(String::as_str)
        .collect();
    let boundary = pair.seg_a.len();
    let plan = plan_masks(tokens.len(), Some(boundary), cfg, rng);
    if plan.spans.is_empty() {
        return None;
    }
    let mut masked: Vec<&str> = tokens.clone();
    let mut targets = Vec::with_capacity(plan.masked_count());
    for &(s, n) in &plan.spans {
        for pos in s..s + n {
            targets.push(tokens[pos]);
            masked[pos] = MASK;
        }
    }
    let input = format!(
        "{CLS} {} {SEP} {} {SEP}",
        masked[..boundary].join(" "),
        masked[boundary..].join(" ")
    );
    let mut ex = Example::new(TaskKind::Mlm, input, targets.join(" "));
    ex.meta = pair.meta.clone();
    ex.meta.insert("mask_spans".into(), json!(plan.spans));
    ex.meta.insert("segment_boundary".into(), json!(boundary));
    Some(ex)
}
