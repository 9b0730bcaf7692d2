//! Classification over input provenance: original, shuffled, different
//! document and multiple documents.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde_json::{json, Value};

use super::{Example, TaskKind};
use crate::corpus::{join_sentences, Document, SentenceWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClClass {
    Original,
    Shuffled,
    DifferentDoc,
    MultiDoc,
}

impl ClClass {
    pub const EXTRA: [ClClass; 3] = [ClClass::Shuffled, ClClass::DifferentDoc, ClClass::MultiDoc];

    pub fn as_str(self) -> &'static str {
        match self {
            ClClass::Original => "original",
            ClClass::Shuffled => "shuffled",
            ClClass::DifferentDoc => "different_doc",
            ClClass::MultiDoc => "multi_doc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ClClass::Original,
            ClClass::Shuffled,
            ClClass::DifferentDoc,
            ClClass::MultiDoc,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

/// Source of documents other than the window's own.
pub trait OtherDocuments {
    /// A document other than `exclude` with at least `min_sentences`
    /// sentences, chosen at random.
    fn sample_other<R: Rng + ?Sized>(
        &self,
        exclude: &str,
        min_sentences: usize,
        rng: &mut R,
    ) -> Option<&Document>;
}

/// Documents of one shard, indexed by sentence count.
#[derive(Debug, Clone)]
pub struct DocumentPool<'a> {
    docs: &'a [Document],
    by_len: Vec<usize>,
}

impl<'a> DocumentPool<'a> {
    pub fn new(docs: &'a [Document]) -> Self {
        let mut by_len: Vec<usize> = (0..docs.len()).collect();
        by_len.sort_by_key(|&i| (docs[i].sentences.len(), i));
        Self { docs, by_len }
    }

    pub fn docs(&self) -> &'a [Document] {
        self.docs
    }
}

impl OtherDocuments for DocumentPool<'_> {
    fn sample_other<R: Rng + ?Sized>(
        &self,
        exclude: &str,
        min_sentences: usize,
        rng: &mut R,
    ) -> Option<&Document> {
        let first = self
            .by_len
            .partition_point(|&i| self.docs[i].sentences.len() < min_sentences);
        let eligible = &self.by_len[first..];
        if eligible.is_empty() {
            return None;
        }
        for _ in 0..8 {
            let doc = &self.docs[eligible[rng.random_range(0..eligible.len())]];
            if doc.doc_id != exclude {
                return Some(doc);
            }
        }
        // Mostly-excluded pool: fall back to a uniform pick over the rest.
        let rest: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|&i| self.docs[i].doc_id != exclude)
            .collect();
        if rest.is_empty() {
            None
        } else {
            Some(&self.docs[rest[rng.random_range(0..rest.len())]])
        }
    }
}

/// The examples built from one window. All share `class_tags`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClGroup {
    pub class_tags: Vec<ClClass>,
    pub examples: Vec<Example>,
}

impl ClGroup {
    /// Stable key for the class set, e.g. `original+shuffled`.
    pub fn class_set_key(&self) -> String {
        self.class_tags
            .iter()
            .map(|c| c.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn tag_strs(&self) -> Vec<&'static str> {
        self.class_tags.iter().map(|c| c.as_str()).collect()
    }
}

fn segment(doc_id: &str, start: usize, len: usize) -> Value {
    json!([doc_id, start, len])
}

fn random_slice<'d, R: Rng + ?Sized>(
    doc: &'d Document,
    len: usize,
    rng: &mut R,
) -> (usize, &'d Document) {
    let start = rng.random_range(0..=doc.sentences.len() - len);
    (start, doc)
}

/// Uniformly random permutation of `0..n` other than the identity (n >= 2).
fn non_identity_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(rng);
        if order.iter().enumerate().any(|(i, &j)| i != j) {
            return order;
        }
    }
}

/// Build the class set for one window: the original plus one or two extra
/// input types. `Ok(None)` when another document with enough sentences is
/// needed but unavailable.
///
/// Each example records its provenance in `meta["segments"]` as
/// `[doc_id, start, len]` triples in text order; shuffled inputs also carry
/// `meta["order"]`, the permutation applied to the window's sentences.
pub fn build_cl_inputs<O: OtherDocuments, R: Rng + ?Sized>(
    window: &SentenceWindow,
    others: &O,
    rng: &mut R,
) -> Result<Option<ClGroup>> {
    let n = window.len();
    if n < 4 {
        return Err(Error::precondition(format!(
            "CL needs >= 4 sentences, got {n}"
        )));
    }
    let extra_count = rng.random_range(1..=2);
    let mut picks = index::sample(rng, ClClass::EXTRA.len(), extra_count).into_vec();
    picks.sort_unstable();
    let mut class_tags = vec![ClClass::Original];
    class_tags.extend(picks.into_iter().map(|i| ClClass::EXTRA[i]));

    let replaced = n.div_ceil(2);
    let kept = n - replaced;
    let mut examples = Vec::with_capacity(class_tags.len());
    for &class in &class_tags {
        let (text, meta_segments, order) = match class {
            ClClass::Original => (
                window.text(),
                vec![segment(&window.doc_id, window.start_index, n)],
                None,
            ),
            ClClass::Shuffled => {
                let order = non_identity_permutation(n, rng);
                let sentences: Vec<_> =
                    order.iter().map(|&i| window.sentences[i].clone()).collect();
                (
                    join_sentences(&sentences),
                    vec![segment(&window.doc_id, window.start_index, n)],
                    Some(order),
                )
            }
            ClClass::DifferentDoc => {
                let Some(other) = others.sample_other(&window.doc_id, n, rng) else {
                    return Ok(None);
                };
                let (start, doc) = random_slice(other, n, rng);
                (
                    doc.slice_text(start, n),
                    vec![segment(&doc.doc_id, start, n)],
                    None,
                )
            }
            ClClass::MultiDoc => {
                let Some(other) = others.sample_other(&window.doc_id, replaced, rng) else {
                    return Ok(None);
                };
                let (start, doc) = random_slice(other, replaced, rng);
                let text = format!(
                    "{} {}",
                    join_sentences(&window.sentences[..kept]),
                    doc.slice_text(start, replaced)
                );
                (
                    text,
                    vec![
                        segment(&window.doc_id, window.start_index, kept),
                        segment(&doc.doc_id, start, replaced),
                    ],
                    None,
                )
            }
        };
        let mut ex = Example::new(TaskKind::Cl, text, class.as_str().to_string())
            .with_window(window)
            .with_meta("class", class.as_str())
            .with_meta("segments", meta_segments);
        if let Some(order) = order {
            ex = ex.with_meta("order", order);
        }
        examples.push(ex);
    }
    examples.shuffle(rng);
    Ok(Some(ClGroup {
        class_tags,
        examples,
    }))
}

/// Rebuild a CL input from its recorded provenance.
pub fn rederive_cl_input(example: &Example, docs: &HashMap<&str, &Document>) -> Option<String> {
    let segments = example.meta.get("segments")?.as_array()?;
    let mut sentences = Vec::new();
    for seg in segments {
        let seg = seg.as_array()?;
        let doc = docs.get(seg.first()?.as_str()?)?;
        let start = seg.get(1)?.as_u64()? as usize;
        let len = seg.get(2)?.as_u64()? as usize;
        sentences.extend(doc.sentences.get(start..start + len)?.iter().cloned());
    }
    if let Some(order) = example.meta.get("order").and_then(Value::as_array) {
        let original = sentences.clone();
        sentences = order
            .iter()
            .map(|i| i.as_u64().and_then(|i| original.get(i as usize).cloned()))
            .collect::<Option<Vec<_>>>()?;
    }
    Some(join_sentences(&sentences))
}
