//! The `Input:`/`Output:` example template and greedy instance packing.
//!
//! An instance is a concatenation of rendered examples of one task. Offsets
//! in [`PackedInstance`] are half-open ranges of Unicode scalar values.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::seed;
use crate::taskgen::{
    corrupt_labels, Example, LabelAssignment, LabelDeck, LabelScheme, LppClass, Meta, TaskKind,
};

pub const INPUT_PREFIX: &str = "Input: ";
pub const OUTPUT_PREFIX: &str = "\nOutput: ";
pub const DEFAULT_MAX_LEN: usize = 2048;

/// Token counter used for length budgets.
///
/// Implementations should be close to additive under concatenation:
/// `len(a) + len(b) <= len(a + b) + c` for a small constant `c`. Packing
/// measures the concatenated text directly, so the bound is never relied on
/// for correctness.
pub trait LengthFn: Sync {
    fn len(&self, text: &str) -> usize;

    /// `len(prefix + suffix)` given `prefix_len == len(prefix)`. Override
    /// when it can be computed without rescanning the prefix.
    fn concat_len(&self, prefix: &str, prefix_len: usize, suffix: &str) -> usize {
        let _ = prefix_len;
        self.len(&[prefix, suffix].concat())
    }
}

/// Whitespace-delimited token count. Concatenation can merge at most one
/// pair of tokens, so `c = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceLength;

impl LengthFn for WhitespaceLength {
    fn len(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn concat_len(&self, prefix: &str, prefix_len: usize, suffix: &str) -> usize {
        let joined = prefix.ends_with(|c: char| !c.is_whitespace())
            && suffix.starts_with(|c: char| !c.is_whitespace());
        prefix_len + self.len(suffix) - usize::from(joined)
    }
}

impl<F: Fn(&str) -> usize + Sync> LengthFn for F {
    fn len(&self, text: &str) -> usize {
        self(text)
    }
}

/// `Input: {input}\nOutput: {output}\n`
pub fn render(example: &Example) -> String {
    debug_assert!(
        !example.output_text.is_empty(),
        "empty outputs are rejected upstream"
    );
    format!(
        "{INPUT_PREFIX}{}{OUTPUT_PREFIX}{}\n",
        example.input_text, example.output_text
    )
}

/// Inverse of [`render`].
pub fn parse_rendered(text: &str) -> Option<(&str, &str)> {
    let body = text.strip_prefix(INPUT_PREFIX)?.strip_suffix('\n')?;
    body.rsplit_once(OUTPUT_PREFIX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedInstance {
    pub task: TaskKind,
    pub instance_id: String,
    pub text: String,
    pub example_boundaries: Vec<(usize, usize)>,
    pub loss_spans: Vec<(usize, usize)>,
    #[serde(default)]
    pub meta: Meta,
}

/// Byte offset of every char boundary, plus the end.
fn char_offsets(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(b, _)| b)
        .chain([text.len()])
        .collect()
}

impl PackedInstance {
    fn slice<'a>(&'a self, offsets: &[usize], span: (usize, usize)) -> Option<&'a str> {
        let (start, end) = span;
        if start > end || end >= offsets.len() {
            return None;
        }
        self.text.get(offsets[start]..offsets[end])
    }

    /// Text covered by each loss span.
    pub fn loss_texts(&self) -> Option<Vec<&str>> {
        let offsets = char_offsets(&self.text);
        self.loss_spans
            .iter()
            .map(|&s| self.slice(&offsets, s))
            .collect()
    }

    /// Text of each example region.
    pub fn example_texts(&self) -> Option<Vec<&str>> {
        let offsets = char_offsets(&self.text);
        self.example_boundaries
            .iter()
            .map(|&s| self.slice(&offsets, s))
            .collect()
    }

    pub fn num_examples(&self) -> usize {
        self.example_boundaries.len()
    }

    pub fn label_set(&self) -> Option<Vec<String>> {
        self.meta
            .get("label_set")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    /// Every violated instance invariant, as readable messages.
    pub fn violations(&self, max_len: usize, length_fn: &dyn LengthFn) -> Vec<String> {
        let mut out = Vec::new();
        let offsets = char_offsets(&self.text);
        let n_chars = offsets.len() - 1;

        if self.example_boundaries.is_empty() {
            out.push("instance has no examples".to_string());
        }
        if self.example_boundaries.len() != self.loss_spans.len() {
            out.push(format!(
                "{} example regions but {} loss spans",
                self.example_boundaries.len(),
                self.loss_spans.len()
            ));
        }
        let mut cursor = 0;
        for &(start, end) in &self.example_boundaries {
            if start != cursor || end < start {
                out.push(format!(
                    "example region ({start}, {end}) does not continue at {cursor}"
                ));
            }
            cursor = end;
        }
        if cursor != n_chars {
            out.push(format!(
                "example regions end at {cursor}, text has {n_chars} chars"
            ));
        }

        let labels = self.label_set();
        if self.task.is_instance_labelled() && labels.is_none() {
            out.push(format!("{} instance without label_set", self.task));
        }
        let corrupted = self
            .meta
            .get("corrupted")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        let bound: Option<Vec<String>> =
            match (self.meta.get("label_map"), self.meta.get("example_classes")) {
                (Some(Value::Object(map)), Some(classes)) if !corrupted => {
                    let classes: Vec<String> =
                        serde_json::from_value(classes.clone()).unwrap_or_default();
                    if classes.len() != self.example_boundaries.len() {
                        out.push(format!(
                            "{} example classes for {} examples",
                            classes.len(),
                            self.example_boundaries.len()
                        ));
                    }
                    Some(
                        classes
                            .iter()
                            .map(|c| {
                                map.get(c)
                                    .and_then(Value::as_str)
                                    .unwrap_or_default()
                                    .to_string()
                            })
                            .collect(),
                    )
                }
                _ => None,
            };
        for (i, (&region, &span)) in self
            .example_boundaries
            .iter()
            .zip(&self.loss_spans)
            .enumerate()
        {
            let Some(region_text) = self.slice(&offsets, region) else {
                out.push(format!("example {i}: region out of range"));
                continue;
            };
            let Some((_, output)) = parse_rendered(region_text) else {
                out.push(format!("example {i}: region is not a rendered example"));
                continue;
            };
            if span.0 < region.0 || span.1 > region.1 || span.0 >= span.1 {
                out.push(format!(
                    "example {i}: loss span {span:?} outside region {region:?}"
                ));
                continue;
            }
            let before = self.slice(&offsets, (region.0, span.0)).unwrap_or("");
            if !before.ends_with(OUTPUT_PREFIX) {
                out.push(format!(
                    "example {i}: loss span does not follow the output marker"
                ));
            }
            match self.slice(&offsets, span) {
                Some(covered) if covered == output => {}
                _ => out.push(format!(
                    "example {i}: loss span does not cover the output text"
                )),
            }
            if span.1 + 1 != region.1 {
                out.push(format!(
                    "example {i}: loss span does not end at the example end"
                ));
            }
            if let Some(expected) = bound.as_ref().and_then(|b| b.get(i)) {
                if expected != output {
                    out.push(format!(
                        "example {i}: output {output:?} but its class maps to {expected:?}"
                    ));
                }
            }
            if let Some(labels) = &labels {
                if !labels.iter().any(|l| l == output) {
                    out.push(format!(
                        "example {i}: output {output:?} not in label set {labels:?}"
                    ));
                }
            }
        }

        let len = length_fn.len(&self.text);
        if len > max_len {
            out.push(format!("length {len} exceeds max_len {max_len}"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackConfig {
    pub max_len: usize,
    /// Redraw classification labels uniformly from the instance scheme.
    pub corrupt_labels: bool,
}

impl Default for PackConfig {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            corrupt_labels: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackStats {
    pub instances: u64,
    pub examples: u64,
    pub skipped_oversized: u64,
}

/// Canonical class tags of a unit, in first-seen order of the class enum.
fn unit_classes(task: TaskKind, unit: &[Example]) -> Vec<String> {
    match task {
        TaskKind::LppCls => LppClass::TAGS.iter().map(|s| s.to_string()).collect(),
        TaskKind::Cl => {
            let mut classes: Vec<String> = unit
                .iter()
                .filter_map(|e| e.class().map(str::to_string))
                .collect();
            classes.sort_by_key(|c| crate::taskgen::ClClass::parse(c));
            classes.dedup();
            classes
        }
        _ => Vec::new(),
    }
}

fn draw_assignment<R: Rng + ?Sized>(
    task: TaskKind,
    classes: &[String],
    deck: &mut LabelDeck,
    rng: &mut R,
) -> Option<LabelAssignment> {
    let tags: Vec<&str> = classes.iter().map(String::as_str).collect();
    match task {
        TaskKind::LppCls => {
            let scheme = LabelScheme::sample(2, rng).expect("binary schemes exist");
            Some(LabelAssignment::ordered(scheme, &tags))
        }
        TaskKind::Cl => deck.draw(&tags, rng).ok(),
        _ => None,
    }
}

struct Builder {
    classes: Vec<String>,
    assignment: Option<LabelAssignment>,
    text: String,
    chars: usize,
    boundaries: Vec<(usize, usize)>,
    spans: Vec<(usize, usize)>,
    ids: Vec<String>,
    example_classes: Vec<String>,
    /// Length of `text` under the pack's length function.
    measured: usize,
}

impl Builder {
    fn new() -> Self {
        Self {
            classes: Vec::new(),
            assignment: None,
            text: String::new(),
            chars: 0,
            boundaries: Vec::new(),
            spans: Vec::new(),
            ids: Vec::new(),
            example_classes: Vec::new(),
            measured: 0,
        }
    }

    fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    fn open<R: Rng + ?Sized>(
        &mut self,
        task: TaskKind,
        classes: Vec<String>,
        deck: &mut LabelDeck,
        rng: &mut R,
    ) {
        *self = Self::new();
        self.assignment = draw_assignment(task, &classes, deck, rng);
        self.classes = classes;
    }

    /// Bind labels for the current instance and render the unit.
    fn prepare<R: Rng + ?Sized>(
        &self,
        unit: &[Example],
        corrupt: bool,
        rng: &mut R,
    ) -> (Vec<Example>, String) {
        let mut examples = unit.to_vec();
        if let Some(assignment) = &self.assignment {
            for ex in &mut examples {
                if let Some(label) = ex.class().and_then(|c| assignment.label_for(c)) {
                    ex.output_text = label.to_string();
                }
                ex.meta
                    .insert("label_set".into(), json!(assignment.scheme.class_labels));
            }
            if corrupt {
                corrupt_labels(&mut examples, rng);
            }
        }
        let rendered = examples.iter().map(render).collect::<String>();
        (examples, rendered)
    }

    /// Whether the current text plus `rendered` stays within `max_len`,
    /// measured on the concatenation.
    fn fits(&mut self, rendered: &str, length_fn: &dyn LengthFn, max_len: usize) -> Option<usize> {
        let len = length_fn.concat_len(&self.text, self.measured, rendered);
        (len <= max_len).then_some(len)
    }

    fn push(&mut self, examples: &[Example], rendered: String, measured: usize) {
        self.measured = measured;
        for ex in examples {
            let start = self.chars;
            let loss_start = start
                + INPUT_PREFIX.chars().count()
                + ex.input_text.chars().count()
                + OUTPUT_PREFIX.chars().count();
            let loss_end = loss_start + ex.output_text.chars().count();
            let end = loss_end + 1;
            self.boundaries.push((start, end));
            self.spans.push((loss_start, loss_end));
            self.ids.push(ex.source_id());
            if let Some(class) = ex.class() {
                self.example_classes.push(class.to_string());
            }
            self.chars = end;
        }
        self.text.push_str(&rendered);
    }

    fn finish(&mut self, task: TaskKind, base_meta: &Meta) -> PackedInstance {
        let built = std::mem::replace(self, Self::new());
        let mut meta = base_meta.clone();
        meta.insert("example_ids".into(), json!(built.ids));
        if let Some(a) = &built.assignment {
            meta.insert("label_scheme".into(), json!(a.scheme.scheme_id));
            meta.insert("label_set".into(), json!(a.scheme.class_labels));
            let map: serde_json::Map<String, Value> = a
                .mapping
                .iter()
                .map(|(c, l)| (c.clone(), Value::String(l.clone())))
                .collect();
            meta.insert("label_map".into(), Value::Object(map));
            meta.insert("example_classes".into(), json!(built.example_classes));
        }
        let id_material = format!("{}\u{0}{}", built.text, built.ids.join("\u{0}"));
        PackedInstance {
            task,
            instance_id: format!("{}-{}", task, seed::hash64_hex(id_material.as_bytes())),
            text: built.text,
            example_boundaries: built.boundaries,
            loss_spans: built.spans,
            meta,
        }
    }
}

/// Greedily pack units of one task into instances.
///
/// A unit is a group of examples that must share an instance (one example
/// for most tasks, a window's class set for CL). Units are consumed in a
/// seeded random order; an instance closes when the next unit would push it
/// past `max_len`. A unit too long on its own is skipped and counted.
/// Instance-labelled tasks get a fresh label scheme per instance. CL units
/// are grouped by class set (stable, so the shuffled order holds within a
/// group) and a change of class set closes the current instance.
///
/// `base_meta` is copied into every instance's meta.
pub fn pack<R: Rng + ?Sized>(
    task: TaskKind,
    mut units: Vec<Vec<Example>>,
    cfg: &PackConfig,
    length_fn: &dyn LengthFn,
    base_meta: &Meta,
    rng: &mut R,
) -> (Vec<PackedInstance>, PackStats) {
    units.retain(|u| !u.is_empty());
    debug_assert!(
        units.iter().flatten().all(|e| e.task == task),
        "pack() takes one task"
    );
    units.shuffle(rng);
    if task == TaskKind::Cl {
        units.sort_by_cached_key(|u| unit_classes(task, u));
    }

    let mut base = base_meta.clone();
    if cfg.corrupt_labels {
        base.insert("corrupted".into(), Value::Bool(true));
    }
    let base_meta = &base;
    let mut stats = PackStats::default();
    let mut out = Vec::new();
    let mut builder = Builder::new();
    let mut deck = LabelDeck::default();
    let mut opened = false;

    for unit in units {
        let classes = unit_classes(task, &unit);
        if !opened || (!builder.is_empty() && classes != builder.classes) {
            if !builder.is_empty() {
                out.push(builder.finish(task, base_meta));
            }
            builder.open(task, classes.clone(), &mut deck, rng);
            opened = true;
        } else if builder.is_empty() && classes != builder.classes {
            builder.open(task, classes.clone(), &mut deck, rng);
        }

        let (examples, rendered) = builder.prepare(&unit, cfg.corrupt_labels, rng);
        if let Some(len) = builder.fits(&rendered, length_fn, cfg.max_len) {
            builder.push(&examples, rendered, len);
            continue;
        }
        if !builder.is_empty() {
            out.push(builder.finish(task, base_meta));
            builder.open(task, classes, &mut deck, rng);
            let (examples, rendered) = builder.prepare(&unit, cfg.corrupt_labels, rng);
            if let Some(len) = builder.fits(&rendered, length_fn, cfg.max_len) {
                builder.push(&examples, rendered, len);
                continue;
            }
        }
        log::warn!(
            "{task}: unit of {} example(s) exceeds max_len {} and was skipped",
            unit.len(),
            cfg.max_len
        );
        stats.skipped_oversized += unit.len() as u64;
    }
    if !builder.is_empty() {
        out.push(builder.finish(task, base_meta));
    }
    stats.instances = out.len() as u64;
    stats.examples = out.iter().map(|i| i.num_examples() as u64).sum();
    (out, stats)
}

/// Convenience wrapper packing one example per unit.
pub fn pack_examples<R: Rng + ?Sized>(
    task: TaskKind,
    examples: Vec<Example>,
    cfg: &PackConfig,
    length_fn: &dyn LengthFn,
    rng: &mut R,
) -> (Vec<PackedInstance>, PackStats) {
    let units = examples.into_iter().map(|e| vec![e]).collect();
    pack(task, units, cfg, length_fn, &Meta::new(), rng)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub instances: u64,
    pub examples: u64,
    pub mean_examples_per_instance: f64,
}

impl GroupStats {
    fn add(&mut self, examples: usize) {
        self.instances += 1;
        self.examples += examples as u64;
        self.mean_examples_per_instance = self.examples as f64 / self.instances as f64;
    }
}

pub const HISTOGRAM_BUCKET: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PackReport {
    pub total: GroupStats,
    pub per_task: BTreeMap<TaskKind, GroupStats>,
    pub per_domain: BTreeMap<String, GroupStats>,
    /// Instance count per length bucket, keyed by the bucket's lower bound.
    pub length_histogram: BTreeMap<usize, u64>,
}

/// Per-task and per-domain counts, mean examples per instance, and a length
/// histogram in buckets of [`HISTOGRAM_BUCKET`].
pub fn stats<'a>(
    instances: impl IntoIterator<Item = &'a PackedInstance>,
    length_fn: &dyn LengthFn,
) -> PackReport {
    let mut report = PackReport::default();
    for inst in instances {
        let n = inst.num_examples();
        report.total.add(n);
        report.per_task.entry(inst.task).or_default().add(n);
        let domain = inst
            .meta
            .get("domain")
            .and_then(Value::as_str)
            .unwrap_or(crate::corpus::DEFAULT_DOMAIN);
        report
            .per_domain
            .entry(domain.to_string())
            .or_default()
            .add(n);
        let bucket = length_fn.len(&inst.text) / HISTOGRAM_BUCKET * HISTOGRAM_BUCKET;
        *report.length_histogram.entry(bucket).or_default() += 1;
    }
    report
}
