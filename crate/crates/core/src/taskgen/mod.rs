//! Self-supervised example generators.
//!
//! Each generator is a pure function of its window(s), a caller-provided
//! generator and configuration. Classification generators tag examples with
//! a class (`meta["class"]`) and leave the label string to be bound per
//! instance by the packer, since one instance shares a single label scheme.

mod cl;
mod corrupt;
mod labels;
mod lpp;
mod mwp;
mod noise;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::SentenceWindow;
use crate::error::{Error, Result};

pub use cl::{build_cl_inputs, rederive_cl_input, ClClass, ClGroup, DocumentPool, OtherDocuments};
pub use corrupt::{corrupt_labels, CorruptStats};
pub use labels::{
    assign_labels, LabelAssignment, LabelDeck, LabelScheme, BINARY_SCHEMES, TERNARY_SCHEMES,
};
pub use lpp::{
    extract_last_phrase, gen_lpp_cls, gen_lpp_gen, LppClass, PhraseExtraction, PhrasePool,
    ANSWER_MARKER, PLACEHOLDER, QUESTION_MARKER,
};
pub use mwp::{gen_mwp, mask_words, MAX_MASKED_WORDS};
pub use noise::{gen_dae, gen_gsg, DaeConfig};

pub type Meta = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "NSG")]
    Nsg,
    #[serde(rename = "MWP")]
    Mwp,
    #[serde(rename = "LPP_GEN")]
    LppGen,
    #[serde(rename = "LPP_CLS")]
    LppCls,
    #[serde(rename = "CL")]
    Cl,
    #[serde(rename = "DAE")]
    Dae,
    #[serde(rename = "GSG")]
    Gsg,
    #[serde(rename = "SOP")]
    Sop,
    #[serde(rename = "NSP")]
    Nsp,
    #[serde(rename = "MLM")]
    Mlm,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::Nsg,
        TaskKind::Mwp,
        TaskKind::LppGen,
        TaskKind::LppCls,
        TaskKind::Cl,
        TaskKind::Dae,
        TaskKind::Gsg,
        TaskKind::Sop,
        TaskKind::Nsp,
        TaskKind::Mlm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Nsg => "NSG",
            TaskKind::Mwp => "MWP",
            TaskKind::LppGen => "LPP_GEN",
            TaskKind::LppCls => "LPP_CLS",
            TaskKind::Cl => "CL",
            TaskKind::Dae => "DAE",
            TaskKind::Gsg => "GSG",
            TaskKind::Sop => "SOP",
            TaskKind::Nsp => "NSP",
            TaskKind::Mlm => "MLM",
        }
    }

    /// Tasks whose outputs are label strings bound per packed instance.
    pub fn is_instance_labelled(self) -> bool {
        matches!(self, TaskKind::LppCls | TaskKind::Cl)
    }

    /// Segment-pair tasks, emitted as plain examples rather than packed.
    pub fn is_segment_pair(self) -> bool {
        matches!(self, TaskKind::Sop | TaskKind::Nsp | TaskKind::Mlm)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown task {s:?}")))
    }
}

/// One input/output pair before rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub task: TaskKind,
    pub input_text: String,
    pub output_text: String,
    #[serde(default)]
    pub meta: Meta,
}

impl Example {
    pub fn new(task: TaskKind, input_text: String, output_text: String) -> Self {
        Self {
            task,
            input_text,
            output_text,
            meta: Meta::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn with_window(self, window: &SentenceWindow) -> Self {
        self.with_meta("doc_id", window.doc_id.as_str())
            .with_meta("domain", window.domain.as_str())
            .with_meta("window_offset", window.start_index)
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(Value::as_str)
    }

    /// `doc_id:offset` when the example came from a window.
    pub fn source_id(&self) -> String {
        let doc = self.meta_str("doc_id").unwrap_or("?");
        match self.meta.get("window_offset").and_then(Value::as_u64) {
            Some(off) => format!("{doc}:{off}"),
            None => doc.to_string(),
        }
    }

    pub fn class(&self) -> Option<&str> {
        self.meta_str("class")
    }
}

/// The closed set of mask symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MaskSymbol(&'static str);

impl MaskSymbol {
    pub const ALL: [MaskSymbol; 9] = [
        MaskSymbol("___"),
        MaskSymbol("\u{27e8}\u{27e8}\u{27e9}\u{27e9}"),
        MaskSymbol("@@@"),
        MaskSymbol("(())"),
        MaskSymbol("$$$"),
        MaskSymbol("%%%"),
        MaskSymbol("###"),
        MaskSymbol("***"),
        MaskSymbol("+++"),
    ];

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        *Self::ALL.choose(rng).expect("symbol set is non-empty")
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.0 == s)
    }

    pub fn as_str(self) -> &'static str {
        self.0
    }
}

impl fmt::Display for MaskSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

/// Next sentence generation: all but the last sentence in, last sentence out.
pub fn gen_nsg(window: &SentenceWindow) -> Result<Example> {
    let n = window.len();
    if n < 3 {
        return Err(Error::precondition(format!(
            "NSG needs >= 3 sentences, got {n}"
        )));
    }
    let input = crate::corpus::join_sentences(&window.sentences[..n - 1]);
    let output = window.sentences[n - 1].text.clone();
    Ok(Example::new(TaskKind::Nsg, input, output).with_window(window))
}
