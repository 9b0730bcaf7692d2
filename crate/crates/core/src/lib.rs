//! Self-supervised training data for in-context learning.
//!
//! The crate turns plain-text document collections into packed training
//! instances for four in-context tasks (next sentence generation, masked
//! word prediction, last phrase prediction and provenance classification),
//! plus optional denoising and gap-sentence variants, segment-pair
//! examples with n-gram mask plans, and few-shot evaluation prompts.
//!
//! Modules follow the data flow:
//!
//! - [`corpus`]: ingestion, segmentation, sentence windows, subsampling
//! - [`taskgen`]: example generators
//! - [`pairs`]: sentence-order / next-sentence pairs and n-gram masking
//! - [`packer`]: the `Input:`/`Output:` template and instance packing
//! - [`evalgen`]: evaluation templates and few-shot assembly
//! - [`pipeline`]: configuration, orchestration, stats and validation

pub mod corpus;
pub mod error;
pub mod evalgen;
pub mod jsonl;
pub mod lexicon;
pub mod packer;
pub mod pairs;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod taskgen;

pub use corpus::{Document, Sentence, SentenceWindow};
pub use error::{Error, Result};
pub use packer::{LengthFn, PackedInstance, WhitespaceLength};
pub use taskgen::{Example, LabelScheme, MaskSymbol, TaskKind};
