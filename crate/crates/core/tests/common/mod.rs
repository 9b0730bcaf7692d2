#![allow(dead_code)]

use std::path::{Path, PathBuf};

use icl_data::corpus::{Ingester, InputFormat};
use icl_data::evalgen::{self, EvalRecord, TemplateRegistry};
use icl_data::{synth, Document};

pub const GOLDEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(GOLDEN_DIR).join(name)
}

/// Candidate renderings in the golden-file layout: a header line with the
/// label and score span, then the rendered text.
pub fn golden_text(record: &EvalRecord, registry: &TemplateRegistry) -> String {
    evalgen::render_record(record, registry)
        .unwrap()
        .into_iter()
        .map(|c| {
            format!(
                "### label={} span={}..{}\n{}\n",
                c.label, c.score_span.0, c.score_span.1, c.text
            )
        })
        .collect()
}

pub fn golden_records() -> Vec<EvalRecord> {
    let text = std::fs::read_to_string(golden_path("records.v1.jsonl")).unwrap();
    text.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn golden_file_for(record: &EvalRecord) -> PathBuf {
    golden_path(&format!("{}.v1.txt", record.task_id.to_lowercase()))
}

pub fn fixture_docs(n: usize, domains: &[&str], seed: u64) -> Vec<Document> {
    let text = synth::corpus_jsonl(n, domains, seed);
    Ingester::default()
        .read_all(text.as_bytes(), InputFormat::Jsonl)
        .unwrap()
}
