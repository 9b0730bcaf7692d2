//! Evaluation prompts in the `Input:`/`Output:` format.
//!
//! A template is a prompt with `${Field}` placeholders and a list of
//! candidate completions. Rendering a record yields one string per
//! candidate; the strings share everything up to the scored completion, so
//! a language-model harness can rank candidates by the likelihood of the
//! span alone. Scoring itself happens elsewhere.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    /// Completion text; may contain placeholders (e.g. `${choice1}`).
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTemplate {
    pub task_id: String,
    pub prompt: String,
    pub candidates: Vec<Candidate>,
    /// Field holding the gold label.
    #[serde(default = "default_label_field")]
    pub label_field: String,
}

fn default_label_field() -> String {
    "label".to_string()
}

fn fixed(labels: &[&str]) -> Vec<Candidate> {
    labels
        .iter()
        .map(|l| Candidate {
            label: l.to_string(),
            completion: l.to_string(),
        })
        .collect()
}

impl EvalTemplate {
    pub fn boolq() -> Self {
        Self {
            task_id: "BoolQ".into(),
            prompt: "Input: ${Context} question: ${Question} answer: True\nOutput: ".into(),
            candidates: fixed(&["True", "False"]),
            label_field: default_label_field(),
        }
    }

    pub fn rte() -> Self {
        Self {
            task_id: "RTE".into(),
            ..Self::boolq()
        }
    }

    pub fn copa() -> Self {
        Self {
            task_id: "COPA".into(),
            prompt: "Input: ${Context}\nOutput:".into(),
            candidates: vec![
                Candidate {
                    label: "0".into(),
                    completion: "${choice1}".into(),
                },
                Candidate {
                    label: "1".into(),
                    completion: "${choice2}".into(),
                },
            ],
            label_field: default_label_field(),
        }
    }

    pub fn cb() -> Self {
        Self {
            task_id: "CB".into(),
            prompt: "Input: ${Context} question: ${Question} true, false, or neither?\nOutput: "
                .into(),
            candidates: fixed(&["true", "false", "neither"]),
            label_field: default_label_field(),
        }
    }

    pub fn multirc() -> Self {
        Self {
            task_id: "MultiRC".into(),
            prompt: "Input: ${Context} Question: ${Question} Answer: ${Answer}\nOutput: ".into(),
            candidates: fixed(&["True", "False"]),
            label_field: default_label_field(),
        }
    }

    pub fn builtins() -> Vec<Self> {
        vec![
            Self::boolq(),
            Self::rte(),
            Self::copa(),
            Self::cb(),
            Self::multirc(),
        ]
    }
}

/// Substitute `${Name}` placeholders from `fields`.
pub fn fill(template: &str, fields: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("${") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::config(format!("unterminated placeholder in {template:?}")))?;
        let name = &after[..close];
        let value = fields
            .get(name)
            .ok_or_else(|| Error::precondition(format!("record is missing field {name:?}")))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(deserialize_with = "string_fields")]
    pub fields: BTreeMap<String, String>,
}

/// Field values may be JSON strings, booleans (`True`/`False`) or numbers.
fn string_fields<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<BTreeMap<String, String>, D::Error> {
    let raw = BTreeMap::<String, Value>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s,
                Value::Bool(true) => "True".to_string(),
                Value::Bool(false) => "False".to_string(),
                Value::Number(n) => n.to_string(),
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "field {k}: unsupported value {other}"
                    )))
                }
            };
            Ok((k, s))
        })
        .collect()
}

impl EvalRecord {
    pub fn record_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            let body = serde_json::to_string(&self.fields).unwrap_or_default();
            format!("{}-{}", self.task_id, seed::hash64_hex(body.as_bytes()))
        })
    }
}

/// One candidate rendering of a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedCandidate {
    pub label: String,
    pub text: String,
    /// Char offsets of the completion.
    pub score_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub task_id: String,
    pub record_id: String,
    pub candidate_label: String,
    pub text: String,
    pub score_span: (usize, usize),
    pub demo_ids: Vec<String>,
}

impl EvalInstance {
    pub fn scored_text(&self) -> String {
        let (s, e) = self.score_span;
        self.text
            .chars()
            .skip(s)
            .take(e.saturating_sub(s))
            .collect()
    }
}

/// Built-in templates plus any loaded from a template file.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, EvalTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self {
            templates: EvalTemplate::builtins()
                .into_iter()
                .map(|t| (t.task_id.clone(), t))
                .collect(),
        }
    }
}

impl TemplateRegistry {
    /// Add templates from a JSON file holding one template or an array.
    /// Entries replace built-ins with the same task id.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)?;
        let list: Vec<EvalTemplate> = match value {
            Value::Array(_) => serde_json::from_value(value)?,
            other => vec![serde_json::from_value(other)?],
        };
        for t in list {
            if t.candidates.is_empty() {
                return Err(Error::config(format!(
                    "template {} has no candidates",
                    t.task_id
                )));
            }
            self.templates.insert(t.task_id.clone(), t);
        }
        Ok(())
    }

    pub fn get(&self, task_id: &str) -> Result<&EvalTemplate> {
        self.templates
            .get(task_id)
            .ok_or_else(|| Error::config(format!("unknown task_id {task_id:?}")))
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

fn check_gold(record: &EvalRecord, template: &EvalTemplate) -> Result<String> {
    let gold = record.fields.get(&template.label_field).ok_or_else(|| {
        Error::precondition(format!(
            "record {} has no {:?} field",
            record.record_id(),
            template.label_field
        ))
    })?;
    if !template.candidates.iter().any(|c| &c.label == gold) {
        return Err(Error::precondition(format!(
            "record {}: gold label {gold:?} not among {:?}",
            record.record_id(),
            template
                .candidates
                .iter()
                .map(|c| &c.label)
                .collect::<Vec<_>>()
        )));
    }
    Ok(gold.clone())
}

/// One rendering per candidate label, with the completion's char span.
/// The gold label need not be present (test records may be unlabelled).
pub fn render_record(
    record: &EvalRecord,
    registry: &TemplateRegistry,
) -> Result<Vec<RenderedCandidate>> {
    let template = registry.get(&record.task_id)?;
    let prompt = fill(&template.prompt, &record.fields)?;
    let prompt_chars = prompt.chars().count();
    template
        .candidates
        .iter()
        .map(|c| {
            let completion = fill(&c.completion, &record.fields)?;
            let end = prompt_chars + completion.chars().count();
            Ok(RenderedCandidate {
                label: c.label.clone(),
                text: format!("{prompt}{completion}"),
                score_span: (prompt_chars, end),
            })
        })
        .collect()
}

/// The record rendered with its gold completion and a trailing newline.
pub fn render_demonstration(record: &EvalRecord, registry: &TemplateRegistry) -> Result<String> {
    let template = registry.get(&record.task_id)?;
    let gold = check_gold(record, template)?;
    let rendered = render_record(record, registry)?;
    let chosen = rendered
        .into_iter()
        .find(|c| c.label == gold)
        .expect("gold checked against candidates");
    Ok(format!("{}\n", chosen.text))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssembleOutcome {
    pub instances: Vec<EvalInstance>,
    /// Set when the pool held fewer than `k` usable demonstrations.
    pub short_pool: bool,
}

/// Few-shot instances for one record: `k` demonstrations from `pool` (same
/// task, different record id) sampled without replacement and kept in
/// sampled order, followed by the query. Every candidate of the record gets
/// the same demonstrations.
pub fn assemble<R: Rng + ?Sized>(
    record: &EvalRecord,
    pool: &[EvalRecord],
    k: usize,
    registry: &TemplateRegistry,
    rng: &mut R,
) -> Result<AssembleOutcome> {
    let record_id = record.record_id();
    let eligible: Vec<&EvalRecord> = pool
        .iter()
        .filter(|r| r.task_id == record.task_id && r.record_id() != record_id)
        .collect();
    let short_pool = eligible.len() < k;
    if short_pool {
        log::warn!(
            "{record_id}: only {} demonstrations available, {k} requested",
            eligible.len()
        );
    }
    let take = k.min(eligible.len());
    let picks = index::sample(rng, eligible.len(), take).into_vec();

    let mut prefix = String::new();
    let mut demo_ids = Vec::with_capacity(take);
    for i in picks {
        prefix.push_str(&render_demonstration(eligible[i], registry)?);
        demo_ids.push(eligible[i].record_id());
    }
    let shift = prefix.chars().count();
    let instances = render_record(record, registry)?
        .into_iter()
        .map(|c| EvalInstance {
            task_id: record.task_id.clone(),
            record_id: record_id.clone(),
            candidate_label: c.label,
            text: format!("{prefix}{}", c.text),
            score_span: (c.score_span.0 + shift, c.score_span.1 + shift),
            demo_ids: demo_ids.clone(),
        })
        .collect();
    Ok(AssembleOutcome {
        instances,
        short_pool,
    })
}
