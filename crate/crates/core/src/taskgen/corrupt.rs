//! Random-label corruption.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Example, TaskKind};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptStats {
    pub corrupted: u64,
    /// Examples left unchanged: single-example groups and labelled examples
    /// missing their label set.
    pub skipped: u64,
}

/// Replace outputs with random ones.
///
/// Instance-labelled examples (LPP_CLS, CL) draw uniformly from the label
/// strings in `meta["label_set"]`, which the packer records when it binds an
/// instance's scheme. Generative examples take the output of an example of
/// the same task drawn uniformly from `examples` (possibly themselves). A
/// task with a single example is left unchanged. Segment-pair tasks are not
/// touched.
pub fn corrupt_labels<R: Rng + ?Sized>(examples: &mut [Example], rng: &mut R) -> CorruptStats {
    let mut stats = CorruptStats::default();
    let mut groups: BTreeMap<TaskKind, Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        if !ex.task.is_segment_pair() {
            groups.entry(ex.task).or_default().push(i);
        }
    }

    for (task, members) in groups {
        if task.is_instance_labelled() {
            for i in members {
                let labels: Option<Vec<String>> = examples[i]
                    .meta
                    .get("label_set")
                    .and_then(|v| serde_json::from_value(v.clone()).ok());
                match labels.filter(|l| !l.is_empty()) {
                    Some(labels) => {
                        let pick = labels[rng.random_range(0..labels.len())].clone();
                        examples[i].output_text = pick;
                        examples[i]
                            .meta
                            .insert("corrupted".into(), Value::Bool(true));
                        stats.corrupted += 1;
                    }
                    None => {
                        log::warn!("{task} example without label_set left unchanged");
                        stats.skipped += 1;
                    }
                }
            }
            continue;
        }
        if members.len() < 2 {
            log::warn!("{task}: single example in shard, label corruption skipped");
            stats.skipped += members.len() as u64;
            continue;
        }
        let outputs: Vec<String> = members
            .iter()
            .map(|&i| examples[i].output_text.clone())
            .collect();
        for &i in &members {
            examples[i].output_text = outputs[rng.random_range(0..outputs.len())].clone();
            examples[i]
                .meta
                .insert("corrupted".into(), Value::Bool(true));
            stats.corrupted += 1;
        }
    }
    stats
}
