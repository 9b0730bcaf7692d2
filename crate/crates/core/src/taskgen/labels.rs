//! Label-string schemes and per-instance class bindings.

use rand::seq::{IndexedRandom, SliceRandom};
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary schemes. The first string is the positive label.
pub const BINARY_SCHEMES: [[&str; 2]; 4] =
    [["Yes", "No"], ["Y", "N"], ["True", "False"], ["T", "F"]];

pub const TERNARY_SCHEMES: [[&str; 3]; 5] = [
    ["Positive", "Negative", "Neutral"],
    ["True", "False", "Neither"],
    ["T", "F", "N"],
    ["Yes", "No", "Unknown"],
    ["Y", "N", "U"],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub scheme_id: String,
    pub class_labels: Vec<String>,
}

impl LabelScheme {
    pub fn binary(index: usize) -> Self {
        Self {
            scheme_id: format!("binary/{index}"),
            class_labels: BINARY_SCHEMES[index]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn ternary(index: usize) -> Self {
        Self {
            scheme_id: format!("ternary/{index}"),
            class_labels: TERNARY_SCHEMES[index]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    /// Uniformly pick one of the predefined schemes with `arity` labels.
    pub fn sample<R: Rng + ?Sized>(arity: usize, rng: &mut R) -> Result<Self> {
        match arity {
            2 => Ok(Self::binary(rng.random_range(0..BINARY_SCHEMES.len()))),
            3 => Ok(Self::ternary(rng.random_range(0..TERNARY_SCHEMES.len()))),
            n => Err(Error::precondition(format!(
                "label schemes have 2 or 3 classes, got {n}"
            ))),
        }
    }

    pub fn arity(&self) -> usize {
        self.class_labels.len()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.class_labels.iter().any(|l| l == label)
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        self.class_labels
            .choose(rng)
            .expect("schemes are non-empty")
    }
}

/// A scheme together with a bijection from class tags to its strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub scheme: LabelScheme,
    /// `(class_tag, label)` in the order the tags were given.
    pub mapping: Vec<(String, String)>,
}

impl LabelAssignment {
    /// Positive/negative binding with the scheme's own order (positive first).
    pub fn ordered(scheme: LabelScheme, class_tags: &[&str]) -> Self {
        let mapping = class_tags
            .iter()
            .zip(&scheme.class_labels)
            .map(|(c, l)| (c.to_string(), l.clone()))
            .collect();
        Self { scheme, mapping }
    }

    pub fn label_for(&self, class_tag: &str) -> Option<&str> {
        self.mapping
            .iter()
            .find(|(c, _)| c == class_tag)
            .map(|(_, l)| l.as_str())
    }
}

/// Sample a scheme of matching arity and a uniform random bijection from
/// `class_tags` onto its label strings.
pub fn assign_labels<R: Rng + ?Sized>(class_tags: &[&str], rng: &mut R) -> Result<LabelAssignment> {
    LabelDeck::default().draw(class_tags, rng)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..n {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

/// Draws bijections without replacement per scheme: every bijection of a
/// scheme appears once in each run of `arity!` draws from that scheme,
/// in shuffled order.
#[derive(Debug, Default, Clone)]
pub struct LabelDeck {
    decks: HashMap<String, Vec<Vec<usize>>>,
}

impl LabelDeck {
    pub fn draw<R: Rng + ?Sized>(
        &mut self,
        class_tags: &[&str],
        rng: &mut R,
    ) -> Result<LabelAssignment> {
        let scheme = LabelScheme::sample(class_tags.len(), rng)?;
        let deck = self.decks.entry(scheme.scheme_id.clone()).or_default();
        if deck.is_empty() {
            *deck = permutations(scheme.arity());
            deck.shuffle(rng);
        }
        let perm = deck.pop().expect("refilled deck");
        let mapping = class_tags
            .iter()
            .zip(perm)
            .map(|(c, i)| (c.to_string(), scheme.class_labels[i].clone()))
            .collect();
        Ok(LabelAssignment { scheme, mapping })
    }
}
