//! Versioned word lists shipped with the crate.
//!
//! Both lists are plain text, one entry per line. Blank lines and lines
//! starting with `#` are ignored. Either list can be replaced by a file of
//! the same format.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const FUNCTION_WORDS_V1: &str = include_str!("../data/function_words.v1.txt");
const ABBREVIATIONS_V1: &str = include_str!("../data/abbreviations.v1.txt");

fn parse_entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
}

fn read_list(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Closed-class words that mark the start of a sentence-final phrase.
/// Matching is case-insensitive.
#[derive(Debug, Clone)]
pub struct FunctionWords {
    words: HashSet<String>,
}

impl FunctionWords {
    pub fn builtin() -> Self {
        Self::parse(FUNCTION_WORDS_V1)
    }

    pub fn parse(text: &str) -> Self {
        Self {
            words: parse_entries(text).map(str::to_lowercase).collect(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(Self::parse(&read_list(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for FunctionWords {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Tokens that end in a period without ending a sentence ("Dr.", "e.g.").
/// Entries are stored without the trailing period and matched case-sensitively.
#[derive(Debug, Clone)]
pub struct Abbreviations {
    entries: HashSet<String>,
}

impl Abbreviations {
    pub fn builtin() -> Self {
        Self::parse(ABBREVIATIONS_V1)
    }

    pub fn parse(text: &str) -> Self {
        Self {
            entries: parse_entries(text)
                .map(|entry| entry.trim_end_matches('.').to_string())
                .collect(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(Self::parse(&read_list(path)?))
    }

    /// True when `token` (including its final period) is a listed abbreviation.
    pub fn matches(&self, token: &str) -> bool {
        token
            .strip_suffix('.')
            .is_some_and(|stem| self.entries.contains(stem))
    }
}

impl Default for Abbreviations {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_function_words_dedupe() {
        let fw = FunctionWords::builtin();
        // the source list repeats "in", "about" and "from"
        assert_eq!(fw.len(), 50);
        assert!(fw.contains("The"));
        assert!(fw.contains("including"));
        assert!(!fw.contains("mill"));
    }

    #[test]
    fn abbreviation_guard() {
        let ab = Abbreviations::builtin();
        assert!(ab.matches("Dr."));
        assert!(ab.matches("e.g."));
        assert!(!ab.matches("Dr"));
        assert!(!ab.matches("left."));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let fw = FunctionWords::parse("# header\n\n of \n");
        assert_eq!(fw.len(), 1);
        assert!(fw.contains("of"));
    }
}
