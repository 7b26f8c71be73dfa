//! Anchoring question entities in the graph with string heuristics.
//!
//! Three rules, tried in priority order per entity:
//! 1. exact: the lowercased entity name is a substring of the lowercased question;
//! 2. multi-word: every content word of a name with at least two content words
//!    occurs as a question word;
//! 3. partial: a question word of five or more characters that is not a stop
//!    word occurs inside the lowercased entity name.
//!
//! Content words are words of length >= 2 that are not stop words. Words are
//! maximal runs of alphanumeric characters after lowercasing.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};

const DEFAULT_STOPWORDS: &str = include_str!("../resources/stopwords.txt");

pub const PARTIAL_MIN_CHARS: usize = 5;
pub const CONTENT_MIN_CHARS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchHeuristic {
    Exact,
    MultiWord,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedMatch {
    pub entity_id: EntityId,
    pub heuristic: MatchHeuristic,
    /// The entity name for exact and multi-word matches; the lowercased
    /// question word for partial matches.
    pub matched_span: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWordPolicy {
    words: BTreeSet<String>,
}

impl StopWordPolicy {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for w in words {
            let w = w.into();
            if w.is_empty() || w != w.to_lowercase() {
                return Err(Error::Validation(format!(
                    "stop word {w:?} must be non-empty and lowercase"
                )));
            }
            set.insert(w);
        }
        if set.is_empty() {
            return Err(Error::Validation("stop word list is empty".into()));
        }
        Ok(StopWordPolicy { words: set })
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_content_word(&self, word: &str) -> bool {
        word.chars().count() >= CONTENT_MIN_CHARS && !self.contains(word)
    }
}

impl Default for StopWordPolicy {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS).expect("bundled stop word list is valid")
    }
}

/// Lowercased alphanumeric runs of `text`, in order.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Distinct content words of `text`.
pub fn content_words(text: &str, policy: &StopWordPolicy) -> BTreeSet<String> {
    words(text)
        .into_iter()
        .filter(|w| policy.is_content_word(w))
        .collect()
}

pub fn match_seeds(question: &str, graph: &KnowledgeGraph, policy: &StopWordPolicy) -> Vec<SeedMatch> {
    let question_lower = question.to_lowercase();
    let question_words = words(question);
    let word_set: BTreeSet<&str> = question_words.iter().map(String::as_str).collect();

    let mut significant: Vec<&str> = Vec::new();
    for w in &question_words {
        if w.chars().count() >= PARTIAL_MIN_CHARS
            && !policy.contains(w)
            && !significant.contains(&w.as_str())
        {
            significant.push(w);
        }
    }

    let mut matches = Vec::new();
    for entity in graph.entities() {
        let name_lower = entity.name.to_lowercase();
        if name_lower.is_empty() {
            continue;
        }
        if question_lower.contains(&name_lower) {
            matches.push(SeedMatch {
                entity_id: entity.id.clone(),
                heuristic: MatchHeuristic::Exact,
                matched_span: entity.name.clone(),
            });
            continue;
        }
        let name_content = content_words(&entity.name, policy);
        if name_content.len() >= 2 && name_content.iter().all(|w| word_set.contains(w.as_str())) {
            matches.push(SeedMatch {
                entity_id: entity.id.clone(),
                heuristic: MatchHeuristic::MultiWord,
                matched_span: entity.name.clone(),
            });
            continue;
        }
        if let Some(w) = significant.iter().find(|w| name_lower.contains(**w)) {
            matches.push(SeedMatch {
                entity_id: entity.id.clone(),
                heuristic: MatchHeuristic::Partial,
                matched_span: (*w).to_string(),
            });
        }
    }
    matches.sort_by(|a, b| {
        a.heuristic
            .cmp(&b.heuristic)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    matches
}
