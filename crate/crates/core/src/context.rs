//! Retrieved-context model: questions, the four context sections, the single
//! full rendering used by prompts and accounting, and token counting.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ChunkId, EntityId, KnowledgeGraph};
use crate::jsonl::read_jsonl_numbered;

pub const ENTITIES_HEADER: &str = "-- Entities --";
pub const RELATIONSHIPS_HEADER: &str = "-- Relationships --";
pub const REPORTS_HEADER: &str = "-- Reports --";
pub const SOURCES_HEADER: &str = "-- Sources --";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Bridge,
    Comparison,
    Inference,
    Compositional,
    BridgeComparison,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Bridge => "bridge",
            QuestionType::Comparison => "comparison",
            QuestionType::Inference => "inference",
            QuestionType::Compositional => "compositional",
            QuestionType::BridgeComparison => "bridge_comparison",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub text: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub qtype: Option<QuestionType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<u8>,
}

impl QuestionRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("question {} has empty text", self.id));
        }
        if self.gold_answers.is_empty() {
            return Err(format!("question {} has no gold answers", self.id));
        }
        if let Some(h) = self.hops {
            if !(2..=4).contains(&h) {
                return Err(format!("question {} has hops {h}, expected 2..=4", self.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDescription {
    pub id: EntityId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipDescription {
    pub source: EntityId,
    pub target: EntityId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPassage {
    pub id: ChunkId,
    pub text: String,
}

/// One question's retrieved material, sections kept in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub question_id: String,
    #[serde(rename = "entities", default)]
    pub entity_descriptions: Vec<EntityDescription>,
    #[serde(rename = "relationships", default)]
    pub relationship_descriptions: Vec<RelationshipDescription>,
    #[serde(rename = "reports", default)]
    pub community_reports: Vec<String>,
    #[serde(rename = "chunks", default)]
    pub text_chunks: Vec<ChunkPassage>,
}

impl RetrievedContext {
    pub fn is_empty(&self) -> bool {
        self.entity_descriptions.is_empty()
            && self.relationship_descriptions.is_empty()
            && self.community_reports.is_empty()
            && self.text_chunks.is_empty()
    }

    /// The canonical prompt rendering: one header line per non-empty section,
    /// items newline-separated, sections separated by a blank line.
    pub fn render(&self) -> String {
        let sections: Vec<(&str, Vec<&str>)> = vec![
            (
                ENTITIES_HEADER,
                self.entity_descriptions.iter().map(|e| e.text.as_str()).collect(),
            ),
            (
                RELATIONSHIPS_HEADER,
                self.relationship_descriptions
                    .iter()
                    .map(|r| r.text.as_str())
                    .collect(),
            ),
            (
                REPORTS_HEADER,
                self.community_reports.iter().map(String::as_str).collect(),
            ),
            (
                SOURCES_HEADER,
                self.text_chunks.iter().map(|c| c.text.as_str()).collect(),
            ),
        ];
        render_sections(&sections)
    }

    /// Ids referenced by this context that the graph does not know.
    pub fn unresolved_ids(&self, graph: &KnowledgeGraph) -> Vec<String> {
        let mut missing = Vec::new();
        for e in &self.entity_descriptions {
            if !graph.contains_entity(e.id.as_str()) {
                missing.push(e.id.to_string());
            }
        }
        for r in &self.relationship_descriptions {
            for end in [&r.source, &r.target] {
                if !graph.contains_entity(end.as_str()) {
                    missing.push(end.to_string());
                }
            }
        }
        for c in &self.text_chunks {
            if graph.chunk(c.id.as_str()).is_none() {
                missing.push(c.id.to_string());
            }
        }
        missing.sort();
        missing.dedup();
        missing
    }
}

/// Joins `(header, items)` groups, skipping empty groups.
pub(crate) fn render_sections<S: AsRef<str>>(sections: &[(S, Vec<&str>)]) -> String {
    let mut out = String::new();
    for (header, items) in sections {
        if items.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(header.as_ref());
        out.push('\n');
        for item in items {
            out.push_str(item);
            out.push('\n');
        }
    }
    out
}

pub fn parse_contexts<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<RetrievedContext>> {
    let rows = read_jsonl_numbered::<RetrievedContext, _>(reader, source_name)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, ctx) in rows {
        if ctx.is_empty() {
            return Err(Error::Validation(format!(
                "{source_name}:{line}: context for question {} is empty",
                ctx.question_id
            )));
        }
        out.push(ctx);
    }
    Ok(out)
}

pub fn load_contexts(path: &Path) -> Result<Vec<RetrievedContext>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_contexts(BufReader::new(file), &path.display().to_string())
}

pub fn parse_questions<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<QuestionRecord>> {
    let rows = read_jsonl_numbered::<QuestionRecord, _>(reader, source_name)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, q) in rows {
        q.validate()
            .map_err(|msg| Error::Validation(format!("{source_name}:{line}: {msg}")))?;
        out.push(q);
    }
    Ok(out)
}

pub fn load_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_questions(BufReader::new(file), &path.display().to_string())
}

/// Token counter used for budgets and accounting.
#[derive(Clone)]
pub enum TokenCounter {
    /// `ceil(chars / chars_per_token)` over Unicode scalar values.
    Approximate { chars_per_token: f64 },
    /// A caller-supplied counter, e.g. a model-exact tokenizer.
    Pluggable(Arc<dyn Fn(&str) -> usize + Send + Sync>),
}

impl TokenCounter {
    pub fn approximate(chars_per_token: f64) -> Result<Self> {
        if !(chars_per_token.is_finite() && chars_per_token > 0.0) {
            return Err(Error::Usage(format!(
                "chars_per_token must be positive, got {chars_per_token}"
            )));
        }
        Ok(TokenCounter::Approximate { chars_per_token })
    }

    pub fn pluggable<F>(f: F) -> Self
    where
        F: Fn(&str) -> usize + Send + Sync + 'static,
    {
        TokenCounter::Pluggable(Arc::new(f))
    }

    pub fn count(&self, s: &str) -> usize {
        match self {
            TokenCounter::Approximate { chars_per_token } => {
                let chars = s.chars().count();
                (chars as f64 / chars_per_token).ceil() as usize
            }
            TokenCounter::Pluggable(f) => f(s),
        }
    }
}

impl Default for TokenCounter {
    fn default() -> Self {
        TokenCounter::Approximate { chars_per_token: 4.0 }
    }
}

impl fmt::Debug for TokenCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenCounter::Approximate { chars_per_token } => f
                .debug_struct("Approximate")
                .field("chars_per_token", chars_per_token)
                .finish(),
            TokenCounter::Pluggable(_) => f.write_str("Pluggable(..)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsonl::to_jsonl_string;
    use proptest::prelude::*;

    const LINE: &str = r#"{"question_id":"q1","entities":[{"id":"A","text":"A is a river"},{"id":"B","text":"B is a creek"}],"relationships":[],"reports":[],"chunks":[{"id":"c1","text":"A flows into B."}]}"#;

    #[test]
    fn parses_section_counts() {
        let ctxs = parse_contexts(LINE.as_bytes(), "contexts.jsonl").unwrap();
        assert_eq!(ctxs.len(), 1);
        assert_eq!(ctxs[0].entity_descriptions.len(), 2);
        assert_eq!(ctxs[0].text_chunks.len(), 1);
        assert!(ctxs[0].relationship_descriptions.is_empty());
    }

    #[test]
    fn chunks_only_is_valid() {
        let line = r#"{"question_id":"q2","chunks":[{"id":"c1","text":"x"}]}"#;
        let ctxs = parse_contexts(line.as_bytes(), "f").unwrap();
        assert!(ctxs[0].entity_descriptions.is_empty());
        assert!(ctxs[0].community_reports.is_empty());
        assert_eq!(ctxs[0].text_chunks.len(), 1);
    }

    #[test]
    fn missing_question_id_names_line() {
        let text = format!("{LINE}\n{}\n", r#"{"chunks":[{"id":"c1","text":"x"}]}"#);
        let err = parse_contexts(text.as_bytes(), "contexts.jsonl").unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("question_id"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_context_is_validation_error() {
        let err = parse_contexts(r#"{"question_id":"q"}"#.as_bytes(), "f").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn render_uses_fixed_headers_in_order() {
        let ctx = RetrievedContext {
            question_id: "q".into(),
            entity_descriptions: vec![EntityDescription { id: "A".into(), text: "ent A".into() }],
            relationship_descriptions: vec![RelationshipDescription {
                source: "A".into(),
                target: "B".into(),
                text: "A to B".into(),
            }],
            community_reports: vec!["report".into()],
            text_chunks: vec![ChunkPassage { id: "c".into(), text: "chunk".into() }],
        };
        assert_eq!(
            ctx.render(),
            "-- Entities --\nent A\n\n-- Relationships --\nA to B\n\n-- Reports --\nreport\n\n-- Sources --\nchunk\n"
        );
    }

    #[test]
    fn question_validation() {
        let bad = r#"{"id":"q","text":"t","answers":[]}"#;
        assert!(parse_questions(bad.as_bytes(), "q").is_err());
        let bad_hops = r#"{"id":"q","text":"t","answers":["a"],"hops":5}"#;
        assert!(parse_questions(bad_hops.as_bytes(), "q").is_err());
        let ok = r#"{"id":"q","text":"t","answers":["a"],"type":"bridge_comparison","hops":3}"#;
        let q = parse_questions(ok.as_bytes(), "q").unwrap();
        assert_eq!(q[0].qtype, Some(QuestionType::BridgeComparison));
    }

    #[test]
    fn approximate_counter_examples() {
        let c = TokenCounter::approximate(4.0).unwrap();
        assert_eq!(c.count(""), 0);
        assert_eq!(c.count(&"x".repeat(4000)), 1000);
        assert_eq!(c.count("abc"), 1);
        assert!(TokenCounter::approximate(0.0).is_err());
    }

    proptest! {
        #[test]
        fn contexts_round_trip(
            ents in proptest::collection::vec(("[a-z]{1,4}", ".{0,20}"), 0..4),
            reports in proptest::collection::vec(".{0,20}", 0..3),
            chunks in proptest::collection::vec(("[a-z0-9]{1,4}", ".{0,30}"), 1..4),
        ) {
            let ctx = RetrievedContext {
                question_id: "q".into(),
                entity_descriptions: ents.into_iter().map(|(id, text)| EntityDescription { id: id.into(), text }).collect(),
                relationship_descriptions: vec![],
                community_reports: reports,
                text_chunks: chunks.into_iter().map(|(id, text)| ChunkPassage { id: id.into(), text }).collect(),
            };
            let text = to_jsonl_string(std::slice::from_ref(&ctx));
            let back = parse_contexts(text.as_bytes(), "f").unwrap();
            prop_assert_eq!(back, vec![ctx]);
        }

        #[test]
        fn approximate_counter_invariants(a in ".{0,64}", b in ".{0,64}", cpt in 1u32..8) {
            let c = TokenCounter::approximate(cpt as f64).unwrap();
            let ab = format!("{a}{b}");
            prop_assert!(c.count(&ab) >= c.count(&a).max(c.count(&b)));
            prop_assert!(c.count(&ab) <= c.count(&a) + c.count(&b) + 1);
            if !a.is_empty() {
                prop_assert!(c.count(&a) >= 1);
            }
        }
    }
}
