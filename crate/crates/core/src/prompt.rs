//! Prompt construction for the QA variants and the router, and parsing of
//! model replies (final answer, abstention, route label).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const QA_SYSTEM: &str = "You answer questions using only the provided context.";
pub const QA_MAX_OUTPUT_TOKENS: u32 = 512;
pub const ROUTER_MAX_OUTPUT_TOKENS: u32 = 5;
pub const FINAL_ANSWER_MARKER: &str = "FINAL ANSWER:";

const BASELINE_TEMPLATE: &str = include_str!("../resources/prompts/baseline.txt");
const SPARQL_COT_TEMPLATE: &str = include_str!("../resources/prompts/sparql_cot.txt");
const GENERIC_COT_TEMPLATE: &str = include_str!("../resources/prompts/generic_cot.txt");
const ROUTER_TEMPLATE: &str = include_str!("../resources/prompts/router.txt");

/// Normalized abstention phrases (lowercase, punctuation removed).
const ABSTENTION_PHRASES: [&str; 2] = ["i dont know", "i do not know"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Baseline,
    SparqlCot,
    GenericCot,
    Router,
    Judge,
    ShortAnswer,
}

impl PromptVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Baseline => "baseline",
            PromptVariant::SparqlCot => "sparql_cot",
            PromptVariant::GenericCot => "generic_cot",
            PromptVariant::Router => "router",
            PromptVariant::Judge => "judge",
            PromptVariant::ShortAnswer => "short_answer",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(PromptVariant::Baseline),
            "sparql_cot" => Ok(PromptVariant::SparqlCot),
            "generic_cot" => Ok(PromptVariant::GenericCot),
            "router" => Ok(PromptVariant::Router),
            "judge" => Ok(PromptVariant::Judge),
            "short_answer" => Ok(PromptVariant::ShortAnswer),
            other => Err(Error::Usage(format!("unknown prompt variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub variant: PromptVariant,
    pub max_output_tokens: u32,
}

/// Fills `{name}` slots in one pass. Braces that do not name a slot are kept,
/// and slot values are never rescanned.
pub fn fill_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|s| s.1.len()).sum::<usize>());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in slots {
            let key_len = name.len() + 2;
            if tail.len() >= key_len
                && tail.as_bytes()[key_len - 1] == b'}'
                && &tail[1..key_len - 1] == *name
            {
                out.push_str(value);
                rest = &tail[key_len..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

fn qa_template(variant: PromptVariant) -> Option<&'static str> {
    match variant {
        PromptVariant::Baseline => Some(BASELINE_TEMPLATE),
        PromptVariant::SparqlCot => Some(SPARQL_COT_TEMPLATE),
        PromptVariant::GenericCot => Some(GENERIC_COT_TEMPLATE),
        _ => None,
    }
}

impl PromptVariant {
    /// Whether the variant answers questions from a context.
    pub fn is_qa(self) -> bool {
        qa_template(self).is_some()
    }
}

pub fn build_qa_prompt(variant: PromptVariant, context_text: &str, question: &str) -> Result<PromptBundle> {
    let Some(template) = qa_template(variant) else {
        return Err(Error::Usage(format!("{variant} is not a QA prompt variant")));
    };
    if context_text.trim().is_empty() {
        return Err(Error::Usage("context text is empty".into()));
    }
    let user = fill_template(
        template.trim_end(),
        &[("context", context_text.trim_end()), ("question", question)],
    );
    Ok(PromptBundle {
        system: QA_SYSTEM.to_string(),
        user,
        variant,
        max_output_tokens: QA_MAX_OUTPUT_TOKENS,
    })
}

pub fn build_router_prompt(question: &str) -> Result<PromptBundle> {
    if question.trim().is_empty() {
        return Err(Error::Usage("router question is empty".into()));
    }
    Ok(PromptBundle {
        system: String::new(),
        user: fill_template(ROUTER_TEMPLATE.trim_end(), &[("question", question)]),
        variant: PromptVariant::Router,
        max_output_tokens: ROUTER_MAX_OUTPUT_TOKENS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    Answered,
    Abstained,
    ExtractionFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    #[serde(rename = "final")]
    pub final_answer: Option<String>,
    pub abstained: bool,
    pub raw: String,
}

impl ParsedAnswer {
    pub fn status(&self) -> AnswerStatus {
        match (&self.final_answer, self.abstained) {
            (_, true) => AnswerStatus::Abstained,
            (Some(_), false) => AnswerStatus::Answered,
            (None, false) => AnswerStatus::ExtractionFailed,
        }
    }

    /// Text scored against gold answers; empty unless answered.
    pub fn prediction(&self) -> &str {
        match self.status() {
            AnswerStatus::Answered => self.final_answer.as_deref().unwrap_or(""),
            _ => "",
        }
    }
}

fn normalize_for_abstention(s: &str) -> String {
    let stripped: String = s
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_abstention(answer: &str) -> bool {
    let norm = normalize_for_abstention(answer);
    ABSTENTION_PHRASES.iter().any(|p| {
        norm == *p || (norm.starts_with(p) && norm.as_bytes().get(p.len()) == Some(&b' '))
    })
}

/// Takes the rest of the line after the last `FINAL ANSWER:` marker.
pub fn extract_answer(raw: &str) -> ParsedAnswer {
    let lowered = raw.to_ascii_lowercase();
    let marker = FINAL_ANSWER_MARKER.to_ascii_lowercase();
    let extracted = lowered.rfind(&marker).and_then(|pos| {
        let rest = &raw[pos + marker.len()..];
        let line = rest.split(['\n', '\r']).next().unwrap_or("").trim();
        (!line.is_empty()).then(|| line.to_string())
    });
    match extracted {
        Some(answer) if is_abstention(&answer) => ParsedAnswer {
            final_answer: None,
            abstained: true,
            raw: raw.to_string(),
        },
        Some(answer) => ParsedAnswer {
            final_answer: Some(answer),
            abstained: false,
            raw: raw.to_string(),
        },
        None => ParsedAnswer {
            final_answer: None,
            abstained: false,
            raw: raw.to_string(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteLabel {
    Bridge,
    Comparison,
    Inference,
}

impl RouteLabel {
    pub const ALL: [RouteLabel; 3] = [RouteLabel::Bridge, RouteLabel::Comparison, RouteLabel::Inference];

    pub fn as_str(self) -> &'static str {
        match self {
            RouteLabel::Bridge => "bridge",
            RouteLabel::Comparison => "comparison",
            RouteLabel::Inference => "inference",
        }
    }
}

impl fmt::Display for RouteLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First word of the reply naming a label; anything else routes to bridge.
pub fn parse_route(raw: &str) -> RouteLabel {
    raw.trim()
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|w| RouteLabel::ALL.into_iter().find(|l| l.as_str() == w))
        .unwrap_or(RouteLabel::Bridge)
}
