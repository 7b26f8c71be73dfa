//! Scoring and aggregation.
//!
//! Accuracy is heuristic-first: normalized equality, containment or equal
//! last tokens; an LLM judge is consulted only when the heuristic rejects an
//! answered record. Abstentions and extraction failures are scored incorrect
//! without consulting anything.

pub mod metrics;
mod report;

use serde::{Deserialize, Serialize};

use crate::context::QuestionRecord;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::pipeline::RunLabel;
use crate::prompt::{fill_template, AnswerStatus, ParsedAnswer, PromptBundle, PromptVariant, RouteLabel};
use crate::walk::CompressionStats;

pub use metrics::{
    any_exact_match, coverage, exact_match, heuristic_match, max_f1, squad_normalize, token_f1,
};
pub use report::{
    aggregate, decompose_errors, render_markdown, ConfigReport, Decomposition, EvalReport,
    MetricBlock, PairedDelta,
};

const JUDGE_TEMPLATE: &str = include_str!("../../resources/prompts/judge.txt");
const SHORT_ANSWER_TEMPLATE: &str = include_str!("../../resources/prompts/short_answer.txt");
pub const JUDGE_MAX_OUTPUT_TOKENS: u32 = 3;
pub const SHORT_ANSWER_MAX_OUTPUT_TOKENS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Heuristic,
    Judge,
    None,
}

/// One question's outcome under one run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub config: RunLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteLabel>,
    pub parsed: ParsedAnswer,
    /// Text actually scored; differs from the parsed answer only when
    /// short-answer normalization ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored_answer: Option<String>,
    /// Gold answer present in the context that was sent to the model.
    pub covered: bool,
    /// Gold answer present in the full retrieved context.
    pub covered_original: bool,
    pub correct: Option<bool>,
    pub match_method: MatchMethod,
    pub f1: f64,
    pub em: bool,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub context_tokens: usize,
    pub calls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnswerRecord {
    pub fn status(&self) -> AnswerStatus {
        self.parsed.status()
    }

    pub fn abstained(&self) -> bool {
        self.parsed.abstained
    }

    pub fn is_correct(&self) -> bool {
        self.correct == Some(true)
    }

    /// Appends a diagnostic to `error`.
    pub fn note_error(&mut self, message: impl Into<String>) {
        let message = message.into();
        self.error = Some(match self.error.take() {
            Some(prev) => format!("{prev}; {message}"),
            None => message,
        });
    }

    fn prediction(&self) -> &str {
        match &self.scored_answer {
            Some(s) => s,
            None => self.parsed.prediction(),
        }
    }
}

/// Judge configuration: a gateway and the model to ask.
pub struct Judge<'a> {
    pub gateway: &'a Gateway,
    pub model: String,
}

pub fn judge_prompt(question: &str, prediction: &str, golds: &[String]) -> PromptBundle {
    let gold = golds.join(" | ");
    PromptBundle {
        system: String::new(),
        user: fill_template(
            JUDGE_TEMPLATE.trim_end(),
            &[("question", question), ("gold", &gold), ("prediction", prediction)],
        ),
        variant: PromptVariant::Judge,
        max_output_tokens: JUDGE_MAX_OUTPUT_TOKENS,
    }
}

/// First word of the reply is "yes", ignoring case and punctuation.
pub fn parse_judge_reply(reply: &str) -> bool {
    reply
        .split_whitespace()
        .next()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .eq_ignore_ascii_case("yes")
        })
        .unwrap_or(false)
}

pub async fn judge_equivalence(
    judge: &Judge<'_>,
    prediction: &str,
    golds: &[String],
    question: &str,
) -> Result<bool, GatewayError> {
    let req = ChatRequest::new(judge_prompt(question, prediction, golds), judge.model.clone())
        .with_temperature(0.0);
    let resp = judge.gateway.complete(&req).await?;
    Ok(parse_judge_reply(&resp.text))
}

pub fn short_answer_prompt(question: &str, prediction: &str) -> PromptBundle {
    PromptBundle {
        system: String::new(),
        user: fill_template(
            SHORT_ANSWER_TEMPLATE.trim_end(),
            &[("question", question), ("prediction", prediction)],
        ),
        variant: PromptVariant::ShortAnswer,
        max_output_tokens: SHORT_ANSWER_MAX_OUTPUT_TOKENS,
    }
}

/// Scoring options for one run.
#[derive(Default)]
pub struct ScoringOptions<'a> {
    pub judge: Option<Judge<'a>>,
    /// Rewrites verbose answers to a short span before matching.
    pub short_answer: Option<Judge<'a>>,
}

/// Fills `correct`, `match_method`, `f1` and `em`.
pub async fn score_record(record: &mut AnswerRecord, question: &QuestionRecord, opts: &ScoringOptions<'_>) {
    let golds = &question.gold_answers;
    if record.status() != AnswerStatus::Answered {
        record.correct = Some(false);
        record.match_method = MatchMethod::None;
        record.f1 = max_f1("", golds);
        record.em = false;
        return;
    }
    if let Some(norm) = &opts.short_answer {
        if record.scored_answer.is_none() {
            let req = ChatRequest::new(
                short_answer_prompt(&question.text, record.parsed.prediction()),
                norm.model.clone(),
            )
            .with_temperature(0.0);
            match norm.gateway.complete(&req).await {
                Ok(resp) if !resp.text.trim().is_empty() => {
                    record.scored_answer = Some(resp.text.trim().to_string())
                }
                Ok(_) => {}
                Err(e) => record.note_error(format!("short-answer normalization: {e}")),
            }
        }
    }
    let pred = record.prediction().to_string();
    record.f1 = max_f1(&pred, golds);
    record.em = any_exact_match(&pred, golds);
    if heuristic_match(&pred, golds) {
        record.correct = Some(true);
        record.match_method = MatchMethod::Heuristic;
        return;
    }
    match &opts.judge {
        None => {
            record.correct = Some(false);
            record.match_method = MatchMethod::Heuristic;
        }
        Some(judge) => {
            record.match_method = MatchMethod::Judge;
            match judge_equivalence(judge, &pred, golds, &question.text).await {
                Ok(verdict) => record.correct = Some(verdict),
                Err(e) => {
                    record.correct = None;
                    record.note_error(format!("judge: {e}"));
                }
            }
        }
    }
}
