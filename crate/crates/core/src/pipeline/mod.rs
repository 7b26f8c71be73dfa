//! End-to-end runs: sampling, the QA configurations, routing with retry,
//! scoring and report emission.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use futures::stream::{self, StreamExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{QuestionRecord, RetrievedContext};
use crate::error::{Error, Result};
use crate::eval::{aggregate, coverage, render_markdown, score_record, AnswerRecord, EvalReport, MatchMethod, ScoringOptions};
use crate::gateway::{ChatRequest, Gateway, DEFAULT_TEMPERATURE};
use crate::graph::KnowledgeGraph;
use crate::jsonl::to_jsonl_string;
use crate::prompt::{build_qa_prompt, build_router_prompt, extract_answer, parse_route, ParsedAnswer, PromptVariant, RouteLabel};
use crate::seeds::StopWordPolicy;
use crate::walk::{compress, CompressionStats, WalkConfig};

pub const DEFAULT_SAMPLE_SIZE: usize = 500;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const RESULTS_FILE: &str = "results.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunLabel {
    Baseline,
    BaselineGw,
    Sparql,
    SparqlGw,
    Generic,
    GenericGw,
    Routing,
}

impl RunLabel {
    pub const ALL: [RunLabel; 7] = [
        RunLabel::Baseline,
        RunLabel::BaselineGw,
        RunLabel::Sparql,
        RunLabel::SparqlGw,
        RunLabel::Generic,
        RunLabel::GenericGw,
        RunLabel::Routing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RunLabel::Baseline => "baseline",
            RunLabel::BaselineGw => "baseline_gw",
            RunLabel::Sparql => "sparql",
            RunLabel::SparqlGw => "sparql_gw",
            RunLabel::Generic => "generic",
            RunLabel::GenericGw => "generic_gw",
            RunLabel::Routing => "routing",
        }
    }

    /// QA prompt of a single-call label; `None` for routing.
    pub fn variant(self) -> Option<PromptVariant> {
        match self {
            RunLabel::Baseline | RunLabel::BaselineGw => Some(PromptVariant::Baseline),
            RunLabel::Sparql | RunLabel::SparqlGw => Some(PromptVariant::SparqlCot),
            RunLabel::Generic | RunLabel::GenericGw => Some(PromptVariant::GenericCot),
            RunLabel::Routing => None,
        }
    }

    /// Whether the label answers from graph-walk compressed context.
    pub fn uses_walk(self) -> bool {
        matches!(self, RunLabel::BaselineGw | RunLabel::SparqlGw | RunLabel::GenericGw)
    }
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown run label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub n: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            n: DEFAULT_SAMPLE_SIZE,
            seed: DEFAULT_SEED,
        }
    }
}

/// Bridge questions go to one CoT, comparison and inference to the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub bridge_method: PromptVariant,
    pub other_method: PromptVariant,
    pub retry_on_abstain: bool,
    pub use_walk: bool,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy {
            bridge_method: PromptVariant::SparqlCot,
            other_method: PromptVariant::GenericCot,
            retry_on_abstain: true,
            use_walk: true,
        }
    }
}

impl RoutingPolicy {
    pub fn validate(&self) -> Result<()> {
        if !self.bridge_method.is_qa() || !self.other_method.is_qa() {
            return Err(Error::Usage("routing methods must be QA prompt variants".into()));
        }
        if self.bridge_method == self.other_method {
            return Err(Error::Usage("routing methods must differ".into()));
        }
        Ok(())
    }

    pub fn method_for(&self, route: RouteLabel) -> PromptVariant {
        match route {
            RouteLabel::Bridge => self.bridge_method,
            RouteLabel::Comparison | RouteLabel::Inference => self.other_method,
        }
    }

    fn alternative(&self, method: PromptVariant) -> PromptVariant {
        if method == self.bridge_method {
            self.other_method
        } else {
            self.bridge_method
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub label: RunLabel,
    pub model: String,
    pub walk: WalkConfig,
    pub temperature: f64,
    pub sample: SampleSpec,
    pub max_in_flight: usize,
    pub routing: RoutingPolicy,
}

impl RunConfig {
    pub fn new(label: RunLabel, model: impl Into<String>) -> Self {
        RunConfig {
            label,
            model: model.into(),
            walk: WalkConfig::default(),
            temperature: DEFAULT_TEMPERATURE,
            sample: SampleSpec::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            routing: RoutingPolicy::default(),
        }
    }
}

/// Shared read-only inputs of a run.
pub struct RunInputs<'a> {
    pub graph: &'a KnowledgeGraph,
    pub contexts: &'a BTreeMap<String, RetrievedContext>,
    pub stopwords: &'a StopWordPolicy,
}

/// Keys contexts by question id; duplicate ids are an integrity error.
pub fn index_contexts(contexts: Vec<RetrievedContext>) -> Result<BTreeMap<String, RetrievedContext>> {
    let mut out = BTreeMap::new();
    let mut dups = BTreeSet::new();
    for c in contexts {
        if out.contains_key(&c.question_id) {
            dups.insert(c.question_id.clone());
        } else {
            out.insert(c.question_id.clone(), c);
        }
    }
    if !dups.is_empty() {
        return Err(Error::Integrity {
            message: "duplicate context question ids".into(),
            ids: dups.into_iter().collect(),
        });
    }
    Ok(out)
}

/// ChaCha8 seeded from `seed`, Fisher-Yates shuffle of the input order
/// (`rand`'s `SliceRandom::shuffle`), then the first `n`.
pub fn sample_questions(all: &[QuestionRecord], n: usize, seed: u64) -> Result<Vec<QuestionRecord>> {
    if n == 0 {
        return Err(Error::Usage("sample size must be at least 1".into()));
    }
    if n > all.len() {
        return Err(Error::Usage(format!(
            "sample size {n} exceeds the {} available questions",
            all.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut rng);
    Ok(order[..n].iter().map(|&i| all[i].clone()).collect())
}

/// Fails before any model call if a question has no retrieved context.
pub fn preflight(questions: &[QuestionRecord], contexts: &BTreeMap<String, RetrievedContext>) -> Result<()> {
    let missing: BTreeSet<String> = questions
        .iter()
        .filter(|q| !contexts.contains_key(&q.id))
        .map(|q| q.id.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Preflight {
            ids: missing.into_iter().collect(),
        })
    }
}

struct Prepared {
    text: String,
    compression: Option<CompressionStats>,
    covered: bool,
    covered_original: bool,
    context_tokens: usize,
}

fn prepare(q: &QuestionRecord, inputs: &RunInputs<'_>, walk: Option<&WalkConfig>, counter_cfg: &WalkConfig) -> Result<Prepared> {
    let ctx = &inputs.contexts[&q.id];
    let full = ctx.render();
    let covered_original = coverage(&full, &q.gold_answers);
    let (text, compression) = match walk {
        Some(cfg) => {
            let c = compress(inputs.graph, ctx, &q.text, cfg, inputs.stopwords)?;
            (c.rendered, Some(c.stats))
        }
        None => (full, None),
    };
    Ok(Prepared {
        covered: coverage(&text, &q.gold_answers),
        covered_original,
        context_tokens: counter_cfg.counter.count(&text),
        text,
        compression,
    })
}

fn blank_record(q: &QuestionRecord, label: RunLabel, p: &Prepared) -> AnswerRecord {
    AnswerRecord {
        question_id: q.id.clone(),
        config: label,
        route: None,
        parsed: extract_answer(""),
        scored_answer: None,
        covered: p.covered,
        covered_original: p.covered_original,
        correct: None,
        match_method: MatchMethod::None,
        f1: 0.0,
        em: false,
        tokens_in: 0,
        tokens_out: 0,
        context_tokens: p.context_tokens,
        calls: 0,
        compression: p.compression.clone(),
        error: None,
    }
}

/// One QA call; failures become an extraction-failed answer plus a note.
async fn answer_once(
    record: &mut AnswerRecord,
    gateway: &Gateway,
    cfg: &RunConfig,
    variant: PromptVariant,
    context: &str,
    q: &QuestionRecord,
) -> ParsedAnswer {
    let bundle = match build_qa_prompt(variant, context, &q.text) {
        Ok(b) => b,
        Err(e) => {
            record.note_error(format!("{variant}: {e}"));
            return extract_answer("");
        }
    };
    let req = ChatRequest::new(bundle, cfg.model.clone())
        .with_temperature(cfg.temperature)
        .with_tag(q.id.clone());
    record.calls += 1;
    match gateway.complete(&req).await {
        Ok(resp) => {
            record.tokens_in += resp.prompt_tokens;
            record.tokens_out += resp.completion_tokens;
            extract_answer(&resp.text)
        }
        Err(e) => {
            record.note_error(format!("{variant}: {e}"));
            extract_answer("")
        }
    }
}

async fn single_call(q: &QuestionRecord, cfg: &RunConfig, inputs: &RunInputs<'_>, gateway: &Gateway, variant: PromptVariant) -> Result<AnswerRecord> {
    let walk = cfg.label.uses_walk().then_some(&cfg.walk);
    let p = prepare(q, inputs, walk, &cfg.walk)?;
    let mut record = blank_record(q, cfg.label, &p);
    record.parsed = answer_once(&mut record, gateway, cfg, variant, &p.text, q).await;
    Ok(record)
}

/// Router call, routed CoT, and one retry with the other CoT on abstention.
/// At most three gateway calls per question.
async fn routed(q: &QuestionRecord, cfg: &RunConfig, inputs: &RunInputs<'_>, gateway: &Gateway) -> Result<AnswerRecord> {
    let policy = &cfg.routing;
    let walk = policy.use_walk.then_some(&cfg.walk);
    let p = prepare(q, inputs, walk, &cfg.walk)?;
    let mut record = blank_record(q, RunLabel::Routing, &p);
    let router = ChatRequest::new(build_router_prompt(&q.text)?, cfg.model.clone())
        .with_temperature(cfg.temperature)
        .with_tag(q.id.clone());
    record.calls += 1;
    let route = match gateway.complete(&router).await {
        Ok(resp) => {
            record.tokens_in += resp.prompt_tokens;
            record.tokens_out += resp.completion_tokens;
            parse_route(&resp.text)
        }
        Err(e) => {
            record.note_error(format!("router: {e}"));
            RouteLabel::Bridge
        }
    };
    record.route = Some(route);
    let method = policy.method_for(route);
    let mut parsed = answer_once(&mut record, gateway, cfg, method, &p.text, q).await;
    if parsed.abstained && policy.retry_on_abstain {
        parsed = answer_once(&mut record, gateway, cfg, policy.alternative(method), &p.text, q).await;
    }
    record.parsed = parsed;
    Ok(record)
}

/// Scores records against their questions with bounded concurrency.
pub async fn score_records(
    records: &mut [AnswerRecord],
    questions: &[QuestionRecord],
    opts: &ScoringOptions<'_>,
    max_in_flight: usize,
) -> Result<()> {
    let by_id: HashMap<&str, &QuestionRecord> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let missing: BTreeSet<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(r.question_id.as_str()))
        .map(|r| r.question_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Join {
            ids: missing.into_iter().collect(),
        });
    }
    stream::iter(records.iter_mut())
        .map(|r| {
            let q = by_id[r.question_id.as_str()];
            score_record(r, q, opts)
        })
        .buffered(max_in_flight.max(1))
        .collect::<Vec<()>>()
        .await;
    Ok(())
}

/// Answers and scores `questions` under `cfg`. Records come back sorted by
/// question id.
pub async fn run_config(
    cfg: &RunConfig,
    inputs: &RunInputs<'_>,
    questions: &[QuestionRecord],
    gateway: &Gateway,
    scoring: &ScoringOptions<'_>,
) -> Result<Vec<AnswerRecord>> {
    preflight(questions, inputs.contexts)?;
    if cfg.label == RunLabel::Routing {
        cfg.routing.validate()?;
    }
    let outcomes: Vec<Result<AnswerRecord>> = stream::iter(questions)
        .map(|q| async move {
            match cfg.label.variant() {
                Some(v) => single_call(q, cfg, inputs, gateway, v).await,
                None => routed(q, cfg, inputs, gateway).await,
            }
        })
        .buffered(cfg.max_in_flight.max(1))
        .collect()
        .await;
    let mut records = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    score_records(&mut records, questions, scoring, cfg.max_in_flight).await?;
    Ok(records)
}

/// Routing run; `cfg.label` is ignored.
pub async fn run_routing(
    cfg: &RunConfig,
    inputs: &RunInputs<'_>,
    questions: &[QuestionRecord],
    gateway: &Gateway,
    scoring: &ScoringOptions<'_>,
) -> Result<Vec<AnswerRecord>> {
    let cfg = RunConfig {
        label: RunLabel::Routing,
        ..cfg.clone()
    };
    run_config(&cfg, inputs, questions, gateway, scoring).await
}

/// Records sorted by label then question id, one JSON object per line.
pub fn results_jsonl(records: &[AnswerRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| (a.config, &a.question_id).cmp(&(b.config, &b.question_id)));
    to_jsonl_string(&sorted)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.jsonl`, `report.json` and `report.md` into `out_dir`.
pub fn emit_report(records: &[AnswerRecord], questions: &[QuestionRecord], out_dir: &Path) -> Result<EvalReport> {
    let report = aggregate(records, questions)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write(&out_dir.join(RESULTS_FILE), &results_jsonl(records))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&out_dir.join(REPORT_JSON_FILE), &(json + "\n"))?;
    write(&out_dir.join(REPORT_MD_FILE), &render_markdown(&report))?;
    Ok(report)
}
