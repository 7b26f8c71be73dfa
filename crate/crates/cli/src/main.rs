use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use tracing::info;

use graphwalk_qa::context::{load_contexts, load_questions, TokenCounter};
use graphwalk_qa::eval::{aggregate, render_markdown, AnswerRecord, Judge, ScoringOptions};
use graphwalk_qa::gateway::{
    ChatProvider, Gateway, HttpConfig, HttpProvider, Prices, StubProvider, StubScript,
};
use graphwalk_qa::graph::load_graph_dir;
use graphwalk_qa::jsonl::{read_jsonl_file, write_jsonl_file};
use graphwalk_qa::pipeline::{
    emit_report, index_contexts, preflight, run_config, sample_questions, score_records, RunConfig,
    RunInputs, RunLabel,
};
use graphwalk_qa::seeds::StopWordPolicy;
use graphwalk_qa::walk::{compress, CompressedDump, WalkConfig};

#[derive(Parser)]
#[command(name = "gwqa", version, about = "Graph-walk compression, CoT prompting and evaluation for Graph-RAG QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer sampled questions under one or more configurations and write a report.
    Run(Box<RunArgs>),
    /// Aggregate an existing results.jsonl.
    Score(ScoreArgs),
    /// Compress contexts only and write compressed.jsonl.
    Compress(CompressArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Stub,
    Http,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long, default_value_t = 4000)]
    budget: usize,
    #[arg(long, default_value_t = 3)]
    max_depth: u32,
    #[arg(long, default_value_t = 4.0)]
    chars_per_token: f64,
    /// Stop-word list, one word per line; `#` starts a comment.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

impl WalkArgs {
    fn walk_config(&self) -> Result<WalkConfig> {
        let counter = TokenCounter::approximate(self.chars_per_token)?;
        Ok(WalkConfig::new(self.max_depth, self.budget, counter)?)
    }

    fn stopwords(&self) -> Result<StopWordPolicy> {
        Ok(match &self.stopwords {
            Some(p) => StopWordPolicy::from_file(p)?,
            None => StopWordPolicy::default(),
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run labels; repeat or comma-separate to run several on the same sample.
    #[arg(long = "config", required = true, value_delimiter = ',')]
    configs: Vec<String>,
    #[arg(long)]
    graph_dir: PathBuf,
    #[arg(long)]
    contexts: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value = "stub")]
    provider: ProviderKind,
    /// Scripted replies for the stub provider (`{"fingerprint","response"}` lines).
    #[arg(long)]
    stub_script: Option<PathBuf>,
    /// TOML with endpoint, api_key_env, timeout_secs, max_in_flight and prices.
    #[arg(long)]
    provider_config: Option<PathBuf>,
    /// Chat-completions URL for the http provider.
    #[arg(long, env = "GWQA_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 0.3)]
    temperature: f64,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Model consulted when the string heuristic rejects an answer.
    #[arg(long)]
    judge_model: Option<String>,
    /// Model that rewrites answers to a short span before scoring.
    #[arg(long)]
    short_answer_model: Option<String>,
    /// Routing: do not retry with the other method after an abstention.
    #[arg(long)]
    no_retry: bool,
    /// Routing: answer from the full context instead of the compressed one.
    #[arg(long)]
    routing_full_context: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    walk: WalkArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Re-run heuristic scoring instead of trusting stored verdicts.
    #[arg(long)]
    rescore: bool,
    /// Write report.json and report.md here; otherwise print markdown.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    graph_dir: PathBuf,
    #[arg(long)]
    contexts: PathBuf,
    /// Questions supplying the text used for seed matching.
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    walk: WalkArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderFile {
    endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    api_key_env: Option<String>,
    timeout_secs: Option<u64>,
    max_in_flight: Option<usize>,
    #[serde(default)]
    prices: Prices,
}

fn read_provider_file(path: Option<&Path>) -> Result<ProviderFile> {
    let Some(path) = path else {
        return Ok(ProviderFile::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn build_provider(args: &RunArgs, file: &ProviderFile) -> Result<Arc<dyn ChatProvider>> {
    Ok(match args.provider {
        ProviderKind::Stub => {
            let script = match &args.stub_script {
                Some(p) => StubScript::load(p)?,
                None => StubScript::default(),
            };
            Arc::new(StubProvider::new(script))
        }
        ProviderKind::Http => {
            let endpoint = args
                .endpoint
                .clone()
                .or_else(|| file.endpoint.clone())
                .context("the http provider needs --endpoint or an endpoint in --provider-config")?;
            let api_key = match &file.api_key_env {
                Some(var) => Some(std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?),
                None => None,
            };
            let mut config = HttpConfig {
                endpoint,
                api_key,
                timeout_secs: 120,
            };
            if let Some(t) = file.timeout_secs {
                config.timeout_secs = t;
            }
            Arc::new(HttpProvider::new(config)?)
        }
    })
}

async fn cmd_run(args: RunArgs) -> Result<()> {
    let labels = args
        .configs
        .iter()
        .map(|s| s.parse::<RunLabel>())
        .collect::<graphwalk_qa::Result<Vec<_>>>()?;
    let file = read_provider_file(args.provider_config.as_deref())?;
    let walk = args.walk.walk_config()?;
    let stopwords = args.walk.stopwords()?;
    let graph = load_graph_dir(&args.graph_dir)?;
    let contexts = index_contexts(load_contexts(&args.contexts)?)?;
    let all = load_questions(&args.questions)?;
    let sample = sample_questions(&all, args.n, args.seed)?;
    preflight(&sample, &contexts)?;
    info!(questions = sample.len(), entities = graph.entity_count(), "inputs loaded");

    let provider = build_provider(&args, &file)?;
    let gateway = Gateway::new(provider.clone()).with_transcript();
    let judge_gateway = Gateway::new(provider);
    let max_in_flight = args.max_in_flight.or(file.max_in_flight).unwrap_or(8);
    let scoring = ScoringOptions {
        judge: args.judge_model.clone().map(|model| Judge { gateway: &judge_gateway, model }),
        short_answer: args.short_answer_model.clone().map(|model| Judge { gateway: &judge_gateway, model }),
    };
    let inputs = RunInputs {
        graph: &graph,
        contexts: &contexts,
        stopwords: &stopwords,
    };

    let mut records: Vec<AnswerRecord> = Vec::new();
    for label in labels {
        let mut cfg = RunConfig::new(label, args.model.clone());
        cfg.walk = walk.clone();
        cfg.temperature = args.temperature;
        cfg.sample.n = args.n;
        cfg.sample.seed = args.seed;
        cfg.max_in_flight = max_in_flight;
        cfg.routing.retry_on_abstain = !args.no_retry;
        cfg.routing.use_walk = !args.routing_full_context;
        info!(%label, "running");
        records.extend(run_config(&cfg, &inputs, &sample, &gateway, &scoring).await?);
    }

    let report = emit_report(&records, &sample, &args.out)?;
    write_jsonl_file(&args.out.join("transcripts.jsonl"), &gateway.transcript())?;
    let usage = gateway.usage();
    let judge_usage = judge_gateway.usage();
    eprintln!(
        "{} records; qa calls {} ({} attempts), judge calls {}; est. cost {:.4}",
        records.len(),
        usage.calls,
        usage.attempts,
        judge_usage.calls,
        usage.cost(&file.prices) + judge_usage.cost(&file.prices)
    );
    for c in &report.configs {
        eprintln!(
            "{}: acc {:.1} f1 {:.1} em {:.1} abstain {:.1}",
            c.label,
            100.0 * c.all.accuracy,
            100.0 * c.all.f1,
            100.0 * c.all.em,
            100.0 * c.all.abstain_rate
        );
    }
    Ok(())
}

async fn cmd_score(args: ScoreArgs) -> Result<()> {
    let mut records: Vec<AnswerRecord> = read_jsonl_file(&args.results)?;
    let questions = load_questions(&args.questions)?;
    if args.rescore {
        for r in &mut records {
            r.correct = None;
        }
        score_records(&mut records, &questions, &ScoringOptions::default(), 1).await?;
    }
    match &args.out {
        Some(dir) => {
            emit_report(&records, &questions, dir)?;
        }
        None => print!("{}", render_markdown(&aggregate(&records, &questions)?)),
    }
    Ok(())
}

fn cmd_compress(args: CompressArgs) -> Result<()> {
    let walk = args.walk.walk_config()?;
    let stopwords = args.walk.stopwords()?;
    let graph = load_graph_dir(&args.graph_dir)?;
    let contexts = index_contexts(load_contexts(&args.contexts)?)?;
    let questions: BTreeMap<String, String> = load_questions(&args.questions)?
        .into_iter()
        .map(|q| (q.id, q.text))
        .collect();
    let mut dumps = Vec::with_capacity(contexts.len());
    let mut missing = Vec::new();
    for (id, ctx) in &contexts {
        let Some(text) = questions.get(id) else {
            missing.push(id.clone());
            continue;
        };
        dumps.push(CompressedDump::from(&compress(&graph, ctx, text, &walk, &stopwords)?));
    }
    if !missing.is_empty() {
        bail!("no question text for context ids: {}", missing.join(", "));
    }
    write_jsonl_file(&args.out, &dumps)?;
    let compressed: Vec<f64> = dumps
        .iter()
        .filter(|d| !d.stats.fallback)
        .map(|d| d.stats.compression_ratio)
        .collect();
    let mean = if compressed.is_empty() {
        0.0
    } else {
        compressed.iter().sum::<f64>() / compressed.len() as f64
    };
    eprintln!(
        "{} contexts, {} fallbacks, mean compression {:.3}",
        dumps.len(),
        dumps.len() - compressed.len(),
        mean
    );
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(*args).await,
        Command::Score(args) => cmd_score(args).await,
        Command::Compress(args) => cmd_compress(args),
    }
}
