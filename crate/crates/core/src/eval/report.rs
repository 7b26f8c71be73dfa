use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AnswerRecord;
use crate::context::QuestionRecord;
use crate::error::{Error, Result};
use crate::pipeline::RunLabel;
use crate::prompt::AnswerStatus;

/// Rates over a set of records. Every rate is 0 when `n` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub em: f64,
    pub abstain_rate: f64,
    pub abstained: usize,
    pub extraction_failed: usize,
    /// Records whose judge call failed; counted as incorrect.
    pub unscored: usize,
    /// Coverage of the context actually sent.
    pub coverage: f64,
    pub covered: usize,
    /// Coverage of the full retrieved context.
    pub coverage_original: f64,
    pub covered_original: usize,
}

impl MetricBlock {
    pub fn from_records<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a AnswerRecord>,
    {
        let mut b = MetricBlock {
            n: 0,
            correct: 0,
            accuracy: 0.0,
            f1: 0.0,
            em: 0.0,
            abstain_rate: 0.0,
            abstained: 0,
            extraction_failed: 0,
            unscored: 0,
            coverage: 0.0,
            covered: 0,
            coverage_original: 0.0,
            covered_original: 0,
        };
        let (mut f1, mut em) = (0.0, 0usize);
        for r in records {
            b.n += 1;
            b.correct += r.is_correct() as usize;
            b.unscored += r.correct.is_none() as usize;
            f1 += r.f1;
            em += r.em as usize;
            match r.status() {
                AnswerStatus::Abstained => b.abstained += 1,
                AnswerStatus::ExtractionFailed => b.extraction_failed += 1,
                AnswerStatus::Answered => {}
            }
            b.covered += r.covered as usize;
            b.covered_original += r.covered_original as usize;
        }
        if b.n > 0 {
            let n = b.n as f64;
            b.accuracy = b.correct as f64 / n;
            b.f1 = f1 / n;
            b.em = em as f64 / n;
            b.abstain_rate = b.abstained as f64 / n;
            b.coverage = b.covered as f64 / n;
            b.coverage_original = b.covered_original as f64 / n;
        }
        b
    }
}

/// Errors split by whether the retrieved context held the gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub errors: usize,
    pub covered_errors: usize,
    /// Absent when there are no errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_share: Option<f64>,
    /// Metrics over covered records only.
    pub covered: MetricBlock,
}

/// Coverage here is measured on the full retrieved context, so compression
/// losses count as reasoning errors rather than retrieval errors.
pub fn decompose_errors(records: &[AnswerRecord]) -> Decomposition {
    let errors = records.iter().filter(|r| !r.is_correct()).count();
    let covered_errors = records
        .iter()
        .filter(|r| r.covered_original && !r.is_correct())
        .count();
    Decomposition {
        errors,
        covered_errors,
        reasoning_share: (errors > 0).then(|| covered_errors as f64 / errors as f64),
        covered: MetricBlock::from_records(records.iter().filter(|r| r.covered_original)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub key: String,
    pub metrics: MetricBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub label: RunLabel,
    pub all: MetricBlock,
    pub decomposition: Decomposition,
    pub by_type: Vec<BreakdownRow>,
    pub by_hops: Vec<BreakdownRow>,
    pub calls: u64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_compression_ratio: Option<f64>,
    pub fallbacks: usize,
}

/// Metric differences `second - first` over the ids both labels answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub first: RunLabel,
    pub second: RunLabel,
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub em: f64,
    pub abstain_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub configs: Vec<ConfigReport>,
    #[serde(default)]
    pub paired: Vec<PairedDelta>,
}

impl EvalReport {
    pub fn config(&self, label: RunLabel) -> Option<&ConfigReport> {
        self.configs.iter().find(|c| c.label == label)
    }
}

fn breakdown<'a, F>(records: &[&'a AnswerRecord], key: F) -> Vec<BreakdownRow>
where
    F: Fn(&AnswerRecord) -> String,
{
    let mut groups: BTreeMap<String, Vec<&'a AnswerRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, rs)| BreakdownRow {
            key,
            metrics: MetricBlock::from_records(rs),
        })
        .collect()
}

fn config_report(label: RunLabel, records: &[&AnswerRecord], questions: &HashMap<&str, &QuestionRecord>) -> ConfigReport {
    let owned: Vec<AnswerRecord> = records.iter().map(|r| (*r).clone()).collect();
    let by_type = breakdown(records, |r| {
        questions[r.question_id.as_str()]
            .qtype
            .map(|t| t.as_str().to_string())
            .unwrap_or_else(|| "unknown".into())
    });
    let by_hops = breakdown(records, |r| {
        questions[r.question_id.as_str()]
            .hops
            .map(|h| h.to_string())
            .unwrap_or_else(|| "unknown".into())
    });
    let ratios: Vec<f64> = records
        .iter()
        .filter_map(|r| r.compression.as_ref())
        .filter(|c| !c.fallback)
        .map(|c| c.compression_ratio)
        .collect();
    ConfigReport {
        label,
        all: MetricBlock::from_records(records.iter().copied()),
        decomposition: decompose_errors(&owned),
        by_type,
        by_hops,
        calls: records.iter().map(|r| r.calls as u64).sum(),
        tokens_in: records.iter().map(|r| r.tokens_in).sum(),
        tokens_out: records.iter().map(|r| r.tokens_out).sum(),
        mean_compression_ratio: (!ratios.is_empty())
            .then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        fallbacks: records
            .iter()
            .filter(|r| r.compression.as_ref().is_some_and(|c| c.fallback))
            .count(),
    }
}

fn paired(first: RunLabel, a: &[&AnswerRecord], second: RunLabel, b: &[&AnswerRecord]) -> PairedDelta {
    let ids_a: BTreeSet<&str> = a.iter().map(|r| r.question_id.as_str()).collect();
    let ids_b: BTreeSet<&str> = b.iter().map(|r| r.question_id.as_str()).collect();
    let shared: BTreeSet<&str> = ids_a.intersection(&ids_b).copied().collect();
    let block = |rs: &[&AnswerRecord]| {
        MetricBlock::from_records(rs.iter().copied().filter(|r| shared.contains(r.question_id.as_str())))
    };
    let (ma, mb) = (block(a), block(b));
    PairedDelta {
        first,
        second,
        n: shared.len(),
        accuracy: mb.accuracy - ma.accuracy,
        f1: mb.f1 - ma.f1,
        em: mb.em - ma.em,
        abstain_rate: mb.abstain_rate - ma.abstain_rate,
    }
}

/// Aggregates records of one or more run labels. Records are sorted before
/// summing, so the result does not depend on input order.
pub fn aggregate(records: &[AnswerRecord], questions: &[QuestionRecord]) -> Result<EvalReport> {
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
    let mut sorted: Vec<&AnswerRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (a.config, &a.question_id).cmp(&(b.config, &b.question_id)));
    let mut groups: BTreeMap<RunLabel, Vec<&AnswerRecord>> = BTreeMap::new();
    for r in sorted {
        groups.entry(r.config).or_default().push(r);
    }
    let configs = groups
        .iter()
        .map(|(label, rs)| config_report(*label, rs, &by_id))
        .collect();
    let labels: Vec<_> = groups.keys().copied().collect();
    let mut deltas = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            deltas.push(paired(*a, &groups[a], *b, &groups[b]));
        }
    }
    Ok(EvalReport {
        configs,
        paired: deltas,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn signed_pct(x: f64) -> String {
    format!("{:+.1}", 100.0 * x)
}

fn breakdown_table(out: &mut String, title: &str, configs: &[ConfigReport], rows: fn(&ConfigReport) -> &[BreakdownRow]) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "| Config | {title} | n | Acc | F1 | EM | Abstain | Coverage |");
    let _ = writeln!(out, "|---|---|---:|---:|---:|---:|---:|---:|");
    for c in configs {
        for row in rows(c) {
            let m = &row.metrics;
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                c.label,
                row.key,
                m.n,
                pct(m.accuracy),
                pct(m.f1),
                pct(m.em),
                pct(m.abstain_rate),
                pct(m.coverage_original)
            );
        }
    }
    out.push('\n');
}

/// Markdown rendering: All vs Covered metric matrix, error decomposition,
/// per-type and per-hop tables, and paired deltas when two or more labels
/// are present. Numbers are percentages.
pub fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::from("# Results\n\n");
    out.push_str("| Config | n | Acc | F1 | EM | Covered n | Cov Acc | Cov F1 | Cov EM | Abstain | Coverage | Coverage (sent) |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for c in &report.configs {
        let (a, v) = (&c.all, &c.decomposition.covered);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            c.label,
            a.n,
            pct(a.accuracy),
            pct(a.f1),
            pct(a.em),
            v.n,
            pct(v.accuracy),
            pct(v.f1),
            pct(v.em),
            pct(a.abstain_rate),
            pct(a.coverage_original),
            pct(a.coverage)
        );
    }
    out.push_str("\n## Error decomposition\n\n");
    out.push_str("| Config | Errors | Covered errors | Reasoning share | Unscored | Extraction failed |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for c in &report.configs {
        let d = &c.decomposition;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            c.label,
            d.errors,
            d.covered_errors,
            d.reasoning_share.map(pct).unwrap_or_else(|| "n/a".into()),
            c.all.unscored,
            c.all.extraction_failed
        );
    }
    out.push('\n');
    out.push_str("## Cost\n\n| Config | Calls | Tokens in | Tokens out | Mean compression | Fallbacks |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for c in &report.configs {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            c.label,
            c.calls,
            c.tokens_in,
            c.tokens_out,
            c.mean_compression_ratio.map(pct).unwrap_or_else(|| "n/a".into()),
            c.fallbacks
        );
    }
    out.push('\n');
    breakdown_table(&mut out, "Question type", &report.configs, |c| &c.by_type);
    breakdown_table(&mut out, "Hops", &report.configs, |c| &c.by_hops);
    if !report.paired.is_empty() {
        out.push_str("## Paired deltas\n\n| First | Second | n | dAcc | dF1 | dEM | dAbstain |\n");
        out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
        for d in &report.paired {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                d.first,
                d.second,
                d.n,
                signed_pct(d.accuracy),
                signed_pct(d.f1),
                signed_pct(d.em),
                signed_pct(d.abstain_rate)
            );
        }
        out.push('\n');
    }
    out
}
