//! Presentation artifacts: score tables, efficiency tables, and
//! side-by-side revision comparisons, emitted as JSON, CSV, or markdown.
//!
//! Emission is byte-deterministic for a fixed report: iteration follows
//! vector order, floats render through a fixed path (full precision in
//! the machine formats, two decimals in markdown), and nothing depends on
//! hash ordering.

use crate::domain::{AgentVerdict, BloomLevel, Problem};
use crate::metrics;
use crate::refine::{BatchOutcome, RefinementTrace};
use serde::{Deserialize, Serialize};

/// The six cognitive levels shown in score tables (the holistic judge is
/// a gatekeeper, not a taxonomy level).
const TABLE_LEVELS: [BloomLevel; 6] = [
    BloomLevel::Remembering,
    BloomLevel::Understanding,
    BloomLevel::Applying,
    BloomLevel::Analyzing,
    BloomLevel::Evaluating,
    BloomLevel::Creating,
];

/// Per-model row of the cognitive-level score table.
///
/// Means aggregate final-round performance scores over problems; each
/// delta is final-round mean minus previous-round mean, where a
/// single-round problem contributes its final round as "previous" (so its
/// delta contribution is exactly zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomTableRow {
    pub model_label: String,
    /// Mean final-round performance score per level, level order.
    pub per_level_mean: [f64; 6],
    /// Final-round mean minus previous-round mean, per level.
    pub per_level_delta: [f64; 6],
    pub overall_mean: f64,
    pub overall_delta: f64,
    /// Sum of the lower-order means (levels 1–3).
    pub lot_sum: f64,
    /// Sum of the higher-order means (levels 4–6).
    pub hot_sum: f64,
}

/// Per-model row of the refinement-efficiency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub model_label: String,
    /// Mean rounds over passed problems; `None` when nothing passed.
    pub mean_rounds_to_pass: Option<f64>,
    /// Mean of per-problem mean Q; `None` when nothing was scored.
    pub q_avg: Option<f64>,
    /// Final-round mean Q minus previous-round mean Q.
    pub q_avg_delta: Option<f64>,
}

/// One before/after pair for the revision showcase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionComparison {
    pub label: String,
    pub original: Problem,
    pub final_version: Problem,
    pub rounds_used: u32,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub bloom_rows: Vec<BloomTableRow>,
    pub efficiency_rows: Vec<EfficiencyRow>,
    pub comparisons: Vec<RevisionComparison>,
    /// Fleiss' kappa over final-round pass bits, when defined.
    pub batch_kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(raw: &str) -> Option<ReportFormat> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

/// Traces that carry scores the tables can use.
fn scorable(traces: &[RefinementTrace]) -> Vec<&RefinementTrace> {
    traces
        .iter()
        .filter(|t| t.aborted.is_none() && !t.verdicts_per_round.is_empty())
        .collect()
}

fn level_score(verdicts: &[AgentVerdict], level: BloomLevel) -> Option<f64> {
    verdicts
        .iter()
        .find(|v| v.level == level)
        .map(|v| v.performance_score)
}

/// A trace's final round, and the round before it (final again when the
/// trace only ran once).
fn final_and_previous(trace: &RefinementTrace) -> (&[AgentVerdict], &[AgentVerdict]) {
    let rounds = &trace.verdicts_per_round;
    let final_round = rounds.last().expect("scorable traces have rounds");
    let previous = if rounds.len() >= 2 {
        &rounds[rounds.len() - 2]
    } else {
        final_round
    };
    (final_round, previous)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Build the score-table row for one model's traces. `None` when no
/// trace carries scores.
pub fn build_bloom_row(model_label: &str, traces: &[RefinementTrace]) -> Option<BloomTableRow> {
    let scorable = scorable(traces);
    if scorable.is_empty() {
        return None;
    }

    let mut per_level_mean = [0.0f64; 6];
    let mut per_level_delta = [0.0f64; 6];
    for (j, level) in TABLE_LEVELS.iter().enumerate() {
        let mut finals = Vec::with_capacity(scorable.len());
        let mut previous = Vec::with_capacity(scorable.len());
        for trace in &scorable {
            let (final_round, previous_round) = final_and_previous(trace);
            if let (Some(f), Some(p)) = (
                level_score(final_round, *level),
                level_score(previous_round, *level),
            ) {
                finals.push(f);
                previous.push(p);
            }
        }
        if finals.is_empty() {
            return None; // a level judge is missing everywhere — nothing to tabulate
        }
        per_level_mean[j] = mean(&finals);
        per_level_delta[j] = per_level_mean[j] - mean(&previous);
    }

    let overall_mean = per_level_mean.iter().sum::<f64>() / 6.0;
    let overall_delta = per_level_delta.iter().sum::<f64>() / 6.0;
    Some(BloomTableRow {
        model_label: model_label.to_string(),
        per_level_mean,
        per_level_delta,
        overall_mean,
        overall_delta,
        lot_sum: per_level_mean[..3].iter().sum(),
        hot_sum: per_level_mean[3..].iter().sum(),
    })
}

/// Build the efficiency row for one model's traces.
pub fn build_efficiency_row(model_label: &str, traces: &[RefinementTrace]) -> EfficiencyRow {
    let scorable: Vec<&RefinementTrace> = traces
        .iter()
        .filter(|t| t.aborted.is_none() && !t.assessments.is_empty())
        .collect();

    let q_avg_delta = if scorable.is_empty() {
        None
    } else {
        let finals: Vec<f64> = scorable
            .iter()
            .map(|t| t.assessments.last().expect("nonempty").composite_q)
            .collect();
        let previous: Vec<f64> = scorable
            .iter()
            .map(|t| {
                let a = &t.assessments;
                if a.len() >= 2 {
                    a[a.len() - 2].composite_q
                } else {
                    a[a.len() - 1].composite_q
                }
            })
            .collect();
        Some(mean(&finals) - mean(&previous))
    };

    EfficiencyRow {
        model_label: model_label.to_string(),
        mean_rounds_to_pass: metrics::mean_rounds_to_pass(
            scorable
                .iter()
                .filter(|t| t.passed)
                .map(|t| t.rounds_used),
        ),
        q_avg: metrics::avg_quality_score(
            &scorable.iter().map(|t| t.quality_scores()).collect::<Vec<_>>(),
        ),
        q_avg_delta,
    }
}

/// Before/after pairs for every completed trace, input order.
pub fn build_comparisons(traces: &[RefinementTrace]) -> Vec<RevisionComparison> {
    traces
        .iter()
        .enumerate()
        .filter(|(_, t)| t.aborted.is_none())
        .map(|(i, t)| RevisionComparison {
            label: t
                .original()
                .id
                .clone()
                .unwrap_or_else(|| format!("problem-{}", i + 1)),
            original: t.original().clone(),
            final_version: t.final_version().clone(),
            rounds_used: t.rounds_used,
            passed: t.passed,
        })
        .collect()
}

/// Assemble the full report for one model's batch outcome.
pub fn build_report(model_label: &str, outcome: &BatchOutcome) -> Report {
    Report {
        bloom_rows: build_bloom_row(model_label, &outcome.traces)
            .into_iter()
            .collect(),
        efficiency_rows: vec![build_efficiency_row(model_label, &outcome.traces)],
        comparisons: build_comparisons(&outcome.traces),
        batch_kappa: outcome.summary.fleiss_kappa,
    }
}

/// Render the report. Same report, same format, same bytes.
pub fn emit(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut out =
                serde_json::to_string_pretty(report).expect("reports always serialize");
            out.push('\n');
            out
        }
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Markdown => emit_markdown(report),
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn csv_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn emit_csv(report: &Report) -> String {
    let mut lines = Vec::new();
    let mut header: Vec<String> = vec!["model".to_string()];
    for level in TABLE_LEVELS {
        header.push(format!("{}_mean", level.name().to_ascii_lowercase()));
    }
    for level in TABLE_LEVELS {
        header.push(format!("{}_delta", level.name().to_ascii_lowercase()));
    }
    header.extend(
        [
            "overall_mean",
            "overall_delta",
            "lot_sum",
            "hot_sum",
            "mean_rounds_to_pass",
            "q_avg",
            "q_avg_delta",
            "fleiss_kappa",
        ]
        .map(String::from),
    );
    lines.push(header.join(","));

    let efficiency_for = |label: &str| {
        report
            .efficiency_rows
            .iter()
            .find(|e| e.model_label == label)
    };
    for row in &report.bloom_rows {
        let mut fields: Vec<String> = vec![csv_escape(&row.model_label)];
        fields.extend(row.per_level_mean.iter().map(|v| v.to_string()));
        fields.extend(row.per_level_delta.iter().map(|v| v.to_string()));
        fields.push(row.overall_mean.to_string());
        fields.push(row.overall_delta.to_string());
        fields.push(row.lot_sum.to_string());
        fields.push(row.hot_sum.to_string());
        let efficiency = efficiency_for(&row.model_label);
        fields.push(csv_opt(efficiency.and_then(|e| e.mean_rounds_to_pass)));
        fields.push(csv_opt(efficiency.and_then(|e| e.q_avg)));
        fields.push(csv_opt(efficiency.and_then(|e| e.q_avg_delta)));
        fields.push(csv_opt(report.batch_kappa));
        lines.push(fields.join(","));
    }
    // Efficiency-only labels (no score row) still get a line.
    for efficiency in &report.efficiency_rows {
        if report
            .bloom_rows
            .iter()
            .any(|b| b.model_label == efficiency.model_label)
        {
            continue;
        }
        let mut fields: Vec<String> = vec![csv_escape(&efficiency.model_label)];
        fields.extend(std::iter::repeat_with(String::new).take(16));
        fields.push(csv_opt(efficiency.mean_rounds_to_pass));
        fields.push(csv_opt(efficiency.q_avg));
        fields.push(csv_opt(efficiency.q_avg_delta));
        fields.push(csv_opt(report.batch_kappa));
        lines.push(fields.join(","));
    }
    lines.join("\n") + "\n"
}

fn fmt2(value: f64) -> String {
    format!("{value:.2}")
}

/// "86.92 ↑ 26.92" / "70.00 ↓ 5.88" / "80.00" — the marker direction is
/// exactly the delta's sign, and a zero delta carries no marker.
fn mean_with_delta(mean: f64, delta: f64) -> String {
    if delta > 0.0 {
        format!("{} ↑ {}", fmt2(mean), fmt2(delta))
    } else if delta < 0.0 {
        format!("{} ↓ {}", fmt2(mean), fmt2(-delta))
    } else {
        fmt2(mean)
    }
}

fn md_opt(value: Option<f64>) -> String {
    value.map(fmt2).unwrap_or_else(|| "n/a".to_string())
}

/// Markdown table cells cannot hold raw pipes or newlines.
fn md_escape(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', "<br>")
}

fn emit_markdown(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("# Evaluation report\n");

    out.push_str("\n## Cognitive-level scores\n\n");
    if report.bloom_rows.is_empty() {
        out.push_str("No scored problems.\n");
    } else {
        out.push_str(
            "| Model | Remembering | Understanding | Applying | Analyzing | Evaluating | Creating | Overall | LOT (1-3) | HOT (4-6) |\n",
        );
        out.push_str("| --- | --- | --- | --- | --- | --- | --- | --- | --- | --- |\n");
        for row in &report.bloom_rows {
            let mut cells = vec![md_escape(&row.model_label)];
            for j in 0..6 {
                cells.push(mean_with_delta(row.per_level_mean[j], row.per_level_delta[j]));
            }
            cells.push(mean_with_delta(row.overall_mean, row.overall_delta));
            cells.push(fmt2(row.lot_sum));
            cells.push(fmt2(row.hot_sum));
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
    }

    out.push_str("\n## Refinement efficiency\n\n");
    out.push_str("| Model | Mean rounds to pass | Mean Q | Q delta (final vs previous round) |\n");
    out.push_str("| --- | --- | --- | --- |\n");
    for row in &report.efficiency_rows {
        let delta = match row.q_avg_delta {
            Some(d) if d > 0.0 => format!("↑ {}", fmt2(d)),
            Some(d) if d < 0.0 => format!("↓ {}", fmt2(-d)),
            Some(d) => fmt2(d),
            None => "n/a".to_string(),
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            md_escape(&row.model_label),
            md_opt(row.mean_rounds_to_pass),
            md_opt(row.q_avg),
            delta,
        ));
    }

    out.push_str("\n## Panel agreement\n\n");
    match report.batch_kappa {
        Some(kappa) => out.push_str(&format!(
            "Fleiss' kappa over final-round pass/fail ratings: {}\n",
            fmt2(kappa)
        )),
        None => out.push_str(
            "Fleiss' kappa over final-round pass/fail ratings: n/a (fewer than two scored problems, or all ratings identical)\n",
        ),
    }

    out.push_str("\n## Revisions\n\n");
    if report.comparisons.is_empty() {
        out.push_str("No completed problems.\n");
    } else {
        out.push_str("| Problem | Rounds | Passed | Original question | Final question |\n");
        out.push_str("| --- | --- | --- | --- | --- |\n");
        for c in &report.comparisons {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                md_escape(&c.label),
                c.rounds_used,
                if c.passed { "yes" } else { "no" },
                md_escape(&c.original.question),
                md_escape(&c.final_version.question),
            ));
        }
    }

    out
}
