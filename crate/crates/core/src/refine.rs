//! The evaluate–refine loop and its batch driver.
//!
//! One problem runs for up to `max_rounds` rounds. Each round the current
//! version goes to the judge panel; if the composite score clears the
//! gate the loop stops, otherwise the generator model rewrites the
//! problem guided by the holistic judge's suggestions and the next round
//! scores the rewrite against the version it replaced. Round 1 has no
//! earlier version, so the problem is compared against itself.
//!
//! A "round" means one panel evaluation: `rounds_used` counts
//! evaluations, and the number of generator rewrites is always
//! `rounds_used - 1` (no rewrite follows the final evaluation).

use crate::agents::{
    self, extract_first_json_object, EvaluationContext, ParseError, TemplateSet,
};
use crate::domain::{AgentVerdict, Problem, ProblemDraft, ProblemValidationError, RunConfig};
use crate::metrics::{self, QualityAssessment};
use crate::llm::{ChatMessage, ChatRequest, LlmError, Provider};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

/// Placeholders the refinement prompt must use.
pub const REFINE_PLACEHOLDERS: [&str; 3] = [
    "previous_problem",
    "previous_solution",
    "improvement_suggestions",
];

/// Generator re-ask budget: the original request plus two repairs.
pub const MAX_GENERATOR_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum RefinePromptError {
    #[error("refinement prompt never uses {{{0}}}")]
    MissingPlaceholder(&'static str),
    #[error("refinement prompt uses unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("refinement prompt must spell out numbered steps 1-5; step {0} not found")]
    MissingStep(u32),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

/// The self-reflection prompt driving the generator's rewrite. The five
/// numbered instructions walk the generator from analysis of the previous
/// version through to a reviewed new version; suggestions from the
/// holistic judge are appended as a JSON array.
#[derive(Debug, Clone)]
pub struct RefinementPrompt {
    text: String,
}

impl RefinementPrompt {
    /// The built-in prompt compiled into the library.
    pub fn builtin() -> RefinementPrompt {
        RefinementPrompt::new(include_str!("../assets/prompts/five_keys.txt"))
            .expect("built-in refinement prompt is valid")
    }

    pub fn new(text: impl Into<String>) -> Result<RefinementPrompt, RefinePromptError> {
        let text = text.into();
        let found = agents::placeholder_names(&text);
        for name in REFINE_PLACEHOLDERS {
            if !found.iter().any(|f| f == name) {
                return Err(RefinePromptError::MissingPlaceholder(name));
            }
        }
        for name in &found {
            if !REFINE_PLACEHOLDERS.contains(&name.as_str()) {
                return Err(RefinePromptError::UnknownPlaceholder(name.clone()));
            }
        }
        for step in 1..=5u32 {
            let marker = format!("{step}.");
            if !text.lines().any(|l| l.trim_start().starts_with(&marker)) {
                return Err(RefinePromptError::MissingStep(step));
            }
        }
        Ok(RefinementPrompt { text })
    }

    pub fn from_file(path: &std::path::Path) -> Result<RefinementPrompt, RefinePromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| RefinePromptError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        RefinementPrompt::new(text)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Fill in the previous version and the suggestions to address.
    pub fn render(&self, previous: &Problem, suggestions: &[String]) -> String {
        let suggestions_json = serde_json::to_string_pretty(suggestions)
            .expect("string arrays always serialize");
        agents::render_placeholders(&self.text, |name| match name {
            "previous_problem" => Some(previous.question.clone()),
            "previous_solution" => Some(previous.solution.clone()),
            "improvement_suggestions" => Some(suggestions_json.clone()),
            _ => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("generator call failed: {0}")]
    Provider(#[source] LlmError),
    #[error("generator output unusable after {attempts} attempts: {source}")]
    GeneratorParseFailure {
        attempts: u32,
        #[source]
        source: ParseError,
    },
    #[error("generator produced an invalid revision: {0}")]
    InvalidRevision(#[source] ProblemValidationError),
}

fn string_field(object: &Value, key: &'static str) -> Result<String, ParseError> {
    match object.get(key) {
        None => Err(ParseError::MissingKey(key)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseError::TypeMismatch {
            key,
            expected: "string",
        }),
    }
}

/// Ask the generator for one rewrite of `previous`, guided by
/// `suggestions`.
///
/// Replies that contain no usable `{question, solution}` object are
/// re-asked with a repair marker, up to [`MAX_GENERATOR_ATTEMPTS`] total.
/// A reply that parses but fails problem validation (blank question, say)
/// is not re-asked: the generator followed the format and still produced
/// a bad problem, which the caller should surface rather than paper over.
///
/// The rewrite keeps the source problem's identity and metadata — id,
/// concepts, difficulty, grade band — and is tagged `resource =
/// "revision"`.
pub async fn refine_step(
    provider: &dyn Provider,
    prompt: &RefinementPrompt,
    previous: &Problem,
    suggestions: &[String],
    config: &RunConfig,
) -> Result<Problem, RefineError> {
    let base_prompt = prompt.render(previous, suggestions);
    let mut user_prompt = base_prompt.clone();
    let mut last_parse_error = None;

    for attempt in 1..=MAX_GENERATOR_ATTEMPTS {
        let request = ChatRequest::new(
            config.generator_model.clone(),
            vec![ChatMessage::user(user_prompt.clone())],
            config.temperature_generator,
        );
        let response = provider
            .complete(&request)
            .await
            .map_err(RefineError::Provider)?;

        let parsed = extract_first_json_object(&response.content)
            .ok_or(ParseError::NoJsonFound)
            .and_then(|object| {
                Ok((
                    string_field(&object, "question")?,
                    string_field(&object, "solution")?,
                ))
            });
        match parsed {
            Ok((question, solution)) => {
                let draft = ProblemDraft {
                    id: previous.id.clone(),
                    question,
                    solution,
                    latex_question: String::new(),
                    concepts: previous.concepts.clone(),
                    difficulty: previous.difficulty.as_str().to_string(),
                    grade_band: previous.grade_band.as_str().to_string(),
                    resource: "revision".to_string(),
                };
                return crate::domain::validate_problem(&draft)
                    .map_err(RefineError::InvalidRevision);
            }
            Err(parse_error) => {
                user_prompt = format!(
                    "{base_prompt}\n\nYour previous reply could not be used ({parse_error}). \
                     Respond again with only the JSON object in the required format. (retry {attempt})"
                );
                last_parse_error = Some(parse_error);
            }
        }
    }

    Err(RefineError::GeneratorParseFailure {
        attempts: MAX_GENERATOR_ATTEMPTS,
        source: last_parse_error.expect("loop ran at least once"),
    })
}

/// Complete history of one problem's passage through the loop.
///
/// Invariants when the loop finishes normally (aborted is `None`):
/// `problem_versions`, `assessments`, `verdicts_per_round`, and
/// `suggestions_per_round` all have length `rounds_used`, and
/// `problem_versions[r]` is the version evaluated in round `r + 1`.
/// An aborted trace keeps everything gathered before the abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub problem_versions: Vec<Problem>,
    pub assessments: Vec<QualityAssessment>,
    pub verdicts_per_round: Vec<Vec<AgentVerdict>>,
    pub suggestions_per_round: Vec<Vec<String>>,
    /// Number of panel evaluations performed.
    pub rounds_used: u32,
    pub passed: bool,
    /// Why the loop stopped early, if it did not run to a verdict.
    pub aborted: Option<String>,
}

impl RefinementTrace {
    pub fn original(&self) -> &Problem {
        &self.problem_versions[0]
    }

    /// The last version produced — the one that passed, or the best
    /// effort when the budget ran out. Always ships with the improved
    /// dataset for completed traces.
    pub fn final_version(&self) -> &Problem {
        self.problem_versions
            .last()
            .expect("a trace always holds at least the original")
    }

    /// Generator rewrites performed: one fewer than evaluations.
    pub fn revisions(&self) -> u32 {
        self.rounds_used.saturating_sub(1)
    }

    /// Composite Q per round, in round order.
    pub fn quality_scores(&self) -> Vec<f64> {
        self.assessments.iter().map(|a| a.composite_q).collect()
    }

    pub fn final_assessment(&self) -> Option<&QualityAssessment> {
        self.assessments.last()
    }
}

/// A loop that stopped early; the partial trace (with `aborted` set)
/// rides along so the batch can still account for it.
#[derive(Debug, Error)]
#[error("refinement aborted: {cause}")]
pub struct LoopAbort {
    pub cause: String,
    pub trace: RefinementTrace,
}

/// Cause string used when a cancellation request stops the loop.
pub const ABORT_INTERRUPTED: &str = "interrupted";

/// Run one problem through the evaluate–refine loop.
///
/// `cancel` is checked at every round boundary: once set, the loop stops
/// with an [`ABORT_INTERRUPTED`] abort rather than starting another
/// evaluation.
// The abort carries the partial trace on purpose: callers persist it.
#[allow(clippy::result_large_err)]
pub async fn run_refine_loop(
    provider: &dyn Provider,
    templates: &TemplateSet,
    refine_prompt: &RefinementPrompt,
    problem: Problem,
    config: &RunConfig,
    cancel: &AtomicBool,
) -> Result<RefinementTrace, LoopAbort> {
    let mut trace = RefinementTrace {
        problem_versions: vec![problem],
        assessments: Vec::new(),
        verdicts_per_round: Vec::new(),
        suggestions_per_round: Vec::new(),
        rounds_used: 0,
        passed: false,
        aborted: None,
    };

    let abort = |mut trace: RefinementTrace, cause: String| {
        trace.aborted = Some(cause.clone());
        Err(LoopAbort { cause, trace })
    };

    for round in 1..=config.max_rounds {
        if cancel.load(Ordering::SeqCst) {
            return abort(trace, ABORT_INTERRUPTED.to_string());
        }

        // Round 1 compares the problem against itself; later rounds
        // compare the new version with the one it replaced.
        let versions = &trace.problem_versions;
        let ctx = EvaluationContext {
            previous: if versions.len() >= 2 {
                &versions[versions.len() - 2]
            } else {
                &versions[0]
            },
            current: &versions[versions.len() - 1],
            round,
        };

        let verdicts = match agents::evaluate_problem(provider, templates, &ctx, config).await {
            Ok(verdicts) => verdicts,
            Err(e) => return abort(trace, e.to_string()),
        };
        let assessment = match metrics::assess(&verdicts, config) {
            Ok(assessment) => assessment,
            Err(e) => return abort(trace, e.to_string()),
        };
        let suggestions = verdicts
            .last()
            .map(|v| v.improvement_suggestions.clone())
            .unwrap_or_default();

        let success = assessment.success;
        trace.assessments.push(assessment);
        trace.verdicts_per_round.push(verdicts);
        trace.suggestions_per_round.push(suggestions);
        trace.rounds_used = round;

        if success {
            trace.passed = true;
            return Ok(trace);
        }
        if round == config.max_rounds {
            break; // budget exhausted — no rewrite after the final verdict
        }

        if cancel.load(Ordering::SeqCst) {
            return abort(trace, ABORT_INTERRUPTED.to_string());
        }
        let current = trace.final_version().clone();
        let suggestions = trace
            .suggestions_per_round
            .last()
            .cloned()
            .unwrap_or_default();
        match refine_step(provider, refine_prompt, &current, &suggestions, config).await {
            Ok(revision) => trace.problem_versions.push(revision),
            Err(e) => return abort(trace, e.to_string()),
        }
    }

    Ok(trace)
}

/// Batch-level tallies and statistics over completed (non-aborted)
/// traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub passed: usize,
    /// Ran the full round budget without clearing the gate.
    pub exhausted: usize,
    pub aborted: usize,
    /// Mean rounds over passed problems; `None` when nothing passed.
    pub mean_rounds_to_pass: Option<f64>,
    /// Mean of per-problem mean Q; `None` when nothing was scored.
    pub avg_quality: Option<f64>,
    /// Fleiss' kappa over final-round pass bits. `None` with fewer than
    /// two completed traces, or when the statistic is degenerate.
    pub fleiss_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// One trace per input problem, input order, aborted or not.
    pub traces: Vec<RefinementTrace>,
    /// Final version of every completed trace (passed or exhausted), in
    /// input order.
    pub improved: Vec<Problem>,
    pub summary: BatchSummary,
}

/// Run a whole batch through the loop. Problems run concurrently; an
/// abort in one loop never stops the others. The provider passed in
/// should already wrap any concurrency cap the run wants.
pub async fn run_batch(
    provider: &dyn Provider,
    templates: &TemplateSet,
    refine_prompt: &RefinementPrompt,
    problems: Vec<Problem>,
    config: &RunConfig,
    cancel: &AtomicBool,
) -> BatchOutcome {
    let loops = problems.into_iter().map(|problem| {
        run_refine_loop(provider, templates, refine_prompt, problem, config, cancel)
    });
    let results = futures::future::join_all(loops).await;

    let traces: Vec<RefinementTrace> = results
        .into_iter()
        .map(|result| match result {
            Ok(trace) => trace,
            Err(abort) => abort.trace,
        })
        .collect();
    summarize_batch(traces)
}

/// Fold traces into the outcome; separated from the driver so callers
/// can re-summarize traces they loaded from disk.
pub fn summarize_batch(traces: Vec<RefinementTrace>) -> BatchOutcome {
    let completed: Vec<&RefinementTrace> =
        traces.iter().filter(|t| t.aborted.is_none()).collect();

    let passed = completed.iter().filter(|t| t.passed).count();
    let aborted = traces.len() - completed.len();
    let summary = BatchSummary {
        total: traces.len(),
        passed,
        exhausted: completed.len() - passed,
        aborted,
        mean_rounds_to_pass: metrics::mean_rounds_to_pass(
            completed
                .iter()
                .filter(|t| t.passed)
                .map(|t| t.rounds_used),
        ),
        avg_quality: metrics::avg_quality_score(
            &completed
                .iter()
                .map(|t| t.quality_scores())
                .collect::<Vec<_>>(),
        ),
        fleiss_kappa: if completed.len() < 2 {
            None
        } else {
            let final_bits: Vec<_> = completed
                .iter()
                .filter_map(|t| t.final_assessment().map(|a| a.pass_bits))
                .collect();
            metrics::compute_fleiss_kappa(&final_bits)
                .ok()
                .flatten()
        },
    };
    let improved = completed
        .iter()
        .map(|t| t.final_version().clone())
        .collect();
    BatchOutcome {
        traces,
        improved,
        summary,
    }
}
