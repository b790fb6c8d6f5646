//! The judge panel: prompt templates, rendering, and fan-out.
//!
//! Each of the seven judges gets its own prompt template. Templates carry
//! `{placeholder}` slots for the previous and current problem versions;
//! literal braces (the JSON format examples) pass through untouched
//! because only `{identifier}` spans naming a known placeholder are
//! substituted.

mod parse;

pub use parse::{extract_first_json_object, parse_verdict, ParseError};

use crate::domain::{AgentVerdict, BloomLevel, Problem, RunConfig};
use crate::llm::{ChatMessage, ChatRequest, LlmError, Provider};
use std::path::Path;
use thiserror::Error;

/// Placeholders every judge template must use.
pub const JUDGE_PLACEHOLDERS: [&str; 4] = [
    "last_question_details",
    "last_question_expected_solution",
    "new_question_details",
    "new_question_expected_solution",
];

/// How many times a judge is asked before its output is given up on:
/// the original request plus two repair re-asks.
pub const MAX_PARSE_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template for {level} never uses {{{name}}}")]
    MissingPlaceholder { level: BloomLevel, name: &'static str },
    #[error("template for {level} uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { level: BloomLevel, name: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{level} judge call failed: {source}")]
    Provider { level: BloomLevel, source: LlmError },
    #[error("{level} judge output unusable after {attempts} attempts: {source}")]
    Unparseable {
        level: BloomLevel,
        attempts: u32,
        source: ParseError,
    },
}

impl AgentError {
    pub fn level(&self) -> BloomLevel {
        match self {
            AgentError::Provider { level, .. } | AgentError::Unparseable { level, .. } => *level,
        }
    }
}

/// One judge's prompt text with `{placeholder}` slots.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub level: BloomLevel,
    text: String,
}

/// Scan for `{identifier}` spans. Returns (start byte, identifier).
fn placeholder_spans(text: &str) -> Vec<(usize, &str)> {
    let mut spans = Vec::new();
    for (start, c) in text.char_indices() {
        if c != '{' {
            continue;
        }
        let rest = &text[start + 1..];
        let Some(end) = rest.find('}') else { continue };
        let name = &rest[..end];
        let valid = !name.is_empty()
            && name
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if valid {
            spans.push((start, name));
        }
    }
    spans
}

/// Placeholder identifiers appearing in `text`, in order of appearance.
pub(crate) fn placeholder_names(text: &str) -> Vec<String> {
    placeholder_spans(text)
        .into_iter()
        .map(|(_, name)| name.to_string())
        .collect()
}

/// Substitute `{name}` slots in one pass using `lookup`. Spans whose name
/// has no substitution are left verbatim, so substituted values that
/// themselves contain braces can never be re-expanded.
pub(crate) fn render_placeholders<F>(text: &str, lookup: F) -> String
where
    F: Fn(&str) -> Option<String>,
{
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (start, name) in placeholder_spans(text) {
        if start < cursor {
            continue; // span began inside an already-consumed region
        }
        // Unknown names stay verbatim; validation rejects them up front.
        if let Some(value) = lookup(name) {
            out.push_str(&text[cursor..start]);
            out.push_str(&value);
            cursor = start + 1 + name.len() + 1;
        }
    }
    out.push_str(&text[cursor..]);
    out
}

/// Validate that `text` uses exactly the allowed placeholder vocabulary,
/// each at least once.
pub(crate) fn check_placeholders(
    level: BloomLevel,
    text: &str,
    required: &[&'static str],
) -> Result<(), TemplateError> {
    let found: Vec<&str> = placeholder_spans(text).into_iter().map(|(_, n)| n).collect();
    for name in required {
        if !found.contains(name) {
            return Err(TemplateError::MissingPlaceholder { level, name });
        }
    }
    for name in &found {
        if !required.contains(name) {
            return Err(TemplateError::UnknownPlaceholder {
                level,
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

/// The previous and current problem versions a judge compares, plus the
/// 1-based round number. In round 1 the problem is compared against
/// itself — there is no earlier version yet.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationContext<'a> {
    pub previous: &'a Problem,
    pub current: &'a Problem,
    pub round: u32,
}

impl<'a> EvaluationContext<'a> {
    pub fn first_round(problem: &'a Problem) -> EvaluationContext<'a> {
        EvaluationContext {
            previous: problem,
            current: problem,
            round: 1,
        }
    }
}

impl PromptTemplate {
    pub fn new(level: BloomLevel, text: impl Into<String>) -> Result<PromptTemplate, TemplateError> {
        let text = text.into();
        check_placeholders(level, &text, &JUDGE_PLACEHOLDERS)?;
        Ok(PromptTemplate { level, text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Fill the placeholder slots from the evaluation context.
    pub fn render(&self, ctx: &EvaluationContext<'_>) -> String {
        render_placeholders(&self.text, |name| match name {
            "last_question_details" => Some(ctx.previous.question.clone()),
            "last_question_expected_solution" => Some(ctx.previous.solution.clone()),
            "new_question_details" => Some(ctx.current.question.clone()),
            "new_question_expected_solution" => Some(ctx.current.solution.clone()),
            _ => None,
        })
    }
}

/// All seven judge templates, level order.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
}

fn template_file_name(level: BloomLevel) -> String {
    format!("{}.txt", level.name().to_ascii_lowercase())
}

impl TemplateSet {
    /// The built-in templates compiled into the library.
    pub fn builtin() -> TemplateSet {
        let sources: [(&str, BloomLevel); 7] = [
            (
                include_str!("../../assets/prompts/remembering.txt"),
                BloomLevel::Remembering,
            ),
            (
                include_str!("../../assets/prompts/understanding.txt"),
                BloomLevel::Understanding,
            ),
            (
                include_str!("../../assets/prompts/applying.txt"),
                BloomLevel::Applying,
            ),
            (
                include_str!("../../assets/prompts/analyzing.txt"),
                BloomLevel::Analyzing,
            ),
            (
                include_str!("../../assets/prompts/evaluating.txt"),
                BloomLevel::Evaluating,
            ),
            (
                include_str!("../../assets/prompts/creating.txt"),
                BloomLevel::Creating,
            ),
            (
                include_str!("../../assets/prompts/holistic.txt"),
                BloomLevel::Holistic,
            ),
        ];
        let templates = sources
            .into_iter()
            .map(|(text, level)| {
                PromptTemplate::new(level, text).expect("built-in template is valid")
            })
            .collect();
        TemplateSet { templates }
    }

    /// Load overriding templates from a directory holding one
    /// `<level>.txt` per judge (`remembering.txt` … `holistic.txt`).
    pub fn from_dir(dir: &Path) -> Result<TemplateSet, TemplateError> {
        let mut templates = Vec::with_capacity(7);
        for level in BloomLevel::ALL {
            let path = dir.join(template_file_name(level));
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            templates.push(PromptTemplate::new(level, text)?);
        }
        Ok(TemplateSet { templates })
    }

    pub fn get(&self, level: BloomLevel) -> &PromptTemplate {
        &self.templates[level.index() as usize - 1]
    }
}

fn judge_request(config: &RunConfig, prompt: String) -> ChatRequest {
    ChatRequest::new(
        config.evaluator_model.clone(),
        vec![ChatMessage::user(prompt)],
        config.temperature_evaluator,
    )
}

/// Ask one judge, re-asking up to [`MAX_PARSE_ATTEMPTS`] times total when
/// its reply cannot be parsed. Each re-ask appends a repair instruction
/// with the attempt number, so re-asks are distinct requests (and thus
/// distinct cassette fingerprints) rather than exact repeats.
async fn judge_one(
    provider: &dyn Provider,
    template: &PromptTemplate,
    ctx: &EvaluationContext<'_>,
    config: &RunConfig,
) -> Result<AgentVerdict, AgentError> {
    let level = template.level;
    let base_prompt = template.render(ctx);
    let mut prompt = base_prompt.clone();
    let mut last_parse_error = None;

    for attempt in 1..=MAX_PARSE_ATTEMPTS {
        let request = judge_request(config, prompt.clone());
        let response = provider
            .complete(&request)
            .await
            .map_err(|source| AgentError::Provider { level, source })?;
        match parse_verdict(level, &response.content) {
            Ok(verdict) => return Ok(verdict),
            Err(parse_error) => {
                prompt = format!(
                    "{base_prompt}\n\nYour previous reply could not be used ({parse_error}). \
                     Respond again with only the JSON object in the required format. (retry {attempt})"
                );
                last_parse_error = Some(parse_error);
            }
        }
    }

    Err(AgentError::Unparseable {
        level,
        attempts: MAX_PARSE_ATTEMPTS,
        source: last_parse_error.expect("loop ran at least once"),
    })
}

/// Fan the problem out to all seven judges and collect their verdicts in
/// level order. Fails closed: any judge failing (provider error, or
/// unusable output after re-asks) fails the whole evaluation.
pub async fn evaluate_problem(
    provider: &dyn Provider,
    templates: &TemplateSet,
    ctx: &EvaluationContext<'_>,
    config: &RunConfig,
) -> Result<Vec<AgentVerdict>, AgentError> {
    let judges = BloomLevel::ALL
        .iter()
        .map(|&level| judge_one(provider, templates.get(level), ctx, config));
    futures::future::try_join_all(judges).await
}
