//! Dataset wire format, loading, and flawed-problem synthesis.
//!
//! Datasets are JSON arrays of flat records with fixed keys (note the
//! space in "LaTeX question" — it is part of the format):
//!
//! ```json
//! {
//!   "ID": 1,
//!   "question": "...",
//!   "LaTeX question": "...",
//!   "solution": "...",
//!   "mathConcept1": "Arithmetic and Algebra",
//!   "mathConcept2": "Algebraic expressions",
//!   "mathConcept3": "",
//!   "Difficulty": "N/A",
//!   "Grade": "9~12",
//!   "Resource": "GPT"
//! }
//! ```
//!
//! Loading is two-phase: records are first checked for the exact key set,
//! then validated as problems. Strict mode stops at the first bad record;
//! lenient mode skips it with a warning and keeps going.

use crate::domain::{validate_problem, Problem, ProblemDraft, RunConfig};
use crate::llm::{ChatMessage, ChatRequest, LlmError, Provider};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use std::path::Path;
use thiserror::Error;

/// The exact key set every dataset record must carry.
pub const RECORD_KEYS: [&str; 10] = [
    "ID",
    "question",
    "LaTeX question",
    "solution",
    "mathConcept1",
    "mathConcept2",
    "mathConcept3",
    "Difficulty",
    "Grade",
    "Resource",
];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} is not a JSON array of records: {message}")]
    Malformed { path: String, message: String },
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("{path} holds no usable records")]
    Empty { path: String },
    #[error("cannot synthesize zero problems")]
    InvalidCount,
    #[error("flawed-problem generation failed: {0}")]
    Generator(String),
}

/// One record as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// IDs appear as strings, numbers, or null in the wild; numbers are
    /// normalized to their decimal string form.
    #[serde(rename = "ID", deserialize_with = "id_field", default)]
    pub id: Option<String>,
    pub question: String,
    #[serde(rename = "LaTeX question")]
    pub latex_question: String,
    pub solution: String,
    #[serde(rename = "mathConcept1")]
    pub math_concept1: String,
    #[serde(rename = "mathConcept2")]
    pub math_concept2: String,
    #[serde(rename = "mathConcept3")]
    pub math_concept3: String,
    #[serde(rename = "Difficulty")]
    pub difficulty: String,
    #[serde(rename = "Grade")]
    pub grade: String,
    #[serde(rename = "Resource")]
    pub resource: String,
}

fn id_field<'de, D>(deserializer: D) -> Result<Option<String>, D::Error>
where
    D: Deserializer<'de>,
{
    match Option::<Value>::deserialize(deserializer)? {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(other) => Err(serde::de::Error::custom(format!(
            "ID must be a string, number, or null, got {other}"
        ))),
    }
}

impl DatasetRecord {
    pub fn to_draft(&self) -> ProblemDraft {
        ProblemDraft {
            id: self.id.clone(),
            question: self.question.clone(),
            solution: self.solution.clone(),
            latex_question: self.latex_question.clone(),
            concepts: vec![
                self.math_concept1.clone(),
                self.math_concept2.clone(),
                self.math_concept3.clone(),
            ],
            difficulty: self.difficulty.clone(),
            grade_band: self.grade.clone(),
            resource: self.resource.clone(),
        }
    }
}

impl From<&Problem> for DatasetRecord {
    fn from(problem: &Problem) -> DatasetRecord {
        let concept = |i: usize| problem.concepts.get(i).cloned().unwrap_or_default();
        DatasetRecord {
            id: problem.id.clone(),
            question: problem.question.clone(),
            latex_question: problem.latex_question.clone().unwrap_or_default(),
            solution: problem.solution.clone(),
            math_concept1: concept(0),
            math_concept2: concept(1),
            math_concept3: concept(2),
            difficulty: problem.difficulty.as_str().to_string(),
            grade: problem.grade_band.as_str().to_string(),
            resource: problem.resource.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// First bad record fails the load.
    Strict,
    /// Bad records are skipped with a warning.
    Lenient,
}

#[derive(Debug)]
pub struct LoadOutcome {
    pub problems: Vec<Problem>,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Describe how a record's key set deviates from [`RECORD_KEYS`], if it
/// does.
fn key_set_problem(object: &serde_json::Map<String, Value>) -> Option<String> {
    let missing: Vec<&str> = RECORD_KEYS
        .iter()
        .filter(|k| !object.contains_key(**k))
        .copied()
        .collect();
    let unknown: Vec<&str> = object
        .keys()
        .filter(|k| !RECORD_KEYS.contains(&k.as_str()))
        .map(String::as_str)
        .collect();
    if missing.is_empty() && unknown.is_empty() {
        return None;
    }
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("missing keys {missing:?}"));
    }
    if !unknown.is_empty() {
        parts.push(format!("unknown keys {unknown:?}"));
    }
    Some(parts.join(", "))
}

fn record_to_problem(value: &Value) -> Result<Problem, String> {
    let object = value.as_object().ok_or("not a JSON object")?;
    if let Some(problem) = key_set_problem(object) {
        return Err(problem);
    }
    let record: DatasetRecord =
        serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    validate_problem(&record.to_draft()).map_err(|e| e.to_string())
}

/// Load a dataset file. See [`LoadMode`] for how bad records are treated.
/// A file that yields no problems at all is an error in either mode.
pub fn load_dataset(path: &Path, mode: LoadMode) -> Result<LoadOutcome, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let root: Value = serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let records = root.as_array().ok_or_else(|| DataError::Malformed {
        path: path.display().to_string(),
        message: format!("top level is {}, expected an array", json_kind(&root)),
    })?;

    let mut outcome = LoadOutcome {
        problems: Vec::with_capacity(records.len()),
        skipped: 0,
        warnings: Vec::new(),
    };
    for (index, value) in records.iter().enumerate() {
        match record_to_problem(value) {
            Ok(problem) => outcome.problems.push(problem),
            Err(message) => match mode {
                LoadMode::Strict => return Err(DataError::Record { index, message }),
                LoadMode::Lenient => {
                    outcome.skipped += 1;
                    outcome.warnings.push(format!("record {index}: {message}"));
                }
            },
        }
    }
    if outcome.problems.is_empty() {
        return Err(DataError::Empty {
            path: path.display().to_string(),
        });
    }
    Ok(outcome)
}

fn json_kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Write problems as a dataset file (pretty JSON array, trailing
/// newline). Output is byte-deterministic for a given input.
pub fn write_dataset(path: &Path, problems: &[Problem]) -> Result<(), DataError> {
    let records: Vec<DatasetRecord> = problems.iter().map(DatasetRecord::from).collect();
    let json = serde_json::to_string_pretty(&records).expect("records always serialize");
    std::fs::write(path, json + "\n").map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Outcome of flawed-problem synthesis.
#[derive(Debug)]
pub struct SynthOutcome {
    pub problems: Vec<Problem>,
    /// Attempts whose output was unusable or failed validation.
    pub rejected_attempts: usize,
    /// Slots that never produced a valid problem within the attempt
    /// budget (only nonzero when not failing fast).
    pub failed_slots: usize,
}

const SYNTH_PROMPT: &str = include_str!("../assets/prompts/flawed_generator.txt");

/// Attempt budget per synthesized problem.
pub const MAX_SYNTH_ATTEMPTS: u32 = 3;

/// Ask the generator model for `count` intentionally flawed problems.
///
/// Each slot gets a distinct variation line so the prompts (and thus the
/// request fingerprints) differ; retries within a slot append a repair
/// marker the same way judge re-asks do. `Resource` is forced to "GPT" no
/// matter what the model claims. With `fail_fast`, a slot exhausting its
/// attempts fails the whole synthesis; otherwise it is tallied and
/// skipped.
pub async fn synthesize_flawed(
    provider: &dyn Provider,
    count: usize,
    config: &RunConfig,
    fail_fast: bool,
) -> Result<SynthOutcome, DataError> {
    if count == 0 {
        return Err(DataError::InvalidCount);
    }

    let mut outcome = SynthOutcome {
        problems: Vec::with_capacity(count),
        rejected_attempts: 0,
        failed_slots: 0,
    };
    for slot in 1..=count {
        let base_prompt = format!("{SYNTH_PROMPT}\n\nVariation {slot} of {count}.");
        let mut user_prompt = base_prompt.clone();
        let mut produced = None;
        let mut last_reject = String::new();

        for attempt in 1..=MAX_SYNTH_ATTEMPTS {
            let request = ChatRequest::new(
                config.generator_model.clone(),
                vec![ChatMessage::user(user_prompt.clone())],
                config.temperature_generator,
            );
            let response = provider.complete(&request).await.map_err(provider_fatal)?;

            match parse_synth_reply(&response.content) {
                Ok(problem) => {
                    produced = Some(problem);
                    break;
                }
                Err(reject) => {
                    outcome.rejected_attempts += 1;
                    user_prompt = format!(
                        "{base_prompt}\n\nYour previous reply could not be used ({reject}). \
                         Respond again with only the JSON object in the required format. (retry {attempt})"
                    );
                    last_reject = reject;
                }
            }
        }

        match produced {
            Some(problem) => outcome.problems.push(problem),
            None if fail_fast => {
                return Err(DataError::Generator(format!(
                    "slot {slot}: no valid problem after {MAX_SYNTH_ATTEMPTS} attempts ({last_reject})"
                )))
            }
            None => outcome.failed_slots += 1,
        }
    }

    if outcome.problems.is_empty() {
        return Err(DataError::Generator(format!(
            "no slot produced a valid problem in {count} tries"
        )));
    }
    Ok(outcome)
}

fn provider_fatal(e: LlmError) -> DataError {
    DataError::Generator(e.to_string())
}

fn parse_synth_reply(content: &str) -> Result<Problem, String> {
    let object =
        crate::agents::extract_first_json_object(content).ok_or("no JSON object found")?;
    let record: DatasetRecord =
        serde_json::from_value(object).map_err(|e| format!("bad record shape: {e}"))?;
    let mut draft = record.to_draft();
    draft.resource = "GPT".to_string();
    validate_problem(&draft).map_err(|e| e.to_string())
}
