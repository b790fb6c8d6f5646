//! Core value types shared by every other module.
//!
//! Everything here is an immutable value: safe to clone, share, and send
//! between concurrent tasks. Validation is structural only — no attempt is
//! made to understand the question text itself.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// The seven judge roles: six cognitive levels in taxonomy order plus a
/// holistic language/pedagogy judge at index 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BloomLevel {
    Remembering,
    Understanding,
    Applying,
    Analyzing,
    Evaluating,
    Creating,
    Holistic,
}

impl BloomLevel {
    /// All seven levels in ordinal order.
    pub const ALL: [BloomLevel; 7] = [
        BloomLevel::Remembering,
        BloomLevel::Understanding,
        BloomLevel::Applying,
        BloomLevel::Analyzing,
        BloomLevel::Evaluating,
        BloomLevel::Creating,
        BloomLevel::Holistic,
    ];

    /// Ordinal index, 1 through 7.
    pub fn index(self) -> u8 {
        match self {
            BloomLevel::Remembering => 1,
            BloomLevel::Understanding => 2,
            BloomLevel::Applying => 3,
            BloomLevel::Analyzing => 4,
            BloomLevel::Evaluating => 5,
            BloomLevel::Creating => 6,
            BloomLevel::Holistic => 7,
        }
    }

    pub fn from_index(index: u8) -> Option<BloomLevel> {
        BloomLevel::ALL.get(index.checked_sub(1)? as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BloomLevel::Remembering => "Remembering",
            BloomLevel::Understanding => "Understanding",
            BloomLevel::Applying => "Applying",
            BloomLevel::Analyzing => "Analyzing",
            BloomLevel::Evaluating => "Evaluating",
            BloomLevel::Creating => "Creating",
            BloomLevel::Holistic => "Holistic",
        }
    }

    pub fn is_holistic(self) -> bool {
        self == BloomLevel::Holistic
    }

    /// Lower-order thinking: levels 1–3.
    pub fn is_lower_order(self) -> bool {
        self.index() <= 3
    }

    /// Higher-order thinking: levels 4–6. The holistic judge belongs to
    /// neither band.
    pub fn is_higher_order(self) -> bool {
        (4..=6).contains(&self.index())
    }
}

impl fmt::Display for BloomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Difficulty tag carried by the dataset schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Difficulty {
    #[serde(rename = "N/A")]
    NA,
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    /// Parse a wire string. Unknown strings are rejected, not coerced.
    pub fn parse(raw: &str) -> Option<Difficulty> {
        match raw.trim() {
            s if s.eq_ignore_ascii_case("n/a") || s.eq_ignore_ascii_case("na") => {
                Some(Difficulty::NA)
            }
            s if s.eq_ignore_ascii_case("easy") => Some(Difficulty::Easy),
            s if s.eq_ignore_ascii_case("medium") => Some(Difficulty::Medium),
            s if s.eq_ignore_ascii_case("hard") => Some(Difficulty::Hard),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::NA => "N/A",
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grade band. Tilde forms ("6~8", "9~12") normalize to the canonical
/// hyphen forms on ingest so downstream code matches one spelling only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradeBand {
    #[serde(rename = "6-8")]
    Grades6To8,
    #[serde(rename = "9-12")]
    Grades9To12,
    College,
    Unknown,
}

impl GradeBand {
    /// Parse a wire string; empty means Unknown. Unrecognized strings are
    /// rejected.
    pub fn parse(raw: &str) -> Option<GradeBand> {
        match raw.trim() {
            "" => Some(GradeBand::Unknown),
            "6~8" | "6-8" | "6–8" => Some(GradeBand::Grades6To8),
            "9~12" | "9-12" | "9–12" => Some(GradeBand::Grades9To12),
            s if s.eq_ignore_ascii_case("college") => Some(GradeBand::College),
            s if s.eq_ignore_ascii_case("unknown") => Some(GradeBand::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GradeBand::Grades6To8 => "6-8",
            GradeBand::Grades9To12 => "9-12",
            GradeBand::College => "College",
            GradeBand::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for GradeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maximum number of concept labels a problem may carry.
pub const MAX_CONCEPTS: usize = 3;

/// One version of a math word problem: question text plus its expected
/// solution, with dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: Option<String>,
    pub question: String,
    pub solution: String,
    pub latex_question: Option<String>,
    /// Concept labels, at most [`MAX_CONCEPTS`].
    pub concepts: Vec<String>,
    pub difficulty: Difficulty,
    pub grade_band: GradeBand,
    /// Provenance tag, e.g. "crawled", "GPT", "revision".
    pub resource: String,
}

impl Problem {
    /// Convert back to an unvalidated draft. `validate_problem` on the
    /// result returns an equal `Problem`.
    pub fn to_draft(&self) -> ProblemDraft {
        ProblemDraft {
            id: self.id.clone(),
            question: self.question.clone(),
            solution: self.solution.clone(),
            latex_question: self.latex_question.clone().unwrap_or_default(),
            concepts: self.concepts.clone(),
            difficulty: self.difficulty.as_str().to_string(),
            grade_band: self.grade_band.as_str().to_string(),
            resource: self.resource.clone(),
        }
    }
}

/// An unvalidated candidate problem, as parsed from a structured record or
/// a generator response. `validate_problem` turns it into a [`Problem`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemDraft {
    pub id: Option<String>,
    pub question: String,
    pub solution: String,
    /// Empty string means absent.
    pub latex_question: String,
    pub concepts: Vec<String>,
    /// Wire difficulty string, e.g. "N/A", "Easy".
    pub difficulty: String,
    /// Wire grade string, e.g. "9~12"; empty means unknown.
    pub grade_band: String,
    pub resource: String,
}

impl ProblemDraft {
    pub fn new(question: impl Into<String>, solution: impl Into<String>) -> Self {
        ProblemDraft {
            question: question.into(),
            solution: solution.into(),
            difficulty: "N/A".to_string(),
            ..ProblemDraft::default()
        }
    }
}

/// A single field violation found during problem validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// `question` or `solution` is blank after trimming.
    EmptyField { field: &'static str },
    TooManyConcepts { count: usize },
    UnknownDifficulty { value: String },
    UnknownGradeBand { value: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyField { field } => write!(f, "{field} is empty"),
            Violation::TooManyConcepts { count } => {
                write!(f, "{count} concept labels (max {MAX_CONCEPTS})")
            }
            Violation::UnknownDifficulty { value } => {
                write!(f, "unknown difficulty {value:?}")
            }
            Violation::UnknownGradeBand { value } => {
                write!(f, "unknown grade band {value:?}")
            }
        }
    }
}

/// Validation failure carrying every violated field, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid problem: {}", format_violations(.violations))]
pub struct ProblemValidationError {
    pub violations: Vec<Violation>,
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Check a draft against every structural invariant and produce a
/// [`Problem`], or an error listing all violations.
///
/// Text fields are trimmed of outer whitespace, which makes validation
/// idempotent: validating an already-valid problem returns an equal one.
pub fn validate_problem(candidate: &ProblemDraft) -> Result<Problem, ProblemValidationError> {
    let mut violations = Vec::new();

    let question = candidate.question.trim();
    if question.is_empty() {
        violations.push(Violation::EmptyField { field: "question" });
    }
    let solution = candidate.solution.trim();
    if solution.is_empty() {
        violations.push(Violation::EmptyField { field: "solution" });
    }

    let concepts: Vec<String> = candidate
        .concepts
        .iter()
        .map(|c| c.trim())
        .filter(|c| !c.is_empty())
        .map(str::to_string)
        .collect();
    if concepts.len() > MAX_CONCEPTS {
        violations.push(Violation::TooManyConcepts {
            count: concepts.len(),
        });
    }

    let difficulty = match Difficulty::parse(&candidate.difficulty) {
        Some(d) => d,
        None => {
            violations.push(Violation::UnknownDifficulty {
                value: candidate.difficulty.clone(),
            });
            Difficulty::NA
        }
    };
    let grade_band = match GradeBand::parse(&candidate.grade_band) {
        Some(g) => g,
        None => {
            violations.push(Violation::UnknownGradeBand {
                value: candidate.grade_band.clone(),
            });
            GradeBand::Unknown
        }
    };

    if !violations.is_empty() {
        return Err(ProblemValidationError { violations });
    }

    let latex = candidate.latex_question.trim();
    Ok(Problem {
        id: candidate.id.clone(),
        question: question.to_string(),
        solution: solution.to_string(),
        latex_question: (!latex.is_empty()).then(|| latex.to_string()),
        concepts,
        difficulty,
        grade_band,
        resource: candidate.resource.trim().to_string(),
    })
}

/// One judge's output for one problem version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub level: BloomLevel,
    /// Performance score in [0, 100].
    pub performance_score: f64,
    /// Confidence score in [0, 100].
    pub confidence_score: f64,
    /// Nonempty only for the holistic judge.
    pub improvement_suggestions: Vec<String>,
    /// Original model text, kept for audit.
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerdictError {
    #[error("{field} {value} outside [0, 100]")]
    ScoreOutOfRange { field: &'static str, value: f64 },
    #[error("improvement suggestions are only valid on the holistic verdict, got {count} at {level}")]
    SuggestionsOnLevelAgent { level: BloomLevel, count: usize },
}

impl AgentVerdict {
    /// Construct a verdict, enforcing score ranges and the
    /// suggestions-are-holistic-only invariant.
    pub fn new(
        level: BloomLevel,
        performance_score: f64,
        confidence_score: f64,
        improvement_suggestions: Vec<String>,
        raw_response: String,
    ) -> Result<AgentVerdict, VerdictError> {
        if !(0.0..=100.0).contains(&performance_score) || !performance_score.is_finite() {
            return Err(VerdictError::ScoreOutOfRange {
                field: "performance_score",
                value: performance_score,
            });
        }
        if !(0.0..=100.0).contains(&confidence_score) || !confidence_score.is_finite() {
            return Err(VerdictError::ScoreOutOfRange {
                field: "confidence_score",
                value: confidence_score,
            });
        }
        if !level.is_holistic() && !improvement_suggestions.is_empty() {
            return Err(VerdictError::SuggestionsOnLevelAgent {
                level,
                count: improvement_suggestions.len(),
            });
        }
        Ok(AgentVerdict {
            level,
            performance_score,
            confidence_score,
            improvement_suggestions,
            raw_response,
        })
    }
}

/// Tolerance for the weight-sum invariant.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Composite-score weights for pass rate, agreement, and confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Weights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Weights {
        Weights { alpha, beta, gamma }
    }

    /// Weights must be nonnegative and sum to 1 within [`WEIGHT_SUM_TOLERANCE`].
    pub fn is_valid(&self) -> bool {
        self.alpha >= 0.0
            && self.beta >= 0.0
            && self.gamma >= 0.0
            && (self.alpha + self.beta + self.gamma - 1.0).abs() <= WEIGHT_SUM_TOLERANCE
    }
}

/// Run-wide settings: composite weights, gate thresholds, round budget, and
/// provider configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Per-agent pass threshold; a judge passes a problem only when its
    /// performance score strictly exceeds this.
    pub tau_agent: f64,
    /// Composite success threshold; a round succeeds only when Q strictly
    /// exceeds this.
    pub tau_q: f64,
    /// Round budget R, in (0, 100].
    pub max_rounds: u32,
    pub evaluator_model: String,
    pub generator_model: String,
    pub temperature_evaluator: f64,
    pub temperature_generator: f64,
    /// Upper bound on in-flight provider calls across the whole run.
    pub concurrency_limit: usize,
    /// Reserved for seeded mock providers.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.5,
            beta: 0.3,
            gamma: 0.2,
            tau_agent: 70.0,
            tau_q: 85.0,
            max_rounds: 5,
            evaluator_model: "gpt-4o".to_string(),
            generator_model: "gpt-4o".to_string(),
            temperature_evaluator: 0.0,
            temperature_generator: 0.0,
            concurrency_limit: 7,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("weights ({alpha}, {beta}, {gamma}) must be nonnegative and sum to 1")]
    InvalidWeights { alpha: f64, beta: f64, gamma: f64 },
    #[error("{field} = {value} outside [0, 100]")]
    ThresholdOutOfRange { field: &'static str, value: f64 },
    #[error("max_rounds = {0} outside (0, 100]")]
    InvalidMaxRounds(u32),
    #[error("concurrency_limit must be positive")]
    InvalidConcurrency,
    #[error("{field} temperature {value} must be a finite nonnegative number")]
    InvalidTemperature { field: &'static str, value: f64 },
}

impl RunConfig {
    pub fn weights(&self) -> Weights {
        Weights::new(self.alpha, self.beta, self.gamma)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.weights().is_valid() {
            return Err(ConfigError::InvalidWeights {
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
            });
        }
        for (field, value) in [("tau_agent", self.tau_agent), ("tau_q", self.tau_q)] {
            if !(0.0..=100.0).contains(&value) || !value.is_finite() {
                return Err(ConfigError::ThresholdOutOfRange { field, value });
            }
        }
        if self.max_rounds == 0 || self.max_rounds > 100 {
            return Err(ConfigError::InvalidMaxRounds(self.max_rounds));
        }
        if self.concurrency_limit == 0 {
            return Err(ConfigError::InvalidConcurrency);
        }
        for (field, value) in [
            ("evaluator", self.temperature_evaluator),
            ("generator", self.temperature_generator),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ConfigError::InvalidTemperature { field, value });
            }
        }
        Ok(())
    }
}
