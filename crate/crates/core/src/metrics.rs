//! Panel metrics: pass rate, inter-judge agreement, Fleiss' kappa,
//! average confidence, and the composite quality score that gates
//! acceptance.
//!
//! Conventions used throughout:
//!
//! - pass rate and per-item agreement are fractions in [0, 1]; they are
//!   scaled by 100 only inside the composite so all three composite terms
//!   share the 0–100 range
//! - every threshold comparison is strict (`>`), so a score exactly at a
//!   threshold does not pass
//! - a panel is always exactly seven verdicts, one per level

use crate::domain::{AgentVerdict, BloomLevel, RunConfig, Weights};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Size of the judge panel.
pub const PANEL_SIZE: usize = 7;

/// Number of unordered judge pairs, C(7, 2).
pub const PANEL_PAIRS: f64 = 21.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("expected one verdict per panel member ({PANEL_SIZE}), got {0}")]
    WrongArity(usize),
    #[error("more than one verdict for {0}")]
    DuplicateLevel(BloomLevel),
    #[error("cannot compute a batch statistic over zero items")]
    EmptyBatch,
    #[error("weights ({alpha}, {beta}, {gamma}) must be nonnegative and sum to 1")]
    InvalidWeights { alpha: f64, beta: f64, gamma: f64 },
    #[error("{field} = {value} outside [{lo}, {hi}]")]
    RangeViolation {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

/// Arrange a panel's verdicts into level order, rejecting missing or
/// duplicated levels.
fn ordered(verdicts: &[AgentVerdict]) -> Result<[&AgentVerdict; PANEL_SIZE], MetricsError> {
    if verdicts.len() != PANEL_SIZE {
        return Err(MetricsError::WrongArity(verdicts.len()));
    }
    let mut slots: [Option<&AgentVerdict>; PANEL_SIZE] = [None; PANEL_SIZE];
    for verdict in verdicts {
        let slot = &mut slots[verdict.level.index() as usize - 1];
        if slot.is_some() {
            return Err(MetricsError::DuplicateLevel(verdict.level));
        }
        *slot = Some(verdict);
    }
    // With seven verdicts and no duplicates, every slot is filled.
    Ok(slots.map(|s| s.expect("all panel slots filled")))
}

/// Per-judge pass booleans in level order. Judge `j` passes the problem
/// only when its performance score strictly exceeds `tau_agent`.
pub fn pass_bits(
    verdicts: &[AgentVerdict],
    tau_agent: f64,
) -> Result<[bool; PANEL_SIZE], MetricsError> {
    let ordered = ordered(verdicts)?;
    Ok(ordered.map(|v| v.performance_score > tau_agent))
}

/// Fraction of judges that passed the problem, in [0, 1].
pub fn compute_pass_rate(bits: &[bool; PANEL_SIZE]) -> f64 {
    let k = bits.iter().filter(|&&b| b).count();
    k as f64 / PANEL_SIZE as f64
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Pairwise agreement among the seven judges on one item, in [0, 1]:
/// the fraction of judge pairs that landed on the same side of the pass
/// threshold, `[C(k,2) + C(7-k,2)] / C(7,2)` for `k` passing judges.
pub fn compute_item_agreement(bits: &[bool; PANEL_SIZE]) -> f64 {
    let k = bits.iter().filter(|&&b| b).count();
    (choose2(k) + choose2(PANEL_SIZE - k)) / PANEL_PAIRS
}

/// Fleiss' kappa across a batch of items, each judged by the same
/// seven-member panel on the binary pass/fail category.
///
/// Returns `Ok(None)` when the statistic is undefined: if every rating in
/// the batch is identical, expected agreement is 1 and the denominator
/// vanishes. The all-same check is exact (integer counts), so no float
/// tolerance is involved.
pub fn compute_fleiss_kappa(
    items: &[[bool; PANEL_SIZE]],
) -> Result<Option<f64>, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let total_true: usize = items
        .iter()
        .map(|bits| bits.iter().filter(|&&b| b).count())
        .sum();
    let total_ratings = PANEL_SIZE * items.len();
    if total_true == 0 || total_true == total_ratings {
        return Ok(None);
    }

    let p_bar = items
        .iter()
        .map(compute_item_agreement)
        .sum::<f64>()
        / items.len() as f64;
    let p = total_true as f64 / total_ratings as f64;
    let p_expected = p * p + (1.0 - p) * (1.0 - p);
    Ok(Some((p_bar - p_expected) / (1.0 - p_expected)))
}

/// Mean confidence score across the panel, in [0, 100].
pub fn compute_avg_confidence(verdicts: &[AgentVerdict]) -> Result<f64, MetricsError> {
    let ordered = ordered(verdicts)?;
    Ok(ordered.iter().map(|v| v.confidence_score).sum::<f64>() / PANEL_SIZE as f64)
}

/// Composite quality score:
///
/// ```text
/// Q = alpha * (100 * pass_rate) + beta * (100 * item_agreement) + gamma * avg_confidence
/// ```
///
/// Pass rate and agreement arrive as fractions and are scaled to the 0–100
/// range here, so with valid weights Q itself lies in [0, 100].
pub fn compute_composite(
    pass_rate: f64,
    item_agreement: f64,
    avg_confidence: f64,
    weights: Weights,
) -> Result<f64, MetricsError> {
    if !weights.is_valid() {
        return Err(MetricsError::InvalidWeights {
            alpha: weights.alpha,
            beta: weights.beta,
            gamma: weights.gamma,
        });
    }
    for (field, value, hi) in [
        ("pass_rate", pass_rate, 1.0),
        ("item_agreement", item_agreement, 1.0),
        ("avg_confidence", avg_confidence, 100.0),
    ] {
        if !value.is_finite() || !(0.0..=hi).contains(&value) {
            return Err(MetricsError::RangeViolation {
                field,
                value,
                lo: 0.0,
                hi,
            });
        }
    }
    Ok(weights.alpha * (100.0 * pass_rate)
        + weights.beta * (100.0 * item_agreement)
        + weights.gamma * avg_confidence)
}

/// Success gate: the composite must strictly exceed the threshold.
pub fn is_success(composite_q: f64, tau_q: f64) -> bool {
    composite_q > tau_q
}

/// Mean round count over the problems that passed. `None` when nothing
/// passed — reported as n/a rather than a misleading zero.
pub fn mean_rounds_to_pass<I>(rounds_of_passed: I) -> Option<f64>
where
    I: IntoIterator<Item = u32>,
{
    let rounds: Vec<u32> = rounds_of_passed.into_iter().collect();
    if rounds.is_empty() {
        return None;
    }
    Some(rounds.iter().map(|&r| f64::from(r)).sum::<f64>() / rounds.len() as f64)
}

/// Mean quality across a batch: each item contributes the mean Q over its
/// own rounds, and those per-item means are averaged. Items with no scored
/// rounds are skipped; `None` when nothing was scored.
pub fn avg_quality_score(per_item_scores: &[Vec<f64>]) -> Option<f64> {
    let item_means: Vec<f64> = per_item_scores
        .iter()
        .filter(|scores| !scores.is_empty())
        .map(|scores| scores.iter().sum::<f64>() / scores.len() as f64)
        .collect();
    if item_means.is_empty() {
        return None;
    }
    Some(item_means.iter().sum::<f64>() / item_means.len() as f64)
}

/// Everything the gate needs to know about one panel round on one problem
/// version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAssessment {
    /// Per-judge pass booleans, level order.
    pub pass_bits: [bool; PANEL_SIZE],
    /// Fraction of judges passing, in [0, 1].
    pub pass_rate: f64,
    /// Pairwise agreement fraction, in [0, 1].
    pub item_agreement: f64,
    /// Mean panel confidence, in [0, 100].
    pub avg_confidence: f64,
    /// Composite quality score Q, in [0, 100].
    pub composite_q: f64,
    /// Whether `composite_q` strictly exceeds the configured threshold.
    pub success: bool,
}

/// Fold a full panel of verdicts into a [`QualityAssessment`] under the
/// run's thresholds and weights.
pub fn assess(
    verdicts: &[AgentVerdict],
    config: &RunConfig,
) -> Result<QualityAssessment, MetricsError> {
    let bits = pass_bits(verdicts, config.tau_agent)?;
    let pass_rate = compute_pass_rate(&bits);
    let item_agreement = compute_item_agreement(&bits);
    let avg_confidence = compute_avg_confidence(verdicts)?;
    let composite_q = compute_composite(pass_rate, item_agreement, avg_confidence, config.weights())?;
    Ok(QualityAssessment {
        pass_bits: bits,
        pass_rate,
        item_agreement,
        avg_confidence,
        composite_q,
        success: is_success(composite_q, config.tau_q),
    })
}
