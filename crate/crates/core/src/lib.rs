//! Multi-agent rubric evaluation and feedback-driven refinement for math
//! word problems.
//!
//! A panel of seven judge agents — six targeting successive cognitive
//! levels plus one holistic reviewer — scores each problem. The panel's
//! verdicts fold into a composite quality score that gates acceptance;
//! problems that fall short are handed back to a generator model along
//! with the holistic judge's suggestions and re-scored, up to a fixed
//! round budget.
//!
//! Module map:
//!
//! - [`domain`] — problems, verdicts, levels, run configuration
//! - [`metrics`] — pass rate, agreement, kappa, composite score
//! - [`llm`] — provider trait, HTTP client, scripted/record/replay providers
//! - [`agents`] — prompt templates, judge panel, response parsing
//! - [`refine`] — per-problem loop and batch driver
//! - [`dataset`] — dataset wire format, loading, flawed-problem synthesis
//! - [`report`] — score tables and comparison reports

pub mod agents;
pub mod dataset;
pub mod domain;
pub mod llm;
pub mod metrics;
pub mod refine;
pub mod report;

/// Version string stamped into cassettes and manifests.
pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");
