//! Config resolution with total precedence: CLI flag > config file >
//! built-in default. Every resolved field remembers where its value came
//! from, and that provenance is printed by `--dry-run` and stored in the
//! run manifest — so an artifact always says which constants were
//! protocol-given and which were harness choices or user overrides.

use crate::error::CliError;
use bloomloop::domain::RunConfig;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Value set explicitly on the command line.
pub const SOURCE_FLAG: &str = "flag";
/// Value set in the config file.
pub const SOURCE_FILE: &str = "config-file";
/// Built-in default fixed by the evaluation protocol.
pub const SOURCE_PROTOCOL: &str = "protocol";
/// Built-in default chosen by this harness (the protocol leaves it open).
pub const SOURCE_HARNESS: &str = "harness-default";

/// TOML config file; every field optional. Unknown keys are rejected so
/// a typo cannot silently fall back to a default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub tau_agent: Option<f64>,
    pub tau_q: Option<f64>,
    pub max_rounds: Option<u32>,
    pub evaluator_model: Option<String>,
    pub generator_model: Option<String>,
    pub temperature_evaluator: Option<f64>,
    pub temperature_generator: Option<f64>,
    pub concurrency_limit: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))
    }
}

/// Per-field overrides taken from command-line flags.
#[derive(Debug, Default, Clone)]
pub struct ConfigFlags {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub tau_agent: Option<f64>,
    pub tau_q: Option<f64>,
    pub max_rounds: Option<u32>,
    pub evaluator_model: Option<String>,
    pub generator_model: Option<String>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    /// Field name → one of the `SOURCE_*` strings.
    pub provenance: BTreeMap<String, String>,
}

fn layer<T>(
    slot: &mut T,
    provenance: &mut BTreeMap<String, String>,
    field: &str,
    default_source: &'static str,
    from_file: Option<T>,
    from_flag: Option<T>,
) {
    let source = if let Some(value) = from_flag {
        *slot = value;
        SOURCE_FLAG
    } else if let Some(value) = from_file {
        *slot = value;
        SOURCE_FILE
    } else {
        default_source
    };
    provenance.insert(field.to_string(), source.to_string());
}

/// Merge the three layers and validate the result.
pub fn resolve(file: FileConfig, flags: &ConfigFlags) -> Result<ResolvedConfig, CliError> {
    let mut run = RunConfig::default();
    let mut provenance = BTreeMap::new();
    let p = &mut provenance;

    layer(&mut run.alpha, p, "alpha", SOURCE_PROTOCOL, file.alpha, flags.alpha);
    layer(&mut run.beta, p, "beta", SOURCE_PROTOCOL, file.beta, flags.beta);
    layer(&mut run.gamma, p, "gamma", SOURCE_PROTOCOL, file.gamma, flags.gamma);
    layer(
        &mut run.tau_agent,
        p,
        "tau_agent",
        SOURCE_HARNESS,
        file.tau_agent,
        flags.tau_agent,
    );
    layer(&mut run.tau_q, p, "tau_q", SOURCE_PROTOCOL, file.tau_q, flags.tau_q);
    layer(
        &mut run.max_rounds,
        p,
        "max_rounds",
        SOURCE_HARNESS,
        file.max_rounds,
        flags.max_rounds,
    );
    layer(
        &mut run.evaluator_model,
        p,
        "evaluator_model",
        SOURCE_PROTOCOL,
        file.evaluator_model,
        flags.evaluator_model.clone(),
    );
    layer(
        &mut run.generator_model,
        p,
        "generator_model",
        SOURCE_HARNESS,
        file.generator_model,
        flags.generator_model.clone(),
    );
    layer(
        &mut run.temperature_evaluator,
        p,
        "temperature_evaluator",
        SOURCE_PROTOCOL,
        file.temperature_evaluator,
        None,
    );
    layer(
        &mut run.temperature_generator,
        p,
        "temperature_generator",
        SOURCE_HARNESS,
        file.temperature_generator,
        None,
    );
    layer(
        &mut run.concurrency_limit,
        p,
        "concurrency_limit",
        SOURCE_HARNESS,
        file.concurrency_limit,
        flags.concurrency,
    );
    // Option field: layering replaces the whole Option.
    let seed_source = if file.seed.is_some() {
        run.seed = file.seed;
        SOURCE_FILE
    } else {
        SOURCE_HARNESS
    };
    provenance.insert("seed".to_string(), seed_source.to_string());

    run.validate()?;
    Ok(ResolvedConfig { run, provenance })
}

/// Human-readable resolved-config listing, one `field = value [source]`
/// line per field in a fixed order.
pub fn render(resolved: &ResolvedConfig) -> String {
    let run = &resolved.run;
    let rows: Vec<(&str, String)> = vec![
        ("alpha", run.alpha.to_string()),
        ("beta", run.beta.to_string()),
        ("gamma", run.gamma.to_string()),
        ("tau_agent", run.tau_agent.to_string()),
        ("tau_q", run.tau_q.to_string()),
        ("max_rounds", run.max_rounds.to_string()),
        ("evaluator_model", run.evaluator_model.clone()),
        ("generator_model", run.generator_model.clone()),
        ("temperature_evaluator", run.temperature_evaluator.to_string()),
        ("temperature_generator", run.temperature_generator.to_string()),
        ("concurrency_limit", run.concurrency_limit.to_string()),
        (
            "seed",
            run.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".to_string()),
        ),
    ];
    let mut out = String::new();
    for (field, value) in rows {
        let source = resolved
            .provenance
            .get(field)
            .map(String::as_str)
            .unwrap_or("?");
        out.push_str(&format!("{field} = {value}  [{source}]\n"));
    }
    out
}
