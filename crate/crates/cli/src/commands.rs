//! Subcommand implementations. Each run-shaped command resolves its
//! config, assembles a provider, executes, and leaves behind a run
//! directory whose manifest (config + provenance + input/output digests)
//! is sufficient to reproduce the run in replay mode.

use crate::args::{BatchArgs, ReplayVerifyArgs, ReportArgs, SynthArgs};
use crate::config::{self, ResolvedConfig};
use crate::error::CliError;
use crate::manifest::{digest_outputs, sha256_file, FileDigest, Manifest, MANIFEST_FILE};
use crate::providers::{self, ProviderMode, ProviderSetup};
use bloomloop::agents::TemplateSet;
use bloomloop::dataset::{self, LoadMode, SynthOutcome};
use bloomloop::domain::{AgentVerdict, Problem, RunConfig};
use bloomloop::llm::{ConcurrencyLimited, Provider, ReplayProvider};
use bloomloop::metrics::QualityAssessment;
use bloomloop::refine::{self, BatchOutcome, RefinementPrompt, RefinementTrace};
use bloomloop::report::{self, ReportFormat};
use chrono::Utc;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

/// Exit code when a run was interrupted but its artifacts were still
/// written (128 + SIGINT, the usual shell convention).
pub const EXIT_INTERRUPTED: u8 = 130;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchKind {
    /// One panel evaluation per problem, no rewrites.
    Evaluate,
    /// The full evaluate-refine loop.
    Refine,
}

impl BatchKind {
    fn name(self) -> &'static str {
        match self {
            BatchKind::Evaluate => "evaluate",
            BatchKind::Refine => "refine",
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("artifact types always serialize");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

/// Create the run directory, refusing to clobber an existing run unless
/// forced.
fn prepare_run_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.join(MANIFEST_FILE).exists() && !force {
        return Err(CliError::Config(format!(
            "{} already holds a run (found {MANIFEST_FILE}); pass --force to overwrite",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Path an artifact should be stored under in the manifest: relative to
/// the run directory when it lives inside it, absolute otherwise.
fn stored_path(run_dir: &Path, path: &Path) -> String {
    if let Ok(inside) = path.strip_prefix(run_dir) {
        return inside.display().to_string();
    }
    std::fs::canonicalize(path)
        .unwrap_or_else(|_| path.to_path_buf())
        .display()
        .to_string()
}

/// Resolve a manifest-stored path against the run directory.
fn resolve_path(run_dir: &Path, stored: &str) -> PathBuf {
    let path = Path::new(stored);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        run_dir.join(path)
    }
}

fn load_templates(dir: Option<&Path>) -> Result<TemplateSet, CliError> {
    match dir {
        Some(dir) => TemplateSet::from_dir(dir).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(TemplateSet::builtin()),
    }
}

fn load_refine_prompt(path: Option<&Path>) -> Result<RefinementPrompt, CliError> {
    match path {
        Some(path) => {
            RefinementPrompt::from_file(path).map_err(|e| CliError::Config(e.to_string()))
        }
        None => Ok(RefinementPrompt::builtin()),
    }
}

fn print_dry_run(resolved: &ResolvedConfig, mode: ProviderMode) {
    print!("{}", config::render(resolved));
    println!("provider = {}", mode.as_str());
    println!("dry run: no provider calls were made, nothing was written");
}

/// Write the recorded cassette (record mode) or digest the replayed one,
/// for the manifest.
fn cassette_digest(
    setup: &ProviderSetup,
    run_dir: &Path,
    cassette_flag: Option<&Path>,
) -> Result<Option<FileDigest>, CliError> {
    if let Some(recorder) = &setup.recorder {
        let path = cassette_flag
            .map(Path::to_path_buf)
            .unwrap_or_else(|| run_dir.join("cassette.json"));
        recorder.write_to(&path)?;
        return Ok(Some(FileDigest {
            path: stored_path(run_dir, &path),
            sha256: sha256_file(&path)?,
        }));
    }
    if let Some(source) = &setup.replay_source {
        return Ok(Some(FileDigest {
            path: stored_path(run_dir, source),
            sha256: sha256_file(source)?,
        }));
    }
    Ok(None)
}

/// One problem's single-round scoring, as written to evaluations.json.
#[derive(Serialize)]
struct EvaluationRecord<'a> {
    problem: &'a Problem,
    verdicts: &'a [AgentVerdict],
    assessment: &'a QualityAssessment,
}

struct BatchExec {
    /// Artifact paths written, relative to the run directory.
    outputs: Vec<String>,
    interrupted: bool,
    outcome: BatchOutcome,
}

/// Run the batch and write its artifacts. Shared between the normal
/// commands and the replay-verify re-run (which disallows interrupts and
/// writes into a scratch directory).
#[allow(clippy::too_many_arguments)]
async fn execute_batch(
    kind: BatchKind,
    provider: &dyn Provider,
    templates: &TemplateSet,
    refine_prompt: &RefinementPrompt,
    problems: Vec<Problem>,
    config: &RunConfig,
    label: &str,
    out_dir: &Path,
    allow_interrupt: bool,
) -> Result<BatchExec, CliError> {
    let mut effective = config.clone();
    if kind == BatchKind::Evaluate {
        effective.max_rounds = 1; // single-round scoring: never rewrite
    }

    let cancel = AtomicBool::new(false);
    let batch_fut = refine::run_batch(
        provider,
        templates,
        refine_prompt,
        problems,
        &effective,
        &cancel,
    );
    tokio::pin!(batch_fut);
    let (outcome, interrupted) = if allow_interrupt {
        tokio::select! {
            outcome = &mut batch_fut => (outcome, false),
            _ = tokio::signal::ctrl_c() => {
                cancel.store(true, Ordering::SeqCst);
                eprintln!(
                    "interrupted: finishing in-flight calls, marking unfinished problems aborted"
                );
                (batch_fut.await, true)
            }
        }
    } else {
        (batch_fut.await, false)
    };

    let mut outputs = Vec::new();
    match kind {
        BatchKind::Evaluate => {
            let evaluations: Vec<EvaluationRecord<'_>> = outcome
                .traces
                .iter()
                .filter(|t| !t.verdicts_per_round.is_empty())
                .map(|t| EvaluationRecord {
                    problem: &t.problem_versions[0],
                    verdicts: &t.verdicts_per_round[0],
                    assessment: &t.assessments[0],
                })
                .collect();
            write_json(&out_dir.join("evaluations.json"), &evaluations)?;
            outputs.push("evaluations.json".to_string());
        }
        BatchKind::Refine => {
            let traces_dir = out_dir.join("traces");
            std::fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
            for (i, trace) in outcome.traces.iter().enumerate() {
                let name = format!("traces/{:03}.json", i + 1);
                write_json(&out_dir.join(&name), trace)?;
                outputs.push(name);
            }
            dataset::write_dataset(&out_dir.join("improved_dataset.json"), &outcome.improved)?;
            outputs.push("improved_dataset.json".to_string());
        }
    }

    let report = report::build_report(label, &outcome);
    for format in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown] {
        let name = format!("report.{}", format.extension());
        let path = out_dir.join(&name);
        std::fs::write(&path, report::emit(&report, format)).map_err(io_err(&path))?;
        outputs.push(name);
    }
    write_json(&out_dir.join("summary.json"), &outcome.summary)?;
    outputs.push("summary.json".to_string());

    Ok(BatchExec {
        outputs,
        interrupted,
        outcome,
    })
}

fn first_abort_cause(outcome: &BatchOutcome) -> String {
    outcome
        .traces
        .iter()
        .find_map(|t| t.aborted.clone())
        .unwrap_or_else(|| "unknown".to_string())
}

/// `evaluate` and `refine`: dataset in, run directory out.
pub async fn batch(kind: BatchKind, args: BatchArgs) -> Result<u8, CliError> {
    let resolved = args.config.resolve()?;
    if args.dry_run {
        print_dry_run(&resolved, args.provider.provider);
        return Ok(0);
    }

    let templates = load_templates(args.templates.as_deref())?;
    let refine_prompt = load_refine_prompt(args.refine_prompt.as_deref())?;
    let setup = providers::build(
        args.provider.provider,
        args.provider.cassette.as_deref(),
        args.provider.fixtures.as_deref(),
        args.provider.allow_duplicates,
        resolved.run.concurrency_limit,
    )?;

    let load_mode = if args.lenient {
        LoadMode::Lenient
    } else {
        LoadMode::Strict
    };
    let loaded = dataset::load_dataset(&args.dataset, load_mode)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let dataset_digest = FileDigest {
        path: std::fs::canonicalize(&args.dataset)
            .unwrap_or_else(|_| args.dataset.clone())
            .display()
            .to_string(),
        sha256: sha256_file(&args.dataset)?,
    };

    prepare_run_dir(&args.output, args.force)?;
    let label = args
        .label
        .clone()
        .unwrap_or_else(|| resolved.run.generator_model.clone());

    let exec = execute_batch(
        kind,
        setup.provider.as_ref(),
        &templates,
        &refine_prompt,
        loaded.problems,
        &resolved.run,
        &label,
        &args.output,
        true,
    )
    .await?;

    let cassette = cassette_digest(&setup, &args.output, args.provider.cassette.as_deref())?;
    let manifest = Manifest {
        harness_version: bloomloop::HARNESS_VERSION.to_string(),
        created_at: Utc::now().to_rfc3339(),
        command: kind.name().to_string(),
        provider_mode: args.provider.provider.as_str().to_string(),
        model_label: label,
        config: resolved.run.clone(),
        config_provenance: resolved.provenance.clone(),
        dataset: Some(dataset_digest),
        cassette,
        outputs: digest_outputs(&args.output, &exec.outputs)?,
        interrupted: exec.interrupted,
        lenient: args.lenient,
        synth_count: None,
        synth_fail_fast: None,
        templates_dir: args.templates.as_ref().map(|p| p.display().to_string()),
        refine_prompt: args.refine_prompt.as_ref().map(|p| p.display().to_string()),
    };
    manifest.write_to(&args.output)?;

    let s = &exec.outcome.summary;
    println!(
        "{}: {} problems — {} passed, {} exhausted, {} aborted → {}",
        kind.name(),
        s.total,
        s.passed,
        s.exhausted,
        s.aborted,
        args.output.display()
    );

    if exec.interrupted {
        return Ok(EXIT_INTERRUPTED);
    }
    if s.total > 0 && s.aborted == s.total {
        return Err(CliError::Provider(format!(
            "all {} problems aborted; first cause: {}",
            s.total,
            first_abort_cause(&exec.outcome)
        )));
    }
    Ok(0)
}

#[derive(Serialize)]
struct SynthSummary {
    requested: usize,
    generated: usize,
    rejected_attempts: usize,
    failed_slots: usize,
}

/// Generate and persist the flawed dataset plus its summary.
async fn execute_synth(
    provider: &dyn Provider,
    count: usize,
    fail_fast: bool,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<(Vec<String>, SynthOutcome), CliError> {
    let outcome = dataset::synthesize_flawed(provider, count, config, fail_fast).await?;
    dataset::write_dataset(&out_dir.join("flawed_dataset.json"), &outcome.problems)?;
    let summary = SynthSummary {
        requested: count,
        generated: outcome.problems.len(),
        rejected_attempts: outcome.rejected_attempts,
        failed_slots: outcome.failed_slots,
    };
    write_json(&out_dir.join("synth_summary.json"), &summary)?;
    Ok((
        vec![
            "flawed_dataset.json".to_string(),
            "synth_summary.json".to_string(),
        ],
        outcome,
    ))
}

pub async fn synth_bad(args: SynthArgs) -> Result<u8, CliError> {
    let resolved = args.config.resolve()?;
    if args.dry_run {
        print_dry_run(&resolved, args.provider.provider);
        return Ok(0);
    }

    let setup = providers::build(
        args.provider.provider,
        args.provider.cassette.as_deref(),
        args.provider.fixtures.as_deref(),
        args.provider.allow_duplicates,
        resolved.run.concurrency_limit,
    )?;
    prepare_run_dir(&args.output, args.force)?;

    let synth_fut = execute_synth(
        setup.provider.as_ref(),
        args.count,
        args.fail_fast,
        &resolved.run,
        &args.output,
    );
    tokio::pin!(synth_fut);
    let (result, interrupted) = tokio::select! {
        result = &mut synth_fut => (Some(result), false),
        _ = tokio::signal::ctrl_c() => {
            eprintln!("interrupted: abandoning generation");
            (None, true)
        }
    };

    let (outputs, outcome) = match result {
        Some(result) => {
            let (outputs, outcome) = result?;
            (outputs, Some(outcome))
        }
        None => (Vec::new(), None),
    };

    let cassette = cassette_digest(&setup, &args.output, args.provider.cassette.as_deref())?;
    let manifest = Manifest {
        harness_version: bloomloop::HARNESS_VERSION.to_string(),
        created_at: Utc::now().to_rfc3339(),
        command: "synth-bad".to_string(),
        provider_mode: args.provider.provider.as_str().to_string(),
        model_label: resolved.run.generator_model.clone(),
        config: resolved.run.clone(),
        config_provenance: resolved.provenance.clone(),
        dataset: None,
        cassette,
        outputs: digest_outputs(&args.output, &outputs)?,
        interrupted,
        lenient: false,
        synth_count: Some(args.count),
        synth_fail_fast: Some(args.fail_fast),
        templates_dir: None,
        refine_prompt: None,
    };
    manifest.write_to(&args.output)?;

    if interrupted {
        return Ok(EXIT_INTERRUPTED);
    }
    let outcome = outcome.expect("non-interrupted synth has an outcome");
    println!(
        "synth-bad: {} of {} problems generated ({} attempts rejected, {} slots failed) → {}",
        outcome.problems.len(),
        args.count,
        outcome.rejected_attempts,
        outcome.failed_slots,
        args.output.display()
    );
    Ok(0)
}

fn load_traces(run_dir: &Path) -> Result<Vec<RefinementTrace>, CliError> {
    let dir = run_dir.join("traces");
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "{} has no traces/ directory — report needs a stored refine run",
            run_dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(io_err(&dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no trace files",
            dir.display()
        )));
    }
    files
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("malformed trace {}: {e}", path.display())))
        })
        .collect()
}

/// `report`: re-render from stored traces to stdout. Never writes.
pub fn report_cmd(args: ReportArgs) -> Result<u8, CliError> {
    let format = ReportFormat::parse(&args.format).ok_or_else(|| {
        CliError::Config(format!(
            "unknown report format {:?} (expected json, csv, or md)",
            args.format
        ))
    })?;
    let traces = load_traces(&args.run)?;
    let label = args
        .label
        .clone()
        .or_else(|| Manifest::load(&args.run).ok().map(|m| m.model_label))
        .unwrap_or_else(|| "model".to_string());
    let outcome = refine::summarize_batch(traces);
    let report = report::build_report(&label, &outcome);
    print!("{}", report::emit(&report, format));
    Ok(0)
}

fn verify_digest(role: &str, path: &Path, expected: &str) -> Result<(), CliError> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::ReplayMismatch(format!("{role} {} cannot be read: {e}", path.display()))
    })?;
    let found = crate::manifest::sha256_hex(&bytes);
    if found != expected {
        return Err(CliError::ReplayMismatch(format!(
            "{role} {}: digest mismatch (manifest {expected}, found {found})",
            path.display()
        )));
    }
    Ok(())
}

/// `replay-verify`: check every digest in the manifest, re-run the
/// command offline against the cassette, and byte-compare all artifacts.
pub async fn replay_verify(args: ReplayVerifyArgs) -> Result<u8, CliError> {
    let run_dir = &args.run;
    let manifest = Manifest::load(run_dir)?;
    let cassette_ref = manifest.cassette.as_ref().ok_or_else(|| {
        CliError::Config(format!(
            "run {} recorded no cassette; nothing to replay",
            run_dir.display()
        ))
    })?;
    let cassette_path = resolve_path(run_dir, &cassette_ref.path);

    // Stage 1: digests. Any byte drift in inputs or artifacts fails.
    verify_digest("cassette", &cassette_path, &cassette_ref.sha256)?;
    if let Some(dataset_ref) = &manifest.dataset {
        verify_digest(
            "dataset",
            &resolve_path(run_dir, &dataset_ref.path),
            &dataset_ref.sha256,
        )?;
    }
    for output in &manifest.outputs {
        verify_digest("artifact", &run_dir.join(&output.path), &output.sha256)?;
    }

    // Stage 2: re-run offline into a scratch directory.
    let scratch = tempfile::tempdir().map_err(|e| CliError::Io(e.to_string()))?;
    let provider: Arc<dyn Provider> = Arc::new(ConcurrencyLimited::new(
        Arc::new(ReplayProvider::load(&cassette_path)?),
        manifest.config.concurrency_limit,
    ));

    let rerun_outputs = match manifest.command.as_str() {
        "evaluate" | "refine" => {
            let kind = if manifest.command == "evaluate" {
                BatchKind::Evaluate
            } else {
                BatchKind::Refine
            };
            let dataset_ref = manifest.dataset.as_ref().ok_or_else(|| {
                CliError::Data("manifest records no dataset for a batch command".to_string())
            })?;
            let load_mode = if manifest.lenient {
                LoadMode::Lenient
            } else {
                LoadMode::Strict
            };
            let loaded =
                dataset::load_dataset(&resolve_path(run_dir, &dataset_ref.path), load_mode)?;
            let templates =
                load_templates(manifest.templates_dir.as_deref().map(Path::new))?;
            let refine_prompt =
                load_refine_prompt(manifest.refine_prompt.as_deref().map(Path::new))?;
            let exec = execute_batch(
                kind,
                provider.as_ref(),
                &templates,
                &refine_prompt,
                loaded.problems,
                &manifest.config,
                &manifest.model_label,
                scratch.path(),
                false,
            )
            .await?;
            exec.outputs
        }
        "synth-bad" => {
            let count = manifest.synth_count.ok_or_else(|| {
                CliError::Data("manifest records no synth count".to_string())
            })?;
            let fail_fast = manifest.synth_fail_fast.unwrap_or(false);
            let (outputs, _) = execute_synth(
                provider.as_ref(),
                count,
                fail_fast,
                &manifest.config,
                scratch.path(),
            )
            .await?;
            outputs
        }
        other => {
            return Err(CliError::Data(format!(
                "manifest command {other:?} cannot be replayed"
            )))
        }
    };

    // Stage 3: the replay must reproduce exactly the recorded artifacts.
    let mut expected: Vec<&str> = manifest.outputs.iter().map(|o| o.path.as_str()).collect();
    expected.sort_unstable();
    let mut actual: Vec<&str> = rerun_outputs.iter().map(String::as_str).collect();
    actual.sort_unstable();
    if expected != actual {
        return Err(CliError::ReplayMismatch(format!(
            "artifact sets differ: stored {expected:?}, replay produced {actual:?}"
        )));
    }
    for output in &manifest.outputs {
        let original_path = run_dir.join(&output.path);
        let original = std::fs::read(&original_path).map_err(io_err(&original_path))?;
        let replayed = std::fs::read(scratch.path().join(&output.path)).map_err(|e| {
            CliError::ReplayMismatch(format!("replay did not produce {}: {e}", output.path))
        })?;
        if original != replayed {
            return Err(CliError::ReplayMismatch(format!(
                "{} differs between the stored run and its replay",
                output.path
            )));
        }
    }

    println!(
        "verified: {} artifacts byte-identical after offline replay",
        manifest.outputs.len()
    );
    Ok(0)
}
