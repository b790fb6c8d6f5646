//! Provider assembly: pick live, record, replay, or scripted; wrap the
//! result in the run's concurrency cap; keep a handle to the recorder so
//! the cassette can be written when the run finishes.

use crate::error::CliError;
use bloomloop::llm::{
    ConcurrencyLimited, HttpProvider, Provider, RecordingProvider, ReplayProvider,
    ScriptedProvider, API_KEY_VAR, FALLBACK_API_KEY_VAR,
};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderMode {
    /// Call the configured HTTP endpoint.
    Live,
    /// Call through (live, or scripted when fixtures are given) and save
    /// every exchange to a cassette.
    Record,
    /// Serve responses from a cassette; no network, no credential.
    Replay,
    /// Serve canned responses from fixture files; no network, no credential.
    Scripted,
}

impl ProviderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderMode::Live => "live",
            ProviderMode::Record => "record",
            ProviderMode::Replay => "replay",
            ProviderMode::Scripted => "scripted",
        }
    }
}

/// The assembled provider chain plus the handles the run needs afterward.
pub struct ProviderSetup {
    pub provider: Arc<dyn Provider>,
    /// Present in record mode; the run writes its cassette at the end.
    pub recorder: Option<Arc<RecordingProvider>>,
    /// Cassette being replayed, when in replay mode.
    pub replay_source: Option<PathBuf>,
}

fn credential_present() -> bool {
    [API_KEY_VAR, FALLBACK_API_KEY_VAR]
        .iter()
        .any(|var| std::env::var(var).is_ok_and(|v| !v.trim().is_empty()))
}

fn live_provider() -> Result<Arc<dyn Provider>, CliError> {
    if !credential_present() {
        return Err(CliError::Config(format!(
            "live and record modes need an API key: set {API_KEY_VAR} (or {FALLBACK_API_KEY_VAR})"
        )));
    }
    Ok(Arc::new(HttpProvider::from_env()?))
}

/// Build the provider chain for `mode`.
///
/// Record mode with `--fixtures` wraps a scripted provider instead of the
/// live endpoint — that is how reference cassettes are produced offline,
/// and it needs no credential.
pub fn build(
    mode: ProviderMode,
    cassette: Option<&Path>,
    fixtures: Option<&Path>,
    allow_duplicates: bool,
    concurrency: usize,
) -> Result<ProviderSetup, CliError> {
    let mut recorder = None;
    let mut replay_source = None;

    let inner: Arc<dyn Provider> = match mode {
        ProviderMode::Live => live_provider()?,
        ProviderMode::Scripted => {
            let path = fixtures.ok_or_else(|| {
                CliError::Config("scripted mode requires --fixtures <file-or-dir>".to_string())
            })?;
            Arc::new(ScriptedProvider::from_path(path)?)
        }
        ProviderMode::Replay => {
            let path = cassette.ok_or_else(|| {
                CliError::Config("replay mode requires --cassette <path>".to_string())
            })?;
            replay_source = Some(path.to_path_buf());
            Arc::new(ReplayProvider::load(path)?)
        }
        ProviderMode::Record => {
            let inner: Arc<dyn Provider> = match fixtures {
                Some(path) => Arc::new(ScriptedProvider::from_path(path)?),
                None => live_provider()?,
            };
            let mut recording = RecordingProvider::new(inner);
            if allow_duplicates {
                recording = recording.allowing_duplicates();
            }
            let recording = Arc::new(recording);
            recorder = Some(recording.clone());
            recording
        }
    };

    Ok(ProviderSetup {
        provider: Arc::new(ConcurrencyLimited::new(inner, concurrency)),
        recorder,
        replay_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expect_err(result: Result<ProviderSetup, CliError>) -> CliError {
        match result {
            Err(err) => err,
            Ok(_) => panic!("provider build should have failed"),
        }
    }

    #[test]
    fn replay_without_cassette_is_a_config_error() {
        let err = expect_err(build(ProviderMode::Replay, None, None, false, 4));
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--cassette"));
    }

    #[test]
    fn scripted_without_fixtures_is_a_config_error() {
        let err = expect_err(build(ProviderMode::Scripted, None, None, false, 4));
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("--fixtures"));
    }

    #[test]
    fn record_over_fixtures_needs_no_credential() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("script.json");
        std::fs::write(&fixtures, r#"{"rules": [], "default": ["ok"]}"#).unwrap();
        let setup = build(ProviderMode::Record, None, Some(&fixtures), false, 4).unwrap();
        assert!(setup.recorder.is_some());
        assert!(setup.replay_source.is_none());
    }
}
