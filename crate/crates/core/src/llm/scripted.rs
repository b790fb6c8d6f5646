//! Deterministic canned provider for tests and offline runs.
//!
//! Responses are organized as matcher rules rather than one global queue:
//! a rule fires when every one of its `contains` substrings appears in the
//! request's joined message text. That keeps scripts stable when several
//! requests are in flight at once — each judge or generator call finds its
//! own rule no matter the completion order.

use super::{ChatRequest, ChatResponse, LlmError, Provider};
use async_trait::async_trait;
use serde::Deserialize;
use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

/// One matcher rule: substrings to look for and the responses to hand
/// out, in order. With `repeat_last`, the final response repeats forever
/// instead of exhausting.
#[derive(Debug, Clone, Deserialize)]
pub struct ScriptedRule {
    #[serde(default)]
    pub contains: Vec<String>,
    pub responses: Vec<String>,
    #[serde(default)]
    pub repeat_last: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    rules: Vec<ScriptedRule>,
    /// Fallback responses used when no rule matches.
    #[serde(default)]
    default: Vec<String>,
}

#[derive(Debug)]
struct RuleState {
    contains: Vec<String>,
    responses: VecDeque<String>,
    repeat_last: bool,
}

impl RuleState {
    fn matches(&self, haystack: &str) -> bool {
        self.contains.iter().all(|needle| haystack.contains(needle))
    }

    fn take(&mut self) -> Option<String> {
        if self.repeat_last && self.responses.len() == 1 {
            return self.responses.front().cloned();
        }
        self.responses.pop_front()
    }
}

#[derive(Debug, Default)]
struct Inner {
    rules: Vec<RuleState>,
    default: VecDeque<String>,
    requests: Vec<ChatRequest>,
}

/// Provider that answers from a fixed script. See the module docs for the
/// matching discipline.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    inner: Mutex<Inner>,
}

impl ScriptedProvider {
    pub fn new() -> ScriptedProvider {
        ScriptedProvider::default()
    }

    /// Append a rule matching all `contains` substrings, with a FIFO
    /// response queue.
    pub fn rule<S: AsRef<str>>(self, contains: &[S], responses: &[S]) -> Self {
        self.push_rule(ScriptedRule {
            contains: contains.iter().map(|s| s.as_ref().to_string()).collect(),
            responses: responses.iter().map(|s| s.as_ref().to_string()).collect(),
            repeat_last: false,
        });
        self
    }

    /// Append a rule whose single response repeats forever.
    pub fn rule_repeating<S: AsRef<str>>(self, contains: &[S], response: S) -> Self {
        self.push_rule(ScriptedRule {
            contains: contains.iter().map(|s| s.as_ref().to_string()).collect(),
            responses: vec![response.as_ref().to_string()],
            repeat_last: true,
        });
        self
    }

    /// Append a fallback response used when no rule matches.
    pub fn default_response(self, response: impl Into<String>) -> Self {
        self.inner
            .lock()
            .expect("script lock")
            .default
            .push_back(response.into());
        self
    }

    fn push_rule(&self, rule: ScriptedRule) {
        self.inner.lock().expect("script lock").rules.push(RuleState {
            contains: rule.contains,
            responses: rule.responses.into(),
            repeat_last: rule.repeat_last,
        });
    }

    /// Load rules from a JSON script file, or from every `*.json` file
    /// (sorted by name) in a directory.
    ///
    /// File shape:
    ///
    /// ```json
    /// {
    ///   "rules": [
    ///     {"contains": ["Remembering"], "responses": ["..."], "repeat_last": true}
    ///   ],
    ///   "default": ["fallback response"]
    /// }
    /// ```
    pub fn from_path(path: &Path) -> Result<ScriptedProvider, LlmError> {
        let provider = ScriptedProvider::new();
        if path.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(LlmError::InvalidRequest(format!(
                    "no .json script files in {}",
                    path.display()
                )));
            }
            for file in files {
                provider.load_file(&file)?;
            }
        } else {
            provider.load_file(path)?;
        }
        Ok(provider)
    }

    fn load_file(&self, path: &Path) -> Result<(), LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let script: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| LlmError::InvalidRequest(format!("{}: {e}", path.display())))?;
        let mut inner = self.inner.lock().expect("script lock");
        for rule in script.rules {
            inner.rules.push(RuleState {
                contains: rule.contains,
                responses: rule.responses.into(),
                repeat_last: rule.repeat_last,
            });
        }
        inner.default.extend(script.default);
        Ok(())
    }

    /// How many requests have been served or attempted.
    pub fn calls(&self) -> usize {
        self.inner.lock().expect("script lock").requests.len()
    }

    /// Copies of every request seen, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.inner.lock().expect("script lock").requests.clone()
    }
}

#[async_trait]
impl Provider for ScriptedProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let haystack = request.joined_content();
        let mut inner = self.inner.lock().expect("script lock");
        inner.requests.push(request.clone());

        let content = inner
            .rules
            .iter_mut()
            .filter(|rule| rule.matches(&haystack))
            .find_map(RuleState::take)
            .or_else(|| inner.default.pop_front())
            .ok_or(LlmError::ScriptExhausted)?;

        Ok(ChatResponse {
            content,
            model: request.model.clone(),
            usage: None,
        })
    }
}
