//! Deterministic providers for offline runs and tests.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::provider::{AgentProvider, AgentRole, CompletionRequest, ProviderError};

/// One scripted response: either text or a provider failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptStep {
    Text(String),
    Fail { fail: String },
}

impl From<&str> for ScriptStep {
    fn from(s: &str) -> Self {
        ScriptStep::Text(s.to_string())
    }
}

impl From<String> for ScriptStep {
    fn from(s: String) -> Self {
        ScriptStep::Text(s)
    }
}

impl From<&String> for ScriptStep {
    fn from(s: &String) -> Self {
        ScriptStep::Text(s.clone())
    }
}

/// A stream of outputs selected when `key` occurs in the request's user
/// content or rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyedScript {
    pub agent: AgentRole,
    pub key: String,
    pub outputs: Vec<ScriptStep>,
}

/// Script file contents: `(agent, call ordinal) -> output`.
///
/// ```json
/// {
///   "outputs":  { "evaluator": ["0", "1"], "answer_writer": ["true"] },
///   "keyed":    [ { "agent": "evaluator", "key": "levee", "outputs": ["1"] } ],
///   "defaults": { "router": "{\"Flood\": 1.0, ...}" }
/// }
/// ```
///
/// Keyed streams take precedence (first matching entry wins) and keep their
/// own ordinal counters, so runs keyed by question stay deterministic under
/// concurrency. When a stream is exhausted the agent's default is used; with
/// no default the call fails with [`ProviderError::ScriptExhausted`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub outputs: BTreeMap<AgentRole, Vec<ScriptStep>>,
    #[serde(default)]
    pub keyed: Vec<KeyedScript>,
    #[serde(default)]
    pub defaults: BTreeMap<AgentRole, ScriptStep>,
}

impl Script {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends to the unkeyed output stream of `role`.
    pub fn then<I, S>(mut self, role: AgentRole, outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ScriptStep>,
    {
        self.outputs
            .entry(role)
            .or_default()
            .extend(outputs.into_iter().map(Into::into));
        self
    }

    pub fn keyed<I, S>(mut self, role: AgentRole, key: impl Into<String>, outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ScriptStep>,
    {
        self.keyed.push(KeyedScript {
            agent: role,
            key: key.into(),
            outputs: outputs.into_iter().map(Into::into).collect(),
        });
        self
    }

    pub fn default_for(mut self, role: AgentRole, step: impl Into<ScriptStep>) -> Self {
        self.defaults.insert(role, step.into());
        self
    }

    pub fn load(path: &Path) -> Result<Script, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

pub struct ScriptedProvider {
    identifier: String,
    script: Script,
    counters: Mutex<HashMap<(AgentRole, Option<usize>), usize>>,
}

impl ScriptedProvider {
    pub fn new(script: Script) -> Self {
        ScriptedProvider {
            identifier: "scripted".to_string(),
            script,
            counters: Mutex::new(HashMap::new()),
        }
    }

    /// Single-role script, mostly for unit tests.
    pub fn from_outputs<I, S>(role: AgentRole, outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<ScriptStep>,
    {
        let mut script = Script::default();
        script
            .outputs
            .insert(role, outputs.into_iter().map(Into::into).collect());
        ScriptedProvider::new(script)
    }

    pub fn with_identifier(mut self, identifier: impl Into<String>) -> Self {
        self.identifier = identifier.into();
        self
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    fn next_step(&self, request: &CompletionRequest) -> Result<ScriptStep, ProviderError> {
        let keyed = self.script.keyed.iter().position(|k| {
            k.agent == request.role
                && (request.user.contains(&k.key) || request.system.contains(&k.key))
        });
        let stream = match keyed {
            Some(i) => Some(self.script.keyed[i].outputs.as_slice()),
            None => self.script.outputs.get(&request.role).map(Vec::as_slice),
        };
        let ordinal = {
            let mut counters = self.counters.lock().expect("script counter poisoned");
            let slot = counters.entry((request.role, keyed)).or_insert(0);
            let n = *slot;
            *slot += 1;
            n
        };
        stream
            .and_then(|s| s.get(ordinal))
            .or_else(|| self.script.defaults.get(&request.role))
            .cloned()
            .ok_or(ProviderError::ScriptExhausted {
                role: request.role,
                ordinal,
            })
    }
}

impl AgentProvider for ScriptedProvider {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        match self.next_step(request)? {
            ScriptStep::Text(t) => Ok(t),
            ScriptStep::Fail { fail } => Err(ProviderError::Scripted(fail)),
        }
    }
}

type CompletionFn = dyn Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync;

/// A provider backed by a closure over the request.
pub struct FnProvider {
    identifier: String,
    f: Box<CompletionFn>,
}

impl FnProvider {
    pub fn new<F>(identifier: impl Into<String>, f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        FnProvider {
            identifier: identifier.into(),
            f: Box::new(f),
        }
    }
}

impl AgentProvider for FnProvider {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (self.f)(request)
    }
}

/// Wraps a provider and counts calls per role.
pub struct CountingProvider<P> {
    inner: P,
    total: AtomicUsize,
    per_role: Mutex<BTreeMap<AgentRole, usize>>,
}

impl<P: AgentProvider> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider {
            inner,
            total: AtomicUsize::new(0),
            per_role: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn total(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub fn count(&self, role: AgentRole) -> usize {
        self.per_role
            .lock()
            .expect("counter poisoned")
            .get(&role)
            .copied()
            .unwrap_or(0)
    }

    pub fn counts(&self) -> BTreeMap<AgentRole, usize> {
        self.per_role.lock().expect("counter poisoned").clone()
    }
}

impl<P: AgentProvider> AgentProvider for CountingProvider<P> {
    fn identifier(&self) -> &str {
        self.inner.identifier()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.total.fetch_add(1, Ordering::SeqCst);
        *self
            .per_role
            .lock()
            .expect("counter poisoned")
            .entry(request.role)
            .or_insert(0) += 1;
        self.inner.complete(request)
    }
}
