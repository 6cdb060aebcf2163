//! The LLM provider abstraction and the per-run call log.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::hashing::short_hash;

/// Regeneration retries after a malformed structured output. One call plus
/// this many retries is the per-operation attempt budget.
pub const MAX_RETRIES: usize = 2;

/// Every role that talks to a provider. The role is carried on each request
/// so scripted mocks and logs can tell calls apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Router,
    Evaluator,
    Rewriter,
    AnswerWriter,
    OnlineSearch,
    QaGenerator,
    Proposition,
    AgenticGroup,
    Relevance,
}

impl AgentRole {
    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Router => "router",
            AgentRole::Evaluator => "evaluator",
            AgentRole::Rewriter => "rewriter",
            AgentRole::AnswerWriter => "answer_writer",
            AgentRole::OnlineSearch => "online_search",
            AgentRole::QaGenerator => "qa_generator",
            AgentRole::Proposition => "proposition",
            AgentRole::AgenticGroup => "agentic_group",
            AgentRole::Relevance => "relevance",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One completion call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub role: AgentRole,
    /// The fully rendered prompt template.
    pub system: String,
    /// The principal input of the call (question, paragraph, ...).
    pub user: String,
    /// Template bindings the prompt was rendered from. Not sent over the
    /// wire; lets simulated providers act on structured inputs.
    #[serde(skip)]
    pub bindings: std::collections::BTreeMap<String, String>,
    pub temperature: f32,
}

impl CompletionRequest {
    pub fn prompt_hash(&self) -> String {
        let mut buf = Vec::with_capacity(self.system.len() + self.user.len() + 1);
        buf.extend_from_slice(self.system.as_bytes());
        buf.push(b'\n');
        buf.extend_from_slice(self.user.as_bytes());
        short_hash(&buf)
    }

    pub fn binding(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("provider returned an unexpected payload: {0}")]
    Payload(String),
    #[error("script exhausted for {role} (call #{ordinal})")]
    ScriptExhausted { role: AgentRole, ordinal: usize },
    #[error("scripted failure: {0}")]
    Scripted(String),
}

/// A text-completion backend.
///
/// Implementations must be callable from several pipeline runs at once.
pub trait AgentProvider: Send + Sync {
    fn identifier(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

impl<P: AgentProvider + ?Sized> AgentProvider for std::sync::Arc<P> {
    fn identifier(&self) -> &str {
        (**self).identifier()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

/// One provider (or search backend) invocation as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCall {
    pub agent: AgentRole,
    /// 1-based attempt number within the operation.
    pub attempt: u32,
    pub prompt_hash: String,
    pub raw: Option<String>,
    /// Transport or parse failure, if the attempt was not accepted.
    pub error: Option<String>,
    pub parsed: Option<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub calls: Vec<AgentCall>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn count(&self, agent: AgentRole) -> usize {
        self.calls.iter().filter(|c| c.agent == agent).count()
    }

    pub fn push(&mut self, call: AgentCall) {
        self.calls.push(call);
    }

    pub fn append(&mut self, other: CallLog) {
        self.calls.extend(other.calls);
    }
}

/// The attempt budget ran out.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{role}: no acceptable output after {attempts} attempts (last: {last_error})")]
pub struct RetriesExhausted {
    pub role: AgentRole,
    pub attempts: usize,
    pub last_error: String,
    /// Raw text of the last provider response, if any arrived.
    pub last_raw: Option<String>,
}

/// Calls `provider` until `parse` accepts the output or the attempt budget
/// (1 + [`MAX_RETRIES`]) is spent. Every attempt lands in `log`; transport
/// failures consume an attempt like parse failures do.
pub fn complete_structured<T, F>(
    provider: &dyn AgentProvider,
    request: &CompletionRequest,
    log: &mut CallLog,
    mut parse: F,
) -> Result<T, RetriesExhausted>
where
    T: Serialize,
    F: FnMut(&str) -> Result<T, String>,
{
    let prompt_hash = request.prompt_hash();
    let attempts = 1 + MAX_RETRIES;
    let mut last_error = String::new();
    let mut last_raw = None;
    for attempt in 1..=attempts {
        let mut call = AgentCall {
            agent: request.role,
            attempt: attempt as u32,
            prompt_hash: prompt_hash.clone(),
            raw: None,
            error: None,
            parsed: None,
        };
        match provider.complete(request) {
            Err(e) => {
                last_error = e.to_string();
                call.error = Some(last_error.clone());
                log.push(call);
            }
            Ok(raw) => {
                call.raw = Some(raw.clone());
                last_raw = Some(raw.clone());
                match parse(&raw) {
                    Ok(value) => {
                        call.parsed = serde_json::to_value(&value).ok();
                        log.push(call);
                        return Ok(value);
                    }
                    Err(e) => {
                        last_error = e;
                        call.error = Some(last_error.clone());
                        log.push(call);
                    }
                }
            }
        }
    }
    log::warn!("{}: giving up after {attempts} attempts: {last_error}", request.role);
    Err(RetriesExhausted {
        role: request.role,
        attempts,
        last_error,
        last_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::mock::ScriptedProvider;

    fn req() -> CompletionRequest {
        CompletionRequest {
            role: AgentRole::Evaluator,
            system: "s".into(),
            user: "u".into(),
            bindings: Default::default(),
            temperature: 0.0,
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let p = ScriptedProvider::from_outputs(AgentRole::Evaluator, ["x", "y", "1"]);
        let mut log = CallLog::new();
        let v = complete_structured(&p, &req(), &mut log, |raw| {
            (raw == "1").then_some(1u8).ok_or_else(|| "bad".to_string())
        })
        .unwrap();
        assert_eq!(v, 1);
        assert_eq!(log.len(), 3);
        assert!(log.calls[0].error.is_some());
        assert_eq!(log.calls[2].parsed, Some(serde_json::json!(1)));
    }

    #[test]
    fn budget_is_three_attempts() {
        let p = ScriptedProvider::from_outputs(AgentRole::Evaluator, ["x", "x", "x", "1"]);
        let mut log = CallLog::new();
        let err = complete_structured(&p, &req(), &mut log, |raw| {
            (raw == "1").then_some(()).ok_or_else(|| "bad".to_string())
        })
        .unwrap_err();
        assert_eq!(err.attempts, 3);
        assert_eq!(log.len(), 3);
        assert_eq!(err.last_raw.as_deref(), Some("x"));
    }

    #[test]
    fn prompt_hash_is_stable() {
        assert_eq!(req().prompt_hash(), req().prompt_hash());
        let mut other = req();
        other.user = "v".into();
        assert_ne!(req().prompt_hash(), other.prompt_hash());
    }
}
