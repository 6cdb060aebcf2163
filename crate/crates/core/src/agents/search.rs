//! Online search backends. The search agent is non-generative: it only
//! collects snippets.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{AgentCall, AgentRole, CallLog};
use crate::hashing::short_hash;
use crate::http::JsonClient;
use crate::retrieval::EvidenceContext;

pub const MAX_SNIPPETS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSnippet {
    pub text: String,
    pub source_url: String,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SearchError {
    #[error("search backend unreachable: {0}")]
    Unreachable(String),
}

pub trait SearchBackend: Send + Sync {
    fn identifier(&self) -> &str;

    fn search(&self, query: &str) -> Result<Vec<SearchSnippet>, SearchError>;
}

/// Serves canned results keyed by exact query string. Unknown queries get
/// the fallback list, which defaults to empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureSearchBackend {
    #[serde(default)]
    pub fixtures: BTreeMap<String, Vec<WireSnippet>>,
    #[serde(default)]
    pub fallback: Vec<WireSnippet>,
}

/// `{text, url}` as served by search endpoints and fixture files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSnippet {
    pub text: String,
    pub url: String,
}

fn ranked(wire: &[WireSnippet]) -> Vec<SearchSnippet> {
    wire.iter()
        .enumerate()
        .map(|(i, w)| SearchSnippet {
            text: w.text.clone(),
            source_url: w.url.clone(),
            rank: i + 1,
        })
        .collect()
}

impl FixtureSearchBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, query: impl Into<String>, snippets: Vec<(&str, &str)>) -> Self {
        self.fixtures.insert(
            query.into(),
            snippets
                .into_iter()
                .map(|(text, url)| WireSnippet {
                    text: text.into(),
                    url: url.into(),
                })
                .collect(),
        );
        self
    }

    pub fn load(path: &std::path::Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

impl SearchBackend for FixtureSearchBackend {
    fn identifier(&self) -> &str {
        "fixture"
    }

    fn search(&self, query: &str) -> Result<Vec<SearchSnippet>, SearchError> {
        Ok(ranked(self.fixtures.get(query).unwrap_or(&self.fallback)))
    }
}

/// Always unreachable; stands in when no backend is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnreachableSearchBackend;

impl SearchBackend for UnreachableSearchBackend {
    fn identifier(&self) -> &str {
        "none"
    }

    fn search(&self, _query: &str) -> Result<Vec<SearchSnippet>, SearchError> {
        Err(SearchError::Unreachable("no search backend configured".into()))
    }
}

/// `GET {endpoint}?q=<query>` returning a JSON list of `{text, url}`.
pub struct HttpSearchBackend {
    identifier: String,
    endpoint: String,
    client: JsonClient,
}

impl HttpSearchBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        let endpoint = endpoint.into();
        HttpSearchBackend {
            identifier: format!("http:{endpoint}"),
            endpoint,
            client: JsonClient::new(api_key, Duration::from_secs(30), 1),
        }
    }
}

impl SearchBackend for HttpSearchBackend {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn search(&self, query: &str) -> Result<Vec<SearchSnippet>, SearchError> {
        let wire: Vec<WireSnippet> = self
            .client
            .get(&self.endpoint, &[("q", query)])
            .map_err(SearchError::Unreachable)?;
        Ok(ranked(&wire))
    }
}

/// Collects at most `n` (clamped to 1..=5) snippets as numbered evidence
/// blocks `"[i] (url) text"`. An unreachable backend yields empty evidence
/// and a warning; the call is logged either way.
pub fn online_search(backend: &dyn SearchBackend, query: &str, n: usize, log: &mut CallLog) -> EvidenceContext {
    let n = n.clamp(1, MAX_SNIPPETS);
    let mut call = AgentCall {
        agent: AgentRole::OnlineSearch,
        attempt: 1,
        prompt_hash: short_hash(query.as_bytes()),
        raw: None,
        error: None,
        parsed: None,
    };
    let ctx = match backend.search(query) {
        Ok(mut snippets) => {
            snippets.truncate(n);
            call.parsed = serde_json::to_value(&snippets).ok();
            EvidenceContext::from_snippets(&snippets)
        }
        Err(e) => {
            log::warn!("online search via {} failed: {e}", backend.identifier());
            call.error = Some(e.to_string());
            EvidenceContext::default()
        }
    };
    call.raw = Some(ctx.text.clone());
    log.push(call);
    ctx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testserver;

    #[test]
    fn three_snippets_three_blocks() {
        let b = FixtureSearchBackend::new().with("q", vec![("a", "u1"), ("b", "u2"), ("c", "u3")]);
        let mut log = CallLog::new();
        let ctx = online_search(&b, "q", 5, &mut log);
        assert_eq!(ctx.sources, vec!["u1", "u2", "u3"]);
        assert_eq!(ctx.text, "[1] (u1) a\n[2] (u2) b\n[3] (u3) c");
        assert_eq!(log.count(AgentRole::OnlineSearch), 1);
    }

    #[test]
    fn nine_snippets_truncated_to_five() {
        let items: Vec<(String, String)> = (0..9).map(|i| (format!("s{i}"), format!("u{i}"))).collect();
        let b = FixtureSearchBackend::new().with("q", items.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect());
        assert_eq!(online_search(&b, "q", 5, &mut CallLog::new()).sources.len(), 5);
        assert_eq!(online_search(&b, "q", 9, &mut CallLog::new()).sources.len(), 5);
        assert_eq!(online_search(&b, "q", 2, &mut CallLog::new()).sources.len(), 2);
    }

    #[test]
    fn unreachable_backend_gives_empty_context() {
        let mut log = CallLog::new();
        let ctx = online_search(&UnreachableSearchBackend, "q", 5, &mut log);
        assert!(ctx.is_empty());
        assert!(log.calls[0].error.is_some());
        let closed = HttpSearchBackend::new("http://127.0.0.1:9/search", None);
        assert!(online_search(&closed, "q", 5, &mut log).is_empty());
    }

    #[test]
    fn http_backend_parses_text_url_list() {
        let srv = testserver::serve(vec![(200, r#"[{"text":"Surge 4 m","url":"https://e.org/a"}]"#.into())]);
        let b = HttpSearchBackend::new(format!("{}/search", srv.url), None);
        let ctx = online_search(&b, "storm surge height", 5, &mut CallLog::new());
        assert_eq!(ctx.text, "[1] (https://e.org/a) Surge 4 m");
        let (line, _) = &srv.requests.lock().unwrap()[0];
        assert!(line.starts_with("GET /search?q=storm"), "{line}");
    }
}
