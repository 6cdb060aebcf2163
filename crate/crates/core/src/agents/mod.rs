//! Provider abstraction, prompt templates and the agent roles.
//!
//! Every role call goes through [`complete_structured`], so malformed output
//! is regenerated at most [`MAX_RETRIES`] times before the role's safe
//! fallback applies.

pub mod http;
pub mod mock;
pub mod prompts;
pub mod provider;
pub mod roles;
pub mod search;

pub use http::ChatCompletionsProvider;
pub use mock::{CountingProvider, FnProvider, Script, ScriptStep, ScriptedProvider};
pub use prompts::{render_prompt, render_text, PromptTemplate, RenderError, TemplateName};
pub use provider::{
    complete_structured, AgentCall, AgentProvider, AgentRole, CallLog, CompletionRequest, ProviderError,
    RetriesExhausted, MAX_RETRIES,
};
pub use roles::{
    evaluate_sufficiency, parse_routing, rewrite_question, route, write_answer, Rewrite, RouterAgent,
    SufficiencyVerdict,
};
pub use search::{
    online_search, FixtureSearchBackend, HttpSearchBackend, SearchBackend, SearchError, SearchSnippet,
    UnreachableSearchBackend, MAX_SNIPPETS,
};
