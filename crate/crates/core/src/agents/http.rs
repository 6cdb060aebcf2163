//! Chat-completions adapter.
//!
//! Wire shape: `{model, messages: [{role, content}], temperature}` in,
//! `{choices: [{message: {content}}]}` out.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{AgentProvider, CompletionRequest, ProviderError};
use crate::http::JsonClient;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatChoice {
    pub message: ChatChoiceMessage,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatChoiceMessage {
    #[serde(default)]
    pub content: Option<String>,
}

impl ChatRequest {
    pub fn from_completion(model: &str, request: &CompletionRequest) -> ChatRequest {
        let mut messages = vec![ChatMessage {
            role: "system".into(),
            content: request.system.clone(),
        }];
        if !request.user.is_empty() {
            messages.push(ChatMessage {
                role: "user".into(),
                content: request.user.clone(),
            });
        }
        ChatRequest {
            model: model.to_string(),
            messages,
            temperature: request.temperature,
        }
    }
}

pub struct ChatCompletionsProvider {
    identifier: String,
    endpoint: String,
    model: String,
    client: JsonClient,
}

impl ChatCompletionsProvider {
    /// `endpoint` is the full URL of the chat-completions route. The API key,
    /// if any, is sent as a bearer token and never logged.
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let model = model.into();
        ChatCompletionsProvider {
            identifier: format!("chat:{model}"),
            endpoint: endpoint.into(),
            model,
            client: JsonClient::new(api_key, Duration::from_secs(120), 2),
        }
    }
}

impl AgentProvider for ChatCompletionsProvider {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = ChatRequest::from_completion(&self.model, request);
        let resp: ChatResponse = self
            .client
            .post(&self.endpoint, &body)
            .map_err(ProviderError::Transport)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Payload("no choices[0].message.content".into()))
    }
}
